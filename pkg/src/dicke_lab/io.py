"""Atomic, byte-reproducible CSV and JSON output."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    if isinstance(v, float) or hasattr(v, "dtype"):
        f = float(v)
        if math.isnan(f):
            return "nan"
        return "%.17g" % f
    return str(v)


def atomic_write(path, data: bytes) -> Path:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, rows) -> Path:
    """``header`` may be None for bare numeric matrices."""
    lines = [",".join(header)] if header is not None else []
    lines += [",".join(format_value(v) for v in row) for row in rows]
    return atomic_write(path, ("\n".join(lines) + "\n").encode())


def write_json(path, obj) -> Path:
    return atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
