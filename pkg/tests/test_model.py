import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dicke_lab.model import (
    PRESETS,
    SECTORS,
    AtomicConfig,
    BasisState,
    ModelParams,
    ParitySector,
    SectorBasis,
    active_pairs,
    build_hamiltonian,
    commutator_norm,
    constants_of_motion,
    critical_coupling,
    enumerate_sector_basis,
    matter_ladder_element,
    matter_states,
    parity_sector,
    preset,
)

from oracles import brute_force_basis, elementwise_hamiltonian

CONFIGS = list(AtomicConfig)


def params_for(config, x=(0.0, 0.0), Na=1):
    name = {AtomicConfig.XI: "xi-fig3", AtomicConfig.LAMBDA: "lambda-fig3", AtomicConfig.V: "v-fig3"}[config]
    return preset(name, x=x, Na=Na)


def test_active_pairs():
    assert active_pairs(AtomicConfig.LAMBDA) == [(1, 3), (2, 3)]
    assert active_pairs(AtomicConfig.XI) == [(1, 2), (2, 3)]
    assert active_pairs(AtomicConfig.V) == [(1, 2), (1, 3)]


def test_config_parse():
    assert AtomicConfig.parse("lambda") is AtomicConfig.LAMBDA
    assert AtomicConfig.parse("Xi") is AtomicConfig.XI
    with pytest.raises(ValueError):
        AtomicConfig.parse("W")


def test_critical_coupling():
    assert critical_coupling(1.0, 0.0, 1.0) == pytest.approx(0.5)
    assert critical_coupling(0.9, 0.1, 1.0) == pytest.approx(0.45)
    with pytest.raises(ValueError, match="no two-level critical coupling"):
        critical_coupling(1.0, 1.0, 1.0)


def test_model_params_validation_and_roundtrip():
    p = preset("lambda-fig3", x=(1.0, 2.0), Na=3)
    assert ModelParams.from_dict(p.to_dict()) == p
    assert p.mu == pytest.approx((0.5, 0.9))
    assert p.omega == (0.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        p.with_x((-1.0, 0.0))
    with pytest.raises(ValueError):
        p.with_Na(0)
    with pytest.raises(ValueError):
        ModelParams(AtomicConfig.LAMBDA, 0.1, (1.0, -1.0))
    with pytest.raises(ValueError):
        ModelParams(AtomicConfig.LAMBDA, 1.5, (1.0, 1.0))
    # Xi with omega2 = omega3 makes pair (2,3) degenerate
    with pytest.raises(ValueError):
        ModelParams(AtomicConfig.XI, 1.0, (1.0, 1.0))


def test_presets():
    p = preset("lambda-fig3")
    assert (p.config, p.Omega, p.omega2, p.Na) == (AtomicConfig.LAMBDA, (1.0, 0.9), 0.1, 1)
    p = preset("xi-fig3")
    assert (p.config, p.Omega, p.omega2) == (AtomicConfig.XI, (0.25, 0.75), 0.25)
    p = preset("v-fig3")
    assert (p.config, p.Omega, p.omega2) == (AtomicConfig.V, (0.8, 1.0), 0.8)
    assert {"xi-fig2", "lambda-fig2", "v-fig2"} <= set(PRESETS)
    with pytest.raises(KeyError):
        preset("nope")


def test_constants_of_motion_examples():
    assert constants_of_motion(AtomicConfig.LAMBDA, BasisState((2, 1), (1, 0, 0))) == (3, 2)
    for Na in (1, 2, 5):
        assert constants_of_motion(AtomicConfig.LAMBDA, BasisState((0, 0), (Na, 0, 0))) == (0, Na)
    assert constants_of_motion(AtomicConfig.XI, BasisState((1, 0), (0, 1, 0))) == (2, 0)


def test_parity_sector():
    assert parity_sector(0, 0).label == "ee"
    assert parity_sector(3, 2).label == "oe"
    k = constants_of_motion(AtomicConfig.LAMBDA, BasisState((0, 0), (1, 0, 0)))
    assert parity_sector(*k).label == "eo"
    assert [s.label for s in SECTORS] == ["ee", "eo", "oe", "oo"]
    assert ParitySector.parse("oe") == ParitySector(1, 0)


def test_enumerate_examples():
    p = preset("lambda-fig3")
    b = enumerate_sector_basis(p, ParitySector(0, 0), (0, 0))
    assert b.states == [BasisState((0, 0), (0, 1, 0))]
    # regression value from the brute-force filter oracle
    assert enumerate_sector_basis(p, ParitySector(0, 0), (2, 2)).dim == 5
    assert len(brute_force_basis(p, ParitySector(0, 0), (2, 2))) == 5
    for c in CONFIGS:
        assert enumerate_sector_basis(params_for(c), ParitySector(1, 1), (0, 0)).dim == 0


@settings(max_examples=40, deadline=None)
@given(
    config=st.sampled_from(CONFIGS),
    Na=st.integers(1, 3),
    k1=st.integers(0, 4),
    k2=st.integers(0, 4),
    sector=st.sampled_from(list(SECTORS) + [None]),
)
def test_enumeration_matches_brute_force(config, Na, k1, k2, sector):
    p = params_for(config, Na=Na)
    b = SectorBasis(p, sector, (k1, k2))
    got = [(s.nu, s.n) for s in b.states]
    assert len(set(got)) == len(got)
    assert set(got) == brute_force_basis(p, sector, (k1, k2))
    for s in b.states:
        assert sum(s.n) == Na
        kk = constants_of_motion(config, s)
        assert kk[0] <= k1 and kk[1] <= k2
    keys = [(*constants_of_motion(config, s), s.n[0], s.n[2]) for s in b.states]
    assert keys == sorted(keys)
    assert all(b.index[s] == i for i, s in enumerate(b.states))


def test_lookup():
    p = preset("lambda-fig3", Na=2)
    b = SectorBasis(p, ParitySector(0, 1), (6, 7))
    idx = b.lookup(b.nu, b.n)
    assert np.array_equal(idx, np.arange(b.dim))
    miss = b.lookup(np.array([[99, 99]]), np.array([[2, 0, 0]]))
    assert miss[0] == -1


def test_matter_ladder_examples():
    assert matter_ladder_element((0, 0, 1), 1, 3) == ((1, 0, 0), 1.0)
    n, amp = matter_ladder_element((2, 0, 0), 3, 1)
    assert n == (1, 0, 1) and amp == pytest.approx(math.sqrt(2))
    assert matter_ladder_element((1, 0, 0), 2, 3)[1] == 0.0


def _matter_matrices(Na):
    states = [tuple(int(v) for v in s) for s in matter_states(Na)]
    pos = {s: i for i, s in enumerate(states)}
    A = {}
    for j in (1, 2, 3):
        for k in (1, 2, 3):
            M = np.zeros((len(states), len(states)))
            for c, s in enumerate(states):
                if j == k:
                    M[c, c] = s[j - 1]
                else:
                    t, amp = matter_ladder_element(s, j, k)
                    if amp:
                        M[pos[t], c] = amp
            A[(j, k)] = M
    return A


@pytest.mark.parametrize("Na", [1, 2, 3])
def test_u3_commutation(Na):
    A = _matter_matrices(Na)
    for i in (1, 2, 3):
        for j in (1, 2, 3):
            for k in (1, 2, 3):
                for l in (1, 2, 3):
                    lhs = A[(i, j)] @ A[(k, l)] - A[(k, l)] @ A[(i, j)]
                    rhs = (j == k) * A[(i, l)] - (i == l) * A[(k, j)]
                    assert np.allclose(lhs, rhs, atol=1e-12)


def test_symmetric_two_atom_matrix_element():
    # explicit symmetric states for two atoms: |1,1> and (|1,3>+|3,1>)/sqrt2
    e = np.eye(3)
    s11 = np.kron(e[0], e[0])
    s13 = (np.kron(e[0], e[2]) + np.kron(e[2], e[0])) / math.sqrt(2)
    A31 = np.kron(np.outer(e[2], e[0]), np.eye(3)) + np.kron(np.eye(3), np.outer(e[2], e[0]))
    assert s13 @ A31 @ s11 == pytest.approx(matter_ladder_element((2, 0, 0), 3, 1)[1])


def test_zero_coupling_diagonal():
    for c in CONFIGS:
        p = params_for(c, Na=2)
        b = SectorBasis(p, None, (4, 4))
        H = build_hamiltonian(p, b).toarray()
        expect = b.nu @ np.array(p.Omega) + b.n @ np.array(p.omega)
        assert np.array_equal(H, np.diag(expect))


def test_lambda_vacuum_ground_energy():
    p = preset("lambda-fig3")
    b = SectorBasis(p, ParitySector(0, 1), (2, 2))
    assert np.linalg.eigvalsh(build_hamiltonian(p, b).toarray())[0] == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(
    config=st.sampled_from(CONFIGS),
    Na=st.integers(1, 3),
    x1=st.floats(0, 4),
    x2=st.floats(0, 4),
    k1=st.integers(0, 6),
    k2=st.integers(0, 6),
    sector=st.sampled_from(list(SECTORS) + [None]),
    rwa=st.booleans(),
)
def test_hamiltonian_matches_elementwise_oracle(config, Na, x1, x2, k1, k2, sector, rwa):
    p = params_for(config, x=(x1, x2), Na=Na)
    b = SectorBasis(p, sector, (k1, k2))
    if b.dim == 0:
        with pytest.raises(ValueError):
            build_hamiltonian(p, b, rwa=rwa)
        return
    H = build_hamiltonian(p, b, rwa=rwa)
    assert H.rwa == rwa
    dense = H.toarray()
    assert np.array_equal(dense, dense.T)
    assert np.allclose(dense, elementwise_hamiltonian(p, b.states, rwa), atol=1e-13)


@pytest.mark.parametrize("config", CONFIGS)
def test_no_cross_sector_elements(config):
    p = params_for(config, x=(1.3, 2.1), Na=2)
    b = SectorBasis(p, None, (8, 8))
    H = build_hamiltonian(p, b).matrix.tocoo()
    par = b.k % 2
    assert np.all(H.data[np.any(par[H.row] != par[H.col], axis=1)] == 0.0)
    assert np.all(np.all(par[H.row] == par[H.col], axis=1)[H.data != 0])
    assert np.any(np.any(b.k[H.row] != b.k[H.col], axis=1) & (H.data != 0))  # counter-rotating terms exist


def test_small_basis_lowest_eigenvalue_matches_oracle():
    p = preset("lambda-fig3", x=(0.5, 0.0))
    b = SectorBasis(p, ParitySector(0, 1), (4, 5))
    got = np.linalg.eigvalsh(build_hamiltonian(p, b).toarray())[0]
    want = np.linalg.eigvalsh(elementwise_hamiltonian(p, b.states))[0]
    assert got == pytest.approx(want, abs=1e-14)


@pytest.mark.parametrize("config", CONFIGS)
@pytest.mark.parametrize("which", [1, 2])
def test_constants_of_motion_commute_with_rwa(config, which):
    p = params_for(config, x=(1.7, 2.3), Na=3)
    b = SectorBasis(p, None, (10, 10))
    assert commutator_norm(p, b, which) == 0.0


def test_commutator_negative_control():
    p = preset("lambda-fig3", x=(1.0, 1.0), Na=2)
    b = SectorBasis(p, None, (6, 6))
    assert commutator_norm(p, b, 1, drop_matter=(3,)) > 0.1


def test_hamiltonian_rejects_foreign_basis():
    p = preset("lambda-fig3")
    b = SectorBasis(preset("lambda-fig3", Na=2), ParitySector(0, 0), (4, 4))
    with pytest.raises(ValueError):
        build_hamiltonian(p, b)
