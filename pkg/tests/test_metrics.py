import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holodfs.dfs import single_qubit_dfs, two_qubit_dfs
from holodfs.lindblad import DensityMatrix
from holodfs.metrics import (
    embed_logical_state,
    gate_fidelity,
    phase_sensitive_fidelity,
    population_observables,
    populations,
    state_fidelity,
)
from holodfs.models import single_qubit_space, two_qubit_space
from holodfs.operators import StateVector, basis_ket

S1 = single_qubit_space(2, 1)
DFS1 = single_qubit_dfs(S1)


def test_embed_single_qubit_states():
    np.testing.assert_array_equal(embed_logical_state(DFS1, [1, 0]).amplitudes,
                                  basis_ket(S1, (1, 0, 0)).amplitudes)
    plus = embed_logical_state(DFS1, np.array([1, 1]) / math.sqrt(2)).amplitudes
    expect = (basis_ket(S1, (1, 0, 0)).amplitudes + basis_ket(S1, (0, 1, 0)).amplitudes) / math.sqrt(2)
    np.testing.assert_allclose(plus, expect)


def test_embed_two_qubit_state():
    sp = two_qubit_space()
    psi = embed_logical_state(two_qubit_dfs(sp), [0, 1, 0, 0])
    np.testing.assert_array_equal(psi.amplitudes, basis_ket(sp, (1, 0, 0, 0, 1, 0)).amplitudes)


def test_embed_errors():
    with pytest.raises(ValueError):
        embed_logical_state(DFS1, [1, 0, 0])
    with pytest.raises(ValueError):
        embed_logical_state(DFS1, [1, 1])


def test_dfs_kets_orthonormal_basis_states():
    for dfs in (DFS1, two_qubit_dfs(two_qubit_space())):
        K = np.array([k.amplitudes for k in dfs.kets()])
        np.testing.assert_allclose(K.conj() @ K.T, np.eye(len(dfs.labels)), atol=1e-12)
        assert np.all(np.sort(np.abs(K), axis=1)[:, -1] == 1)


def test_state_fidelity_examples():
    psi = embed_logical_state(DFS1, [1, 0])
    perp = embed_logical_state(DFS1, [0, 1])
    rho = DensityMatrix.pure(psi)
    assert state_fidelity(rho, psi) == 1.0
    assert state_fidelity(DensityMatrix.pure(perp), psi) == 0.0
    mixed = DensityMatrix(S1, np.eye(S1.dim) / S1.dim)
    assert S1.dim == 8
    assert state_fidelity(mixed, psi) == pytest.approx(1 / 8)


def test_state_fidelity_space_mismatch():
    with pytest.raises(ValueError):
        state_fidelity(DensityMatrix.pure(basis_ket(S1, (1, 0, 0))), basis_ket(single_qubit_space(2, 2), (1, 0, 0)))


def test_populations_of_basis_state():
    pops = populations(DensityMatrix.pure(basis_ket(S1, (1, 0, 0))), DFS1)
    assert pops == {"0": 1.0, "1": 0.0, "E": 0.0, "residual": 0.0}
    obs = population_observables(DFS1)
    assert set(obs) == {"pop_0", "pop_1", "pop_E"}
    for P in obs.values():
        np.testing.assert_allclose(P.matrix @ P.matrix, P.matrix, atol=1e-10)


def _random_rho(seed, dim):
    r = np.random.default_rng(seed)
    X = r.normal(size=(dim, dim)) + 1j * r.normal(size=(dim, dim))
    rho = X @ X.conj().T
    return rho / np.trace(rho)


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_state_fidelity_linear(s1, s2, a):
    r1, r2 = _random_rho(s1, S1.dim), _random_rho(s2, S1.dim)
    psi = embed_logical_state(DFS1, np.array([1, 1j]) / math.sqrt(2))
    f = lambda m: state_fidelity(DensityMatrix(S1, m), psi)
    assert f(a * r1 + (1 - a) * r2) == pytest.approx(a * f(r1) + (1 - a) * f(r2), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_populations_sum_to_trace(seed):
    rho = DensityMatrix(S1, _random_rho(seed, S1.dim))
    pops = populations(rho, DFS1)
    assert sum(pops.values()) == pytest.approx(np.real(rho.trace()), abs=1e-10)


def test_gate_fidelity_examples():
    X = np.array([[0, 1], [1, 0]])
    H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    assert gate_fidelity(H, H) == pytest.approx(1.0)
    assert gate_fidelity(np.exp(1j * math.pi / 7) * H, H) == pytest.approx(1.0)
    assert gate_fidelity(X, np.eye(2)) == 0.0
    assert phase_sensitive_fidelity(H, H) == pytest.approx(1.0)
    assert phase_sensitive_fidelity(-H, H) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        gate_fidelity(np.eye(2), np.eye(3))


@given(st.floats(-math.pi, math.pi), st.integers(0, 2**32 - 1))
def test_gate_fidelity_global_phase_invariance(phase, seed):
    r = np.random.default_rng(seed)
    A = r.normal(size=(4, 4)) + 1j * r.normal(size=(4, 4))
    B = r.normal(size=(4, 4)) + 1j * r.normal(size=(4, 4))
    e = np.exp(1j * phase)
    assert gate_fidelity(e * A, e * B) == pytest.approx(gate_fidelity(A, B), rel=1e-12)
