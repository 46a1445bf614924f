"""Populations, state and gate fidelities."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .dfs import DfsBasis
from .lindblad import DensityMatrix
from .operators import QOperator, StateVector


def embed_logical_state(dfs: DfsBasis, logical_amplitudes: Sequence[complex]) -> StateVector:
    amps = np.asarray(logical_amplitudes, dtype=complex).reshape(-1)
    if amps.size != len(dfs.computational):
        raise ValueError(f"expected {len(dfs.computational)} amplitudes, got {amps.size}")
    norm = np.linalg.norm(amps)
    if abs(norm - 1) > 1e-8:
        raise ValueError(f"logical amplitudes not normalized (norm {norm:.10g})")
    v = np.zeros(dfs.space.dim, dtype=complex)
    v[dfs.indices()] = amps / norm
    return StateVector(dfs.space, v)


def state_fidelity(rho: DensityMatrix, target: StateVector) -> float:
    """<psi|rho|psi>, clamped to [0, 1]."""
    if rho.space != target.space:
        raise ValueError("state and target act on different spaces")
    psi = target.amplitudes
    f = float(np.real(np.vdot(psi, rho.matrix @ psi)))
    return min(max(f, 0.0), 1.0)


def populations(rho: DensityMatrix, dfs: DfsBasis) -> dict[str, float]:
    """Diagonal weight of every DFS ket plus the residual outside the DFS."""
    if rho.space != dfs.space:
        raise ValueError("state and DFS act on different spaces")
    diag = np.real(np.diag(rho.matrix))
    out = {lab: float(diag[dfs.index(lab)]) for lab in dfs.labels}
    out["residual"] = float(np.real(rho.trace())) - sum(out.values())
    return out


def population_observables(dfs: DfsBasis) -> dict[str, QOperator]:
    return {f"pop_{lab}": dfs.ket(lab).projector() for lab in dfs.labels}


def gate_fidelity(achieved, target) -> float:
    """|tr(target^dag achieved)|^2 / d^2, insensitive to global phase."""
    A, T = np.asarray(achieved, dtype=complex), np.asarray(target, dtype=complex)
    if A.shape != T.shape or A.shape[0] != A.shape[1]:
        raise ValueError(f"shape mismatch: {A.shape} vs {T.shape}")
    d = A.shape[0]
    return float(abs(np.trace(T.conj().T @ A)) ** 2 / d ** 2)


def phase_sensitive_fidelity(achieved, target) -> float:
    """Re tr(target^dag achieved) / d; equals 1 only without a global phase."""
    A, T = np.asarray(achieved, dtype=complex), np.asarray(target, dtype=complex)
    if A.shape != T.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {T.shape}")
    return float(np.real(np.trace(T.conj().T @ A)) / A.shape[0])
