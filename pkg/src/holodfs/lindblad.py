"""Fixed-step RK4 propagation of density matrices and unitaries.

Dissipators follow ``rate * (2 A rho A^dag - A^dag A rho - rho A^dag A)``, so
a cavity decaying at ``kappa`` enters with ``rate = kappa / 2``.

When every Hamiltonian term conserves the total excitation number and every
collapse operator does not raise it, the state never leaves the block of
excitations ``<= max N(rho0)``; propagation then runs on that block alone.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .models import HarmonicTermSum
from .operators import (
    HilbertSpace,
    QOperator,
    StateVector,
    transmon_lowering,
    transmon_sigma_z,
    annihilation,
)

log = logging.getLogger(__name__)

TRACE_ABORT = 1e-6
MIN_SAMPLES = 500
REUNITARIZE_EVERY = 1000
_BLOCK_TOL = 1e-12


class NumericalAbort(RuntimeError):
    """Integration left the physical state manifold."""


@dataclass(frozen=True)
class NoiseParams:
    kappa: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0

    def __post_init__(self):
        for name in ("kappa", "gamma1", "gamma2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def scaled(self, kappa_factor: float = 1.0) -> "NoiseParams":
        return NoiseParams(self.kappa * kappa_factor, self.gamma1, self.gamma2)


@dataclass(frozen=True, eq=False)
class CollapseSet:
    space: HilbertSpace
    channels: tuple[tuple[QOperator, float], ...] = ()

    def __post_init__(self):
        for op, rate in self.channels:
            if rate < 0:
                raise ValueError("dissipator rates must be >= 0")
            if op.space != self.space:
                raise ValueError("collapse operator on a different space")

    def active(self):
        return [(op, r) for op, r in self.channels if r > 0]


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError("density matrix shape does not match space")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def pure(cls, state: StateVector) -> "DensityMatrix":
        return cls(state.space, np.outer(state.amplitudes, state.amplitudes.conj()))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def validate(self, trace_tol=1e-8, herm_tol=1e-10, pos_tol=1e-8):
        if abs(self.trace() - 1) > trace_tol:
            raise ValueError(f"trace {self.trace():.12g} differs from 1")
        if self.hermiticity_error() > herm_tol:
            raise ValueError("density matrix is not Hermitian")
        if self.min_eigenvalue() < -pos_tol:
            raise ValueError("density matrix is not positive semidefinite")
        return self


@dataclass
class SimulationTrace:
    times: np.ndarray
    observables: dict[str, np.ndarray]
    final_state: DensityMatrix
    trace_drift: float = 0.0
    max_hermiticity_error: float = 0.0
    dt: float = 0.0
    n_steps: int = 0
    block_dim: int = 0
    wall_seconds: float = 0.0
    extra: dict = field(default_factory=dict)


def collapse_set_single(space: HilbertSpace, noise: NoiseParams) -> CollapseSet:
    if tuple(space.labels) != ("q1", "q2", "c"):
        raise ValueError(f"expected single-qubit space (q1, q2, c), got {space.labels}")
    a = annihilation(space, "c")
    s = transmon_lowering(space, "q1") + transmon_lowering(space, "q2")
    z = transmon_sigma_z(space, "q1") + transmon_sigma_z(space, "q2")
    return CollapseSet(space, ((a, noise.kappa / 2), (s, noise.gamma1 / 2), (z, noise.gamma2 / 2)))


def collapse_set_double(space: HilbertSpace, noise: NoiseParams) -> CollapseSet:
    if tuple(space.labels) != ("q1", "q2", "c1", "q3", "q4", "c2"):
        raise ValueError(f"expected two-qubit space (q1, q2, c1, q3, q4, c2), got {space.labels}")
    channels = []
    for cav, (qa, qb) in (("c1", ("q1", "q2")), ("c2", ("q3", "q4"))):
        channels.append((annihilation(space, cav), noise.kappa / 2))
        channels.append((transmon_lowering(space, qa) + transmon_lowering(space, qb), noise.gamma1 / 2))
        channels.append((transmon_sigma_z(space, qa) + transmon_sigma_z(space, qb), noise.gamma2 / 2))
    return CollapseSet(space, tuple(channels))


# -- invariant blocks -------------------------------------------------------

def _excitations(space: HilbertSpace) -> np.ndarray:
    return space.occupations().sum(axis=1)


def _shift_of(matrix: np.ndarray, N: np.ndarray):
    """Excitation change of an operator if it is uniform, else None."""
    rows, cols = np.nonzero(np.abs(matrix) > _BLOCK_TOL)
    if rows.size == 0:
        return 0
    shifts = np.unique(N[rows] - N[cols])
    return int(shifts[0]) if shifts.size == 1 else None


def conserves_excitation(H: HarmonicTermSum) -> bool:
    N = _excitations(H.space)
    return all(_shift_of(m, N) == 0 for m in H.operator_matrices())


def invariant_block(H: HarmonicTermSum, collapse: CollapseSet | None, rho0: np.ndarray) -> np.ndarray:
    """Basis indices of the smallest excitation block ``N <= N0`` holding the dynamics.

    Falls back to every index when the structure does not allow it.
    """
    space = H.space
    N = _excitations(space)
    full = np.arange(space.dim)
    if not conserves_excitation(H):
        return full
    for op, _ in (collapse.active() if collapse else []):
        s = _shift_of(op.matrix, N)
        if s is None or s > 0:
            return full
    support = np.nonzero(np.abs(np.diag(rho0)) > 0)[0]
    n0 = N[support].max() if support.size else 0
    return np.nonzero(N <= n0)[0]


def excitation_sectors(H: HarmonicTermSum) -> list[np.ndarray] | None:
    """Blocks of fixed excitation number when H conserves it."""
    if not conserves_excitation(H):
        return None
    N = _excitations(H.space)
    return [np.nonzero(N == n)[0] for n in np.unique(N)]


# -- step size ---------------------------------------------------------------

def default_dt(H: HarmonicTermSum, t_final: float, tau_gate: float | None = None) -> float:
    """min(2 pi / (40 * max_frequency), tau / 2000)."""
    tau = t_final if tau_gate is None else tau_gate
    cands = [tau / 2000.0]
    nu = H.max_frequency()
    if nu > 0:
        cands.append(2 * np.pi / (40 * nu))
    return min(cands)


def _grid(t_final: float, dt: float, n_samples: int):
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    if not dt > 0 or not np.isfinite(dt):
        raise ValueError(f"invalid step size dt={dt}")
    per = max(1, int(np.ceil(t_final / n_samples / dt)))
    n_steps = per * n_samples
    if n_steps > 50_000_000:
        raise ValueError("step count exceeds 5e7; step size underflow")
    return t_final / n_steps, per, n_steps


# -- master equation ---------------------------------------------------------

@np.errstate(over="ignore", invalid="ignore")
def propagate_master(H: HarmonicTermSum, collapse: CollapseSet | None, rho0: DensityMatrix, t_final: float,
                     record: Mapping[str, QOperator] | None = None, dt: float | None = None,
                     n_samples: int = MIN_SAMPLES, tau_gate: float | None = None,
                     restrict: bool = True, check_every: int = 50) -> SimulationTrace:
    """Integrate d rho/dt = -i[H(t), rho] + sum_k rate_k L(A_k) rho by RK4.

    ``record`` maps names to observables whose real expectation values are
    sampled on ``n_samples + 1`` evenly spaced times including 0. The step is
    shrunk so that samples land exactly on steps.
    """
    t0_wall = time.perf_counter()
    if rho0.space != H.space:
        raise ValueError("initial state and Hamiltonian act on different spaces")
    n_samples = max(int(n_samples), 1)
    dt = default_dt(H, t_final, tau_gate) if dt is None else float(dt)
    dt, per, n_steps = _grid(t_final, dt, n_samples)

    idx = invariant_block(H, collapse, rho0.matrix) if restrict else np.arange(H.space.dim)
    ix = np.ix_(idx, idx)
    if idx.size < H.space.dim:
        leaked = np.sum(np.abs(rho0.matrix)) - np.sum(np.abs(rho0.matrix[ix]))
        if leaked > 1e-14:
            idx = np.arange(H.space.dim)
            ix = np.ix_(idx, idx)
    Hc = H.compressed(idx)
    Ls, K = [], np.zeros((idx.size, idx.size), dtype=complex)
    for op, rate in (collapse.active() if collapse else []):
        L = op.matrix[ix]
        LdL = (op.matrix.conj().T @ op.matrix)[ix]
        Ls.append((2 * rate, L, L.conj().T))
        K += rate * LdL

    def rhs(t, r):
        Hn = Hc.matrix_at(t) - 1j * K
        d = -1j * (Hn @ r)
        d = d + d.conj().T  # rho Hermitian: -i(Hn r - r Hn^dag) = X + X^dag with X = -i Hn r
        for w, L, Ld in Ls:
            d += w * (L @ r @ Ld)
        return d

    names = list(record or {})
    obs_mats = [record[n].matrix[ix] for n in names]
    series = {n: np.empty(n_samples + 1) for n in names}
    times = np.linspace(0.0, t_final, n_samples + 1)
    rho = rho0.matrix[ix].copy()

    def sample(k, r):
        for n, O in zip(names, obs_mats):
            series[n][k] = float(np.real(np.sum(O.T * r)))

    sample(0, rho)
    drift = 0.0
    herm = 0.0
    h = dt
    for step in range(1, n_steps + 1):
        t = (step - 1) * h
        k1 = rhs(t, rho)
        k2 = rhs(t + h / 2, rho + (h / 2) * k1)
        k3 = rhs(t + h / 2, rho + (h / 2) * k2)
        k4 = rhs(t + h, rho + h * k3)
        rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if step % per == 0:
            sample(step // per, rho)
        if step % check_every == 0 or step == n_steps:
            tr_err = abs(np.trace(rho) - 1)
            drift = max(drift, tr_err)
            if tr_err > TRACE_ABORT:
                raise NumericalAbort(f"trace drift {tr_err:.3g} at t={step * h:.4g} ns (dt={h:.4g})")
            # RK4 keeps the trace even when it diverges; |rho_ij| <= 1 catches that
            big = float(np.max(np.abs(rho)))
            if not np.isfinite(big) or big > 1 + TRACE_ABORT:
                raise NumericalAbort(f"state diverged (max|rho_ij| = {big:.3g}) at t={step * h:.4g} ns (dt={h:.4g})")
            if step % (check_every * 20) == 0 or step == n_steps:
                herm = max(herm, float(np.max(np.abs(rho - rho.conj().T))))

    full = np.zeros((H.space.dim, H.space.dim), dtype=complex)
    full[ix] = rho
    log.debug("master: %d steps of %.4g ns on block of dim %d", n_steps, h, idx.size)
    return SimulationTrace(times=times, observables=series, final_state=DensityMatrix(H.space, full),
                           trace_drift=drift, max_hermiticity_error=herm, dt=h, n_steps=n_steps,
                           block_dim=int(idx.size), wall_seconds=time.perf_counter() - t0_wall)


# -- unitary propagation -----------------------------------------------------

def _polar_unitary(U: np.ndarray) -> np.ndarray:
    u, _ = scipy.linalg.polar(U)
    return u


def _rk4_unitary(matrix_at: Callable[[float], np.ndarray], dim: int, t_final: float, n_steps: int,
                 t_start: float = 0.0, U0: np.ndarray | None = None,
                 checkpoints: Sequence[int] = ()) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    h = t_final / n_steps
    U = np.eye(dim, dtype=complex) if U0 is None else U0.copy()
    saved = {}
    marks = set(checkpoints)
    for step in range(1, n_steps + 1):
        t = t_start + (step - 1) * h
        H1 = matrix_at(t)
        Hm = matrix_at(t + h / 2)
        H4 = matrix_at(t + h)
        k1 = -1j * (H1 @ U)
        k2 = -1j * (Hm @ (U + (h / 2) * k1))
        k3 = -1j * (Hm @ (U + (h / 2) * k2))
        k4 = -1j * (H4 @ (U + h * k3))
        U = U + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if step % REUNITARIZE_EVERY == 0:
            U = _polar_unitary(U)
        if step in marks:
            saved[step] = _polar_unitary(U)
    return _polar_unitary(U), saved


def propagate_unitary(H: HarmonicTermSum, t_final: float, dt: float | None = None,
                      tau_gate: float | None = None) -> QOperator:
    """Time-ordered propagator U(t_final) from dU/dt = -i H(t) U, U(0) = I.

    Excitation-conserving Hamiltonians are propagated block by block.
    """
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    dt = default_dt(H, t_final, tau_gate) if dt is None else float(dt)
    if not dt > 0:
        raise ValueError(f"invalid step size dt={dt}")
    n_steps = max(1, int(np.ceil(t_final / dt)))
    sectors = excitation_sectors(H) or [np.arange(H.space.dim)]
    U = np.zeros((H.space.dim, H.space.dim), dtype=complex)
    for idx in sectors:
        Hc = H.compressed(idx)
        if not np.any(Hc.static) and not np.any(Hc.ops):
            U[np.ix_(idx, idx)] = np.eye(idx.size)
            continue
        Ub, _ = _rk4_unitary(Hc.matrix_at, idx.size, t_final, n_steps)
        U[np.ix_(idx, idx)] = Ub
    err = np.max(np.abs(U.conj().T @ U - np.eye(H.space.dim)))
    if err > 1e-9:
        raise NumericalAbort(f"propagator not unitary (max|U^dag U - I| = {err:.3g})")
    return QOperator(H.space, U)


def propagate_states(H: HarmonicTermSum, states: Sequence[np.ndarray], t_final: float, n_samples: int,
                     dt: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Closed-system evolution of state vectors sampled on an even grid.

    Returns ``(times, psi)`` with ``psi`` of shape ``(n_samples + 1, n_states, dim)``.
    """
    dt = default_dt(H, t_final) if dt is None else float(dt)
    dt, per, n_steps = _grid(t_final, dt, n_samples)
    psi = np.array(states, dtype=complex).T  # columns
    out = np.empty((n_samples + 1, psi.shape[1], psi.shape[0]), dtype=complex)
    out[0] = psi.T
    h = dt
    for step in range(1, n_steps + 1):
        t = (step - 1) * h
        H1, Hm, H4 = H.matrix_at(t), H.matrix_at(t + h / 2), H.matrix_at(t + h)
        k1 = -1j * (H1 @ psi)
        k2 = -1j * (Hm @ (psi + (h / 2) * k1))
        k3 = -1j * (Hm @ (psi + (h / 2) * k2))
        k4 = -1j * (H4 @ (psi + h * k3))
        psi = psi + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if step % per == 0:
            out[step // per] = psi.T
    return np.linspace(0.0, t_final, n_samples + 1), out
