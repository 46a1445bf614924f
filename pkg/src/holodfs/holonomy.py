"""Holonomic gates in the DFS: analytic matrices, drive calibration, extraction."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .dfs import DfsBasis
from .lindblad import _rk4_unitary, default_dt, excitation_sectors, propagate_states
from .metrics import gate_fidelity
from .models import (
    FIRST_J0_ZERO,
    FIRST_J1_MAX,
    DeviceConfig,
    DriveParams,
    HarmonicTermSum,
    bessel_j,
)
from .operators import QOperator


class CalibrationError(ValueError):
    pass


def normalize_phase(phi: float) -> float:
    """Map an angle to (-pi, pi]."""
    out = math.remainder(phi, 2 * math.pi)
    return math.pi if out == -math.pi else out


@dataclass(frozen=True)
class GateSpec:
    theta: float
    phi: float = 0.0
    kind: str = "single"

    def __post_init__(self):
        if self.kind not in ("single", "double"):
            raise ValueError("kind must be 'single' or 'double'")
        if not 0 <= self.theta <= math.pi:
            raise ValueError("theta must lie in [0, pi]")
        object.__setattr__(self, "phi", normalize_phase(self.phi))


def single_qubit_gate_matrix(spec: GateSpec) -> np.ndarray:
    c, s = math.cos(spec.theta), math.sin(spec.theta)
    e = np.exp(1j * spec.phi)
    return np.array([[c, s * np.conj(e)], [s * e, -c]], dtype=complex)


def two_qubit_gate_matrix(spec: GateSpec) -> np.ndarray:
    c, s = math.cos(spec.theta), math.sin(spec.theta)
    e = np.exp(1j * spec.phi)
    U = np.zeros((4, 4), dtype=complex)
    U[:2, :2] = [[c, s * np.conj(e)], [s * e, -c]]
    U[2:, 2:] = [[-c, s * np.conj(e)], [s * e, c]]
    return U


def dark_bright_states(spec: GateSpec) -> tuple[np.ndarray, np.ndarray]:
    """Dark and bright combinations of |0>_L, |1>_L for the Lambda coupling."""
    c, s = math.cos(spec.theta / 2), math.sin(spec.theta / 2)
    e = np.exp(1j * spec.phi)
    dark = np.array([c, s * e], dtype=complex)
    bright = np.array([s * np.conj(e), -c], dtype=complex)
    return dark, bright


@dataclass(frozen=True)
class CalibrationResult:
    kind: str
    alphas: tuple[float, ...]
    phases: tuple[float, ...]
    xi: float
    tau: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.xi > 0 and self.tau > 0):
            raise CalibrationError("effective Rabi frequency and gate time must be positive")

    @property
    def beta(self) -> float:
        if self.kind != "double":
            raise AttributeError("beta is defined for two-qubit calibrations only")
        return self.alphas[0]

    def drives(self, omega: float) -> list[DriveParams]:
        return [DriveParams.from_alpha(a, omega, p) for a, p in zip(self.alphas, self.phases)]


def _solve_j1(target: float) -> float:
    # J1 rises monotonically on [0, FIRST_J1_MAX]
    if target <= 0:
        return 0.0
    return optimize.brentq(lambda x: bessel_j(1, x) - target, 0.0, FIRST_J1_MAX, xtol=1e-15, rtol=1e-15)


def calibrate_single(spec: GateSpec, g: float, delta_big: float | None = None,
                     reference_j1: float = 0.5) -> CalibrationResult:
    """Modulation depths and phases realising ``U(theta, phi)`` on one logical qubit.

    ``J1(alpha_2)`` is pinned to ``reference_j1`` and ``J1(alpha_1)`` follows
    from ``tan(theta/2) = J1(alpha_1)/J1(alpha_2)``; past the top of the first
    J1 lobe the roles swap.
    """
    if spec.kind != "single":
        raise ValueError("calibrate_single needs a single-qubit GateSpec")
    if not g > 0:
        raise ValueError("g must be positive")
    if math.isclose(spec.theta, math.pi, rel_tol=0, abs_tol=1e-12):
        raise CalibrationError("theta = pi needs J1(alpha_2) = 0; use the phi-rotated equivalent gate")
    ratio = math.tan(spec.theta / 2)
    j1max = bessel_j(1, FIRST_J1_MAX)
    if ratio * reference_j1 <= j1max:
        j1a, j1b = reference_j1 * ratio, reference_j1
    else:
        j1a, j1b = reference_j1, reference_j1 / ratio
    alpha1, alpha2 = _solve_j1(j1a), _solve_j1(j1b)
    J1a, J1b = bessel_j(1, alpha1), bessel_j(1, alpha2)
    phi2 = 0.0
    phi1 = normalize_phase(spec.phi + math.pi + phi2)
    xi = g * math.hypot(J1a, J1b)
    diag = {"J1_alpha1": J1a, "J1_alpha2": J1b}
    if delta_big is not None:
        diag["rwa_margin"] = delta_big / xi
    return CalibrationResult("single", (alpha1, alpha2), (phi1, phi2), xi, math.pi / xi, diag)


def calibrate_double(spec: GateSpec, device: DeviceConfig) -> CalibrationResult:
    """Modulation depth and phase of transmon 2 realising ``U(theta, phi)``.

    Solves ``g3 J1(beta) / (g J0(beta)) = tan(theta/2)`` below the first zero
    of J0. The drive phase is chosen so that the virtual-photon exchange
    reproduces the gate phase ``phi``.
    """
    if spec.kind != "double":
        raise ValueError("calibrate_double needs a two-qubit GateSpec")
    if device.delta_small is None:
        raise ValueError("device lacks delta_small / lambda")
    target = math.tan(spec.theta / 2)
    r = device.g3 / device.g
    if target == 0:
        beta = 0.0
    else:
        f = lambda b: r * bessel_j(1, b) - target * bessel_j(0, b)
        hi = FIRST_J0_ZERO - 1e-9
        if f(hi) <= 0:
            raise CalibrationError(f"theta={spec.theta} needs beta beyond the first J0 lobe")
        beta = optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-15)
    J0, J1 = bessel_j(0, beta), bessel_j(1, beta)
    lam, d = device.lam, device.delta_small
    scale = lam / (lam ** 2 - d ** 2)
    eta23, eta24 = device.g * device.g3 * scale, -device.g * device.g4 * scale
    xi = math.hypot(eta23 * J1, eta24 * J0)
    drive_phase = normalize_phase(-spec.phi - math.pi / 2)
    diag = {"J0_beta": J0, "J1_beta": J1, "eta": device.exchange_rate(),
            "rwa_margin": d / (device.g / math.sqrt(2))}
    return CalibrationResult("double", (beta,), (drive_phase,), xi, math.pi / xi, diag)


def extract_holonomy(U_full: QOperator, dfs: DfsBasis, computational_labels=None) -> tuple[np.ndarray, float]:
    """Computational block of a propagator and the population it loses."""
    if U_full.space != dfs.space:
        raise ValueError("propagator and DFS act on different spaces")
    idx = dfs.indices(computational_labels)
    block = U_full.matrix[np.ix_(idx, idx)]
    smin = np.linalg.svd(block, compute_uv=False).min()
    return block, float(max(0.0, 1.0 - smin ** 2))


class _BlockPropagator:
    """Closed-system propagator restricted to the sectors holding the DFS kets."""

    def __init__(self, H: HarmonicTermSum, dfs: DfsBasis, dt: float):
        self.dt = dt
        comp = dfs.indices()
        sectors = excitation_sectors(H)
        if sectors is None:
            keep = np.arange(H.space.dim)
        else:
            keep = np.concatenate([s for s in sectors if np.intersect1d(s, comp).size])
        self.H = H.compressed(keep)
        pos = {int(k): i for i, k in enumerate(keep)}
        self.comp = np.array([pos[int(k)] for k in comp])
        self.dim = keep.size

    def advance(self, U0: np.ndarray, t0: float, t1: float) -> np.ndarray:
        if t1 <= t0:
            return U0.copy()
        n = max(1, int(math.ceil((t1 - t0) / self.dt)))
        U, _ = _rk4_unitary(self.H.matrix_at, self.dim, t1 - t0, n, t_start=t0, U0=U0)
        return U

    def block(self, U: np.ndarray) -> np.ndarray:
        return U[np.ix_(self.comp, self.comp)]


def refine_gate_time(H_full: HarmonicTermSum, target_gate, dfs: DfsBasis, tau_initial: float,
                     dt: float | None = None, n_grid: int = 41, window: float = 0.2,
                     tol_ns: float = 0.01) -> float:
    """Gate time maximising closed-system gate fidelity near ``tau_initial``.

    Grid scan over ``[1-window, 1+window] * tau_initial`` followed by a
    golden-section search to ``tol_ns``. A multi-peaked scan returns the best
    grid point with a warning.
    """
    if not tau_initial > 0:
        raise ValueError("tau_initial must be positive")
    target = np.asarray(target_gate, dtype=complex)
    dt = default_dt(H_full, (1 + window) * tau_initial, tau_initial) if dt is None else dt
    prop = _BlockPropagator(H_full, dfs, dt)
    grid = np.linspace((1 - window) * tau_initial, (1 + window) * tau_initial, n_grid)

    Us, fids = [], []
    U, t = np.eye(prop.dim, dtype=complex), 0.0
    for tg in grid:
        U = prop.advance(U, t, tg)
        t = tg
        Us.append(U)
        fids.append(gate_fidelity(prop.block(U), target))
    fids = np.array(fids)
    best = int(np.argmax(fids))
    interior = fids[1:-1]
    peaks = np.sum((interior > fids[:-2]) & (interior >= fids[2:]))
    if peaks > 1 or best in (0, n_grid - 1):
        warnings.warn(f"gate fidelity is not unimodal over the scan window ({peaks} peaks); "
                      "returning best grid point", RuntimeWarning, stacklevel=2)
        return float(grid[best])

    lo_i = best - 1
    cache: dict[float, float] = {}

    def fid(tau):
        if tau not in cache:
            cache[tau] = gate_fidelity(prop.block(prop.advance(Us[lo_i], grid[lo_i], tau)), target)
        return cache[tau]

    a, b = grid[best - 1], grid[best + 1]
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    while b - a > tol_ns:
        if fid(c) >= fid(d):
            b, d = d, c
            c = b - invphi * (b - a)
        else:
            a, c = c, d
            d = a + invphi * (b - a)
    tau = 0.5 * (a + b)
    return float(tau if fid(tau) >= fids[best] else grid[best])


def closed_system_gate(H: HarmonicTermSum, dfs: DfsBasis, tau: float, dt: float | None = None):
    """Computational block and leakage of the closed-system propagator at ``tau``."""
    dt = default_dt(H, tau) if dt is None else dt
    prop = _BlockPropagator(H, dfs, dt)
    U = prop.advance(np.eye(prop.dim, dtype=complex), 0.0, tau)
    block = prop.block(U)
    smin = np.linalg.svd(block, compute_uv=False).min()
    return block, float(max(0.0, 1.0 - smin ** 2))


def check_parallel_transport(H: HarmonicTermSum, dfs: DfsBasis, spec: GateSpec, t_samples: int = 200,
                             tau: float | None = None, dt: float | None = None) -> float:
    """Largest |<psi_i(t)|H(t)|psi_j(t)>| along the dark and bright trajectories."""
    if spec.kind != "single":
        raise ValueError("parallel-transport check is defined for the single-qubit Lambda system")
    dark, bright = dark_bright_states(spec)
    idx = dfs.indices(("0", "1"))
    starts = []
    for v in (dark, bright):
        psi = np.zeros(dfs.space.dim, dtype=complex)
        psi[idx] = v
        starts.append(psi)
    if tau is None:
        M = H.matrix_at(0.0)
        # Rabi rate of the bright state into |E>
        xi = float(np.linalg.norm(M @ starts[1]))
        if xi == 0:
            return 0.0
        tau = math.pi / xi
    times, psi = propagate_states(H, starts, tau, t_samples, dt=dt)
    worst = 0.0
    for k, t in enumerate(times):
        P = psi[k]  # (2, dim)
        Hp = H.matrix_at(t) @ P.T
        worst = max(worst, float(np.max(np.abs(P.conj() @ Hp))))
    return worst
