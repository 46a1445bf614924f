"""Named scenarios, configuration files, sweeps and CSV/JSON output.

Configuration files are INI-style (``configparser``). Frequencies carry a
``_mhz`` suffix, noise rates ``_khz`` and times ``_ns``; everything is
converted to rad/ns and ns on load. A file may start from a built-in
scenario with ``base = <name>`` and override individual keys::

    [scenario]
    base = hadamard-fig2a

    [device]
    g_mhz = 50

    [noise]
    kappa_khz = 100

Sections and keys (all optional when ``base`` is given):

``[scenario]``  name, base, kind (single|double), fidelity_model,
    initial_state, target_state, t_final_ns, dt_ns, seed,
    stark_compensation, refine_tau, effective_model, compare_two_level
``[device]``    g_mhz, delta_big_mhz, anharmonicity_mhz, transmon_levels,
    n_max, delta_small_mhz, lambda_mhz, g3_mhz, g4_mhz, coupling_on
``[noise]``     kappa_khz, gamma1_khz, gamma2_khz
``[gate]``      theta, phi (rad)
``[drives]``    alpha1, alpha2, phi1, phi2 (single) or beta, phi_drive (double)
``[output]``    trace_csv, summary_json

States are comma-separated complex amplitudes over the computational kets,
e.g. ``1, 0`` or ``0.7071, -0.7071, 0, 0``.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dfs import single_qubit_dfs, two_qubit_dfs
from .holonomy import (
    CalibrationResult,
    GateSpec,
    calibrate_double,
    calibrate_single,
    closed_system_gate,
    refine_gate_time,
    single_qubit_gate_matrix,
    two_qubit_gate_matrix,
)
from .lindblad import (
    DensityMatrix,
    NoiseParams,
    SimulationTrace,
    collapse_set_double,
    collapse_set_single,
    propagate_master,
)
from .metrics import embed_logical_state, gate_fidelity, population_observables
from .models import (
    FIDELITY_MODELS,
    KHZ,
    MHZ,
    DeviceConfig,
    DriveParams,
    bessel_j,
    build_single_qubit_model,
    build_two_qubit_model,
    effective_two_qubit_hamiltonian,
    stark_compensated,
)

log = logging.getLogger(__name__)

WORKERS_ENV = "HOLODFS_WORKERS"
SWEEPABLE = ("kappa", "g", "delta_big", "anharmonicity", "dt")


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    kind: str
    device: DeviceConfig
    noise: NoiseParams = NoiseParams()
    gate: GateSpec | None = None
    drives: tuple[DriveParams, ...] | None = None
    fidelity_model: str = "with_J0_oscillation"
    initial_state: tuple[complex, ...] = (1.0, 0.0)
    target_state: tuple[complex, ...] | None = None
    t_final: float | None = None
    dt: float | None = None
    trace_csv: str | None = None
    summary_json: str | None = None
    seed: int = 0
    stark_compensation: bool = True
    refine_tau: bool = True
    effective_model: bool = False
    compare_two_level: bool = False

    def __post_init__(self):
        if self.kind not in ("single", "double"):
            raise ConfigError(f"scenario.kind: expected 'single' or 'double', got {self.kind!r}")
        if (self.gate is None) == (self.drives is None):
            raise ConfigError("exactly one of [gate] and [drives] must be given")
        if self.gate is not None and self.gate.kind != self.kind:
            raise ConfigError("gate kind does not match scenario kind")
        if self.drives is not None and len(self.drives) != (2 if self.kind == "single" else 1):
            raise ConfigError("drives: wrong number of drives for this scenario kind")
        if self.kind == "single" and self.fidelity_model not in FIDELITY_MODELS:
            raise ConfigError(f"scenario.fidelity_model: unknown model {self.fidelity_model!r}")
        n_comp = 2 if self.kind == "single" else 4
        for key in ("initial_state", "target_state"):
            v = getattr(self, key)
            if v is not None and len(v) != n_comp:
                raise ConfigError(f"scenario.{key}: expected {n_comp} amplitudes")
        for key in ("t_final", "dt"):
            v = getattr(self, key)
            if v is not None and not v > 0:
                raise ConfigError(f"scenario.{key}_ns must be positive")

    def resolved_parameters(self) -> dict:
        """Every parameter that enters the run, in rad/ns and ns."""
        out = {f"device.{k}": v for k, v in dataclasses.asdict(self.device).items()}
        out.update({f"noise.{k}": v for k, v in dataclasses.asdict(self.noise).items()})
        out.update(kind=self.kind, fidelity_model=self.fidelity_model,
                   initial_state=_amps_to_json(self.initial_state),
                   target_state=None if self.target_state is None else _amps_to_json(self.target_state),
                   t_final=self.t_final, dt=self.dt, seed=self.seed,
                   stark_compensation=self.stark_compensation, refine_tau=self.refine_tau,
                   effective_model=self.effective_model)
        if self.gate is not None:
            out.update({"gate.theta": self.gate.theta, "gate.phi": self.gate.phi})
        if self.drives is not None:
            for i, d in enumerate(self.drives, 1):
                out.update({f"drive{i}.alpha": d.alpha, f"drive{i}.omega": d.omega, f"drive{i}.phi": d.phi})
        return out


@dataclass
class RunSummary:
    scenario: str
    parameters: dict
    xi: float
    tau_ns: float
    final_fidelity: float
    peak_fidelity: float
    peak_time_ns: float
    leakage: float
    trace_drift: float
    warnings: list[str] = field(default_factory=list)
    wall_seconds: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in ("final_fidelity", "peak_fidelity"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{key}={v} outside [0, 1]")

    def to_json(self) -> dict:
        return _jsonable(dataclasses.asdict(self))


# -- built-in scenarios ------------------------------------------------------

_NOMINAL_NOISE = NoiseParams(10 * KHZ, 10 * KHZ, 10 * KHZ)
_HADAMARD = GateSpec(math.pi / 4, 0.0, "single")
_CNOT_LIKE = GateSpec(math.pi / 4, 0.0, "double")
_INV_SQRT2 = 1 / math.sqrt(2)

BUILTIN: dict[str, ScenarioConfig] = {
    "hadamard-fig2a": ScenarioConfig(
        "hadamard-fig2a", "single", DeviceConfig(g=50 * MHZ, delta_big=500 * MHZ), _NOMINAL_NOISE,
        gate=_HADAMARD, fidelity_model="with_J0_oscillation", initial_state=(1.0, 0.0)),
    "third-level": ScenarioConfig(
        "third-level", "single",
        DeviceConfig(g=50 * MHZ, delta_big=500 * MHZ, anharmonicity=500 * MHZ, transmon_levels=3),
        _NOMINAL_NOISE, gate=_HADAMARD, fidelity_model="with_third_level", initial_state=(1.0, 0.0),
        compare_two_level=True),
    "two-qubit-fig3": ScenarioConfig(
        "two-qubit-fig3", "double",
        DeviceConfig(g=30 * MHZ, delta_big=150 * MHZ, delta_small=150 * MHZ, lam=300 * MHZ),
        _NOMINAL_NOISE, gate=_CNOT_LIKE, initial_state=(0.0, 1.0, 0.0, 0.0),
        target_state=(_INV_SQRT2, -_INV_SQRT2, 0.0, 0.0)),
    "two-qubit-lowanharm": ScenarioConfig(
        "two-qubit-lowanharm", "double",
        DeviceConfig(g=20 * MHZ, delta_big=100 * MHZ, anharmonicity=300 * MHZ, transmon_levels=3,
                     delta_small=100 * MHZ, lam=200 * MHZ),
        _NOMINAL_NOISE, gate=_CNOT_LIKE, initial_state=(0.0, 1.0, 0.0, 0.0),
        target_state=(_INV_SQRT2, -_INV_SQRT2, 0.0, 0.0)),
}

KAPPA_FACTORS = (1, 5, 10, 15, 20, 25, 30)


@dataclass(frozen=True)
class SweepScenario:
    """A built-in sweep: one curve per base configuration."""

    name: str
    curves: dict[str, ScenarioConfig]
    parameter: str
    values: tuple[float, ...]


def _kappa_sweep() -> SweepScenario:
    base = replace(BUILTIN["hadamard-fig2a"], name="kappa-sweep-fig2b")
    doubled = replace(base, device=replace(base.device, g=2 * base.device.g, delta_big=2 * base.device.delta_big,
                                           anharmonicity=2 * base.device.anharmonicity))
    values = tuple(f * base.noise.kappa for f in KAPPA_FACTORS)
    return SweepScenario("kappa-sweep-fig2b", {"g_delta": base, "2g_2delta": doubled}, "kappa", values)


BUILTIN_SWEEPS: dict[str, SweepScenario] = {"kappa-sweep-fig2b": _kappa_sweep()}

DESCRIPTIONS = {
    "hadamard-fig2a": "Hadamard on one DFS qubit with carrier oscillation and nominal noise rates",
    "kappa-sweep-fig2b": "peak Hadamard fidelity vs cavity decay for (g, Delta) and (2g, 2Delta)",
    "third-level": "Hadamard with 3-level transmons; added infidelity vs the 2-level run",
    "two-qubit-fig3": "entangling gate U(pi/4, 0) on two DFS qubits, |01> -> (|00> - |01>)/sqrt2",
    "two-qubit-lowanharm": "two-qubit gate with anharmonicity 300 MHz and g = delta/5 = 20 MHz",
}


def list_scenarios() -> list[tuple[str, str]]:
    names = list(BUILTIN) + list(BUILTIN_SWEEPS)
    order = ["hadamard-fig2a", "kappa-sweep-fig2b", "third-level", "two-qubit-fig3", "two-qubit-lowanharm"]
    names.sort(key=lambda n: order.index(n) if n in order else len(order))
    return [(n, DESCRIPTIONS.get(n, "")) for n in names]


def get_scenario(name: str) -> ScenarioConfig:
    try:
        return BUILTIN[name]
    except KeyError:
        known = ", ".join(n for n, _ in list_scenarios())
        raise ConfigError(f"unknown scenario {name!r}; known: {known}") from None


# -- configuration files -----------------------------------------------------

_SCHEMA = {
    "scenario": {"name", "base", "kind", "fidelity_model", "initial_state", "target_state", "t_final_ns",
                 "dt_ns", "seed", "stark_compensation", "refine_tau", "effective_model", "compare_two_level"},
    "device": {"g_mhz", "delta_big_mhz", "anharmonicity_mhz", "transmon_levels", "n_max", "delta_small_mhz",
               "lambda_mhz", "g3_mhz", "g4_mhz", "coupling_on"},
    "noise": {"kappa_khz", "gamma1_khz", "gamma2_khz"},
    "gate": {"theta", "phi"},
    "drives": {"alpha1", "alpha2", "phi1", "phi2", "beta", "phi_drive"},
    "output": {"trace_csv", "summary_json"},
}

_DEVICE_KEYS = {"g_mhz": "g", "delta_big_mhz": "delta_big", "anharmonicity_mhz": "anharmonicity",
                "delta_small_mhz": "delta_small", "lambda_mhz": "lam", "g3_mhz": "g3", "g4_mhz": "g4"}


def _parse_amps(text: str, where: str) -> tuple[complex, ...]:
    try:
        return tuple(complex(s.strip().replace(" ", "")) for s in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse amplitudes {text!r}") from exc


def _amps_to_json(amps):
    return [[float(np.real(a)), float(np.imag(a))] for a in amps]


def _float(sec, key, where, nonneg=False) -> float:
    try:
        v = sec.getfloat(key)
    except ValueError as exc:
        raise ConfigError(f"{where}: expected a number, got {sec[key]!r}") from exc
    if not math.isfinite(v):
        raise ConfigError(f"{where}: must be finite")
    if nonneg and v < 0:
        raise ConfigError(f"{where}: must be >= 0, got {v}")
    return v


def _bool(sec, key, where) -> bool:
    try:
        return sec.getboolean(key)
    except ValueError as exc:
        raise ConfigError(f"{where}: expected true/false, got {sec[key]!r}") from exc


def _int(sec, key, where) -> int:
    try:
        return sec.getint(key)
    except ValueError as exc:
        raise ConfigError(f"{where}: expected an integer, got {sec[key]!r}") from exc


def parse_config(path) -> ScenarioConfig:
    """Load and validate a scenario file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: malformed config: {exc}") from exc
    return config_from_mapping({s: dict(cp[s]) for s in cp.sections()}, source=str(path))


def config_from_mapping(data: dict[str, dict[str, str]], source: str = "<mapping>") -> ScenarioConfig:
    """Validate a ``{section: {key: text}}`` mapping into a ScenarioConfig."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(data)
    for sname in cp.sections():
        if sname not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sname}]")
        for key in cp[sname]:
            if key not in _SCHEMA[sname]:
                raise ConfigError(f"{source}: unknown key {sname}.{key}")
    sc = cp["scenario"] if cp.has_section("scenario") else {}

    base = None
    if "base" in sc:
        base = get_scenario(sc["base"])
        kind = sc.get("kind", base.kind)
        if kind != base.kind:
            raise ConfigError(f"{source}: scenario.kind {kind!r} conflicts with base {base.name!r}")
    else:
        if "kind" not in sc:
            raise ConfigError(f"{source}: scenario.kind is required without a base scenario")
        kind = sc["kind"]
    if kind not in ("single", "double"):
        raise ConfigError(f"{source}: scenario.kind must be 'single' or 'double'")

    # device
    dev_kw = dataclasses.asdict(base.device) if base else {}
    if cp.has_section("device"):
        sec = cp["device"]
        for key, attr in _DEVICE_KEYS.items():
            if key in sec:
                dev_kw[attr] = _float(sec, key, f"device.{key}") * MHZ
        if "transmon_levels" in sec:
            dev_kw["transmon_levels"] = _int(sec, "transmon_levels", "device.transmon_levels")
        if "n_max" in sec:
            dev_kw["n_max"] = _int(sec, "n_max", "device.n_max")
        if "coupling_on" in sec:
            dev_kw["coupling_on"] = _bool(sec, "coupling_on", "device.coupling_on")
        # derived defaults follow the overridden base values
        if base and "g_mhz" in sec:
            for attr, sign in (("g3", 1), ("g4", -1)):
                if f"{attr}_mhz" not in sec and dev_kw.get(attr) == sign * base.device.g:
                    dev_kw[attr] = sign * dev_kw["g"]
        if base and "delta_big_mhz" in sec and "anharmonicity_mhz" not in sec \
                and base.device.anharmonicity == base.device.delta_big:
            dev_kw["anharmonicity"] = dev_kw["delta_big"]
        if base and "delta_small_mhz" in sec and "lambda_mhz" not in sec and base.device.lam is not None \
                and math.isclose(base.device.lam, 2 * base.device.delta_small):
            dev_kw["lam"] = 2 * dev_kw["delta_small"]
    for key in ("g", "delta_big"):
        if key not in dev_kw:
            raise ConfigError(f"{source}: device.{key}_mhz is required")
    try:
        device = DeviceConfig(**dev_kw)
    except ValueError as exc:
        raise ConfigError(f"{source}: device: {exc}") from exc
    if kind == "double" and device.delta_small is None:
        raise ConfigError(f"{source}: device.delta_small_mhz is required for two-qubit scenarios")

    # noise
    noise = base.noise if base else NoiseParams()
    if cp.has_section("noise"):
        sec = cp["noise"]
        vals = {f: getattr(noise, f) for f in ("kappa", "gamma1", "gamma2")}
        for f in vals:
            if f"{f}_khz" in sec:
                vals[f] = _float(sec, f"{f}_khz", f"noise.{f}_khz", nonneg=True) * KHZ
        noise = NoiseParams(**vals)

    # gate or drives
    has_gate, has_drives = cp.has_section("gate"), cp.has_section("drives")
    if has_gate and has_drives:
        raise ConfigError(f"{source}: give either [gate] or [drives], not both")
    gate, drives = (base.gate, base.drives) if base else (None, None)
    if has_gate:
        sec = cp["gate"]
        theta = _float(sec, "theta", "gate.theta") if "theta" in sec else (gate.theta if gate else None)
        if theta is None:
            raise ConfigError(f"{source}: gate.theta is required")
        phi = _float(sec, "phi", "gate.phi") if "phi" in sec else (gate.phi if gate else 0.0)
        try:
            gate = GateSpec(theta, phi, kind)
        except ValueError as exc:
            raise ConfigError(f"{source}: gate: {exc}") from exc
        drives = None
    if has_drives:
        drives = _parse_drives(cp["drives"], kind, device, source)
        gate = None

    # scenario options
    opts = {}
    if base:
        opts = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)
                if f.name not in ("device", "noise", "gate", "drives", "kind")}
    opts["name"] = sc.get("name", base.name if base else "custom")
    if "fidelity_model" in sc:
        opts["fidelity_model"] = sc["fidelity_model"]
    if "initial_state" in sc:
        opts["initial_state"] = _parse_amps(sc["initial_state"], "scenario.initial_state")
    elif not base:
        opts["initial_state"] = (1.0, 0.0) if kind == "single" else (0.0, 1.0, 0.0, 0.0)
    if "target_state" in sc:
        opts["target_state"] = _parse_amps(sc["target_state"], "scenario.target_state")
    for key, attr in (("t_final_ns", "t_final"), ("dt_ns", "dt")):
        if key in sc:
            opts[attr] = _float(sc, key, f"scenario.{key}")
    if "seed" in sc:
        opts["seed"] = _int(sc, "seed", "scenario.seed")
    for key in ("stark_compensation", "refine_tau", "effective_model", "compare_two_level"):
        if key in sc:
            opts[key] = _bool(sc, key, f"scenario.{key}")
    if cp.has_section("output"):
        for key in ("trace_csv", "summary_json"):
            if key in cp["output"]:
                opts[key] = cp["output"][key]
    try:
        return ScenarioConfig(kind=kind, device=device, noise=noise, gate=gate, drives=drives, **opts)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _parse_drives(sec, kind, device, source) -> tuple[DriveParams, ...]:
    if kind == "single":
        need, omega = ("alpha1", "alpha2"), device.delta_big
        extra = set(sec) - {"alpha1", "alpha2", "phi1", "phi2"}
    else:
        need, omega = ("beta",), 2 * device.delta_small
        extra = set(sec) - {"beta", "phi_drive"}
    if extra:
        raise ConfigError(f"{source}: drives: keys {sorted(extra)} do not apply to {kind} scenarios")
    for k in need:
        if k not in sec:
            raise ConfigError(f"{source}: drives.{k} is required")
    try:
        if kind == "single":
            return tuple(DriveParams.from_alpha(_float(sec, f"alpha{i}", f"drives.alpha{i}", nonneg=True), omega,
                                                _float(sec, f"phi{i}", f"drives.phi{i}") if f"phi{i}" in sec else 0.0)
                         for i in (1, 2))
        phi = _float(sec, "phi_drive", "drives.phi_drive") if "phi_drive" in sec else 0.0
        return (DriveParams.from_alpha(_float(sec, "beta", "drives.beta", nonneg=True), omega, phi),)
    except ValueError as exc:
        raise ConfigError(f"{source}: drives: {exc}") from exc


# -- running -----------------------------------------------------------------

def calibrate(config: ScenarioConfig) -> CalibrationResult:
    """Drive parameters for the scenario, from its GateSpec or explicit drives."""
    dev = config.device
    if config.kind == "single":
        if config.gate is not None:
            return calibrate_single(config.gate, dev.g, dev.delta_big)
        j = [bessel_j(1, d.alpha) for d in config.drives]
        xi = dev.g * math.hypot(*j)
        if xi == 0:
            raise ConfigError("drives give zero effective coupling")
        return CalibrationResult("single", tuple(d.alpha for d in config.drives),
                                 tuple(d.phi for d in config.drives), xi, math.pi / xi,
                                 {"J1_alpha1": j[0], "J1_alpha2": j[1], "rwa_margin": dev.delta_big / xi})
    if config.gate is not None:
        return calibrate_double(config.gate, dev)
    d = config.drives[0]
    lam, ds = dev.lam, dev.delta_small
    scale = lam / (lam ** 2 - ds ** 2)
    J0, J1 = bessel_j(0, d.alpha), bessel_j(1, d.alpha)
    xi = math.hypot(dev.g * dev.g3 * scale * J1, dev.g * dev.g4 * scale * J0)
    return CalibrationResult("double", (d.alpha,), (d.phi,), xi, math.pi / xi,
                             {"J0_beta": J0, "J1_beta": J1, "eta": dev.exchange_rate()})


def implied_gate(config: ScenarioConfig, cal: CalibrationResult) -> GateSpec:
    """Gate realised by a calibration (inverse of the calibration formulas)."""
    if config.gate is not None:
        return config.gate
    if config.kind == "single":
        j1a, j1b = cal.diagnostics["J1_alpha1"], cal.diagnostics["J1_alpha2"]
        return GateSpec(2 * math.atan2(j1a, j1b), cal.phases[0] - cal.phases[1] - math.pi, "single")
    r = config.device.g3 / config.device.g
    theta = 2 * math.atan2(r * cal.diagnostics["J1_beta"], cal.diagnostics["J0_beta"])
    return GateSpec(theta, -cal.phases[0] - math.pi / 2, "double")


def _hamiltonian(config: ScenarioConfig, cal: CalibrationResult, gate: GateSpec):
    dev = config.device
    if config.kind == "single":
        drives = cal.drives(dev.delta_big)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # validity warnings are reported in the summary
            H = build_single_qubit_model(dev, drives, config.fidelity_model)
        return H, single_qubit_dfs(H.space)
    if config.effective_model:
        H = effective_two_qubit_hamiltonian(dev, cal.beta, gate.phi)
        return H, two_qubit_dfs(H.space)
    drive = DriveParams.from_alpha(cal.beta, 2 * dev.delta_small, cal.phases[0])
    H = build_two_qubit_model(dev, drive, third_level=dev.transmon_levels == 3)
    return H, two_qubit_dfs(H.space)


def run_scenario(config: ScenarioConfig, write: bool = True) -> tuple[SimulationTrace, RunSummary]:
    """Calibrate, build, integrate and summarise one scenario."""
    t_wall = time.perf_counter()
    notes = list(config.device.validity_warnings())
    cal = calibrate(config)
    gate = implied_gate(config, cal)
    H, dfs = _hamiltonian(config, cal, gate)
    if config.stark_compensation and not config.effective_model:
        H = stark_compensated(H)
    target_gate = single_qubit_gate_matrix(gate) if config.kind == "single" else two_qubit_gate_matrix(gate)

    tau = cal.tau
    dt = config.dt
    diag = {"calibration": dict(cal.diagnostics), "alphas": list(cal.alphas), "phases": list(cal.phases),
            "tau_analytic_ns": cal.tau}
    if config.kind == "double":
        diag["xi_mhz"] = cal.xi / MHZ
        if config.refine_tau and not config.effective_model:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                tau = refine_gate_time(H, target_gate, dfs, cal.tau, dt=dt)
            notes += [str(w.message) for w in caught]
    t_final = config.t_final or tau

    gate_block, gate_leak = closed_system_gate(H, dfs, tau, dt=dt)
    diag["closed_gate_fidelity"] = gate_fidelity(gate_block, target_gate)
    diag["closed_gate_leakage"] = gate_leak

    psi0 = embed_logical_state(dfs, config.initial_state)
    if config.target_state is not None:
        target = embed_logical_state(dfs, config.target_state)
    else:
        amps = target_gate @ np.asarray(config.initial_state, dtype=complex)
        target = embed_logical_state(dfs, amps)
    record = population_observables(dfs)
    record["fidelity"] = target.projector()
    collapse = (collapse_set_single if config.kind == "single" else collapse_set_double)(H.space, config.noise)
    trace = propagate_master(H, collapse, DensityMatrix.pure(psi0), t_final, record=record, dt=dt,
                             tau_gate=tau)

    fid = np.clip(trace.observables["fidelity"], 0.0, 1.0)
    pops = sum(trace.observables[f"pop_{lab}"] for lab in dfs.labels)
    trace.observables["residual"] = 1.0 - pops
    k = int(np.argmax(fid))
    final = trace.final_state
    diag["min_eigenvalue"] = final.min_eigenvalue()
    diag["max_hermiticity_error"] = trace.max_hermiticity_error
    diag["dt_ns"] = trace.dt
    diag["n_steps"] = trace.n_steps
    diag["block_dim"] = trace.block_dim

    if config.compare_two_level and config.kind == "single" and config.device.transmon_levels == 3:
        ref_model = "with_J0_J2"
        ref = replace(config, device=replace(config.device, transmon_levels=2), fidelity_model=ref_model,
                      compare_two_level=False, trace_csv=None, summary_json=None)
        _, ref_sum = run_scenario(ref, write=False)
        diag["reference_model"] = ref_model
        diag["reference_fidelity"] = ref_sum.final_fidelity
        diag["added_infidelity"] = ref_sum.final_fidelity - float(fid[-1])

    summary = RunSummary(
        scenario=config.name, parameters=config.resolved_parameters(), xi=cal.xi, tau_ns=tau,
        final_fidelity=float(fid[-1]), peak_fidelity=float(fid[k]), peak_time_ns=float(trace.times[k]),
        leakage=float(max(0.0, trace.observables["residual"][-1])), trace_drift=trace.trace_drift,
        warnings=notes, wall_seconds=time.perf_counter() - t_wall, diagnostics=diag)
    if write:
        if config.trace_csv:
            write_trace_csv(trace, dfs.labels, config.trace_csv)
        if config.summary_json:
            write_summary_json(summary, config.summary_json)
    return trace, summary


# -- sweeps ------------------------------------------------------------------

def with_parameter(config: ScenarioConfig, parameter: str, value: float) -> ScenarioConfig:
    """Copy of ``config`` with one sweepable parameter set (rad/ns or ns)."""
    if parameter not in SWEEPABLE:
        raise ConfigError(f"parameter {parameter!r} is not sweepable; choose from {SWEEPABLE}")
    value = float(value)
    if parameter == "kappa":
        return replace(config, noise=replace(config.noise, kappa=value))
    if parameter == "dt":
        return replace(config, dt=value)
    dev = config.device
    if parameter == "g":
        kw = {"g": value}
        if dev.g3 == dev.g:
            kw["g3"] = value
        if dev.g4 == -dev.g:
            kw["g4"] = -value
        return replace(config, device=replace(dev, **kw))
    if parameter == "delta_big":
        kw = {"delta_big": value}
        if dev.anharmonicity == dev.delta_big:
            kw["anharmonicity"] = value
        return replace(config, device=replace(dev, **kw))
    return replace(config, device=replace(dev, anharmonicity=value))


def _sweep_worker(args):
    config, parameter, value = args
    _, summary = run_scenario(with_parameter(config, parameter, value), write=False)
    return value, summary


def worker_count(n_jobs: int) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    else:
        n = os.cpu_count() or 1
    return max(1, min(n, n_jobs))


def run_sweep(base: ScenarioConfig, parameter: str, values: Sequence[float],
              workers: int | None = None, table_csv: str | None = None) -> list[RunSummary]:
    """Independent runs over ``values``; rows come back sorted by value."""
    if parameter not in SWEEPABLE:
        raise ConfigError(f"parameter {parameter!r} is not sweepable; choose from {SWEEPABLE}")
    values = [float(v) for v in values]
    if not values:
        raise ConfigError("sweep needs at least one value")
    jobs = [(replace(base, trace_csv=None, summary_json=None), parameter, v) for v in values]
    n = worker_count(len(jobs)) if workers is None else max(1, min(workers, len(jobs)))
    if n == 1:
        results = [_sweep_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    results.sort(key=lambda r: r[0])
    rows = [s for _, s in results]
    if table_csv:
        write_sweep_csv(rows, parameter, [v for v, _ in results], table_csv)
    return rows


def run_builtin_sweep(sweep: SweepScenario, out_dir: str | None = None,
                      workers: int | None = None) -> dict[str, list[RunSummary]]:
    out = {}
    for label, cfg in sweep.curves.items():
        path = None if out_dir is None else str(Path(out_dir) / f"{sweep.name}_{label}.csv")
        out[label] = run_sweep(cfg, sweep.parameter, sweep.values, workers=workers, table_csv=path)
    return out


# -- output ------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{float(x):.10g}"


def write_trace_csv(trace: SimulationTrace, labels: Sequence[str], path) -> None:
    cols = [f"pop_{lab}" for lab in labels] + ["residual", "fidelity"]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_ns"] + cols)
        for k, t in enumerate(trace.times):
            w.writerow([_fmt(t)] + [_fmt(trace.observables[c][k]) for c in cols])


def write_summary_json(summary: RunSummary, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(summary.to_json(), fh, indent=2, sort_keys=False)
        fh.write("\n")


SWEEP_COLUMNS = ("final_fidelity", "peak_fidelity", "peak_time_ns", "tau_ns", "xi", "leakage", "trace_drift")


def write_sweep_csv(rows: Sequence[RunSummary], parameter: str, values: Sequence[float], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([parameter] + list(SWEEP_COLUMNS))
        for v, s in zip(values, rows):
            w.writerow([_fmt(v)] + [_fmt(getattr(s, c)) for c in SWEEP_COLUMNS])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(np.real(obj)), float(np.imag(obj))]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj
