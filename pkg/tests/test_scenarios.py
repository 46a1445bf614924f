import json
import math
import os
import subprocess
import sys
import textwrap
from dataclasses import replace

import numpy as np
import pytest

from holodfs import cli
from holodfs.models import KHZ, MHZ
from holodfs.scenarios import (
    BUILTIN,
    BUILTIN_SWEEPS,
    ConfigError,
    implied_gate,
    calibrate,
    list_scenarios,
    parse_config,
    run_scenario,
    run_sweep,
    with_parameter,
)

SUMMARY_KEYS = {"scenario", "parameters", "xi", "tau_ns", "final_fidelity", "peak_fidelity", "peak_time_ns",
                "leakage", "trace_drift", "warnings", "wall_seconds"}


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


MINIMAL = """
    [scenario]
    kind = single
    fidelity_model = with_J0_oscillation

    [device]
    g_mhz = 50
    delta_big_mhz = 500

    [noise]
    kappa_khz = 10
    gamma1_khz = 10
    gamma2_khz = 10

    [gate]
    theta = 0.7853981633974483
    phi = 0
"""


# -- parsing -------------------------------------------------------------------

def test_parse_minimal_config(tmp_path):
    cfg = parse_config(write(tmp_path, MINIMAL))
    assert cfg.device.g == pytest.approx(0.3142, abs=1e-4)
    assert cfg.device.g == 2 * math.pi * 50e-3
    assert cfg.noise.kappa == pytest.approx(2 * math.pi * 10e-6)
    assert cfg.gate.theta == pytest.approx(math.pi / 4)
    assert cfg.drives is None
    assert cfg.initial_state == (1.0, 0.0)


def test_parse_base_with_overrides(tmp_path):
    cfg = parse_config(write(tmp_path, """
        [scenario]
        base = hadamard-fig2a
        name = strong
        dt_ns = 0.01

        [device]
        g_mhz = 100
        delta_big_mhz = 1000
    """))
    assert cfg.name == "strong"
    assert cfg.device.g == pytest.approx(100 * MHZ)
    assert cfg.device.anharmonicity == pytest.approx(1000 * MHZ)
    assert cfg.dt == 0.01
    assert cfg.gate == BUILTIN["hadamard-fig2a"].gate


def test_parse_two_qubit_lambda_follows_delta(tmp_path):
    cfg = parse_config(write(tmp_path, """
        [scenario]
        base = two-qubit-fig3
        [device]
        delta_small_mhz = 120
    """))
    assert cfg.device.lam == pytest.approx(240 * MHZ)


@pytest.mark.parametrize("old,new,match", [
    ("kappa_khz = 10", "kappa_khz = -1", "noise.kappa_khz"),
    ("[gate]", "[drives]\nalpha1 = 0.4\nalpha2 = 1.2\n[gate]", "either"),
    ("\ng_mhz = 50", "\ng_mhz = 50\nfoo = 1", "device.foo"),
    ("[noise]", "[extra]\nx = 1\n[noise]", r"\[extra\]"),
    ("\ng_mhz = 50", "\ng_mhz = fifty", "device.g_mhz"),
    ("theta = 0.7853981633974483", "theta = 4", "theta"),
    ("with_J0_oscillation", "exact", "fidelity_model"),
])
def test_parse_rejects_bad_input(tmp_path, old, new, match):
    text = textwrap.dedent(MINIMAL).replace(old, new)
    with pytest.raises(ConfigError, match=match):
        parse_config(write(tmp_path, text))


def test_parse_missing_file_and_unknown_base(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "absent.ini")
    with pytest.raises(ConfigError, match="unknown scenario"):
        parse_config(write(tmp_path, "[scenario]\nbase = nope\n"))
    with pytest.raises(ConfigError, match="kind"):
        parse_config(write(tmp_path, "[device]\ng_mhz = 50\n"))


def test_explicit_drives_imply_gate(tmp_path):
    cfg = parse_config(write(tmp_path, """
        [scenario]
        kind = single
        [device]
        g_mhz = 50
        delta_big_mhz = 500
        [drives]
        alpha1 = 0.4236471093408074
        alpha2 = 1.2067184630059071
        phi1 = 3.141592653589793
        phi2 = 0
    """))
    assert cfg.gate is None and len(cfg.drives) == 2
    cal = calibrate(cfg)
    ref = calibrate(BUILTIN["hadamard-fig2a"])
    assert cal.tau == pytest.approx(ref.tau, rel=1e-12)
    g = implied_gate(cfg, cal)
    assert g.theta == pytest.approx(math.pi / 4, abs=1e-12)
    assert g.phi == pytest.approx(0.0, abs=1e-12)


def test_list_scenarios():
    names = [n for n, _ in list_scenarios()]
    assert names == ["hadamard-fig2a", "kappa-sweep-fig2b", "third-level", "two-qubit-fig3", "two-qubit-lowanharm"]


# -- running ---------------------------------------------------------------------

def test_run_writes_trace_and_summary(tmp_path):
    cfg = replace(BUILTIN["hadamard-fig2a"], trace_csv=str(tmp_path / "t.csv"), summary_json=str(tmp_path / "s.json"))
    trace, summary = run_scenario(cfg)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t_ns,pop_0,pop_1,pop_E,residual,fidelity"
    assert len(lines) == len(trace.times) + 1 >= 502
    first = lines[5].split(",")
    assert all(len(v.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 10 for v in first)
    data = json.loads((tmp_path / "s.json").read_text())
    assert SUMMARY_KEYS <= set(data)
    assert data["tau_ns"] == pytest.approx(18.4776, abs=1e-3)
    assert 0 <= data["final_fidelity"] <= 1
    assert data["parameters"]["device.g"] == pytest.approx(50 * MHZ)
    assert data["parameters"]["noise.kappa"] == pytest.approx(10 * KHZ)
    assert isinstance(data["warnings"], list)


def test_run_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        cfg = replace(BUILTIN["hadamard-fig2a"], trace_csv=str(tmp_path / f"t{k}.csv"))
        run_scenario(cfg)
        outs.append((tmp_path / f"t{k}.csv").read_bytes())
    assert outs[0] == outs[1]


def test_summary_echoes_every_resolved_parameter():
    _, s = run_scenario(BUILTIN["hadamard-fig2a"], write=False)
    p = s.parameters
    for key in ("device.g", "device.delta_big", "device.anharmonicity", "device.transmon_levels", "device.n_max",
                "noise.kappa", "noise.gamma1", "noise.gamma2", "fidelity_model", "gate.theta", "gate.phi",
                "initial_state", "dt", "t_final", "stark_compensation"):
        assert key in p


def test_hadamard_populations_end_balanced():
    _, s = run_scenario(replace(BUILTIN["hadamard-fig2a"], fidelity_model="resonant_only"), write=False)
    assert s.final_fidelity > 0.99
    trace, _ = run_scenario(replace(BUILTIN["hadamard-fig2a"], fidelity_model="resonant_only",
                                    noise=replace(BUILTIN["hadamard-fig2a"].noise, kappa=0, gamma1=0, gamma2=0)),
                            write=False)
    assert trace.observables["pop_0"][-1] == pytest.approx(0.5, abs=1e-6)
    assert trace.observables["pop_1"][-1] == pytest.approx(0.5, abs=1e-6)
    assert np.max(np.abs(trace.observables["residual"])) <= 1e-10


# -- sweeps -----------------------------------------------------------------------

def test_sweep_rows_sorted_and_match_single_runs():
    base = BUILTIN["hadamard-fig2a"]
    values = [30 * base.noise.kappa, base.noise.kappa, 10 * base.noise.kappa]
    rows = run_sweep(base, "kappa", values, workers=1)
    kappas = [r.parameters["noise.kappa"] for r in rows]
    assert kappas == sorted(values)
    _, single = run_scenario(with_parameter(base, "kappa", values[1]), write=False)
    assert rows[0].final_fidelity == single.final_fidelity
    fids = [r.peak_fidelity for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(fids, fids[1:]))


def test_sweep_parallel_equals_serial(monkeypatch):
    base = BUILTIN["hadamard-fig2a"]
    values = [base.noise.kappa, 20 * base.noise.kappa]
    serial = run_sweep(base, "kappa", values, workers=1)
    monkeypatch.setenv("HOLODFS_WORKERS", "2")
    parallel = run_sweep(base, "kappa", values)
    assert [r.final_fidelity for r in serial] == [r.final_fidelity for r in parallel]


def test_sweep_dt_convergence():
    base = BUILTIN["hadamard-fig2a"]
    dt0 = 0.02
    rows = run_sweep(base, "dt", [dt0, dt0 / 2, dt0 / 4, dt0 / 8], workers=1)
    fids = [r.final_fidelity for r in sorted(rows, key=lambda r: r.parameters["dt"])]
    assert abs(fids[0] - fids[1]) < 1e-4


def test_sweep_errors():
    base = BUILTIN["hadamard-fig2a"]
    with pytest.raises(ConfigError):
        run_sweep(base, "kappa", [])
    with pytest.raises(ConfigError):
        run_sweep(base, "lambda", [1.0])


def test_with_parameter_keeps_linked_defaults():
    base = BUILTIN["two-qubit-fig3"]
    cfg = with_parameter(base, "g", 0.2)
    assert cfg.device.g3 == 0.2 and cfg.device.g4 == -0.2
    cfg = with_parameter(BUILTIN["hadamard-fig2a"], "delta_big", 4.0)
    assert cfg.device.anharmonicity == 4.0


def test_builtin_sweep_definition():
    sw = BUILTIN_SWEEPS["kappa-sweep-fig2b"]
    base = sw.curves["g_delta"]
    assert [v / base.noise.kappa for v in sw.values] == pytest.approx([1, 5, 10, 15, 20, 25, 30])
    doubled = sw.curves["2g_2delta"]
    assert doubled.device.g == pytest.approx(2 * base.device.g)
    assert doubled.device.delta_big == pytest.approx(2 * base.device.delta_big)


# -- command line ----------------------------------------------------------------

def test_cli_list_and_calibrate(capsys):
    assert cli.main(["list-scenarios"]) == 0
    assert "two-qubit-fig3" in capsys.readouterr().out
    assert cli.main(["calibrate", "hadamard-fig2a"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["alphas"][0] == pytest.approx(0.4236, abs=1e-4)
    assert out["tau_ns"] == pytest.approx(18.4776, abs=1e-3)


def test_cli_run_config(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    code = cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "out"), "--dt-ns", "0.02"])
    assert code == 0
    s = json.loads((tmp_path / "out" / "custom_summary.json").read_text())
    assert s["parameters"]["dt"] == 0.02
    assert (tmp_path / "out" / "custom_trace.csv").exists()


def test_cli_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, MINIMAL.replace("kappa_khz = 10", "kappa_khz = -3"), "bad.ini")
    assert cli.main(["run", str(bad)]) == 2
    assert cli.main(["run", "no-such-scenario"]) == 2
    ok = write(tmp_path, MINIMAL, "ok.ini")
    assert cli.main(["run", str(ok), "--out-dir", str(tmp_path), "--assert-fidelity", "0.999999"]) == 4
    assert cli.main(["run", str(ok), "--out-dir", str(tmp_path), "--assert-fidelity", "0.5"]) == 0
    unstable = write(tmp_path, MINIMAL.replace("kappa_khz = 10", "kappa_khz = 1e9"), "unstable.ini")
    assert cli.main(["run", str(unstable), "--out-dir", str(tmp_path), "--dt-ns", "0.5"]) == 3
    assert cli.main(["sweep", str(ok), "--param", "lambda", "--values", "1"]) == 2
    assert cli.main(["sweep", str(ok), "--param", "kappa", "--values", ""]) == 2


def test_cli_sweep_table(tmp_path, capsys):
    ok = write(tmp_path, MINIMAL)
    code = cli.main(["sweep", str(ok), "--param", "kappa", "--values", "100,10", "--out-dir", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "custom_sweep_kappa.csv").read_text().splitlines()
    assert lines[0].startswith("kappa,final_fidelity,peak_fidelity")
    assert len(lines) == 3
    vals = [float(l.split(",")[0]) for l in lines[1:]]
    assert vals == sorted(vals) and vals[0] == pytest.approx(10 * KHZ)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "holodfs", "list-scenarios"], capture_output=True, text=True)
    assert r.returncode == 0 and "hadamard-fig2a" in r.stdout
