#!/usr/bin/env python3
"""Peak Hadamard fidelity against cavity decay, for (g, Delta) and (2g, 2Delta).

Stronger coupling with proportionally larger detuning keeps the carrier
suppression ratio fixed but halves the gate time, so the decay costs less.
Writes one CSV table per curve into the working directory.
"""
from holodfs.models import KHZ
from holodfs.scenarios import BUILTIN_SWEEPS, run_builtin_sweep

sweep = BUILTIN_SWEEPS["kappa-sweep-fig2b"]
curves = run_builtin_sweep(sweep, out_dir=".")

print(f"{'kappa (kHz)':>12s}" + "".join(f"{k:>14s}" for k in curves))
for i, kappa in enumerate(sweep.values):
    print(f"{kappa / KHZ:12.0f}" + "".join(f"{rows[i].peak_fidelity:14.5f}" for rows in curves.values()))
print(f"\ntables: {', '.join(f'{sweep.name}_{k}.csv' for k in curves)}")
