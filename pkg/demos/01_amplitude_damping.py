"""Amplitude damping: three unravellings against the master equation.

Runs exact-sampler, MCWF and linear (unit-rate) ensembles of a decaying
two-level atom and compares each ensemble-mean density matrix with the RK4
master solution at a few checkpoints.
"""

import numpy as np

from unravel import EXCITED, amplitude_damping, compare, ensemble_density, integrate_master, projector, run_ensemble

model = amplitude_damping(1.0)
horizon, dt, n = 2.0, 0.01, 2000
master = integrate_master(model, projector(EXCITED), horizon, dt)

for method in ("exact", "mcwf", "linear"):
    records = run_ensemble(model, EXCITED, method, n, seed=1, horizon=horizon, dt=dt, keep_knots=False)
    report = compare(ensemble_density(records), master, [0.5, 1.0, 2.0])
    print(f"--- {method} (N={n})")
    print(report.table())

# excited-state population decays as exp(-t)
print("master P_e(1) =", master.at(1.0)[1, 1].real, " exp(-1) =", np.exp(-1))
