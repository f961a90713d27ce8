"""Loss of energy memory under projector jumps.

The ensemble energy obeys d<H>/dt = <H'> - <H> with H' = sum P H P, so
<H>_t is the exponentially weighted average of past <H'>.
"""

import numpy as np

from unravel import projector_model, run_ensemble
from unravel.observables import energy_memory_curve, expectation, projected_energy_operator, observable_series

rng = np.random.default_rng(5)
a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
H = 0.5 * (a + a.conj().T)
model = projector_model(H)
psi0 = np.ones(3, complex) / np.sqrt(3)
records = run_ensemble(model, psi0, "exact", 2000, seed=5, horizon=3.0, dt=0.01, keep_knots=False, with_norm=False)
energy = observable_series(records, H, "H", verify=False)
projected = observable_series(records, projected_energy_operator(model), "H'", verify=False)
curve = energy_memory_curve(projected, expectation(H, psi0)[0].real, energy.times)
for t in (0.0, 0.5, 1.0, 2.0, 3.0):
    k = int(round(t / 0.01))
    print(f"t={t:3.1f}  E<H>={energy.mean[k]: .4f} +- {energy.stderr[k]:.4f}   memory curve={curve[k]: .4f}")
