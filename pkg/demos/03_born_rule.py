"""Projective measurement as a jump process.

With H = 0 and jump operators equal to a complete set of orthogonal
projectors, the first jump selects an outcome with Born probabilities and
the state stays put afterwards.
"""

import numpy as np
from scipy import stats

from unravel import projector_model, simulate_exact

model = projector_model(np.zeros((2, 2)))
psi0 = np.array([np.sqrt(0.3), np.sqrt(0.7)], complex)
n = 2000
channels = []
for i in range(n):
    rec = simulate_exact(model, psi0, 8.0, seed=3, dt=0.1, trajectory=i, keep_knots=False, with_norm=False)
    channels.append(rec.events[0].channel)
    assert len({e.channel for e in rec.events}) == 1  # repeated measurement, same outcome
counts = np.bincount(channels, minlength=2)
print("outcome counts:", counts, " expected:", np.array([0.3, 0.7]) * n)
print("chi-square p =", stats.chisquare(counts, np.array([0.3, 0.7]) * n).pvalue)
