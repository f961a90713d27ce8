"""Doléans-Dade exponentials on a sampled Poisson path.

Checks the closed-form exponential against its jump/drift structure, the
product and inverse rules, and the norm identity for a random linear
trajectory.
"""

import numpy as np

from unravel import ModelSpec, sample_unit_poisson, simulate_linear
from unravel.pdp import norm_squared_process, normalizing_process
from unravel.poisson import StepProcess, doleans_exp, doleans_inverse, doleans_product

path = sample_unit_poisson(1, 3.0, seed=7)
print("jump times:", np.round(path.jumps[0], 3))

f = StepProcess([0.0, 1.0, 3.0], [1.0, 0.5])
g = StepProcess([0.0, 2.0, 3.0], [-0.5, 2.0])
t = 3.0
print("E(f)            =", doleans_exp(f, path, 0, t))
print("E(f) E(f)^-1    =", doleans_exp(f, path, 0, t) * doleans_inverse(f, path, 0, t))
print("E(f) E(g)       =", doleans_exp(f, path, 0, t) * doleans_exp(g, path, 0, t))
print("product rule    =", doleans_product(f, g, path, 0, t))

rng = np.random.default_rng(0)
H = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
L = 0.5 * (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
model = ModelSpec(0.5 * (H + H.conj().T), (("L", L),))
psi0 = np.array([1, 1j, 0]) / np.sqrt(2)
traj = simulate_linear(model, psi0, 2.0, 1e-3, seed=3)
closed = norm_squared_process(traj)
phi = normalizing_process(traj)
print("max |<psi|psi> / closed form - 1|  =", np.max(np.abs(traj.norm_squared / closed - 1)))
print("max ||Phi|^2 <psi|psi> - 1|        =", np.max(np.abs(np.abs(phi) ** 2 * traj.norm_squared - 1)))
