"""Independent reference computations used by the tests.

Nothing here imports the integrators under test: the master equation is
solved by exponentiating the vectorized Liouvillian, and Doléans-Dade
exponentials are built by walking the path event by event.
"""

import numpy as np
from scipy.linalg import expm

E = np.e

# hand-evaluated closed forms (f = 1 on [0, 1] with two jumps)
DD_F1_TWO_JUMPS = 4.0 / E  # exp(-1) * 2 * 2
DD_PRODUCT_F1_G1 = 16.0 / E**2  # e * exp(-3) * 4 * 4
DD_INVERSE_F1 = E / 4.0  # exp(1/2) * exp(1/2) * (1/2)**2


def liouvillian(H, Ls):
    """Column-stacking superoperator of -i[H, .] + sum L . L^+ - 1/2 {L^+ L, .}."""
    d = H.shape[0]
    eye = np.eye(d)
    sup = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for L in Ls:
        LdL = L.conj().T @ L
        sup += np.kron(L.conj(), L) - 0.5 * (np.kron(eye, LdL) + np.kron(LdL.T, eye))
    return sup


def master_expm(H, Ls, rho0, times):
    sup = liouvillian(np.asarray(H, complex), [np.asarray(L, complex) for L in Ls])
    v0 = np.asarray(rho0, complex).reshape(-1, order="F")
    d = rho0.shape[0]
    return np.array([(expm(sup * t) @ v0).reshape(d, d, order="F") for t in times])


def doleans_walk(breakpoints, values, jumps, t):
    """E(int f dN~)_t by stepping through breakpoints and jumps in time order.

    Between events E' = -f E is solved exactly; at a jump E -> (1 + f(s-)) E.
    """
    bp = np.asarray(breakpoints, float)
    events = sorted({*bp[1:].tolist(), *[s for s in jumps if s <= t], t})
    z, now = 1.0 + 0j, 0.0
    for s in events:
        if s > t:
            break
        k = min(np.searchsorted(bp, s, side="left") - 1, len(values) - 1)
        z *= np.exp(-values[k] * (s - now))
        now = s
        if s in jumps:
            z *= 1.0 + values[k]
    return z


def random_hermitian(rng, d, scale=1.0):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (a + a.conj().T) / 2


def random_operator(rng, d, scale=0.5):
    return scale * (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(d)


def random_state(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_density(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real
