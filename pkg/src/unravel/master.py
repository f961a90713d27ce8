"""Deterministic reference integration of the GKSL master equation."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .model import ModelError, ModelSpec, check_density, dagger, lindbladian_apply

log = logging.getLogger(__name__)

ABORT_DRIFT = 1e-6


class StepSizeError(ArithmeticError):
    """Integration produced non-finite values or excessive trace drift."""


@dataclass
class MasterTrajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, dim, dim)
    corrections: np.ndarray = field(default=None)  # per-step |trace drift| + hermiticity fix

    def at(self, t: float, tol: float = 1e-9) -> np.ndarray:
        """State at grid time ``t``; raises if ``t`` is not on the grid."""
        k = grid_index(self.times, t, tol)
        return self.states[k]

    def to_json(self) -> str:
        return json.dumps({
            "times": self.times.tolist(),
            "states": [{"re": s.real.tolist(), "im": s.imag.tolist()} for s in self.states],
        })

    def write_csv(self, path) -> None:
        d = self.states.shape[1]
        header = ["t"]
        for i in range(d):
            for j in range(d):
                header += [f"re_rho_{i}{j}", f"im_rho_{i}{j}"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, s in zip(self.times, self.states):
                row = [repr(float(t))]
                for z in s.ravel():
                    row += [repr(float(z.real)), repr(float(z.imag))]
                w.writerow(row)


def grid_index(times, t: float, tol: float = 1e-9) -> int:
    times = np.asarray(times)
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > tol * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not on the grid (nearest {times[k]})")
    return k


def time_grid(t_final: float, dt: float) -> np.ndarray:
    """Uniform grid ``0, dt, 2dt, ...`` ending exactly at ``t_final``.

    A final shorter step is used when ``t_final`` is not a multiple of ``dt``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    n = int(np.floor(t_final / dt + 1e-9))
    grid = dt * np.arange(n + 1)
    if t_final - grid[-1] > 1e-9 * max(dt, t_final):
        grid = np.append(grid, t_final)
    else:
        grid[-1] = t_final if n else 0.0
    return grid


def _rk4(m: ModelSpec, rho, h):
    k1 = lindbladian_apply(m, rho)
    k2 = lindbladian_apply(m, rho + 0.5 * h * k1)
    k3 = lindbladian_apply(m, rho + 0.5 * h * k2)
    k4 = lindbladian_apply(m, rho + h * k3)
    return rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_master(m: ModelSpec, rho0, t_final: float, dt: float) -> MasterTrajectory:
    """Fixed-step classical RK4 for ``d rho/dt = L[rho]``.

    Every stored state is re-Hermitized and trace-renormalized; the size of
    each correction is kept in ``corrections`` and logged at debug level.
    Corrections above 1e-6, or entries growing beyond modulus 1, abort
    with :class:`StepSizeError`.
    """
    rep = m.checked()
    rho = check_density(rho0)
    if rho.shape != (rep.dim, rep.dim):
        raise ModelError(f"rho0 shape {rho.shape} does not match model dim {rep.dim}")
    times = time_grid(t_final, dt)
    states = np.empty((len(times), m.dim, m.dim), dtype=complex)
    corrections = np.zeros(len(times))
    states[0] = rho
    for k in range(1, len(times)):
        rho = _rk4(m, rho, times[k] - times[k - 1])
        if not np.all(np.isfinite(rho)):
            raise StepSizeError(f"non-finite state at t={times[k]:.6g}; reduce dt")
        if np.max(np.abs(rho)) > 1.0 + ABORT_DRIFT:
            # |rho_ij| <= 1 for any density matrix; growth signals RK4 instability
            raise StepSizeError(f"state left the density-matrix set at t={times[k]:.6g}; reduce dt")
        herm = 0.5 * (rho + dagger(rho))
        tr = np.trace(herm).real
        drift = abs(tr - 1.0) + float(np.max(np.abs(herm - rho)))
        if drift > ABORT_DRIFT:
            raise StepSizeError(f"trace/hermiticity drift {drift:.2e} at t={times[k]:.6g}; reduce dt")
        rho = herm / tr
        corrections[k] = drift
        states[k] = rho
    log.debug("integrate_master: max correction %.3e over %d steps", corrections.max(), len(times) - 1)
    return MasterTrajectory(times, states, corrections)


def trace_distance(a, b, imag_tol: float = 1e-10) -> float:
    """``1/2 sum |eig(a - b)|`` for Hermitian ``a``, ``b``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ModelError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    skew = float(np.max(np.abs(diff - dagger(diff)))) if diff.size else 0.0
    if skew > imag_tol * max(1.0, float(np.max(np.abs(diff)))):
        raise ModelError(f"difference is not Hermitian (defect {skew:.2e})")
    ev = np.linalg.eigvalsh(0.5 * (diff + dagger(diff)))
    return 0.5 * float(np.sum(np.abs(ev)))
