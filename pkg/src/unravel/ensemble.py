"""Trajectory ensembles, ensemble-mean density matrices and the master comparison gate."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .master import MasterTrajectory, grid_index, trace_distance
from .model import ModelSpec
from .pdp import simulate_exact, simulate_linear, simulate_mcwf

METHODS = ("exact", "mcwf", "linear")
INTEGRATOR_TOL = 1e-6


def run_one(model: ModelSpec, psi0, method: str, horizon: float, dt: float, seed: int, index: int,
            **kwargs):
    """Trajectory ``index`` of the ensemble keyed by ``seed``."""
    if method == "exact":
        return simulate_exact(model, psi0, horizon, seed=seed, dt=dt, trajectory=index, **kwargs)
    if method == "mcwf":
        return simulate_mcwf(model, psi0, horizon, dt, seed=seed, trajectory=index, **kwargs)
    if method == "linear":
        kwargs.pop("with_norm", None)
        kwargs.pop("max_jumps", None)
        return simulate_linear(model, psi0, horizon, dt, seed=seed, trajectory=index, **kwargs)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def _run_chunk(indices, **kw):
    return [run_one(index=i, **kw) for i in indices]


def run_ensemble(model: ModelSpec, psi0, method: str, n: int, seed: int, horizon: float, dt: float,
                 workers: int = 1, **kwargs) -> list:
    """Generate trajectories ``0..n-1``, returned in index order.

    Each trajectory depends only on ``(seed, index)``, so the output is the
    same for any ``workers``.
    """
    if n < 1:
        raise ValueError("need at least one trajectory")
    kw = dict(model=model, psi0=psi0, method=method, horizon=horizon, dt=dt, seed=seed, **kwargs)
    if workers <= 1:
        return _run_chunk(range(n), **kw)
    chunks = np.array_split(np.arange(n), min(n, workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(partial(_run_chunk, **kw), [c.tolist() for c in chunks])
        return [rec for part in parts for rec in part]


@dataclass
class EnsembleResult:
    """Ensemble-mean density matrices with entrywise standard errors."""

    times: np.ndarray
    mean: np.ndarray  # (n_times, d, d)
    stderr: np.ndarray  # (n_times, d, d), real, entrywise |.| of complex standard error
    n: int

    def trace_distance_stderr(self, k: int) -> float:
        """Scale of the Monte Carlo noise in a trace distance at time index ``k``.

        ``1/2 sqrt(d) ||sigma||_F``, which bounds ``1/2 sum |eig|`` of a noise
        matrix with entrywise standard errors ``sigma`` in root mean square
        (exact for ``d = 2``).
        """
        d = self.mean.shape[1]
        return 0.5 * np.sqrt(d) * float(np.sqrt(np.sum(self.stderr[k] ** 2)))

    def at(self, t: float) -> np.ndarray:
        return self.mean[grid_index(self.times, t)]


def ensemble_density(records, times=None) -> EnsembleResult:
    """Average ``|psi><psi|`` over records sharing an output grid.

    For linear-unravelling records the states are unnormalized, so the mean
    estimates ``E[|psi><psi|]`` under the unit-rate measure.
    """
    ref = records[0].times
    times = ref if times is None else np.asarray(times, dtype=float)
    idx = [grid_index(ref, t) for t in times]
    for r in records:
        if len(r.times) != len(ref) or np.max(np.abs(r.times - ref)) > 1e-12:
            raise ValueError("records do not share a time grid")
    psi = np.stack([r.states[idx] for r in records])  # (n, t, d)
    rho = psi[:, :, :, None] * psi[:, :, None, :].conj()
    n = len(records)
    mean = rho.mean(axis=0)
    if n > 1:
        var = rho.real.var(axis=0, ddof=1) + rho.imag.var(axis=0, ddof=1)
        stderr = np.sqrt(var / n)
    else:
        stderr = np.zeros(mean.shape)
    return EnsembleResult(np.asarray(times), mean, stderr, n)


@dataclass
class CompareReport:
    checkpoints: list
    distances: list
    stderr: list
    passed: list
    sigmas: float = 4.0
    tolerance: float = INTEGRATOR_TOL
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed)

    def to_dict(self) -> dict:
        return {"checkpoints": self.checkpoints, "trace_distance": self.distances,
                "stderr": self.stderr, "passed": self.passed, "gate_sigmas": self.sigmas,
                "integrator_tolerance": self.tolerance, "ok": self.ok, **self.extra}

    def table(self) -> str:
        lines = [f"{'t':>8} {'trace dist':>12} {'stderr':>10} {'gate':>10}  result"]
        for t, d, s, p in zip(self.checkpoints, self.distances, self.stderr, self.passed):
            gate = self.sigmas * s + self.tolerance
            lines.append(f"{t:8.4g} {d:12.4e} {s:10.3e} {gate:10.3e}  {'PASS' if p else 'FAIL'}")
        lines.append("overall: " + ("PASS" if self.ok else "FAIL"))
        return "\n".join(lines)


def compare(ens: EnsembleResult, master: MasterTrajectory, checkpoints, sigmas: float = 4.0,
            tolerance: float = INTEGRATOR_TOL) -> CompareReport:
    """Gate: trace distance to the master solution within ``sigmas`` standard errors + tolerance."""
    dists, errs, passed = [], [], []
    for t in checkpoints:
        k = grid_index(ens.times, t)
        d = trace_distance(ens.mean[k], master.at(t))
        s = ens.trace_distance_stderr(k)
        dists.append(d)
        errs.append(s)
        passed.append(bool(d <= sigmas * s + tolerance))
    return CompareReport([float(t) for t in checkpoints], dists, errs, passed, sigmas, tolerance)
