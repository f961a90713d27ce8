"""Pathwise calculus for unit-rate Poisson noise.

Paths are realized jump times per channel. Integrands are either
:class:`StepProcess` (piecewise constant, exact) or :class:`SampledProcess`
(smooth between jumps, sampled on a grid that contains the jump times).
Both follow the predictable convention: at a jump at ``s`` the integrand
contributes its left limit ``f(s-)``.

Doléans-Dade exponentials are always evaluated from the closed product form

    E(int f dN~)_t = exp(-int_0^t f ds) * prod_{s <= t} (1 + f(s-))

and never by stepping the SDE.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

UNIT_RATE = "unit_rate"
STATE_DEPENDENT = "state_dependent"

# substream ids above any realistic channel count, reserved for samplers
SAMPLER_STREAM = 2**31


def substream(seed: int, trajectory: int = 0, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, trajectory, stream)``.

    Distinct keys give statistically independent streams, so trajectories can
    be generated in any order or on any worker with identical results.
    """
    ss = np.random.SeedSequence([int(seed), int(trajectory), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class PoissonPath:
    """Realized jump times of ``channels`` independent counting processes on ``(0, horizon]``."""

    horizon: float
    jumps: tuple
    rate_model: str = UNIT_RATE

    def __post_init__(self):
        self.jumps = tuple(np.asarray(j, dtype=float) for j in self.jumps)
        for j in self.jumps:
            if j.size and (j[0] <= 0.0 or j[-1] > self.horizon or np.any(np.diff(j) <= 0)):
                raise ValueError("jump times must be strictly increasing within (0, horizon]")

    @property
    def channels(self) -> int:
        return len(self.jumps)

    def count(self, channel: int, t: float) -> int:
        return int(np.searchsorted(self.jumps[channel], t, side="right"))

    def events(self, t: float | None = None) -> list[tuple[float, int]]:
        """All ``(time, channel)`` pairs up to ``t``, time ordered."""
        t = self.horizon if t is None else t
        ev = [(float(s), a) for a, js in enumerate(self.jumps) for s in js if s <= t]
        ev.sort()
        return ev

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "rate_model": self.rate_model,
                "jumps": {str(a): j.tolist() for a, j in enumerate(self.jumps)}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "PoissonPath":
        jumps = doc["jumps"]
        if isinstance(jumps, dict):
            jumps = [jumps[k] for k in sorted(jumps, key=int)]
        return cls(float(doc["horizon"]), tuple(jumps), doc.get("rate_model", UNIT_RATE))

    @classmethod
    def from_json(cls, text: str) -> "PoissonPath":
        return cls.from_dict(json.loads(text))


def _unit_poisson_times(rng: np.random.Generator, horizon: float) -> np.ndarray:
    chunk = int(horizon + 5.0 * np.sqrt(horizon) + 10)
    times = np.cumsum(rng.exponential(1.0, size=chunk))
    while times[-1] <= horizon:
        more = np.cumsum(rng.exponential(1.0, size=chunk)) + times[-1]
        times = np.concatenate([times, more])
    return times[times <= horizon]


def sample_unit_poisson(channels: int, horizon: float, seed: int, trajectory: int = 0) -> PoissonPath:
    """Independent unit-rate paths, one substream per ``(seed, trajectory, channel)``."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    jumps = tuple(_unit_poisson_times(substream(seed, trajectory, a), horizon) for a in range(channels))
    return PoissonPath(float(horizon), jumps, UNIT_RATE)


# -- integrands -------------------------------------------------------------

class StepProcess:
    """Piecewise-constant process: ``values[i]`` holds on ``(t_i, t_{i+1}]``.

    ``breakpoints`` starts at 0. The left limit at ``s`` is the value of the
    interval whose closed right end contains ``s``, which is the value a
    predictable integrand uses at a jump at ``s``.
    """

    def __init__(self, breakpoints, values):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.values = np.asarray(values)
        if self.breakpoints.ndim != 1 or len(self.breakpoints) != len(self.values) + 1:
            raise ValueError("need len(breakpoints) == len(values) + 1")
        if self.breakpoints[0] != 0.0 or np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must start at 0 and strictly increase")

    @classmethod
    def constant(cls, c, horizon: float) -> "StepProcess":
        return cls([0.0, horizon], [c])

    @property
    def end(self) -> float:
        return float(self.breakpoints[-1])

    def left_limit(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s > self.end * (1 + 1e-12)) or np.any(s <= 0):
            raise ValueError("evaluation time outside (0, end]")
        idx = np.clip(np.searchsorted(self.breakpoints, s, side="left") - 1, 0, len(self.values) - 1)
        return self.values[idx]

    def integral(self, t):
        """``int_0^t f ds`` computed exactly on the constant pieces; ``t`` may be an array."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr > self.end * (1 + 1e-12)):
            raise ValueError("t beyond the last breakpoint")
        widths = np.clip(np.minimum(self.breakpoints[1:], t_arr[..., None]) - self.breakpoints[:-1], 0.0, None)
        return np.sum(widths * self.values, axis=-1)

    def map(self, fn: Callable) -> "StepProcess":
        return StepProcess(self.breakpoints, fn(self.values))

    def combine(self, other: "StepProcess", fn: Callable) -> "StepProcess":
        """Pointwise ``fn(self, other)`` on the merged breakpoints."""
        end = min(self.end, other.end)
        bp = np.union1d(self.breakpoints, other.breakpoints)
        bp = bp[bp <= end]
        right = bp[1:]
        return StepProcess(bp, fn(self.left_limit(right), other.left_limit(right)))

    def __repr__(self):
        return f"StepProcess({len(self.values)} pieces on [0, {self.end:g}])"


class SampledProcess:
    """Process that is smooth between jumps, known at sample knots.

    ``times`` is non-decreasing; a repeated time marks a discontinuity, with
    the first sample at that time being the left limit and the last the
    post-jump value. Each jump-free segment is integrated with a not-a-knot
    cubic spline (fourth order), falling back to the trapezoid rule for
    segments with fewer than four knots.
    """

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be non-decreasing")
        cut = np.flatnonzero(np.diff(self.times) == 0) + 1
        self._segments = [seg for seg in np.split(np.arange(len(self.times)), cut)]
        self._pieces = None

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def left_limit(self, s):
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty(s_arr.shape, dtype=self.values.dtype)
        for i, x in enumerate(s_arr):
            k = int(np.searchsorted(self.times, x, side="left"))
            if k < len(self.times) and self.times[k] == x:
                out[i] = self.values[k]
            elif 0 < k < len(self.times):
                t0, t1 = self.times[k - 1], self.times[k]
                w = (x - t0) / (t1 - t0)
                out[i] = (1 - w) * self.values[k - 1] + w * self.values[k]
            else:
                raise ValueError(f"time {x} outside sampled range")
        return out if np.ndim(s) else out[0]

    def _build(self):
        pieces = []
        for seg in self._segments:
            t, v = self.times[seg], self.values[seg]
            if len(t) > 2:
                # knots crowding a neighbour add nothing but conditioning trouble
                h = np.diff(t)
                tiny = 1e-6 * np.median(h)
                keep = np.ones(len(t), bool)
                keep[1:-1] = (h[:-1] > tiny) & (h[1:] > tiny)
                t, v = t[keep], v[keep]
            if len(t) >= 4:
                anti = CubicSpline(t, v).antiderivative()
            elif len(t) >= 2:
                anti = _trapezoid_antiderivative(t, v)
            else:
                anti = None
            pieces.append((t[0], t[-1], anti))
        self._pieces = pieces

    def integral(self, t):
        """``int_0^t f ds``; ``t`` may be an array of times."""
        if self._pieces is None:
            self._build()
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr > self.end * (1 + 1e-12) + 1e-15):
            raise ValueError("t beyond last sample")
        total = np.zeros(t_arr.shape, dtype=np.result_type(self.values.dtype, float))
        for t0, t1, anti in self._pieces:
            if anti is None or t1 <= t0:
                continue
            upto = np.clip(t_arr, t0, t1)
            total += anti(upto) - anti(t0)
        return total if np.ndim(t) else total[0]

    def map(self, fn: Callable) -> "SampledProcess":
        return SampledProcess(self.times, fn(self.values))


def _trapezoid_antiderivative(t, v):
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (v[1:] + v[:-1]))])
    slope = np.diff(v) / np.diff(t)

    def anti(x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(t, x, side="right") - 1, 0, len(t) - 2)
        dx = x - t[k]
        return cum[k] + v[k] * dx + 0.5 * slope[k] * dx * dx

    return anti


Integrand = StepProcess | SampledProcess


def _jumps_upto(path: PoissonPath, channel: int, t: float, left: bool = False) -> np.ndarray:
    js = path.jumps[channel]
    if t > path.horizon * (1 + 1e-12):
        raise ValueError(f"t={t} beyond path horizon {path.horizon}")
    return js[js < t] if left else js[js <= t]


def integrate_compensated(f: Integrand, path: PoissonPath, channel: int, t: float):
    """``int_0^t f dN~ = sum_{jumps <= t} f(s-) - int_0^t f ds``."""
    js = _jumps_upto(path, channel, t)
    jump_part = np.sum(f.left_limit(js)) if js.size else 0.0
    return jump_part - f.integral(t)


def doleans_exp(f: Integrand, path: PoissonPath, channel: int, t: float, left: bool = False):
    """Doléans-Dade exponential of ``int f dN~`` at ``t`` (or ``t-`` if ``left``)."""
    js = _jumps_upto(path, channel, t, left)
    factors = 1.0 + f.left_limit(js) if js.size else np.ones(0)
    return np.exp(-f.integral(t)) * np.prod(factors)


def doleans_exp_many(f: Integrand, path: PoissonPath, channel: int, times):
    """Vectorized :func:`doleans_exp` at an array of (right-continuous) times."""
    times = np.asarray(times, dtype=float)
    js = path.jumps[channel]
    log_drift = -np.asarray(f.integral(times))
    if js.size:
        factors = np.cumprod(np.concatenate([[1.0], 1.0 + np.asarray(f.left_limit(js))]))
        prod = factors[np.searchsorted(js, times, side="right")]
    else:
        prod = np.ones(times.shape)
    return np.exp(log_drift) * prod


def doleans_exp_sum(fs: Sequence[Integrand], path: PoissonPath, t: float, left: bool = False):
    """Exponential of ``sum_a int f_a dN~_a``.

    Independent channels never jump together, so the cross covariations vanish
    and the exponential factorizes over channels.
    """
    if len(fs) != path.channels:
        raise ValueError(f"{len(fs)} integrands for {path.channels} channels")
    out = 1.0
    for a, f in enumerate(fs):
        out = out * doleans_exp(f, path, a, t, left)
    return out


def doleans_product(f: StepProcess, g: StepProcess, path: PoissonPath, channel: int, t: float):
    """``E(X) E(Y) = exp(int f g ds) E(int (f + g + f g) dN~)`` for Poisson martingales."""
    fg = f.combine(g, lambda a, b: a * b)
    s = f.combine(g, lambda a, b: a + b + a * b)
    return np.exp(fg.integral(t)) * doleans_exp(s, path, channel, t)


class InadmissibleIntegrand(ValueError):
    """A jump of the integrated process is not strictly greater than -1."""


def doleans_inverse(f: StepProcess, path: PoissonPath, channel: int, t: float):
    """``E(X)^{-1} = exp(int f^2/(1+f) ds) E(int -f/(1+f) dN~)``.

    Requires ``1 + f(s-) > 0`` at every jump up to ``t``.
    """
    js = _jumps_upto(path, channel, t)
    if js.size:
        at = np.asarray(f.left_limit(js))
        if np.any(np.abs(np.imag(at)) > 0) or np.any(np.real(at) <= -1.0):
            raise InadmissibleIntegrand("integrand has 1 + f(s-) <= 0 at a jump")
    return _inverse_factors(f, path, channel, t)


def _inverse_factors(f, path, channel, t):
    drift = f.map(lambda v: v * v / (1.0 + v))
    g = f.map(lambda v: -v / (1.0 + v))
    return np.exp(drift.integral(t)) * doleans_exp(g, path, channel, t)


@dataclass
class PathwiseCheck:
    """Residuals of ``dE = f(s-) E(s-) dN~`` along a path."""

    jump_residual: float
    drift_residual: float
    evaluations: int = field(default=0)


def check_doleans_sde(f: StepProcess, path: PoissonPath, channel: int) -> PathwiseCheck:
    """Verify the exponential solves its SDE between successive evaluation points.

    At a jump ``E(s) - E(s-) = f(s-) E(s-)``. On a jump-free piece ``(a, b]``
    of constant ``f = c``, ``dE = -c E dt`` so ``E(b-) = E(a) exp(-c (b - a))``.
    """
    js = path.jumps[channel]
    pts = np.union1d(f.breakpoints, js)
    pts = pts[(pts > 0) & (pts <= min(f.end, path.horizon))]
    jump_res = drift_res = 0.0
    prev_t, prev_e = 0.0, 1.0
    for s in pts:
        e_left = doleans_exp(f, path, channel, s, left=True)
        c = f.left_limit(s)
        expected = prev_e * np.exp(-c * (s - prev_t))
        drift_res = max(drift_res, abs(e_left - expected) / max(abs(expected), 1e-300))
        e = doleans_exp(f, path, channel, s)
        if np.any(js == s):
            jump_res = max(jump_res, abs((e - e_left) - c * e_left) / max(abs(e_left), 1e-300))
        prev_t, prev_e = s, e
    return PathwiseCheck(float(jump_res), float(drift_res), len(pts))
