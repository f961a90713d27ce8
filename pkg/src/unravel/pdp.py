"""Piecewise deterministic state-vector unravellings.

Three trajectory generators share one model:

* :func:`simulate_linear` -- the unnormalized linear unravelling driven by
  compensated unit-rate Poisson noise, in the ``raw_L`` frame.
* :func:`simulate_exact` -- the normalized canonical jump process in the
  ``shifted_M`` frame, jump times drawn by inverting the survival
  probability ``||psi0(t)||**2`` of the effective non-Hermitian evolution.
* :func:`simulate_mcwf` -- the fixed-step Monte Carlo wave function loop.

:func:`replay_normalized` drives the normalized evolution with a prescribed
jump path (e.g. the one sampled by :func:`simulate_linear`), which makes the
change of measure between the two checkable path by path.
"""

from __future__ import annotations

import hashlib
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .master import StepSizeError, time_grid
from .model import RAW_L, SHIFTED_M, ModelError, ModelSpec, normalize, to_jump_frame, to_raw_frame
from .poisson import (
    STATE_DEPENDENT,
    SAMPLER_STREAM,
    PoissonPath,
    SampledProcess,
    doleans_exp_many,
    sample_unit_poisson,
    substream,
)

log = logging.getLogger(__name__)

DP_WARN = 0.1
DP_ABORT = 0.5


class ForbiddenJump(ModelError):
    """Jump requested on a channel whose image ``M psi`` vanishes."""


# -- rates ------------------------------------------------------------------

@dataclass
class GirsanovRates:
    """Per-channel ``R``, ``S = R/(1+R)`` and ``c = 1/sqrt(1+R)``."""

    R: np.ndarray
    S: np.ndarray
    c: np.ndarray


def _raw_ops(m: ModelSpec) -> np.ndarray:
    if m.convention == SHIFTED_M:
        return m.ops - np.eye(m.dim)[None]
    return m.ops


def girsanov_rates(m: ModelSpec, psi) -> GirsanovRates:
    """``R_a = <psi|L_a + L_a^+ + L_a^+ L_a|psi> / <psi|psi>`` and derived ``S``, ``c``.

    For ``shifted_M`` models the Lindblad operators are recovered as
    ``L = M - I``, so that ``1 + R_a = ||M_a psi||**2 / ||psi||**2``.
    """
    psi = np.asarray(psi, dtype=complex)
    nrm2 = np.vdot(psi, psi).real
    if nrm2 == 0.0:
        raise ModelError("girsanov_rates of the zero state")
    lpsi = _raw_ops(m) @ psi
    R = (2.0 * np.real(lpsi @ psi.conj()) + np.sum(np.abs(lpsi) ** 2, axis=1)) / nrm2
    R = np.maximum(R, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        S = np.where(R > -1.0, R / (1.0 + R), -np.inf)
        c = np.where(R > -1.0, 1.0 / np.sqrt(1.0 + R), np.inf)
    return GirsanovRates(R, S, c)


def _require_jump_frame(m: ModelSpec):
    if m.convention != SHIFTED_M:
        raise ModelError("expected a shifted_M model; use to_jump_frame()")


def jump_rates(m: ModelSpec, Psi) -> np.ndarray:
    """Born-rule rates ``||M_a Psi||**2`` for a normalized state."""
    _require_jump_frame(m)
    mpsi = m.ops @ np.asarray(Psi, dtype=complex)
    return np.sum(np.abs(mpsi) ** 2, axis=1)


def apply_jump(m: ModelSpec, Psi, channel: int) -> np.ndarray:
    """``M_a Psi / ||M_a Psi||``."""
    v = m.ops[channel] @ np.asarray(Psi, dtype=complex)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise ForbiddenJump(f"channel {m.labels[channel]!r} has zero image; its rate is zero")
    return v / n


def _nonlinear_drift(m: ModelSpec, psi):
    k = m.decay_operator
    kpsi = k @ psi
    mean = np.vdot(psi, kpsi).real / np.vdot(psi, psi).real
    return -1j * (m.hamiltonian @ psi) - 0.5 * (kpsi - mean * psi)


def drift_step(m: ModelSpec, Psi, dt: float) -> tuple[np.ndarray, float]:
    """One RK4 step of the norm-preserving nonlinear drift, then renormalize.

    Returns the new state and the renormalization correction
    ``| ||Psi'|| - 1 |``, which is ``O(dt**2)`` or smaller.
    """
    _require_jump_frame(m)
    psi = np.asarray(Psi, dtype=complex)
    k1 = _nonlinear_drift(m, psi)
    k2 = _nonlinear_drift(m, psi + 0.5 * dt * k1)
    k3 = _nonlinear_drift(m, psi + 0.5 * dt * k2)
    k4 = _nonlinear_drift(m, psi + dt * k3)
    out = psi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    n = np.linalg.norm(out)
    if not np.isfinite(n):
        raise StepSizeError("non-finite state in drift_step")
    log.debug("drift_step renormalization %.3e", abs(n - 1.0))
    return out / n, abs(n - 1.0)


def effective_generator(m: ModelSpec) -> np.ndarray:
    """``-(i H + 1/2 sum M^+ M)``: generator of the unnormalized no-jump evolution."""
    return -1j * m.hamiltonian - 0.5 * m.decay_operator


def linear_generator(m: ModelSpec) -> np.ndarray:
    """Drift of the linear unravelling, ``-(i H + 1/2 sum L^+ L + sum L)``.

    The ``- sum L`` part is the compensator of ``sum L dN``.
    """
    if m.convention != RAW_L:
        raise ModelError("linear unravelling runs in the raw_L frame")
    return -1j * m.hamiltonian - 0.5 * m.decay_operator - np.sum(m.ops, axis=0)


def taylor4(G, h: float) -> np.ndarray:
    """Propagator of one classical RK4 step for ``x' = G x`` with step ``h``."""
    a = h * np.asarray(G)
    a2 = a @ a
    eye = np.eye(a.shape[0], dtype=complex)
    return eye + a + a2 / 2.0 + (a2 @ a) / 6.0 + (a2 @ a2) / 24.0


class _Propagator:
    def __init__(self, G, dt):
        self.G = G
        self.dt = dt
        self.step = taylor4(G, dt)

    def __call__(self, h):
        if abs(h - self.dt) <= 1e-12 * self.dt:
            return self.step
        return taylor4(self.G, h)


# -- records ----------------------------------------------------------------

def state_hash(psi) -> str:
    return hashlib.sha256(np.ascontiguousarray(psi, dtype=complex).tobytes()).hexdigest()[:16]


@dataclass
class JumpEvent:
    time: float
    channel: int
    label: str
    pre_norm: float  # ||M_a Psi(t-)||
    post_hash: str
    pre_state: np.ndarray | None = field(default=None, repr=False)
    post_state: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"time": self.time, "channel": self.channel, "label": self.label,
                "pre_norm": self.pre_norm, "post_hash": self.post_hash}


@dataclass
class TrajectoryRecord:
    """One normalized trajectory on its output grid.

    ``knot_times``/``knot_states`` hold every integration point including
    the left and right states at each jump; they feed the pathwise norm
    process. ``norm`` holds ``phi_t`` on ``times`` when computed.
    """

    times: np.ndarray
    states: np.ndarray
    events: list
    method: str
    seed: int
    trajectory: int
    model: ModelSpec = field(repr=False)
    knot_times: np.ndarray | None = field(default=None, repr=False)
    knot_states: np.ndarray | None = field(default=None, repr=False)
    norm: np.ndarray | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    def jump_path(self) -> PoissonPath:
        horizon = float(self.times[-1]) if len(self.times) else 0.0
        jumps = [[e.time for e in self.events if e.channel == a] for a in range(self.model.n_channels)]
        return PoissonPath(horizon, tuple(jumps), STATE_DEPENDENT)

    @property
    def first_jump(self) -> JumpEvent | None:
        return self.events[0] if self.events else None

    def to_dict(self, stride: int = 1) -> dict:
        idx = np.arange(0, len(self.times), max(1, int(stride)))
        if len(self.times) and idx[-1] != len(self.times) - 1:
            idx = np.append(idx, len(self.times) - 1)
        doc = {
            "method": self.method, "seed": self.seed, "trajectory": self.trajectory,
            "labels": self.model.labels,
            "times": self.times[idx].tolist(),
            "states": [{"re": s.real.tolist(), "im": s.imag.tolist()} for s in self.states[idx]],
            "events": [e.to_dict() for e in self.events],
            "diagnostics": self.diagnostics,
        }
        if self.norm is not None:
            doc["norm"] = self.norm[idx].tolist()
        return doc


@dataclass
class LinearTrajectory:
    """Unnormalized linear-unravelling trajectory and its driving unit-rate path."""

    times: np.ndarray
    states: np.ndarray
    path: PoissonPath
    model: ModelSpec = field(repr=False)
    seed: int = 0
    trajectory: int = 0
    knot_times: np.ndarray | None = field(default=None, repr=False)
    knot_states: np.ndarray | None = field(default=None, repr=False)
    method: str = "linear"

    @property
    def norm_squared(self) -> np.ndarray:
        return np.sum(np.abs(self.states) ** 2, axis=1)

    def to_dict(self, stride: int = 1) -> dict:
        idx = np.arange(0, len(self.times), max(1, int(stride)))
        if idx[-1] != len(self.times) - 1:
            idx = np.append(idx, len(self.times) - 1)
        return {
            "method": "linear", "seed": self.seed, "trajectory": self.trajectory,
            "labels": self.model.labels,
            "times": self.times[idx].tolist(),
            "states": [{"re": s.real.tolist(), "im": s.imag.tolist()} for s in self.states[idx]],
            "path": self.path.to_dict(),
        }


# -- event-driven propagation on a prescribed path ---------------------------

def _run_on_path(G, psi0, grid, events, jump, renormalize, keep_knots=True):
    prop = _Propagator(G, grid[1] - grid[0] if len(grid) > 1 else 1.0)
    states = np.empty((len(grid), len(psi0)), dtype=complex)
    psi = np.asarray(psi0, dtype=complex).copy()
    states[0] = psi
    kt, ks = [0.0], [psi.copy()]
    fired = []
    t, i = 0.0, 0
    for k in range(1, len(grid)):
        t_next = grid[k]
        while i < len(events) and events[i][0] <= t_next:
            s, a = events[i]
            psi = prop(s - t) @ psi
            if renormalize:
                psi = psi / np.linalg.norm(psi)
            pre = psi
            psi = jump(psi, a)
            if not np.all(np.isfinite(psi)):
                raise StepSizeError(f"non-finite state after jump at t={s:.6g}")
            fired.append((s, a, pre, psi))
            if keep_knots:
                kt += [s, s]
                ks += [pre, psi]
            t, i = s, i + 1
        if t_next > t:
            psi = prop(t_next - t) @ psi
            if renormalize:
                psi = psi / np.linalg.norm(psi)
            t = t_next
            if keep_knots:
                kt.append(t)
                ks.append(psi)
        if not np.all(np.isfinite(psi)):
            raise StepSizeError(f"non-finite state at t={t:.6g}; reduce dt")
        states[k] = psi
    knots = (np.array(kt), np.array(ks)) if keep_knots else (None, None)
    return states, knots, fired


def simulate_linear(m: ModelSpec, psi0, horizon: float, dt: float, seed: int = 0,
                    trajectory: int = 0, path: PoissonPath | None = None,
                    keep_knots: bool = True) -> LinearTrajectory:
    """Integrate ``d psi = (sum L dN~ - (iH + 1/2 sum L^+ L) dt) psi`` under unit rates.

    Jumps apply the exact factor ``I + L_a``; between jumps the drift is
    advanced with RK4 on the output grid (partial steps land on jump times).
    """
    m = to_raw_frame(m.checked())
    psi0 = np.asarray(psi0, dtype=complex)
    if path is None:
        path = sample_unit_poisson(m.n_channels, horizon, seed, trajectory)
    elif path.channels != m.n_channels:
        raise ModelError(f"path has {path.channels} channels, model {m.n_channels}")
    grid = time_grid(horizon, dt)
    jump_ops = m.ops + np.eye(m.dim)[None]
    states, (kt, ks), _ = _run_on_path(linear_generator(m), psi0, grid, path.events(horizon),
                                       lambda psi, a: jump_ops[a] @ psi, False, keep_knots)
    return LinearTrajectory(grid, states, path, m, seed, trajectory, kt, ks)


def replay_normalized(m: ModelSpec, Psi0, path: PoissonPath, dt: float, seed: int = 0,
                      trajectory: int = 0, with_norm: bool = True) -> TrajectoryRecord:
    """Normalized canonical evolution forced to jump at the times of ``path``."""
    mm = to_jump_frame(m.checked())
    if path.channels != mm.n_channels:
        raise ModelError(f"path has {path.channels} channels, model {mm.n_channels}")
    grid = time_grid(path.horizon, dt)
    Psi0 = normalize(Psi0)
    states, (kt, ks), fired = _run_on_path(effective_generator(mm), Psi0, grid, path.events(),
                                           lambda psi, a: apply_jump(mm, psi, a), True)
    events = [JumpEvent(s, a, mm.labels[a], float(np.linalg.norm(mm.ops[a] @ pre)), state_hash(post),
                        pre, post) for s, a, pre, post in fired]
    rec = TrajectoryRecord(grid, states, events, "replay", seed, trajectory, mm, kt, ks)
    if with_norm:
        rec.norm = norm_process(rec, path)
    return rec


# -- samplers -----------------------------------------------------------------

def _choose_channel(rates, u: float) -> int:
    """Cumulative-sum inverse: first channel whose cumulative weight exceeds ``u``."""
    cum = np.cumsum(rates)
    total = cum[-1]
    a = int(np.searchsorted(cum, u * total, side="right"))
    if a >= len(rates):  # rounding at u ~ 1
        a = int(np.flatnonzero(rates > 0)[-1])
    return a


def simulate_exact(m: ModelSpec, Psi0, horizon: float, seed: int = 0, dt: float = 1e-2,
                   trajectory: int = 0, max_jumps: int | None = None,
                   keep_knots: bool = True, with_norm: bool = True) -> TrajectoryRecord:
    """Exact waiting-time sampler for the normalized canonical jump process.

    Between jumps the unnormalized state follows
    ``psi0' = -(i H' + 1/2 sum M^+ M) psi0`` (RK4 on the grid ``dt``); a jump
    fires when the survival probability ``||psi0(t)||**2`` falls below a
    uniform draw, located by a bracketing root search to ``1e-9 * horizon``.
    The channel is selected with probability ``||M_a Psi(t-)||**2 / total``.

    ``max_jumps`` stops the trajectory right after that many jumps; the last
    record time is then the final jump time.
    """
    mm = to_jump_frame(m.checked())
    Psi0 = normalize(Psi0)
    grid = time_grid(horizon, dt)
    prop = _Propagator(effective_generator(mm), dt)
    rng = substream(seed, trajectory, SAMPLER_STREAM)
    tol = 1e-9 * horizon
    has_jumps = mm.n_channels > 0

    states = [Psi0.copy()]
    times = [0.0]
    kt, ks = [0.0], [Psi0.copy()]
    events = []
    phi = Psi0.copy()  # unnormalized since the last jump; ||phi||^2 is the survival
    u = rng.random() if has_jumps else 0.0
    t = 0.0
    done = False
    for k in range(1, len(grid)):
        t_next = grid[k]
        while True:
            h = t_next - t
            cand = prop(h) @ phi
            surv = np.vdot(cand, cand).real
            if not np.isfinite(surv):
                raise StepSizeError(f"non-finite state at t={t_next:.6g}")
            if not has_jumps or surv > u:
                phi, t, last_surv = cand, t_next, surv
                break
            start = phi
            try:
                tau = brentq(lambda x: np.vdot(q := prop(x) @ start, q).real - u, 0.0, h, xtol=tol)
            except ValueError as exc:
                raise StepSizeError(f"jump-time search failed near t={t:.6g}: {exc}") from exc
            pre = prop(tau) @ start
            pre = pre / np.linalg.norm(pre)
            rates = jump_rates(mm, pre)
            if rates.sum() <= 0.0:
                phi, t, last_surv = cand, t_next, surv
                break
            a = _choose_channel(rates, rng.random())
            post = apply_jump(mm, pre, a)
            t = t + tau
            events.append(JumpEvent(t, a, mm.labels[a], float(np.sqrt(rates[a])), state_hash(post), pre, post))
            if keep_knots:
                kt += [t, t]
                ks += [pre, post]
            phi = post
            u = rng.random()
            if max_jumps is not None and len(events) >= max_jumps:
                times.append(t)
                states.append(post)
                done = True
                break
        if done:
            break
        Psi = phi * (1.0 / math.sqrt(last_surv))
        times.append(t_next)
        states.append(Psi)
        if keep_knots:
            kt.append(t_next)
            ks.append(Psi)
    rec = TrajectoryRecord(np.array(times), np.array(states), events, "exact", seed, trajectory, mm,
                           np.array(kt) if keep_knots else None, np.array(ks) if keep_knots else None)
    if with_norm and keep_knots:
        rec.norm = norm_process(rec)
    return rec


def simulate_mcwf(m: ModelSpec, Psi0, horizon: float, dt: float, seed: int = 0,
                  trajectory: int = 0, max_jumps: int | None = None,
                  keep_knots: bool = True, with_norm: bool = True) -> TrajectoryRecord:
    """Monte Carlo wave function loop with the first-order propagator.

    Each step: ``psi0 = (I - i K dt) psi`` with ``K = H' - i/2 sum M^+ M`` and
    ``dp = dt sum <M^+ M>``. Draw ``eps``: if ``dp < eps`` keep
    ``psi0 / sqrt(1 - dp)``; otherwise draw ``eps'`` to choose channel ``a``
    with probability ``dp_a / dp`` and set ``psi = M_a psi / sqrt(dp_a/dt)``
    (the jump is stamped at the end of the step).

    The no-jump branch leaves an ``O(dt**2)`` norm error; it is measured,
    kept in ``diagnostics['max_norm_defect']`` and removed before storing.
    """
    mm = to_jump_frame(m.checked())
    psi = normalize(Psi0)
    grid = time_grid(horizon, dt)
    rng = substream(seed, trajectory, SAMPLER_STREAM)
    K = mm.hamiltonian - 0.5j * mm.decay_operator
    eye = np.eye(mm.dim, dtype=complex)
    step = eye - 1j * K * dt
    ops = mm.ops

    states = np.empty((len(grid), mm.dim), dtype=complex)
    states[0] = psi
    kt, ks = [0.0], [psi.copy()]
    events = []
    max_dp = max_defect = 0.0
    warned = False
    last = len(grid) - 1
    for k in range(1, len(grid)):
        h = grid[k] - grid[k - 1]
        prop = step if abs(h - dt) <= 1e-12 * dt else eye - 1j * K * h
        mpsi = ops @ psi
        dps = h * (mpsi.real**2 + mpsi.imag**2).sum(axis=1)
        dp = float(dps.sum())
        max_dp = max(max_dp, dp)
        if dp > DP_ABORT:
            raise StepSizeError(f"dp = {dp:.3f} > {DP_ABORT} at t={grid[k - 1]:.6g}; reduce dt")
        if dp > DP_WARN and not warned:
            warnings.warn(f"MCWF dp = {dp:.3f} exceeds {DP_WARN}; first-order error is large", RuntimeWarning)
            warned = True
        eps = rng.random()
        if dp < eps:
            new = (prop @ psi) * (1.0 / math.sqrt(1.0 - dp))
            n = math.sqrt(np.vdot(new, new).real)
            max_defect = max(max_defect, abs(n - 1.0))
            psi = new * (1.0 / n)
        else:
            a = _choose_channel(dps, rng.random())
            pre = psi
            psi = mpsi[a] * (1.0 / math.sqrt(dps[a] / h))
            psi = psi * (1.0 / math.sqrt(np.vdot(psi, psi).real))
            events.append(JumpEvent(grid[k], a, mm.labels[a], float(np.sqrt(dps[a] / h)), state_hash(psi), pre, psi))
            if keep_knots:
                kt += [grid[k], grid[k]]
                ks += [pre, psi]
            if max_jumps is not None and len(events) >= max_jumps:
                states[k] = psi
                last = k
                break
        if not math.isfinite(np.vdot(psi, psi).real):
            raise StepSizeError(f"non-finite state at t={grid[k]:.6g}")
        states[k] = psi
        if keep_knots:
            kt.append(grid[k])
            ks.append(psi)
    rec = TrajectoryRecord(grid[: last + 1], states[: last + 1], events, "mcwf", seed, trajectory, mm,
                           np.array(kt) if keep_knots else None, np.array(ks) if keep_knots else None,
                           diagnostics={"max_dp": max_dp, "max_norm_defect": max_defect})
    if with_norm and keep_knots:
        rec.norm = norm_process(rec)
    return rec


# -- norm processes -----------------------------------------------------------

def _knots(rec):
    if rec.knot_times is None:
        raise ValueError("record was generated without knots")
    return rec.knot_times, rec.knot_states


def norm_process(rec, path: PoissonPath | None = None, times=None) -> np.ndarray:
    """Norm process ``phi_t`` of a normalized trajectory.

    ``phi_t = exp(-1/2 sum int (||M_a Psi_s|| - 1)**2 ds) * E(sum int (||M_a Psi_s|| - 1) dN~_a)``

    evaluated pathwise with left limits at jumps. ``path`` defaults to the
    record's own jump times.
    """
    mm = rec.model
    _require_jump_frame(mm)
    kt, ks = _knots(rec)
    path = rec.jump_path() if path is None else path
    times = rec.times if times is None else np.asarray(times, dtype=float)
    f = np.linalg.norm(np.einsum("aij,kj->aki", mm.ops, ks), axis=2) - 1.0  # (channels, knots)
    log_phi = np.zeros(len(times))
    out = np.ones(len(times))
    for a in range(mm.n_channels):
        fa = SampledProcess(kt, f[a])
        log_phi -= 0.5 * np.asarray(fa.map(np.square).integral(times))
        out = out * doleans_exp_many(fa, path, a, times)
    return np.exp(log_phi) * out


def norm_squared_process(traj: LinearTrajectory, times=None) -> np.ndarray:
    """Closed form ``E(sum int R_a dN~_a)`` of ``<psi_t|psi_t>`` along the driving path."""
    kt, ks = _knots(traj)
    times = traj.times if times is None else np.asarray(times, dtype=float)
    R = np.array([girsanov_rates(traj.model, s).R for s in ks]).T
    out = np.ones(len(times))
    for a in range(traj.model.n_channels):
        out = out * doleans_exp_many(SampledProcess(kt, R[a]), traj.path, a, times)
    return out


def normalizing_process(traj: LinearTrajectory, times=None) -> np.ndarray:
    """``Phi_t = exp(sum int [(R-2)/2 + c] ds) E(sum int (c - 1) dN~)`` with ``c = 1/sqrt(1+R)``.

    Satisfies ``|Phi_t|**2 <psi_t|psi_t> = 1`` pathwise.
    """
    kt, ks = _knots(traj)
    times = traj.times if times is None else np.asarray(times, dtype=float)
    rates = [girsanov_rates(traj.model, s) for s in ks]
    R = np.array([r.R for r in rates]).T
    c = np.array([r.c for r in rates]).T
    log_drift = np.zeros(len(times))
    out = np.ones(len(times))
    for a in range(traj.model.n_channels):
        log_drift += np.asarray(SampledProcess(kt, 0.5 * (R[a] - 2.0) + c[a]).integral(times))
        out = out * doleans_exp_many(SampledProcess(kt, c[a] - 1.0), traj.path, a, times)
    return np.exp(log_drift) * out
