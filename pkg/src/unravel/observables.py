"""Expectation values along trajectories and their ensemble statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelError, hermiticity_defect


@dataclass
class ObservableSeries:
    label: str
    times: np.ndarray
    values: np.ndarray  # (n_trajectories, n_times)
    mean: np.ndarray
    stderr: np.ndarray
    jump_residual: float = 0.0
    drift_residual: float = 0.0
    checks: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.times, self.mean, self.stderr])
        np.savetxt(path, data, delimiter=",", header="t,mean,stderr", comments="", fmt="%.17g")


def expectation(O, states) -> np.ndarray:
    """``<psi|O|psi>`` for each row of ``states`` (complex)."""
    states = np.atleast_2d(states)
    return np.einsum("ki,ij,kj->k", states.conj(), O, states)


def _drift_rate(model, O, psi):
    """Deterministic part of ``d<O>/dt`` for the canonical normalized evolution."""
    H, K = model.hamiltonian, model.decay_operator
    comm = 1j * (H @ O - O @ H)
    anti = 0.5 * (K @ O + O @ K)
    mean_k = np.vdot(psi, K @ psi).real
    mean_o = np.vdot(psi, O @ psi)
    return np.vdot(psi, (comm - anti) @ psi) + mean_k * mean_o


def jump_increment(model, O, psi, channel: int) -> complex:
    """``<M^+ O M> / ||M psi||**2 - <O>`` at a jump on ``channel``."""
    M = model.ops[channel]
    mpsi = M @ psi
    return np.vdot(mpsi, O @ mpsi) / np.vdot(mpsi, mpsi).real - np.vdot(psi, O @ psi)


def observable_series(records, O, label: str = "O", verify: bool = True,
                      herm_tol: float = 1e-12) -> ObservableSeries:
    """``<Psi_t|O|Psi_t>`` along each record, its ensemble mean and standard error.

    With ``verify`` the records are also checked pathwise:

    * at every jump, the recorded change of ``<O>`` equals
      ``<M O M>/||M Psi||**2 - <O>`` evaluated on the pre-jump state;
    * on every jump-free grid interval, the change of ``<O>`` matches the
      trapezoid integral of ``<i[H,O]> - 1/2<{sum M^+M, O}> + <sum M^+M><O>``.

    The largest discrepancies are stored in ``jump_residual`` and
    ``drift_residual``.
    """
    O = np.asarray(O, dtype=complex)
    if hermiticity_defect(O) > herm_tol:
        raise ModelError("observable is not Hermitian")
    times = records[0].times
    for r in records:
        if len(r.times) != len(times) or np.max(np.abs(r.times - times)) > 1e-12:
            raise ValueError("records do not share a time grid")
    vals = np.array([expectation(O, r.states) for r in records])
    imag = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    vals = vals.real
    n = len(records)
    mean = vals.mean(axis=0)
    stderr = vals.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    series = ObservableSeries(label, times, vals, mean, stderr, checks={"max_imag": imag})
    if verify:
        jr = dr = 0.0
        for r in records:
            for e in r.events:
                if e.pre_state is None:
                    continue
                expected = jump_increment(r.model, O, e.pre_state, e.channel)
                actual = np.vdot(e.post_state, O @ e.post_state) - np.vdot(e.pre_state, O @ e.pre_state)
                jr = max(jr, abs(actual - expected))
            jump_times = np.array([e.time for e in r.events])
            for k in range(len(times) - 1):
                a, b = times[k], times[k + 1]
                if jump_times.size and np.any((jump_times > a) & (jump_times <= b)):
                    continue
                fa = _drift_rate(r.model, O, r.states[k])
                fb = _drift_rate(r.model, O, r.states[k + 1])
                change = np.vdot(r.states[k + 1], O @ r.states[k + 1]) - np.vdot(r.states[k], O @ r.states[k])
                dr = max(dr, abs(change - 0.5 * (b - a) * (fa + fb)))
        series.jump_residual = float(jr)
        series.drift_residual = float(dr)
    return series


def energy_memory_curve(projected, h0: float, times) -> np.ndarray:
    """``<H>_t = int_0^t exp(s - t) <H'>_s ds + <H>_0 exp(-t)``.

    ``projected`` holds ``<H'>_s = E sum_a <Psi|M_a H M_a|Psi>`` on ``times``
    (an array or an :class:`ObservableSeries`, whose mean is used). As in the
    trapezoid rule ``<H'>`` is taken piecewise linear between samples, but the
    exponential weight is integrated exactly, so constant and linear inputs
    are reproduced without discretization error.
    """
    times = np.asarray(times, dtype=float)
    hp = projected.mean if isinstance(projected, ObservableSeries) else np.asarray(projected, dtype=float)
    if hp.shape != times.shape:
        raise ValueError("projected series and times differ in length")
    h = np.diff(times)
    decay = np.exp(-h)
    e0 = -np.expm1(-h)  # int_0^h e^{-x} dx
    e1 = e0 - h * decay  # int_0^h x e^{-x} dx
    with np.errstate(invalid="ignore", divide="ignore"):
        slope_w = np.where(h > 0, e1 / h, 0.0)
    incr = hp[1:] * e0 + (hp[:-1] - hp[1:]) * slope_w
    conv = np.zeros_like(times)
    for k in range(len(h)):
        conv[k + 1] = decay[k] * conv[k] + incr[k]
    return conv + h0 * np.exp(-(times - times[0]))


def projected_energy_operator(model, H=None) -> np.ndarray:
    """``sum_a M_a^+ H M_a`` (the jump-projected Hamiltonian)."""
    H = model.hamiltonian if H is None else np.asarray(H, dtype=complex)
    return np.einsum("aji,jk,akl->il", model.ops.conj(), H, model.ops)


def ensemble_off_diagonal(records, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of ``Psi_i Psi_j^*`` over records (decoherence checks)."""
    vals = np.array([r.states[:, i] * r.states[:, j].conj() for r in records])
    n = len(records)
    se = np.sqrt((vals.real.var(axis=0, ddof=1) + vals.imag.var(axis=0, ddof=1)) / n)
    return vals.mean(axis=0), se
