"""Finite-dimensional open-system models and the Lindblad generator.

A model is a Hamiltonian plus an ordered family of labelled jump operators.
Two conventions are tracked:

``raw_L``
    the operators are Lindblad operators ``L`` driven by compensated unit-rate
    Poisson noise (linear unravelling).
``shifted_M``
    the operators are the jump operators ``M`` of a normalized piecewise
    deterministic unravelling; jump rates are ``||M psi||**2``.

:func:`shift_model` moves between the two by ``L -> L + f I`` with the
compensating Hamiltonian correction, which leaves the generator unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

RAW_L = "raw_L"
SHIFTED_M = "shifted_M"
CONVENTIONS = (RAW_L, SHIFTED_M)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10
NORM_TOL = 1e-12


class ModelError(ValueError):
    """Raised for structurally unusable models or states."""


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hermiticity_defect(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a - dagger(a)))) if a.size else 0.0


@dataclass(frozen=True)
class ModelSpec:
    """Hamiltonian plus labelled jump operators on ``C**dim``.

    Construction does not validate; call :func:`validate_model` (or
    :meth:`checked`) to get a report.
    """

    hamiltonian: np.ndarray
    jump_ops: tuple = ()
    convention: str = RAW_L
    dim: int = field(default=0)

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        object.__setattr__(self, "hamiltonian", h)
        ops = tuple((str(lbl), np.asarray(op, dtype=complex)) for lbl, op in self.jump_ops)
        object.__setattr__(self, "jump_ops", ops)
        if not self.dim:
            object.__setattr__(self, "dim", int(h.shape[0]) if h.ndim else 0)

    @property
    def labels(self) -> list[str]:
        return [lbl for lbl, _ in self.jump_ops]

    @property
    def n_channels(self) -> int:
        return len(self.jump_ops)

    @cached_property
    def ops(self) -> np.ndarray:
        """Jump operators stacked as a ``(n_channels, dim, dim)`` array."""
        if not self.jump_ops:
            return np.zeros((0, self.dim, self.dim), dtype=complex)
        return np.stack([op for _, op in self.jump_ops])

    @cached_property
    def ops_dag(self) -> np.ndarray:
        return dagger(self.ops)

    @cached_property
    def decay_operator(self) -> np.ndarray:
        """``sum_a op_a^dagger op_a``."""
        if not self.jump_ops:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return np.einsum("aji,ajk->ik", self.ops.conj(), self.ops)

    def checked(self) -> "ModelSpec":
        report = validate_model(self)
        if not report.ok:
            raise ModelError(report.render())
        return self


@dataclass
class ValidationReport:
    ok: bool
    hermiticity_defect: float
    dimension_errors: list = field(default_factory=list)
    duplicate_labels: list = field(default_factory=list)
    other_errors: list = field(default_factory=list)
    tolerance: float = HERMITIAN_TOL

    def render(self) -> str:
        lines = [f"model {'OK' if self.ok else 'INVALID'}"]
        flag = "ok" if self.hermiticity_defect <= self.tolerance else "FAIL"
        lines.append(f"  hamiltonian hermiticity defect: {self.hermiticity_defect:.3e} "
                     f"(tol {self.tolerance:.0e}) {flag}")
        for msg in self.dimension_errors:
            lines.append(f"  dimension: {msg}")
        if self.duplicate_labels:
            lines.append(f"  duplicate labels: {', '.join(self.duplicate_labels)}")
        for msg in self.other_errors:
            lines.append(f"  error: {msg}")
        return "\n".join(lines)


def validate_model(m: ModelSpec, tol: float = HERMITIAN_TOL) -> ValidationReport:
    """Check Hermiticity of H, shared dimensions, unique labels, finiteness."""
    dim_errors, other = [], []
    h = m.hamiltonian
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        dim_errors.append(f"hamiltonian has shape {h.shape}, expected square")
        defect = float("inf")
    else:
        defect = hermiticity_defect(h)
        if h.shape[0] != m.dim:
            dim_errors.append(f"hamiltonian is {h.shape[0]}x{h.shape[0]}, dim is {m.dim}")
    if m.dim < 1:
        dim_errors.append("dim must be positive")
    if not np.all(np.isfinite(h)):
        other.append("hamiltonian has non-finite entries")
    for lbl, op in m.jump_ops:
        if op.shape != (m.dim, m.dim):
            dim_errors.append(f"jump operator {lbl!r} has shape {op.shape}, expected ({m.dim}, {m.dim})")
        elif not np.all(np.isfinite(op)):
            other.append(f"jump operator {lbl!r} has non-finite entries")
    seen, dups = set(), []
    for lbl in m.labels:
        if lbl in seen and lbl not in dups:
            dups.append(lbl)
        seen.add(lbl)
    if m.convention not in CONVENTIONS:
        other.append(f"unknown convention {m.convention!r}")
    ok = defect <= tol and not dim_errors and not dups and not other
    return ValidationReport(ok, defect, dim_errors, dups, other, tol)


def commutator(a, b):
    return a @ b - b @ a


def lindbladian_apply(m: ModelSpec, rho) -> np.ndarray:
    """Apply the GKSL generator ``-i[H, rho] + sum L rho L^+ - 1/2 {L^+ L, rho}``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (m.dim, m.dim):
        raise ModelError(f"density matrix shape {rho.shape} does not match dim {m.dim}")
    out = -1j * commutator(m.hamiltonian, rho)
    if m.n_channels:
        out += np.einsum("aij,jk,alk->il", m.ops, rho, m.ops.conj())
        k = m.decay_operator
        out -= 0.5 * (k @ rho + rho @ k)
    return out


def shift_model(m: ModelSpec, constants: Sequence[complex], convention: str | None = None) -> ModelSpec:
    """Gauge shift ``L_a -> L_a + f_a I``, ``H -> H + (1/2i) sum(f_a* L_a - f_a L_a^+)``.

    The Lindblad generator is invariant under this map. With all ``f_a = 1``
    and ``convention=SHIFTED_M`` this produces the jump operators ``M = L + I``
    and the Hamiltonian ``H'`` of the canonical normalized unravelling.
    """
    constants = list(constants)
    if len(constants) != m.n_channels:
        raise ModelError(f"{len(constants)} shift constants for {m.n_channels} channels")
    eye = np.eye(m.dim, dtype=complex)
    h = m.hamiltonian.copy()
    ops = []
    for f, (lbl, op) in zip(constants, m.jump_ops):
        f = complex(f)
        h += (np.conj(f) * op - f * dagger(op)) / 2j
        ops.append((lbl, op + f * eye))
    # the correction is Hermitian analytically; strip rounding asymmetry
    h = 0.5 * (h + dagger(h))
    return replace(m, hamiltonian=h, jump_ops=tuple(ops), convention=convention or m.convention)


def to_jump_frame(m: ModelSpec) -> ModelSpec:
    """Return the model in the ``shifted_M`` frame used by normalized samplers.

    ``raw_L`` models are shifted with ``f = 1``; ``shifted_M`` models are
    returned unchanged.
    """
    if m.convention == SHIFTED_M:
        return m
    return shift_model(m, [1.0] * m.n_channels, convention=SHIFTED_M)


def to_raw_frame(m: ModelSpec) -> ModelSpec:
    """Inverse of :func:`to_jump_frame` (``f = -1``)."""
    if m.convention == RAW_L:
        return m
    return shift_model(m, [-1.0] * m.n_channels, convention=RAW_L)


# -- states -----------------------------------------------------------------

def normalize(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    n = np.linalg.norm(psi)
    if not np.isfinite(n) or n == 0.0:
        raise ModelError("cannot normalize a zero or non-finite state")
    return psi / n


def is_normalized(psi, tol: float = NORM_TOL) -> bool:
    return abs(np.linalg.norm(psi) - 1.0) <= tol


def basis(dim: int, k: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[k] = 1.0
    return v


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def check_density(rho, herm_tol: float = HERMITIAN_TOL, trace_tol: float = TRACE_TOL,
                  pos_tol: float = POSITIVITY_TOL) -> np.ndarray:
    """Validate a density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ModelError(f"density matrix must be square, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ModelError("density matrix has non-finite entries")
    if hermiticity_defect(rho) > herm_tol:
        raise ModelError(f"density matrix not Hermitian (defect {hermiticity_defect(rho):.2e})")
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise ModelError(f"density matrix trace {np.trace(rho).real:.12g} != 1")
    if np.linalg.eigvalsh(rho).min() < -pos_tol:
        raise ModelError("density matrix has negative eigenvalues")
    return rho


# -- common operators -------------------------------------------------------

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e| with |g> = index 0
SIGMA_PLUS = SIGMA_MINUS.T.copy()
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
GROUND = basis(2, 0)
EXCITED = basis(2, 1)


def amplitude_damping(gamma: float = 1.0, hamiltonian=None) -> ModelSpec:
    """Two-level decay ``L = sqrt(gamma) |g><e|`` in the ``raw_L`` frame."""
    h = np.zeros((2, 2), dtype=complex) if hamiltonian is None else hamiltonian
    return ModelSpec(h, (("decay", np.sqrt(gamma) * SIGMA_MINUS),), RAW_L)


def projector_model(hamiltonian, vectors=None, labels=None) -> ModelSpec:
    """``shifted_M`` model whose jump operators are rank-one projectors.

    ``vectors`` defaults to the computational basis, giving a complete
    orthogonal family with ``sum P^+ P = I``.
    """
    h = np.asarray(hamiltonian, dtype=complex)
    d = h.shape[0]
    vectors = np.eye(d, dtype=complex) if vectors is None else np.asarray(vectors, dtype=complex)
    labels = labels or [f"P{k}" for k in range(len(vectors))]
    ops = tuple((lbl, projector(normalize(v))) for lbl, v in zip(labels, vectors))
    return ModelSpec(h, ops, SHIFTED_M)


# -- model files ------------------------------------------------------------

def _encode_matrix(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[float(z.real), float(z.imag)] for z in a.ravel()]


def _decode_matrix(pairs, dim: int, what: str) -> np.ndarray:
    try:
        flat = np.array([complex(re, im) for re, im in pairs], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{what}: expected a list of [re, im] pairs") from exc
    if flat.size != dim * dim:
        raise ModelError(f"{what}: {flat.size} entries, expected dim*dim = {dim * dim}")
    return flat.reshape(dim, dim)


def model_to_dict(m: ModelSpec, initial_state=None) -> dict:
    doc = {
        "dim": m.dim,
        "convention": m.convention,
        "hamiltonian": _encode_matrix(m.hamiltonian),
        "jump_ops": [{"label": lbl, "matrix": _encode_matrix(op)} for lbl, op in m.jump_ops],
    }
    if initial_state is not None:
        doc["initial_state"] = [[float(z.real), float(z.imag)] for z in np.asarray(initial_state, complex)]
    return doc


def model_from_dict(doc: dict) -> tuple[ModelSpec, np.ndarray | None]:
    """Parse a model document. Returns ``(model, initial_state or None)``."""
    try:
        dim = int(doc["dim"])
        h = _decode_matrix(doc["hamiltonian"], dim, "hamiltonian")
        ops = tuple((str(j["label"]), _decode_matrix(j["matrix"], dim, f"jump_ops[{j['label']}]"))
                    for j in doc.get("jump_ops", []))
    except KeyError as exc:
        raise ModelError(f"model file missing field {exc}") from exc
    m = ModelSpec(h, ops, doc.get("convention", RAW_L), dim)
    psi0 = None
    if "initial_state" in doc:
        psi0 = np.array([complex(re, im) for re, im in doc["initial_state"]], dtype=complex)
        if psi0.shape != (dim,):
            raise ModelError(f"initial_state has {psi0.size} amplitudes, expected {dim}")
    return m, psi0


def load_model(path) -> tuple[ModelSpec, np.ndarray | None]:
    """Read a JSON model file and validate it.

    Raises :class:`ModelError` carrying the rendered validation report when
    the model is invalid (e.g. non-Hermitian Hamiltonian).
    """
    with open(path) as fh:
        doc = json.load(fh)
    m, psi0 = model_from_dict(doc)
    m.checked()
    return m, psi0


def save_model(path, m: ModelSpec, initial_state=None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m, initial_state), indent=1) + "\n")
