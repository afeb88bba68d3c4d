"""Path-A figures of merit: photon statistics, g2, fidelity, purity."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nmzi import kernels

#: Diagonal entries down to this value are treated as float noise.
NEGATIVE_NOISE = 1e-10

#: Photon numbers reported individually in :class:`ObservableReport`.
REPORTED_P = 5

REPORT_FIELDS = (
    "n_max",
    *(f"P_{p}" for p in range(REPORTED_P)),
    "P_rest",
    "g2",
    "fidelity",
    "purity",
)


class UndefinedG2Error(ValueError):
    """g2 asked for a distribution with zero mean photon number."""


@dataclass(frozen=True)
class ModeADensity:
    """Reduced density matrix of Path A in the photon-number basis."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def trace(self):
        return float(np.trace(self.matrix).real)


def reduce_to_mode_a(state):
    """Partial trace over Path B of a :class:`~nmzi.fock.TwoModeState`."""
    return ModeADensity(kernels.mode_a_density(np.ascontiguousarray(state.padded())))


def photon_probabilities(rho):
    """Diagonal of ``rho``; entries in ``[-1e-10, 0)`` are clipped to zero."""
    matrix = rho.matrix if isinstance(rho, ModeADensity) else np.asarray(rho)
    p = np.real(np.diag(matrix)).copy()
    if p.size and p.min() < -NEGATIVE_NOISE:
        raise ValueError(f"negative photon probability {p.min():.3e}")
    np.clip(p, 0.0, None, out=p)
    return p


def g2(p):
    """``sum p(p-1) P_p / (sum p P_p)^2``; raises for zero intensity."""
    p = np.asarray(p, dtype=float)
    n = np.arange(p.size)
    mean = float(np.dot(n, p))
    if not mean > 0.0:
        raise UndefinedG2Error("g2 undefined: zero mean photon number")
    return float(np.dot(n * (n - 1), p)) / mean**2


def _target_vector(target, dim):
    t = np.asarray(target, dtype=complex).ravel()
    norm = np.linalg.norm(t)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"target state must be normalized, |t| = {norm:.12g}")
    if t.size > dim:
        if np.any(t[dim:] != 0):
            raise ValueError(f"target has support above the {dim}-level space")
        t = t[:dim]
    return t


def fidelity(rho, target):
    """``<t| rho |t>`` for a normalized pure target on Path A."""
    matrix = rho.matrix if isinstance(rho, ModeADensity) else np.asarray(rho)
    t = _target_vector(target, matrix.shape[0])
    k = t.size
    return float(np.real(np.vdot(t, matrix[:k, :k] @ t)))


def purity(rho):
    """``Tr(rho^2)``."""
    matrix = rho.matrix if isinstance(rho, ModeADensity) else np.asarray(rho)
    # Tr(rho rho) for Hermitian rho is the squared Frobenius norm
    return float(np.sum(np.abs(matrix) ** 2))


def fock_target(n, dim=None):
    v = np.zeros(max(n + 1, dim or 0), dtype=complex)
    v[n] = 1.0
    return v


def superposition_target(coeffs):
    v = np.asarray(coeffs, dtype=complex)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class ObservableReport:
    """Flat record of the Path-A statistics.

    ``g2`` is ``None`` when the output carries no photons.
    """

    n_max: int
    p: tuple
    g2: float | None
    fidelity: float
    purity: float

    @property
    def probabilities(self):
        return np.array(self.p)

    def tail(self, n):
        """``sum_{p >= n} P_p``."""
        return float(sum(self.p[n:]))

    def leakage(self, keep):
        """``1 - sum_{p in keep} P_p``."""
        return 1.0 - float(sum(self.p[k] for k in keep if k < len(self.p)))

    def row(self):
        """Values in :data:`REPORT_FIELDS` order."""
        p = list(self.p) + [0.0] * max(0, REPORTED_P - len(self.p))
        return (
            self.n_max,
            *p[:REPORTED_P],
            float(sum(self.p[REPORTED_P:])),
            self.g2,
            self.fidelity,
            self.purity,
        )

    def as_dict(self):
        return dict(zip(REPORT_FIELDS, self.row()))


def report(rho, target=None, n_max=None):
    """Build an :class:`ObservableReport`; the default target is ``|1>``."""
    matrix = rho.matrix if isinstance(rho, ModeADensity) else np.asarray(rho)
    if target is None:
        target = fock_target(1)
    p = photon_probabilities(matrix)
    try:
        g = g2(p)
    except UndefinedG2Error:
        g = None
    return ObservableReport(
        n_max=int(n_max if n_max is not None else matrix.shape[0] - 1),
        p=tuple(float(x) for x in p),
        g2=g,
        fidelity=fidelity(matrix, target),
        purity=purity(matrix),
    )


def format_value(value, digits=12):
    """CSV/JSON text for one report value (12 significant digits)."""
    if value is None:
        return "undefined"
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    return f"{value:.{digits}g}"
