"""Two-mode truncated Fock space organised by total photon number.

Every element of the interferometer conserves ``a^dag a + b^dag b``, so a
state is stored as one vector per sector ``n`` (length ``n + 1``, entry ``k``
holding the amplitude of ``|k>_A |n-k>_B``) and a unitary as one
``(n + 1) x (n + 1)`` block per sector.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammainc, gammaln

logger = logging.getLogger(__name__)

#: Largest Poisson tail mass a cutoff may drop from a coherent input.
TAIL_TOLERANCE = 1e-10

#: Guard against cutoffs whose padded arrays would not fit in memory.
MAX_CUTOFF = 400


class CutoffError(ValueError):
    """The photon-number cutoff is too small for the requested input."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


def poisson_tail(alpha, n_max):
    """Probability mass of a coherent state above ``n_max`` photons."""
    mean = abs(complex(alpha)) ** 2
    if mean == 0.0:
        return 0.0
    # regularized lower incomplete gamma P(n_max + 1, mean) = Pr[N > n_max]
    return float(gammainc(n_max + 1, mean))


def required_cutoff(alpha, tolerance=TAIL_TOLERANCE):
    """Smallest ``n_max`` keeping the coherent tail below ``tolerance``.

    Starts from ``ceil(|a|^2 + 8 max(|a|, 1))`` (floor 12) and grows until the
    actual tail deficit is below ``tolerance``.
    """
    mean = abs(complex(alpha)) ** 2
    n_max = max(12, math.ceil(mean + 8 * max(math.sqrt(mean), 1.0)))
    while poisson_tail(alpha, n_max) >= tolerance:
        n_max += 1
        if n_max > MAX_CUTOFF:
            raise CutoffError(f"alpha={alpha!r} needs more than {MAX_CUTOFF} photons")
    return n_max


@dataclass(frozen=True)
class FockCutoff:
    """Maximum total photon number kept in both paths together."""

    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be a positive integer, got {self.n_max!r}")
        if self.n_max > MAX_CUTOFF:
            raise CutoffError(f"n_max={self.n_max} exceeds the supported maximum {MAX_CUTOFF}")
        object.__setattr__(self, "n_max", int(self.n_max))

    @classmethod
    def for_alpha(cls, alpha, tolerance=TAIL_TOLERANCE):
        return cls(required_cutoff(alpha, tolerance))

    @property
    def dim(self):
        """Number of sectors, ``n_max + 1``."""
        return self.n_max + 1

    def tail_deficit(self, alpha):
        return poisson_tail(alpha, self.n_max)

    def check(self, alpha, tolerance=TAIL_TOLERANCE):
        """Raise :class:`CutoffError` if the coherent tail exceeds ``tolerance``."""
        deficit = self.tail_deficit(alpha)
        if deficit >= tolerance:
            need = required_cutoff(alpha, tolerance)
            raise CutoffError(
                f"n_max={self.n_max} drops {deficit:.3e} of the |alpha|^2="
                f"{abs(complex(alpha)) ** 2:g} input (tolerance {tolerance:g}); "
                f"use n_max >= {need}",
                required=need,
            )


@dataclass(frozen=True)
class TwoModeState:
    """Pure two-mode state, one amplitude vector per total photon number."""

    sectors: tuple
    truncation_deficit: float = field(default=0.0, compare=False)

    def __post_init__(self):
        sectors = tuple(np.array(s, dtype=complex) for s in self.sectors)
        for n, s in enumerate(sectors):
            if s.shape != (n + 1,):
                raise ValueError(f"sector {n} must have length {n + 1}, got shape {s.shape}")
            s.setflags(write=False)
        object.__setattr__(self, "sectors", sectors)

    @property
    def n_max(self):
        return len(self.sectors) - 1

    @property
    def cutoff(self):
        return FockCutoff(self.n_max)

    def norm(self):
        return math.sqrt(sum(float(np.vdot(s, s).real) for s in self.sectors))

    def amplitude(self, n_a, n_b):
        """Amplitude of ``|n_a>_A |n_b>_B`` (zero above the cutoff)."""
        n = n_a + n_b
        if n > self.n_max:
            return 0j
        return complex(self.sectors[n][n_a])

    def padded(self):
        """Array ``x[n, k]`` with zeros in the unused ``k > n`` slots."""
        m = self.n_max + 1
        x = np.zeros((m, m), dtype=complex)
        for n, s in enumerate(self.sectors):
            x[n, : n + 1] = s
        return x

    @classmethod
    def from_padded(cls, x, truncation_deficit=0.0):
        x = np.asarray(x)
        return cls(tuple(x[n, : n + 1] for n in range(x.shape[0])), truncation_deficit)

    @classmethod
    def from_grid(cls, psi, cutoff):
        """Build from ``psi[p, q]`` = amplitude of ``|p>_A |q>_B``.

        Entries with ``p + q > n_max`` are dropped.
        """
        psi = np.asarray(psi, dtype=complex)
        sectors = []
        for n in range(cutoff.n_max + 1):
            s = np.zeros(n + 1, dtype=complex)
            for k in range(n + 1):
                if k < psi.shape[0] and n - k < psi.shape[1]:
                    s[k] = psi[k, n - k]
            sectors.append(s)
        return cls(tuple(sectors))

    def to_grid(self):
        """Inverse of :meth:`from_grid` on a ``(n_max+1, n_max+1)`` grid."""
        m = self.n_max + 1
        psi = np.zeros((m, m), dtype=complex)
        for n, s in enumerate(self.sectors):
            for k in range(n + 1):
                psi[k, n - k] = s[k]
        return psi


@dataclass(frozen=True)
class ElementParams:
    """One cascade element: beam splitter, then linear and Kerr phase on Path A."""

    theta: float
    linear_phi: float = 0.0
    kerr_phi: float = 0.0

    def __post_init__(self):
        for name in ("theta", "linear_phi", "kerr_phi"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    def as_tuple(self):
        return (self.theta, self.linear_phi, self.kerr_phi)


@dataclass(frozen=True)
class SectorUnitary:
    """Block-diagonal operator, one block per total photon number."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(np.array(b, dtype=complex) for b in self.blocks)
        for n, b in enumerate(blocks):
            if b.shape != (n + 1, n + 1):
                raise ValueError(f"block {n} must be {(n + 1, n + 1)}, got {b.shape}")
            b.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_max(self):
        return len(self.blocks) - 1

    def __matmul__(self, other):
        """``(self @ other)`` applies ``other`` first."""
        _check_same_cutoff(self.n_max, other.n_max)
        return SectorUnitary(tuple(a @ b for a, b in zip(self.blocks, other.blocks)))

    def dagger(self):
        return SectorUnitary(tuple(b.conj().T for b in self.blocks))

    def unitarity_error(self):
        """Largest entry of ``|B^dag B - I|`` over all blocks."""
        return max(
            float(np.max(np.abs(b.conj().T @ b - np.eye(len(b))))) for b in self.blocks
        )

    @classmethod
    def identity(cls, cutoff):
        return cls(tuple(np.eye(n + 1) for n in range(cutoff.n_max + 1)))


def _check_same_cutoff(n1, n2):
    if n1 != n2:
        raise ValueError(f"cutoff mismatch: n_max={n1} vs n_max={n2}")


def coherent_amplitudes(alpha, n_max):
    """``e^{-|a|^2/2} a^n / sqrt(n!)`` for ``n = 0..n_max`` (not renormalized)."""
    alpha = complex(alpha)
    n = np.arange(n_max + 1)
    if alpha == 0:
        return (n == 0).astype(complex)
    r = abs(alpha)
    mag = np.exp(-0.5 * r * r + n * math.log(r) - 0.5 * gammaln(n + 1))
    return mag * np.exp(1j * math.atan2(alpha.imag, alpha.real) * n)


def coherent_input(alpha, cutoff):
    """Vacuum on Path A and coherent ``|alpha>`` on Path B.

    The truncated state is renormalized; the dropped tail mass is kept as
    ``truncation_deficit``.
    """
    cutoff.check(alpha)
    c = coherent_amplitudes(alpha, cutoff.n_max)
    weight = float(np.vdot(c, c).real)
    deficit = max(0.0, 1.0 - weight)
    logger.debug("coherent input alpha=%r n_max=%d deficit=%.3e", alpha, cutoff.n_max, deficit)
    c = c / math.sqrt(weight)
    sectors = []
    for n in range(cutoff.n_max + 1):
        s = np.zeros(n + 1, dtype=complex)
        s[0] = c[n]
        sectors.append(s)
    return TwoModeState(tuple(sectors), truncation_deficit=deficit)


def beam_splitter_generator(n):
    """Matrix of ``a^dag b + a b^dag`` in sector ``n`` (basis ``|k, n-k>``)."""
    k = np.arange(n)
    g = np.zeros((n + 1, n + 1))
    off = np.sqrt((k + 1) * (n - k))
    g[k + 1, k] = off
    g[k, k + 1] = off
    return g


@lru_cache(maxsize=32)
def _eigensystem(n_max):
    m = n_max + 1
    vecs = np.zeros((m, m, m))
    vals = np.zeros((m, m))
    for n in range(m):
        w, v = np.linalg.eigh(beam_splitter_generator(n))
        vecs[n, : n + 1, : n + 1] = v
        # spectrum of a^dag b + a b^dag in sector n is exactly -n, -n+2, ..., n
        vals[n, : n + 1] = np.rint(w)
    vecs.setflags(write=False)
    vals.setflags(write=False)
    return vecs, vals


def bs_eigensystem(cutoff):
    """Padded eigenvectors ``vecs[n, k, j]`` and eigenvalues ``vals[n, j]``.

    The generator is real symmetric, so ``exp(i theta G_n)`` is
    ``V diag(exp(i theta w)) V^T`` for every ``theta``.
    """
    return _eigensystem(cutoff.n_max)


def beam_splitter(theta, cutoff):
    """Blocks of ``exp(i theta (a^dag b + a b^dag))``."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta!r}")
    vecs, vals = bs_eigensystem(cutoff)
    blocks = []
    for n in range(cutoff.n_max + 1):
        v = vecs[n, : n + 1, : n + 1]
        blocks.append((v * np.exp(1j * theta * vals[n, : n + 1])) @ v.T)
    return SectorUnitary(tuple(blocks))


def kerr_phases(linear_phi, kerr_phi, n):
    """Phase factors ``exp(i(linear_phi k + kerr_phi k(k-1)))`` for ``k = 0..n``."""
    k = np.arange(n + 1)
    return np.exp(1j * (linear_phi * k + kerr_phi * k * (k - 1)))


def kerr_phase(linear_phi, kerr_phi, cutoff):
    """Blocks of ``exp(i linear_phi a^dag a + i kerr_phi a^dag a^dag a a)``."""
    linear_phi, kerr_phi = float(linear_phi), float(kerr_phi)
    if not (math.isfinite(linear_phi) and math.isfinite(kerr_phi)):
        raise ValueError("phases must be finite")
    return SectorUnitary(
        tuple(np.diag(kerr_phases(linear_phi, kerr_phi, n)) for n in range(cutoff.n_max + 1))
    )


def apply(u, s):
    """Sector-wise matrix-vector product ``u |s>``."""
    _check_same_cutoff(u.n_max, s.n_max)
    return TwoModeState(
        tuple(b @ v for b, v in zip(u.blocks, s.sectors)),
        truncation_deficit=s.truncation_deficit,
    )
