"""Closed-form results for the simple NMZI and the extraction limits.

These are weak-input or asymptotic formulas.  They seed the optimizer and
serve as independent checks on the full simulation.
"""
from __future__ import annotations

import cmath
import math
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm
from scipy.special import gammainc

from nmzi.circuit import SimpleNmziParams
from nmzi.fock import (
    TAIL_TOLERANCE,
    CutoffError,
    TwoModeState,
    apply,
    beam_splitter,
    coherent_amplitudes,
    poisson_tail,
    required_cutoff,
)
from nmzi.observables import UndefinedG2Error, reduce_to_mode_a


class NoSolutionError(ValueError):
    """The optimal condition has no solution (zero Kerr phase)."""


class SimpleNmziAnalytics(NamedTuple):
    mu10: complex
    mu20: complex
    eta: float
    approx_g2: float | None


class FiltrationBound(NamedTuple):
    fidelity: float
    bound: float


def mu_amplitudes(p, alpha):
    """Amplitudes of ``a^dag |vac>`` and ``(a^dag)^2 |vac>`` at weak input.

    Returns ``(mu10, mu20)`` for the :class:`SimpleNmziParams` angle
    convention, without the ``exp(-|alpha|^2/2)`` normalization.
    """
    eta = p.eta
    scale = complex(alpha) * math.cos(p.theta1) * math.cos(p.theta2)
    e1 = cmath.exp(1j * p.linear_phi)
    mu10 = scale * (e1 - eta)
    # the three two-photon paths: both through the Kerr arm, one each, none
    mu20 = 0.5 * scale**2 * (
        -2 * eta * e1 + cmath.exp(2j * (p.linear_phi + p.kerr_phi)) + eta**2
    )
    return mu10, mu20


def approx_g2(p):
    """``|1 - (1 - e^{2i kerr}) / (1 - eta e^{-i phi})^2|^2``."""
    denom = 1 - p.eta * cmath.exp(-1j * p.linear_phi)
    if abs(denom) < 1e-15:
        raise UndefinedG2Error("single-photon amplitude vanishes; g2 undefined")
    return abs(1 - (1 - cmath.exp(2j * p.kerr_phi)) / denom**2) ** 2


def analyze(p, alpha):
    mu10, mu20 = mu_amplitudes(p, alpha)
    try:
        g = approx_g2(p)
    except UndefinedG2Error:
        g = None
    return SimpleNmziAnalytics(mu10, mu20, p.eta, g)


def optimal_condition(kerr_phi, branch="minus"):
    """``(eta, linear_phi)`` cancelling the two-photon amplitude.

    Solves ``eta e^{-i phi} = 1 +/- sqrt(1 - e^{2i kerr})`` with the principal
    square root.
    """
    if branch not in ("minus", "plus"):
        raise ValueError(f"branch must be 'minus' or 'plus', got {branch!r}")
    if abs(math.sin(kerr_phi)) < 1e-12:
        raise NoSolutionError(f"no solution for kerr_phi={kerr_phi!r} (multiple of pi)")
    root = cmath.sqrt(1 - cmath.exp(2j * kerr_phi))
    value = 1 - root if branch == "minus" else 1 + root
    return abs(value), -cmath.phase(value)


def optimal_params(kerr_phi, branch="minus", split="balanced"):
    """Simple-NMZI angles realizing :func:`optimal_condition`.

    ``split="balanced"`` uses a 50:50 closing beam splitter
    (``theta2 = pi/4, theta1 = atan(eta)``); ``split="equal"`` uses
    ``theta1 = theta2 = atan(sqrt(eta))``.
    """
    eta, phi = optimal_condition(kerr_phi, branch)
    if split == "balanced":
        theta1, theta2 = math.atan(eta), math.pi / 4
    elif split == "equal":
        theta1 = theta2 = math.atan(math.sqrt(eta))
    else:
        raise ValueError(f"unknown split {split!r}")
    return SimpleNmziParams(theta1, theta2, phi, kerr_phi)


def filtration_bound(kerr_phi, alpha, theta1, theta2):
    """Weak-input single-photon fidelity at the optimum, and its ceiling.

    ``F = (cos t1 cos t2)^2 |alpha|^2 |1 - e^{2i kerr}|`` and the ceiling
    ``|kerr| |alpha|^2 / 2`` that holds when ``eta = 1``.
    """
    n = abs(complex(alpha)) ** 2
    cc = math.cos(theta1) * math.cos(theta2)
    f = cc**2 * n * abs(1 - cmath.exp(2j * kerr_phi))
    return FiltrationBound(f, abs(kerr_phi) * n / 2)


def extraction_asymptote(n, alpha):
    """``1 - sum_{m<n} |<m|alpha>|^2``: the Fock-state extraction ceiling."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    mean = abs(complex(alpha)) ** 2
    if mean == 0.0:
        return 0.0
    return float(gammainc(n, mean))


def ideal_superposition_fidelity(alpha):
    """Fidelity to ``(|0> + |1>)/sqrt 2`` with every sector split evenly.

    Returns ``(exact, approximate)`` where the approximation is
    ``1 - 1/(16 |alpha|^2)``.
    """
    alpha = complex(alpha)
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    c = coherent_amplitudes(alpha, required_cutoff(alpha, 1e-16) + 1)
    overlap = complex(np.sum(c[1:] * np.conj(c[:-1])))
    exact = 0.5 * (1 + overlap.real)
    return exact, 1 - 1 / (16 * abs(alpha) ** 2)


def displacement(eps, dim, pad=40):
    """``exp(eps a^dag - eps* a)`` truncated to ``dim`` levels.

    Built in a space ``pad`` levels larger so truncation edges stay away
    from the returned block.
    """
    big = dim + pad
    a = np.diag(np.sqrt(np.arange(1, big)), 1)
    gen = eps * a.conj().T - np.conj(eps) * a
    return expm(gen)[:dim, :dim]


def displacement_approx_error(theta, alpha, probe, cutoff):
    """Infidelity of the weak-beam-splitter picture as a displacement.

    The probe on Path A meets ``|alpha>`` on Path B at ``BS(theta)``; the
    reduced Path-A output is compared with ``D(eps) |probe>`` where
    ``eps = i alpha theta`` (the ``i`` is the cross-port phase of the
    beam splitter).
    """
    probe = np.asarray(probe, dtype=complex).ravel()
    if abs(np.linalg.norm(probe) - 1) > 1e-9:
        raise ValueError("probe must be normalized")
    top = max(np.flatnonzero(probe), default=0)
    room = cutoff.n_max - int(top)
    if room < 1 or poisson_tail(alpha, room) >= TAIL_TOLERANCE:
        raise CutoffError(
            f"n_max={cutoff.n_max} too small for probe up to |{top}> and alpha={alpha!r}",
            required=required_cutoff(alpha) + int(top),
        )
    c = coherent_amplitudes(alpha, cutoff.n_max)
    grid = np.outer(probe[: top + 1], c)
    state = TwoModeState.from_grid(grid, cutoff)
    state = TwoModeState(tuple(s / state.norm() for s in state.sectors))
    rho = reduce_to_mode_a(apply(beam_splitter(theta, cutoff), state))

    eps = 1j * complex(alpha) * theta
    dim = cutoff.n_max + 1
    padded = np.zeros(dim, dtype=complex)
    padded[: top + 1] = probe[: top + 1]
    chi = displacement(eps, dim) @ padded
    if 1 - np.vdot(chi, chi).real >= TAIL_TOLERANCE:
        raise CutoffError(f"|eps|={abs(eps):.3g} displaces the probe beyond n_max={cutoff.n_max}")
    f = float(np.real(np.vdot(chi, rho.matrix @ chi)))
    return max(0.0, 1.0 - f)
