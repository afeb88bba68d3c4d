import cmath
import math

import numpy as np
import pytest
from scipy.special import factorial

from nmzi import analytics, circuit
from nmzi.analytics import NoSolutionError
from nmzi.circuit import CircuitSpec, SimpleNmziParams
from nmzi.fock import FockCutoff
from nmzi.observables import UndefinedG2Error, photon_probabilities, reduce_to_mode_a


@pytest.mark.parametrize("kerr", [0.05, 0.1, 0.5, -0.2, 1.2])
@pytest.mark.parametrize("branch", ["minus", "plus"])
def test_optimal_condition_cancels_two_photon_amplitude(kerr, branch):
    eta, phi = analytics.optimal_condition(kerr, branch)
    # z = eta e^{-i phi} must satisfy (1 - z)^2 = 1 - e^{2i kerr}
    z = eta * cmath.exp(-1j * phi)
    assert abs((1 - z) ** 2 - (1 - cmath.exp(2j * kerr))) < 1e-12
    p = analytics.optimal_params(kerr, branch, split="equal")
    assert abs(analytics.mu_amplitudes(p, 0.1)[1]) < 1e-12


def test_optimal_condition_needs_kerr():
    with pytest.raises(NoSolutionError):
        analytics.optimal_condition(0.0)
    with pytest.raises(NoSolutionError):
        analytics.optimal_condition(math.pi)
    with pytest.raises(ValueError):
        analytics.optimal_condition(0.1, "sideways")


@pytest.mark.parametrize("split", ["balanced", "equal"])
def test_splits_realize_eta(split):
    p = analytics.optimal_params(0.1, split=split)
    assert p.eta == pytest.approx(analytics.optimal_condition(0.1)[0], rel=1e-12)


def test_approx_g2_is_ratio_of_amplitudes():
    p = SimpleNmziParams(0.5, 0.7, 0.9, 0.3)
    mu10, mu20 = analytics.mu_amplitudes(p, 0.1)
    assert analytics.approx_g2(p) == pytest.approx(abs(2 * mu20 / mu10**2) ** 2, rel=1e-12)


def test_approx_g2_undefined_at_singularity():
    p = SimpleNmziParams(math.pi / 4, math.pi / 4, 0.0, 0.1)
    with pytest.raises(UndefinedG2Error):
        analytics.approx_g2(p)
    assert analytics.analyze(p, 0.1).approx_g2 is None


def test_weak_input_probabilities_follow_amplitudes():
    p = SimpleNmziParams(0.6, 0.7, -0.4, 0.1)
    alpha = 0.02
    rho = reduce_to_mode_a(circuit.run(p.to_circuit(), alpha))
    probs = photon_probabilities(rho)
    mu10, mu20 = analytics.mu_amplitudes(p, alpha)
    scale = math.exp(-alpha**2)
    assert probs[1] == pytest.approx(abs(mu10) ** 2 * scale, rel=1e-3)
    assert probs[2] == pytest.approx(2 * abs(mu20) ** 2 * scale, rel=1e-2)


def test_filtration_bound_ceiling():
    # along eta = 1 the fidelity peaks at the 50:50 split and never exceeds the ceiling
    for t1 in np.linspace(0.05, math.pi / 2 - 0.05, 15):
        fb = analytics.filtration_bound(0.1, 0.1, t1, math.pi / 2 - t1)
        assert fb.fidelity <= fb.bound + 1e-15
    fb = analytics.filtration_bound(0.1, 0.1, math.pi / 4, math.pi / 4)
    assert fb.fidelity == pytest.approx(fb.bound, rel=1e-2)
    assert fb.bound == pytest.approx(0.1 * 0.01 / 2)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("mean", [0.5, 1.0, 2.5])
def test_extraction_asymptote_is_poisson_complement(n, mean):
    k = np.arange(n)
    ref = 1 - np.sum(np.exp(-mean) * mean**k / factorial(k))
    assert analytics.extraction_asymptote(n, math.sqrt(mean)) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ValueError):
        analytics.extraction_asymptote(0, 1.0)


def test_ideal_superposition_fidelity_brute_force():
    alpha = math.sqrt(3.0)
    n = np.arange(80)
    c = np.exp(-(alpha**2) / 2 - 0.5 * np.array([math.lgamma(k + 1) for k in n]) + n * math.log(alpha))
    ref = 0.5 * (1 + np.sum(c[1:] * c[:-1]))
    exact, approx = analytics.ideal_superposition_fidelity(alpha)
    assert exact == pytest.approx(ref, abs=1e-14)
    assert approx == pytest.approx(1 - 1 / 48)


def test_displacement_is_coherent_from_vacuum():
    eps = 0.3 + 0.2j
    d = analytics.displacement(eps, 12)
    col = d[:, 0]
    n = np.arange(12)
    ref = np.exp(-abs(eps) ** 2 / 2) * eps**n / np.sqrt(factorial(n))
    assert np.allclose(col, ref, atol=1e-12)


def test_weak_beam_splitter_acts_as_displacement():
    # the error at fixed eps = alpha theta shrinks as alpha grows
    eps = 0.5
    vac = np.array([1.0])
    errs = []
    for alpha in (2.0, 4.0, 8.0):
        cutoff = FockCutoff.for_alpha(alpha)
        cutoff = FockCutoff(cutoff.n_max + 6)
        errs.append(analytics.displacement_approx_error(eps / alpha, alpha, vac, cutoff))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3
    probe = np.array([1.0, 1.0]) / math.sqrt(2)
    assert analytics.displacement_approx_error(0.01, 3.0, probe, FockCutoff(40)) < 1e-3


def test_displacement_error_checks_cutoff_room():
    with pytest.raises(analytics.CutoffError):
        analytics.displacement_approx_error(0.1, 2.0, np.eye(12)[11], FockCutoff(14))


def test_single_element_cascade_is_not_a_filter():
    rho = reduce_to_mode_a(circuit.run(CircuitSpec(((0.3, 0.0, 0.0),)), 1.0))
    assert np.real(rho.matrix[1, 1]) == pytest.approx(math.sin(0.3) ** 2 * math.exp(-math.sin(0.3) ** 2))
