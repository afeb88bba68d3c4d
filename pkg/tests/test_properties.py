"""Property-based checks of the simulator invariants."""
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from nmzi import circuit, kernels, optimizer
from nmzi.circuit import CircuitSpec
from nmzi.fock import FockCutoff, TwoModeState, bs_eigensystem, coherent_amplitudes
from nmzi.observables import g2, photon_probabilities, purity, reduce_to_mode_a

from oracles import dense_element, dense_operators, dense_run

angle = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)
kerr = st.floats(-1.5, 1.5, allow_nan=False)
element = st.tuples(angle, angle, kerr)
circuits = st.lists(element, min_size=1, max_size=5).map(lambda xs: CircuitSpec(tuple(xs)))
linear_circuits = st.lists(st.tuples(angle, angle, st.just(0.0)), min_size=1, max_size=5).map(
    lambda xs: CircuitSpec(tuple(xs))
)


def alphas(max_r):
    return st.builds(
        lambda r, ph: r * complex(math.cos(ph), math.sin(ph)),
        st.floats(0.0, max_r),
        st.floats(0.0, 2 * math.pi),
    )


def evolve_truncated(spec, alpha, n_max):
    """Sectored evolution of the renormalized coherent input at any cutoff."""
    cutoff = FockCutoff(n_max)
    c = coherent_amplitudes(alpha, n_max)
    x = np.zeros((cutoff.dim, cutoff.dim), dtype=complex)
    x[:, 0] = c / np.linalg.norm(c)
    vecs, vals = bs_eigensystem(cutoff)
    return TwoModeState.from_padded(kernels.evolve(vecs, vals, x, *spec.arrays()))


@settings(max_examples=100, deadline=None)
@given(spec=circuits, alpha=alphas(0.5), n_max=st.integers(1, 8))
def test_sectored_matches_dense(spec, alpha, n_max):
    got = evolve_truncated(spec, alpha, n_max).to_grid()
    ref = dense_run([e.as_tuple() for e in spec.elements], alpha, n_max)
    assert np.max(np.abs(got - ref)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(spec=circuits, n_max=st.integers(1, 10))
def test_cascade_is_unitary(spec, n_max):
    assert circuit.cascade_unitary(spec, FockCutoff(n_max)).unitarity_error() < 1e-10


@settings(max_examples=200, deadline=None)
@given(params=element, n_max=st.integers(1, 5))
def test_elements_conserve_total_photon_number(params, n_max):
    a, b = dense_operators(n_max)
    total = a.conj().T @ a + b.conj().T @ b
    u = dense_element(*params, n_max)
    assert np.max(np.abs(u @ total - total @ u)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(spec=circuits, alpha=alphas(2.0))
def test_norm_and_trace_preserved(spec, alpha):
    state = circuit.run(spec, alpha)
    assert abs(state.norm() - 1) < 1e-12
    rho = reduce_to_mode_a(state)
    assert abs(rho.trace() - 1) < 1e-12
    assert purity(rho) <= 1 + 1e-12


@settings(max_examples=200, deadline=None)
@given(spec=linear_circuits, alpha=alphas(2.0))
def test_linear_circuits_keep_light_coherent(spec, alpha):
    rho = reduce_to_mode_a(circuit.run(spec, alpha))
    p = photon_probabilities(rho)
    mean = float(np.dot(np.arange(p.size), p))
    if mean > 1e-6:
        assert abs(g2(p) - 1) < 1e-6
    assert abs(purity(rho) - 1) < 1e-9


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 3))
def test_optimizer_deterministic_under_seed(seed, n):
    problem = optimizer.cascade_problem(
        n, 1.0, constraints=(optimizer.Constraint.tail(2, 0.05),), budget=12, restarts=2, seed=seed
    )
    a, b = optimizer.optimize(problem), optimizer.optimize(problem)
    assert a.best_params == b.best_params
    assert [e.params_hash for e in a.run_log] == [e.params_hash for e in b.run_log]


@settings(max_examples=100, deadline=None)
@given(spec=circuits, alpha=alphas(1.5))
def test_inverse_returns_the_input(spec, alpha):
    cutoff = FockCutoff.for_alpha(alpha)
    out = circuit.run(spec, alpha, cutoff)
    u = circuit.cascade_unitary(spec.inverse(), cutoff)
    restored = np.concatenate([blk @ s for blk, s in zip(u.blocks, out.sectors)])
    start = np.concatenate(circuit.run(CircuitSpec(((0, 0, 0),)), alpha, cutoff).sectors)
    assert np.max(np.abs(restored - start)) < 1e-10
