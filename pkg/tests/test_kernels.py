import os
import subprocess
import sys

import numpy as np
import pytest

from nmzi import _pykernels, kernels
from nmzi.circuit import CircuitSpec, run
from nmzi.fock import FockCutoff, bs_eigensystem, coherent_input
from nmzi.observables import reduce_to_mode_a

ckernels = pytest.importorskip("nmzi._ckernels")


def random_inputs(rng, n_el, n_max):
    cutoff = FockCutoff(n_max)
    vecs, vals = bs_eigensystem(cutoff)
    x0 = np.ascontiguousarray(coherent_input(1.0, FockCutoff(max(n_max, 14))).padded()[: n_max + 1, : n_max + 1])
    theta, lp, kp = (np.ascontiguousarray(rng.uniform(-3, 3, n_el)) for _ in range(3))
    return vecs, vals, x0, theta, lp, kp


@pytest.mark.parametrize("n_el, n_max", [(1, 3), (5, 10), (20, 14)])
def test_backends_agree(n_el, n_max):
    rng = np.random.default_rng(n_el)
    args = random_inputs(rng, n_el, n_max)
    a = ckernels.evolve(*args)
    b = _pykernels.evolve(*args)
    assert np.max(np.abs(a - b)) < 1e-13
    assert np.max(np.abs(ckernels.mode_a_density(a) - _pykernels.mode_a_density(b))) < 1e-13


def test_kernel_does_not_modify_input():
    rng = np.random.default_rng(0)
    args = random_inputs(rng, 3, 8)
    before = args[2].copy()
    ckernels.evolve(*args)
    _pykernels.evolve(*args)
    assert np.array_equal(args[2], before)


def test_default_backend_is_compiled():
    if os.environ.get("NMZI_PURE_PYTHON"):
        assert kernels.BACKEND == "python"
    else:
        assert kernels.BACKEND == "cython"


def test_environment_forces_fallback():
    code = "from nmzi import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, NMZI_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_density_is_hermitian_with_unit_trace():
    state = run(CircuitSpec(((0.5, 0.2, 0.3), (1.0, -0.7, 0.1))), 1.1)
    rho = reduce_to_mode_a(state).matrix
    assert np.allclose(rho, rho.conj().T, atol=1e-15)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
