"""Backend selection for the hot simulation kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback is used.  Setting ``NMZI_PURE_PYTHON=1`` forces the fallback.
"""
import os

from nmzi import _pykernels

BACKEND = "python"
evolve = _pykernels.evolve
mode_a_density = _pykernels.mode_a_density

if not os.environ.get("NMZI_PURE_PYTHON"):
    try:
        from nmzi import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        evolve = _ckernels.evolve
        mode_a_density = _ckernels.mode_a_density

__all__ = ["BACKEND", "evolve", "mode_a_density"]
