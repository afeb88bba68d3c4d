"""Compare the compiled and numpy kernels on the optimizer's forward pass.

    python3 benchmarks/bench_kernels.py [--elements 2 20 40] [--alpha2 1.0] [--repeat 200]
"""
import argparse
import math
import timeit

import numpy as np

from nmzi import _pykernels
from nmzi.circuit import Simulator

try:
    from nmzi import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def forward(mod, sim, table):
    x = mod.evolve(sim._vecs, sim._vals, sim._x0, *table)
    return mod.mode_a_density(x)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--elements", type=int, nargs="+", default=[2, 20, 40])
    parser.add_argument("--alpha2", type=float, default=1.0)
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args(argv)

    sim = Simulator(math.sqrt(args.alpha2))
    rng = np.random.default_rng(0)
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    print(f"|alpha|^2={args.alpha2:g} n_max={sim.cutoff.n_max}")
    print(f"{'N':>4} " + " ".join(f"{name + ' ms':>12}" for name in backends) + f" {'speedup':>8}")
    for n in args.elements:
        table = tuple(np.ascontiguousarray(rng.uniform(-3, 3, n)) for _ in range(3))
        ref = forward(_pykernels, sim, table)
        times = {}
        for name, mod in backends.items():
            assert np.max(np.abs(forward(mod, sim, table) - ref)) < 1e-12
            t = timeit.timeit(lambda: forward(mod, sim, table), number=args.repeat)
            times[name] = 1e3 * t / args.repeat
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{n:>4} " + " ".join(f"{t:>12.4f}" for t in times.values()) + f" {speed:>8.1f}")


if __name__ == "__main__":
    main()
