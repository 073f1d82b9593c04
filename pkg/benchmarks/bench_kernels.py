"""Compiled vs pure-Python kernels: assignment, RBF Gram matrix, SMO training.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends run on identical inputs; results are checked for agreement
before timing is reported.
"""

import argparse
import timeit

import numpy as np

from posetreid import _pykernels

try:
    from posetreid import _ckernels
except ImportError:
    _ckernels = None


def _cases(rng):
    lap = {n: rng.random((n, n)) for n in (8, 32, 128)}
    x = rng.normal(size=(150, 64))
    y = np.where(np.arange(150) < 30, 1.0, -1.0)
    return lap, x, y


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the fallback is available")
        return 1

    rng = np.random.default_rng(args.seed)
    lap, x, y = _cases(rng)
    gamma = 8.0
    kmat = _pykernels.rbf_gram(x, x, gamma)
    rows = []

    for n, c in lap.items():
        assert np.array_equal(_pykernels.lap_square(c), _ckernels.lap_square(c))
        rows.append((f"lap_square n={n}",
                     _best(lambda: _pykernels.lap_square(c), args.repeat),
                     _best(lambda: _ckernels.lap_square(c), args.repeat)))

    assert np.allclose(_pykernels.rbf_gram(x, x, gamma), _ckernels.rbf_gram(x, x, gamma), rtol=0, atol=1e-12)
    rows.append(("rbf_gram 150x150 d=64",
                 _best(lambda: _pykernels.rbf_gram(x, x, gamma), args.repeat),
                 _best(lambda: _ckernels.rbf_gram(x, x, gamma), args.repeat)))

    a_py, rho_py, _ = _pykernels.smo_solve(kmat, y, 10.0, 1e-3, 10**7)
    a_c, rho_c, _ = _ckernels.smo_solve(kmat, y, 10.0, 1e-3, 10**7)
    assert np.allclose(a_py, a_c, atol=1e-9) and abs(rho_py - rho_c) < 1e-9
    rows.append(("smo_solve n=150",
                 _best(lambda: _pykernels.smo_solve(kmat, y, 10.0, 1e-3, 10**7), args.repeat),
                 _best(lambda: _ckernels.smo_solve(kmat, y, 10.0, 1e-3, 10**7), args.repeat)))

    print(f"{'kernel':<24}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, tp, tc in rows:
        print(f"{name:<24}{1e3 * tp:>12.3f}{1e3 * tc:>12.3f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
