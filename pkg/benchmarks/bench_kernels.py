"""Time the numba kernels against their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``.  Both paths are called
directly, so ``MONADKIN_DISABLE_NUMBA`` does not matter here; it selects the
path the package itself uses.
"""
import argparse
import time

import numpy as np

from monadkin import _kernels as K


def best_of(fn, repeats):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n_lines, n_points, n_particles, n_cells, seed=0):
    rng = np.random.default_rng(seed)
    lines = np.cumsum(rng.standard_normal((n_lines, n_points)), axis=1)
    idx = rng.integers(0, n_cells, n_particles)
    v_old = rng.standard_normal((n_particles, 2))
    v_new = rng.standard_normal((n_particles, 2))
    x = rng.uniform(-12.0, 12.0, (n_particles, 2))
    lo = np.array([-10.0, -10.0])
    length = np.array([20.0, 20.0])
    box = np.array([False, False])
    return {
        "fd4_lines d1": (K.fd4_lines_numba, K.fd4_lines_numpy, (lines, 0.01, 1, 0.0)),
        "fd4_lines d2 wrapped": (K.fd4_lines_numba, K.fd4_lines_numpy, (lines, 0.01, 2, 2 * np.pi)),
        "bin_moments": (K.bin_moments_numba, K.bin_moments_numpy, (idx, v_old, n_cells)),
        "cell_affine": (K.cell_affine_numba, K.cell_affine_numpy, (idx, v_old, v_new, n_cells)),
        "reflect": (K.reflect_numba, K.reflect_numpy, (x, v_old, lo, length, box)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--lines", type=int, default=256)
    parser.add_argument("--points", type=int, default=256)
    parser.add_argument("--particles", type=int, default=400_000)
    parser.add_argument("--cells", type=int, default=512)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    if not K.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'kernel':24s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s}  max |diff|")
    for name, (fast, slow, call) in cases(args.lines, args.points, args.particles, args.cells).items():
        t_fast = best_of(lambda: fast(*call), args.repeats)
        t_slow = best_of(lambda: slow(*call), args.repeats)
        a, b = fast(*call), slow(*call)
        a = a if isinstance(a, tuple) else (a,)
        b = b if isinstance(b, tuple) else (b,)
        diff = max(float(np.max(np.abs(np.asarray(p) - np.asarray(q)))) for p, q in zip(a, b))
        print(f"{name:24s} {1e3 * t_fast:11.3f} {1e3 * t_slow:11.3f} {t_slow / t_fast:8.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
