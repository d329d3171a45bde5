"""Benchmark the simulator's hot kernels: numba @njit vs pure numpy.

Runs both implementations on the same inputs, checks they agree, and reports
per-kernel timings.  The package selects the numba path automatically when
available; set EAA_DISABLE_NUMBA=1 to force the numpy fallback at runtime.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from eaa import kernels
from eaa.beamline import LineGrid, SamplePattern, SiemensStar, SpeckleDots


def timeit(fn, *args, repeat: int) -> tuple[float, object]:
    fn(*args)  # warm-up (numba compiles here)
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--side", type=int, default=1200, help="patch side length in pixels")
    args = parser.parse_args()

    try:
        nb_rasterize, nb_blur, nb_bilinear = kernels._make_numba_kernels()
    except ImportError:
        print("numba is not importable; nothing to compare")
        return

    pattern = SamplePattern(
        primitives=(
            SiemensStar(center=(10.0, -5.0), radius=20.0, n_spokes=16),
            LineGrid(pitch=10.0, line_width=1.0),
            SpeckleDots(cell=1.5, fill=0.25, radius=0.3, salt=7),
        )
    )
    prims = pattern.to_array()

    n = args.side
    h = 0.05
    xs = np.repeat(h * np.arange(n)[None, :], n, axis=0).ravel()
    ys = np.repeat(h * np.arange(n)[:, None], n, axis=1).ravel()

    print(f"pattern rasterization: {n}x{n} points, {prims.shape[0]} primitives")
    t_np, out_np = timeit(kernels.rasterize_pattern_numpy, xs, ys, prims, 0.05, 1.0,
                          repeat=args.repeat)
    t_nb, out_nb = timeit(nb_rasterize, xs, ys, prims, 0.05, 1.0, repeat=args.repeat)
    assert np.array_equal(out_np, out_nb), "rasterize outputs differ between paths"
    print(f"  numpy {t_np * 1e3:8.1f} ms   numba {t_nb * 1e3:8.1f} ms   "
          f"speedup x{t_np / t_nb:.1f}")

    img = out_np.reshape(n, n)
    weights = kernels.gaussian_weights(6.0)
    print(f"separable gaussian blur: {n}x{n}, kernel {weights.size} taps")
    t_np, blur_np = timeit(kernels.gaussian_blur_numpy, img, weights, repeat=args.repeat)
    t_nb, blur_nb = timeit(nb_blur, img, weights, repeat=args.repeat)
    assert np.allclose(blur_np, blur_nb, atol=1e-10), "blur outputs differ between paths"
    print(f"  numpy {t_np * 1e3:8.1f} ms   numba {t_nb * 1e3:8.1f} ms   "
          f"speedup x{t_np / t_nb:.1f}")

    rng = np.random.default_rng(0)
    sample_x = rng.uniform(0, (n - 1) * h, 200_000)
    sample_y = rng.uniform(0, (n - 1) * h, 200_000)
    print(f"bilinear resampling: {sample_x.size} samples")
    t_np, s_np = timeit(kernels.bilinear_sample_numpy, blur_np, 0.0, 0.0, h, sample_x, sample_y,
                        repeat=args.repeat)
    t_nb, s_nb = timeit(nb_bilinear, blur_np, 0.0, 0.0, h, sample_x, sample_y,
                        repeat=args.repeat)
    assert np.allclose(s_np, s_nb, atol=1e-10), "bilinear outputs differ between paths"
    print(f"  numpy {t_np * 1e3:8.1f} ms   numba {t_nb * 1e3:8.1f} ms   "
          f"speedup x{t_np / t_nb:.1f}")


if __name__ == "__main__":
    main()
