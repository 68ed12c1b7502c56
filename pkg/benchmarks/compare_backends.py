"""Benchmark the numba-compiled hot kernels against the numpy fallback.

Run:  python benchmarks/compare_backends.py

The package selects the backend at import via GREENPOT_NUMBA (1 = numba,
0 = numpy); this script imports both implementations directly and times
the matrix builders that dominate assembly and potential evaluation.
"""

import time

import numpy as np

from greenpot import _accel_numba, _accel_numpy


def timeit(fn, min_seconds=0.5):
    fn()  # warmup / jit
    t0 = time.perf_counter()
    calls = 0
    while time.perf_counter() - t0 < min_seconds:
        fn()
        calls += 1
    return (time.perf_counter() - t0) / calls


def main():
    rng = np.random.default_rng(0)
    sizes = [(64, 64), (256, 128), (512, 256)]
    cases = [
        ("log value", lambda mod, x, xi: mod.log_potential_matrix(x, xi)),
        ("log gradient", lambda mod, x, xi: mod.log_potential_gradient(x, xi)),
        ("rect value (M=9)", lambda mod, x, xi: mod.rect_green_matrix(1.0, 1.0, 9, x, xi)),
        ("rect gradient (M=9)", lambda mod, x, xi: mod.rect_green_gradient(1.0, 1.0, 9, x, xi)),
        (
            "rect regular (M=9)",
            lambda mod, x, xi: mod.rect_green_regular_matrix(1.0, 1.0, 9, x, xi),
        ),
    ]
    print(f"{'kernel':<22}{'size':<12}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for n, m in sizes:
        x = rng.uniform(0.05, 0.95, (n, 2))
        xi = rng.uniform(0.05, 0.95, (m, 2))
        for name, call in cases:
            t_np = timeit(lambda: call(_accel_numpy, x, xi))
            t_nb = timeit(lambda: call(_accel_numba, x, xi))
            a = call(_accel_numpy, x, xi)
            b = call(_accel_numba, x, xi)
            assert np.max(np.abs(a - b)) < 1e-12, name
            print(
                f"{name:<22}{f'{n}x{m}':<12}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
                f"{t_np / t_nb:>10.1f}x"
            )


if __name__ == "__main__":
    main()
