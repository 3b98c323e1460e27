"""Benchmark the compiled kernel core against the pure numpy fallback.

Run from the repository root:

    python bench/bench_kernels.py [--repeat 5]

Times the three hot kernels on representative workloads and a full measles
particle-filter pass on each backend.  The compiled backend must be built
(pip install -e . with a C toolchain) or only the pure rows are shown.
"""

import argparse
import time

import numpy as np


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _gen(seed):
    return np.random.Generator(np.random.Philox(seed))


def kernel_cases(impl):
    sizes = np.full(50_000, 120, dtype=np.int64)
    rates = np.tile([14.0, 0.02], (50_000, 1))
    weights = np.random.Generator(np.random.Philox(1)).random(5000)

    state = np.zeros((1000, 5, 6))
    state[:, :, 0] = 30000.0
    state[:, :, 1] = 100.0
    state[:, :, 2] = 80.0
    state[:, :, 3] = 1e5 - 30180.0
    nsub = 8
    ones = np.ones(1000)
    sweep_args = dict(
        nsub=nsub, dt=2.0 / 365.0,
        pop=np.full((nsub + 1, 5), 1e5),
        births_rate=np.full((nsub, 5), 5000.0),
        is_term=np.ones(nsub, dtype=np.uint8),
        r0=56.8 * ones, amplitude=0.554 * ones, gamma_rec=30.4 * ones,
        sigma_lat=28.9 * ones, mu=0.02 * ones, sigma_se=0.02 * ones,
        g=100.0 * ones, v_by_g=np.abs(np.subtract.outer(np.arange(5.0),
                                                        np.arange(5.0))))
    return {
        "euler_multinomial (50k x 2)":
            lambda: impl.euler_multinomial(_gen(2), sizes, rates, 0.005),
        "gamma_white_noise (200k)":
            lambda: impl.gamma_white_noise(_gen(3), 0.02, 0.005, 200_000),
        "systematic_positions (5k)":
            lambda: impl.systematic_positions(weights, 0.37),
        "measles_euler_sweep (1000 x 5 x 8)":
            lambda: impl.measles_euler_sweep(_gen(4), state.copy(),
                                             **sweep_args),
    }


def measles_pfilter_case(repeat):
    import importlib
    import os

    rows = []
    for backend, env in (("pure", "1"), ("compiled", "0")):
        os.environ["SPATSMC_PURE_PYTHON"] = env
        import spatsmc.kernels as kernels
        importlib.reload(kernels)
        if kernels.backend_name() != backend:
            continue
        import spatsmc.models.measles as measles
        importlib.reload(measles)
        from spatsmc.filters.basic import pfilter
        model = measles.measles_build(5)
        elapsed = _time(lambda: pfilter(model, j=200, rng=1),
                        max(1, repeat // 2))
        rows.append((backend, elapsed))
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    from spatsmc.kernels import pure
    backends = {"pure": pure}
    try:
        from spatsmc.kernels import _speedups
        backends["compiled"] = _speedups
    except ImportError:
        print("compiled backend not built; showing pure numpy only\n")

    print(f"{'kernel':40s} " + "".join(f"{b:>12s}" for b in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    names = list(kernel_cases(pure))
    for name in names:
        times = []
        for impl in backends.values():
            times.append(_time(kernel_cases(impl)[name], args.repeat))
        line = f"{name:40s} " + "".join(f"{t * 1e3:9.2f} ms" for t in times)
        if len(times) == 2:
            line += f"  {times[0] / times[1]:9.1f}x"
        print(line)

    print("\nfull measles pfilter pass (J=200, 391 biweeks):")
    rows = measles_pfilter_case(args.repeat)
    for backend, elapsed in rows:
        print(f"  {backend:10s} {elapsed:8.2f} s")
    if len(rows) == 2:
        print(f"  speedup    {rows[0][1] / rows[1][1]:8.1f}x")


if __name__ == "__main__":
    main()
