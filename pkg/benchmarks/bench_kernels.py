"""Compare the compiled kernels with the numpy fallback on training-sized inputs.

    python benchmarks/bench_kernels.py [--repeats 20] [--batch 64]
"""

import argparse
import time

import numpy as np

from gazelift import kernels


def best_of(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(batch, rng):
    # DCE: 18 joints x 4 heads x 4 points sampled from the 32x32x32 level
    value = rng.standard_normal((batch, 32, 32, 32)).astype(np.float32)
    loc = rng.uniform(0, 1, (batch, 18 * 4 * 4, 2)).astype(np.float32)
    grad = rng.standard_normal((batch, 18 * 4 * 4, 32)).astype(np.float32)
    # feature stub: 17 joints, ~6 objects and 3 head channels per scene
    n = batch * 26
    splats = np.column_stack([np.repeat(np.arange(batch), 26), rng.integers(0, 28, n),
                              rng.uniform(0, 1, n), rng.uniform(0, 1, n), rng.uniform(1, 3, n), np.ones(n)])
    out = np.zeros((batch, 32, 32, 32), dtype=np.float32)

    def render(be):
        out[:] = 0
        kernels.render_splats(out, splats, be)

    return {
        "bilinear_sample": lambda be: kernels.bilinear_sample(value, loc, be),
        "bilinear_backward(loc)": lambda be: kernels.bilinear_sample_backward(value, loc, grad, False, be),
        "bilinear_backward(all)": lambda be: kernels.bilinear_sample_backward(value, loc, grad, True, be),
        "render_splats": render,
    }


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--batch", type=int, default=64)
    args = p.parse_args()
    if kernels.BACKEND != "compiled":
        raise SystemExit("compiled extension not available; build with `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'compiled ms':>12}{'python ms':>12}{'speedup':>9}")
    for name, fn in cases(args.batch, rng).items():
        tc = best_of(lambda: fn("compiled"), args.repeats)
        tp = best_of(lambda: fn("python"), args.repeats)
        print(f"{name:<24}{tc * 1e3:>12.3f}{tp * 1e3:>12.3f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
