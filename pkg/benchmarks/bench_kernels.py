"""Compare the compiled LSTM kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--batch 64] [--steps 180] [--hidden 30] [--repeat 7]

Prints best-of-N wall time per call for the layer forward, the layer
backward and a single-window forward (the predict path), plus the max
absolute difference between the two backends' outputs.
"""
import argparse
import time

import numpy as np

from lwhar import _kernels_py
from lwhar.kernels import native_available


def best_of(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def layer_case(T, B, I, H, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.normal(size=(T, B, I)), rng.normal(0, 0.3, (4 * H, I)), rng.normal(0, 0.2, (4 * H, H)),
            np.ones(4 * H), rng.normal(0, 0.3, (3, H)), rng.normal(size=(T, B, H)))


def bench(mod, case, repeat):
    X, Wx, Wh, b, peep, dH = case
    trace = mod.lstm_forward(X, Wx, Wh, b, peep)
    X1 = np.ascontiguousarray(X[:, :1])
    return {
        "forward": best_of(lambda: mod.lstm_forward(X, Wx, Wh, b, peep), repeat),
        "backward": best_of(lambda: mod.lstm_backward(X, Wx, Wh, peep, *trace, dH), repeat),
        "single window": best_of(lambda: mod.lstm_forward(X1, Wx, Wh, b, peep), repeat * 10),
    }, trace, mod.lstm_backward(X, Wx, Wh, peep, *trace, dH)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--steps", type=int, default=180)
    ap.add_argument("--hidden", type=int, default=30)
    ap.add_argument("--inputs", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args()

    case = layer_case(args.steps, args.batch, args.inputs, args.hidden)
    print(f"T={args.steps} B={args.batch} I={args.inputs} H={args.hidden}, best of {args.repeat}")
    py_times, py_trace, py_grads = bench(_kernels_py, case, args.repeat)
    rows = [("python", py_times)]
    if native_available():
        from lwhar import _kernels
        nat_times, nat_trace, nat_grads = bench(_kernels, case, args.repeat)
        rows.insert(0, ("native", nat_times))
    else:
        print("compiled extension not built; showing the fallback only")

    print(f"{'backend':<10}" + "".join(f"{k:>16}" for k in py_times))
    for name, times in rows:
        print(f"{name:<10}" + "".join(f"{1e3 * v:>14.2f}ms" for v in times.values()))
    if len(rows) == 2:
        print(f"{'speedup':<10}" + "".join(f"{py_times[k] / nat_times[k]:>15.1f}x" for k in py_times))
        dfwd = max(float(np.max(np.abs(a - b))) for a, b in zip(nat_trace, py_trace))
        dbwd = max(float(np.max(np.abs(a - b))) for a, b in zip(nat_grads, py_grads))
        print(f"max |native - python|: forward {dfwd:.1e}, backward {dbwd:.1e}")


if __name__ == "__main__":
    main()
