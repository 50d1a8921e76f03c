"""Compare the compiled kernels with the numpy fallback.

Times the simplex loop (one stage program of the 3x3 grid example, and a full
projected synthesis) and Monte Carlo rollouts, and checks that both backends
return bit-identical results.

    python benchmarks/bench_kernels.py [--rollouts 200000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from cmdpsynth import _kernels_py, density, kernels
from cmdpsynth.constrained import build_stage_lp, synthesize_projected
from cmdpsynth.gridworld import paper_instance
from cmdpsynth.lp import solve
from cmdpsynth.unconstrained import backward_induction

try:
    from cmdpsynth import _kernels as _compiled
except ImportError:
    _compiled = None


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(impl, args):
    kernels._impl = impl
    model, caps = paper_instance(0.1, args.horizon)
    x1 = np.eye(9)[5]
    u_next = backward_induction(model)[1].v[-2]
    lp, _ = build_stage_lp(model, caps, model.horizon - 2, u_next)
    results = {}
    results["stage LP"] = best_time(lambda: solve(lp), args.repeat)
    results["projected synthesis"] = best_time(lambda: synthesize_projected(model, caps)[0], args.repeat)
    policy = results["projected synthesis"][1]
    results["rollouts"] = best_time(
        lambda: density.monte_carlo(model, policy, x1, args.rollouts, 0), args.repeat
    )
    return results


def same(a, b):
    if hasattr(a, "x"):
        return a.status == b.status and np.array_equal(a.x, b.x)
    if hasattr(a, "stages"):
        return np.array_equal(a.stages, b.stages)
    return a == b


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rollouts", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--horizon", type=int, default=20)
    args = parser.parse_args()

    py = run(_kernels_py, args)
    if _compiled is None:
        print("compiled extension not built; numpy timings only")
        for name, (t, _) in py.items():
            print(f"{name:22s} python {t * 1e3:9.2f} ms")
        return
    cy = run(_compiled, args)
    print(f"{'kernel':22s} {'python':>12s} {'compiled':>12s} {'speedup':>8s}  identical")
    for name in py:
        tp, op = py[name]
        tc, oc = cy[name]
        print(f"{name:22s} {tp * 1e3:9.2f} ms {tc * 1e3:9.2f} ms {tp / tc:7.1f}x  {same(op, oc)}")


if __name__ == "__main__":
    main()
