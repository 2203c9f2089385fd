"""Time the compiled kernels against the interpreted fallback.

The JIT switch is read at import, so each path runs in its own child
process with ``RECYCLEBLOOM_NO_JIT`` set accordingly.  Compilation happens
in a warm-up call that is excluded from the timings.

    python benchmarks/bench_kernels.py [--repeat 3]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

CASES = {
    "table CN M=20000 k=8": ("table", dict(variant="CN", M=20_000, k=8, sigma=12_000)),
    "steady NN M=20000 k=8": ("steady", dict(variant="NN", M=20_000, k=8, sigma=12_000)),
    "steady CR M=5000 k=6": ("steady", dict(variant="CR", M=5_000, k=6, sigma=3_000)),
    "epoch 1-phase 50k arrivals": ("epoch", dict(M=1000, k=6, sigma=600, phases=1, arrivals=50_000)),
    "epoch 2-phase 50k arrivals": ("epoch", dict(M=1000, k=7, sigma=250, phases=2, arrivals=50_000)),
}


def _job(kind, case):
    from recyclebloom.core import FilterParams, Phases, SigmaBounded
    from recyclebloom.markov import Variant, build_transition_table, steady_state
    from recyclebloom.simulator import Workload, run_epoch

    if kind == "table":
        return lambda s: build_transition_table(Variant[case["variant"]], case["M"], case["k"], s)
    if kind == "steady":
        return lambda s: steady_state(
            build_transition_table(Variant[case["variant"]], case["M"], case["k"], s)
        )
    params = FilterParams(
        case["M"], case["k"], recycle=SigmaBounded(case["sigma"]), phases=Phases(case["phases"])
    )
    return lambda s: run_epoch(params, Workload.uniform(case["M"]), case["arrivals"], 7)


def child(repeat: int) -> None:
    from recyclebloom._accel import JIT_ENABLED

    out = {"jit": JIT_ENABLED, "times": {}}
    for name, (kind, case) in CASES.items():
        run = _job(kind, case)
        run(min(case["sigma"], 10))  # warm-up, compiles when JIT is on
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            run(case["sigma"])
            best = min(best, time.perf_counter() - t0)
        out["times"][name] = best
    print(json.dumps(out))


def spawn(no_jit: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("RECYCLEBLOOM_NO_JIT", None)
    if no_jit:
        env["RECYCLEBLOOM_NO_JIT"] = "1"
    proc = subprocess.run(
        [sys.executable, __file__, "--child", "--repeat", str(repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        child(args.repeat)
        return
    fast = spawn(False, args.repeat)
    slow = spawn(True, args.repeat)
    if not fast["jit"]:
        print("numba is not importable; both columns use the fallback")
    print(f"{'kernel':<30} {'numba s':>10} {'fallback s':>12} {'speedup':>9}")
    for name in CASES:
        a, b = fast["times"][name], slow["times"][name]
        print(f"{name:<30} {a:>10.4f} {b:>12.4f} {b / a:>8.1f}x")


if __name__ == "__main__":
    main()
