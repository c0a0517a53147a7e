"""Compare the compiled kernels with the numpy fallback.

Times whole trajectories (leapfrog and generalized leapfrog) for each built-in
target family, then one end-to-end HMC chain per backend in a subprocess so the
import-time backend switch is exercised as users see it.

    python3 benchmarks/bench_kernels.py [--repeats 5] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from geomc import _pykernels
from geomc.targets import DESK_FEATURES, DESK_LABELS

try:
    from geomc import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _kernels(mod):
    prec = np.linalg.inv(np.diag([1.0, 0.8, 0.6, 0.4, 0.2]))
    return {
        "gaussian5": (mod.GaussianKernel(np.zeros(5), prec), np.full(5, 0.3)),
        "banana": (mod.BananaKernel(0.5, 1.0), np.array([0.3, 0.2])),
        "logreg": (mod.LogRegKernel(DESK_FEATURES, DESK_LABELS, 1.0), np.array([0.3, 0.2])),
    }


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_trajectories(repeats, n_steps):
    rows = []
    mods = {"python": _pykernels}
    if _ckernels is not None:
        mods["cython"] = _ckernels
    for name in ("gaussian5", "banana", "logreg"):
        for integrator in ("leapfrog", "generalized"):
            timing = {}
            for label, mod in mods.items():
                kernel, x0 = _kernels(mod)[name]
                p0 = np.ones_like(x0) * 0.5
                if integrator == "leapfrog":
                    run = lambda: mod.leapfrog_trajectory(kernel, x0, p0, np.eye(len(x0)), 0.05, n_steps, 1000.0)
                else:
                    run = lambda: mod.generalized_leapfrog_trajectory(kernel, x0, p0, 0.05, n_steps, 1e-10, 100, 1000.0)
                timing[label] = _best_of(run, repeats)
            rows.append((name, integrator, timing))
    return rows


CHAIN_SCRIPT = """
import time, geomc
from geomc.config import parse_config
from geomc.samplers import run_sampler
cfg = parse_config('target = {target}\\nsampler = {sampler}\\nn_samples = {n}\\nseed = 1\\nwarmup = 0\\ntau = 0.1\\nL = 10\\n')
t0 = time.perf_counter(); run_sampler(cfg); print(geomc.BACKEND, time.perf_counter() - t0)
"""


def bench_chains(n):
    rows = []
    for target, sampler in (("banana", "hmc"), ("logreg", "rmhmc")):
        timing = {}
        for flag in ("0", "1"):
            env = dict(os.environ, GEOMC_PURE_PYTHON=flag)
            code = CHAIN_SCRIPT.format(target=target, sampler=sampler, n=n)
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
            backend, seconds = out.stdout.split()
            timing[backend] = float(seconds)
        rows.append((target, sampler, timing))
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--steps", type=int, default=1000, help="steps per timed trajectory")
    parser.add_argument("--draws", type=int, default=2000, help="draws per timed chain")
    parser.add_argument("--json", default=None, help="also write results here")
    args = parser.parse_args(argv)

    traj = bench_trajectories(args.repeats, args.steps)
    print(f"trajectories of {args.steps} steps (best of {args.repeats})")
    print(f"{'target':<10} {'integrator':<12} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for name, integrator, t in traj:
        c = t.get("cython", float("nan"))
        print(f"{name:<10} {integrator:<12} {1e3 * t['python']:12.2f} {1e3 * c:12.2f} {t['python'] / c:8.1f}")

    chains = bench_chains(args.draws)
    print(f"\nend-to-end chains of {args.draws} draws")
    print(f"{'target':<10} {'sampler':<12} {'python [s]':>12} {'cython [s]':>12} {'speedup':>8}")
    for target, sampler, t in chains:
        c = t.get("cython", float("nan"))
        print(f"{target:<10} {sampler:<12} {t['python']:12.2f} {c:12.2f} {t['python'] / c:8.1f}")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"trajectories": traj, "chains": chains}, fh, indent=2)


if __name__ == "__main__":
    main()
