"""Command-line front end: ``geomc {sample,check,shadow-scan,report,demo}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import CONFIG_KEYS, REQUIRED_FOR_SAMPLING, build_system, build_target, initial_position, load_config
from .diagnostics import summarize
from .errors import ConfigError, GeomcError
from .hamiltonians import HamiltonianSystem, Phase
from .integrators import REPORT_COLUMNS, structure_report
from .io import read_chain_csv, write_chain_csv, write_json, write_table_csv, dumps_json
from .samplers import make_rng, run_sampler
from .shadow import shadow_conservation_scan
from .targets import make_gaussian

SEED_ENV = "GEOMC_SEED"
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
RNG_DESCRIPTION = "numpy PCG64; chain i uses SeedSequence(seed, spawn_key=(i,))"

# Demo target: a narrow ("peaked") 2-d Gaussian where RWM struggles.
DEMO_COVARIANCE = np.diag([1.0, 0.01])
DEMO_SAMPLES = 30


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_overrides(parser):
    group = parser.add_argument_group("config overrides")
    for key in CONFIG_KEYS:
        flags = [f"--{key}"]
        if "_" in key:
            flags.append(f"--{key.replace('_', '-')}")
        group.add_argument(*flags, dest=f"override_{key}", metavar="VALUE", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geomc", description="Geometric MCMC engine.")
    parser.add_argument("--version", action="version", version=f"geomc {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("sample", help="run chains and write CSVs plus a JSON summary")
    p.add_argument("config")
    _add_overrides(p)

    p = sub.add_parser("check", help="integrator structure checks to CSV")
    p.add_argument("config")
    _add_overrides(p)

    p = sub.add_parser("shadow-scan", help="energy vs shadow-energy drift over step sizes to CSV")
    p.add_argument("config")
    _add_overrides(p)

    p = sub.add_parser("report", help="diagnostics JSON for chain CSVs")
    p.add_argument("chains", nargs="+")
    p.add_argument("--output", "-o", default=None, help="write JSON here instead of stdout")

    p = sub.add_parser("demo", help="RWM vs HMC on a peaked Gaussian: two CSVs and a gnuplot script")
    p.add_argument("--output-dir", default=".")
    p.add_argument("--seed", type=int, default=None)
    return parser


def _overrides(args) -> dict:
    out = {}
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None and env_seed.strip() != "":
        out["seed"] = env_seed
    for key in CONFIG_KEYS:
        value = getattr(args, f"override_{key}", None)
        if value is not None:
            out[key] = value
    return out


def _load(args, required):
    cfg = load_config(args.config, _overrides(args), required)
    if cfg.seed is None:
        cfg.seed = int(np.random.SeedSequence().entropy)
        cfg.line_of["seed"] = "entropy"
    return cfg


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _run_chain(job):
    cfg, index, record = job
    return run_sampler(cfg, index, record_momenta=record)


def run_chains(cfg, record_momenta=False):
    """Run ``cfg.n_chains`` chains on a pool capped at the available CPUs."""
    jobs = [(cfg, i, record_momenta) for i in range(cfg.n_chains)]
    workers = min(cfg.n_chains, os.cpu_count() or 1)
    if workers <= 1:
        return [_run_chain(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_chain, jobs))


def cmd_sample(args) -> int:
    cfg = _load(args, REQUIRED_FOR_SAMPLING)
    target = build_target(cfg)
    system = build_system(cfg, target)
    shadow_ok = cfg.sampler in ("hmc", "ghmc", "shmc")
    chains = run_chains(cfg, record_momenta=shadow_ok)
    summaries = []
    for i, chain in enumerate(chains):
        path = f"{cfg.output}_chain{i}.csv"
        _ensure_parent(path)
        write_chain_csv(chain, path)
        entry = {"chain": i, "file": os.path.basename(path), "n": len(chain)}
        if len(chain):
            entry.update(summarize(chain, (system, cfg.tau) if shadow_ok else None).to_dict())
        summaries.append(entry)
        print(f"chain {i}: {len(chain)} samples, acceptance {entry.get('acceptance_rate', 0.0):.3f} -> {path}")
    summary_path = f"{cfg.output}_summary.json"
    write_json({"config": cfg.to_dict(), "rng": RNG_DESCRIPTION, "target_dim": target.dim, "chains": summaries}, summary_path)
    print(f"summary -> {summary_path}")
    return EXIT_OK


def _test_phases(cfg, system, target, rng):
    x0 = initial_position(cfg, target)
    phases = []
    for _ in range(cfg.n_phases):
        x = x0 + rng.standard_normal(target.dim)
        phases.append(Phase(x, system.sample_momentum(x, rng)))
    return phases


def cmd_check(args) -> int:
    cfg = _load(args, ("target",))
    target = build_target(cfg)
    systems = [build_system(cfg, target) if cfg.sampler != "rmhmc" else HamiltonianSystem.euclidean(target)]
    if target.metric is not None:
        systems.append(HamiltonianSystem.riemannian(target))
    rows = []
    for k, system in enumerate(systems):
        phases = _test_phases(cfg, system, target, make_rng(cfg.seed, k))
        rows.extend(structure_report(system, phases, cfg.taus, cfg.L, cfg.total_time, fp_tol=min(cfg.fp_tol, 1e-12)))
    path = f"{cfg.output}_check.csv"
    _ensure_parent(path)
    write_table_csv(rows, REPORT_COLUMNS, path)
    for row in rows:
        flag = "PASS" if row["passed"] else "FAIL"
        print(f"{flag} {row['integrator']:<21} tau={row['tau']:<6g} {row['property']:<14} {row['deviation']:.3e}")
    print(f"{sum(r['passed'] for r in rows)}/{len(rows)} checks passed -> {path}")
    return EXIT_OK


def cmd_shadow_scan(args) -> int:
    cfg = _load(args, ("target",))
    target = build_target(cfg)
    system = build_system(cfg, target) if cfg.sampler != "rmhmc" else HamiltonianSystem.euclidean(target)
    z0 = _test_phases(cfg, system, target, make_rng(cfg.seed, 0))[0]
    rows = shadow_conservation_scan(system, z0, cfg.taus, cfg.total_time)
    path = f"{cfg.output}_shadow_scan.csv"
    _ensure_parent(path)
    write_table_csv([vars(r) for r in rows], ("tau", "max_dH", "max_dHshadow"), path)
    for r in rows:
        print(f"tau={r.tau:<8g} max|dH|={r.max_dH:.3e}  max|dH4|={r.max_dHshadow:.3e}")
    print(f"-> {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = {}
    for path in args.chains:
        try:
            chain = read_chain_csv(path)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        out[path] = summarize(chain).to_dict() if len(chain) else {"n": 0}
    if args.output:
        _ensure_parent(args.output)
        write_json(out, args.output)
    else:
        sys.stdout.write(dumps_json(out))
    return EXIT_OK


DEMO_SCRIPT = """\
# RWM (red) against HMC (blue): {n} draws each from N(0, diag(1, 0.01)).
# Run with: gnuplot -p {name}
set datafile separator ','
set key autotitle columnhead
set xlabel 'x1'
set ylabel 'x2'
set xrange [-3:3]
set yrange [-0.4:0.4]
plot '{rwm}' using 2:3 with linespoints lc rgb 'red' pt 7 title 'RWM', \\
     '{hmc}' using 2:3 with linespoints lc rgb 'blue' pt 7 title 'HMC'
"""


def cmd_demo(args) -> int:
    from .samplers import SamplerState, hmc_step, rwm_step, sample
    from .integrators import IntegratorConfig

    seed = args.seed
    if seed is None:
        env = os.environ.get(SEED_ENV)
        try:
            seed = int(env) if env else 0
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    os.makedirs(args.output_dir, exist_ok=True)
    target = make_gaussian(np.zeros(2), DEMO_COVARIANCE)
    system = HamiltonianSystem.euclidean(target)
    start = SamplerState(np.zeros(2))
    config = IntegratorConfig(tau=0.05, n_steps=20)
    runs = {
        "rwm": lambda s, rng: rwm_step(s, target, 2.4 / np.sqrt(2.0), rng),
        "hmc": lambda s, rng: hmc_step(s, system, config, rng),
    }
    names = {}
    for i, (name, step_fn) in enumerate(runs.items()):
        chain = sample(step_fn, start, DEMO_SAMPLES, make_rng(seed, i), seed=seed)
        names[name] = f"demo_{name}.csv"
        write_chain_csv(chain, os.path.join(args.output_dir, names[name]))
    script = "demo_plot.gp"
    with open(os.path.join(args.output_dir, script), "w", encoding="utf-8") as fh:
        fh.write(DEMO_SCRIPT.format(n=DEMO_SAMPLES, name=script, **names))
    print(f"wrote {names['rwm']}, {names['hmc']}, {script} in {args.output_dir}")
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "check": cmd_check,
    "shadow-scan": cmd_shadow_scan,
    "report": cmd_report,
    "demo": cmd_demo,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"geomc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GeomcError, OSError, ValueError) as exc:
        print(f"geomc: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
