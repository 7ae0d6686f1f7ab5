"""Command-line entry point: ``tsmc run | summarize | check-gradients | presets``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import artifacts
from .config import PRESETS, ConfigError, format_config, load_config
from .envs import ENVIRONMENTS, make_task
from .gradcheck import random_check_points, rollout_gradient_errors

log = logging.getLogger("tsmc")

GRADIENT_TOLERANCE = 1e-5


def _load(source: str):
    if source.startswith("preset:"):
        name = source.split(":", 1)[1]
        if name not in PRESETS:
            raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        return PRESETS[name]
    return load_config(source)


def cmd_run(args) -> int:
    from .experiments import execute

    try:
        config = _load(args.config)
        if args.method:
            config = config.with_method(args.method)
        config = config.override(seed=args.seed, workers=args.workers, name=args.name)
        config.validate()
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return artifacts.EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return artifacts.EXIT_CONFIG
    try:
        result = execute(config)
    except (FloatingPointError, ValueError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return artifacts.EXIT_FAILURE
    out = artifacts.write_run(result, args.output_root)
    summary = artifacts.summary_dict(result)
    print(f"{out}: status={summary['status']} levels={summary['n_levels']} "
          f"best={summary['best_energy']} median={summary['median_energy']}")
    return artifacts.EXIT_PARTIAL if result.record.status == "partial" else artifacts.EXIT_SUCCESS


def cmd_summarize(args) -> int:
    try:
        runs, methods = artifacts.summarize(args.run_dirs)
    except (artifacts.SummaryError, OSError, KeyError) as exc:
        print(f"cannot summarize: {exc}", file=sys.stderr)
        return artifacts.EXIT_FAILURE
    sys.stdout.write(artifacts.format_table(runs, methods))
    if args.svg:
        artifacts.write_boxplot(methods, args.svg, title=runs[0].environment)
    return artifacts.EXIT_SUCCESS


def cmd_check_gradients(args) -> int:
    if args.env not in ENVIRONMENTS or args.env in ("gaussian", "shekel"):
        print(f"{args.env!r} is not a dynamical environment", file=sys.stderr)
        return artifacts.EXIT_CONFIG
    controllers = [args.controller] if args.controller else (["mlp"] if args.env == "lti" else ["open_loop", "mlp"])
    worst = 0.0
    for ctrl in controllers:
        task = make_task(args.env, controller=ctrl)
        rng = np.random.default_rng(args.seed)
        thetas, x0s = random_check_points(task, args.points, rng, args.scale)
        errors = rollout_gradient_errors(task.problem, thetas, x0s)
        worst = max(worst, float(errors.max()))
        print(f"{args.env}/{ctrl}: d={task.dim} points={args.points} max relative error {errors.max():.3e}")
    return artifacts.EXIT_SUCCESS if worst < args.tol else artifacts.EXIT_FAILURE


def cmd_presets(args) -> int:
    if args.action == "list":
        for name, cfg in PRESETS.items():
            print(f"{name}\t{cfg.environment}\tlambda={cfg.temperature!r} step={cfg.step_size!r} "
                  f"N={cfg.n_particles}")
        return artifacts.EXIT_SUCCESS
    if args.name not in PRESETS:
        print(f"unknown preset {args.name!r}", file=sys.stderr)
        return artifacts.EXIT_CONFIG
    sys.stdout.write(format_config(PRESETS[args.name]))
    return artifacts.EXIT_SUCCESS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsmc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from an INI file or preset:NAME")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--method")
    r.add_argument("--workers", type=int)
    r.add_argument("--name")
    r.add_argument("--output-root", help=f"overrides ${artifacts.OUTPUT_ROOT_ENV} and output_dir")
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("summarize", help="compare run directories of one environment")
    s.add_argument("run_dirs", nargs="+")
    s.add_argument("--svg", help="write a boxplot of final energies")
    s.set_defaults(fn=cmd_summarize)

    g = sub.add_parser("check-gradients", help="adjoint vs finite-difference gradients")
    g.add_argument("env")
    g.add_argument("--controller", choices=("open_loop", "mlp"))
    g.add_argument("--points", type=int, default=20)
    g.add_argument("--scale", type=float, default=0.5, help="shrink factor for prior parameter draws")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tol", type=float, default=GRADIENT_TOLERANCE)
    g.set_defaults(fn=cmd_check_gradients)

    pr = sub.add_parser("presets", help="list or print named presets")
    pr.add_argument("action", choices=("list", "show"))
    pr.add_argument("name", nargs="?")
    pr.set_defaults(fn=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
