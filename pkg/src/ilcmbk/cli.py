"""Command-line entry point: ``ilcmbk {run,compare,certify,sweep,presets}``.

Exit status: 0 on success, 2 for bad arguments or configs, 3 when a
learning run diverges, 1 for I/O failures.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import yaml

from . import harness
from .convergence import certify as certify_ops
from .convergence import operands_from_run
from .admittance import simulate_iteration
from .ilc import (
    DivergenceError,
    LearnConfig,
    estimate_output_map,
    run_learning,
    true_output_maps,
    update_gain,
)
from .plant import PRESET_NAMES, make_reference, preset

EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_IO = 1

log = logging.getLogger("ilcmbk")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML config file layered over the shipped defaults")
    p.add_argument("--iterations", type=int, help="learning trials (default: 750)")
    p.add_argument("--dt", type=float, help="control period in seconds (default: 0.05)")
    p.add_argument("--seed", type=int, help="seed for the reference perturbation (default: 0)")
    p.add_argument("--inconsistent", type=float, metavar="AMP",
                   help="perturb f_r with seeded noise of relative amplitude AMP (default: 0, consistent)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ilcmbk", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write CSV/JSON results")
    _common(run)
    run.add_argument("--task", choices=PRESET_NAMES, help="preset (default: auto_reset_button)")
    run.add_argument("--method", choices=harness.METHODS, help="method (default: ilc_mbk)")
    run.add_argument("--alpha", type=float, help="ILC learning rate (default: 0.3)")
    run.add_argument("--clamp", type=float, help="per-step correction limit (default: 10)")
    run.add_argument("--true-C", action="store_true", help="certify with the plant's secant C")
    run.add_argument("--out", type=Path, help=f"output directory (default: ${harness.OUT_ENV} or ./results, /<task>_<method>)")

    cmp_ = sub.add_parser("compare", help="run tasks x methods and print the comparison table")
    _common(cmp_)
    cmp_.add_argument("--tasks", nargs="+", choices=PRESET_NAMES, default=list(PRESET_NAMES),
                      help="tasks to compare (default: all four presets)")
    cmp_.add_argument("--methods", nargs="+", choices=harness.METHODS, default=list(harness.METHODS),
                      help="methods to compare (default: all three)")
    cmp_.add_argument("--alpha", type=float, help="ILC learning rate (default: 0.3)")
    cmp_.add_argument("--workers", type=int, default=1, help="parallel runs (default: 1)")
    cmp_.add_argument("--out", type=Path, help=f"output root (default: ${harness.OUT_ENV} or ./results)")

    cert = sub.add_parser("certify", help="learn, then print the last step's convergence certificate")
    _common(cert)
    cert.add_argument("--task", choices=PRESET_NAMES, help="preset (default: auto_reset_button)")
    cert.add_argument("--alpha", type=float, help="ILC learning rate (default: 0.3)")
    cert.add_argument("--true-C", action="store_true", help="use the plant's secant C in alpha0")
    cert.add_argument("--out", type=Path, help="also write certificate.json into this directory")

    sw = sub.add_parser("sweep", help="grid over alpha / clamp / mu / eta with a worker pool")
    _common(sw)
    sw.add_argument("--task", choices=PRESET_NAMES, help="preset (default: auto_reset_button)")
    sw.add_argument("--alpha", type=float, nargs="+", help="learning rates (default: 0.3)")
    sw.add_argument("--clamp", type=float, nargs="+", help="correction limits (default: 10)")
    sw.add_argument("--mu", type=float, nargs="+", help="estimator regularisers (default: 1e-9)")
    sw.add_argument("--eta", type=float, nargs="+", help="estimator steps (default: 1.0)")
    sw.add_argument("--workers", type=int, default=2, help="worker processes (default: 2)")
    sw.add_argument("--out", type=Path, help=f"output root (default: ${harness.OUT_ENV} or ./results, /sweep)")

    sub.add_parser("presets", help="list built-in tasks")
    return ap


def _overrides(args, **extra) -> dict:
    exp, learn = {}, {}
    for key in ("iterations", "dt", "seed"):
        if getattr(args, key, None) is not None:
            exp[key] = getattr(args, key)
    if getattr(args, "inconsistent", None) is not None:
        exp["perturbation"] = args.inconsistent
    for key in ("task", "method"):
        if getattr(args, key, None) is not None:
            exp[key] = getattr(args, key)
    alpha = getattr(args, "alpha", None)
    if isinstance(alpha, float):
        learn["alpha"] = alpha
    clamp = getattr(args, "clamp", None)
    if isinstance(clamp, float):
        learn["clamp_limit"] = clamp
    if getattr(args, "true_C", False):
        learn["true_C"] = True
    exp.update(extra)
    return {"experiment": exp, "learn": learn}


def cmd_run(args) -> int:
    cfg = harness.load_config(args.config, _overrides(args))
    if args.out is not None:
        cfg.out = args.out
    curve = harness.run_experiment(cfg)
    s = curve.summary
    print(
        f"{s['task']} {s['method']}: final RMSE position {s['rows']['position']['rmse']:.6e}, "
        f"{s['rows']['force']['label']} {s['rows']['force']['rmse']:.6e} -> {cfg.out_dir}"
    )
    return 0


def cmd_compare(args) -> int:
    base = harness.load_config(args.config, _overrides(args))
    root = args.out or harness.default_out_root()
    cfgs = []
    for task in args.tasks:
        for method in args.methods:
            cfg = harness.load_config(args.config, _overrides(args, task=task, method=method))
            cfg.out = root / f"{task}_{method}"
            cfgs.append(cfg)
    if base.plant is not None:
        print("note: a plant table in the config is ignored by compare", file=sys.stderr)
    table = harness.compare(cfgs, workers=args.workers)
    root.mkdir(parents=True, exist_ok=True)
    (root / "comparison.json").write_text(
        json.dumps(table.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(harness.format_table(table))
    return 0


def certificate_for(cfg) -> dict:
    plant = cfg.resolve_plant()
    ref = make_reference(plant.env, plant.depth, plant.t_end, cfg.dt, cfg.perturbation, cfg.seed)
    learn = LearnConfig(**dict(asdict(cfg.learn), iterations=cfg.iterations))
    _, sched, est = run_learning(learn, plant.env, ref, plant.params, plant.initial_error, certify_each=False)
    # certify the next update from the learned schedule
    rec = simulate_iteration(sched, plant.env, ref, plant.initial_error)
    est = estimate_output_map(est, rec, ref)
    nxt, _ = update_gain(sched, est, rec, learn.alpha, learn.clamp_limit)
    ops = operands_from_run(learn.alpha, true_output_maps(rec), sched.gains, nxt.gains, est.C_hat, learn.true_C)
    return harness.certificate_dict(certify_ops(ops))


def cmd_certify(args) -> int:
    cfg = harness.load_config(args.config, _overrides(args))
    doc = certificate_for(cfg)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "certificate.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _sweep_one(job):
    cfg, tag = job
    try:
        curve = harness.run_experiment(cfg)
        s = curve.summary
        return tag, s["rows"]["position"]["rmse"], s["rows"]["force"]["rmse"], "ok"
    except DivergenceError as exc:
        return tag, None, None, f"diverged at {exc.iteration}"


def cmd_sweep(args) -> int:
    base = harness.load_config(args.config, _overrides(args))
    grid = {
        "alpha": args.alpha or [base.learn.alpha],
        "clamp_limit": args.clamp or [base.learn.clamp_limit],
        "mu": args.mu or [base.learn.mu],
        "eta": args.eta or [base.learn.eta],
    }
    root = (args.out or harness.default_out_root() / "sweep")
    jobs = []
    for combo in itertools.product(*grid.values()):
        point = dict(zip(grid, combo))
        tag = "_".join(f"{k}={v:g}" for k, v in point.items())
        ov = _overrides(args)
        ov["learn"].update(point)
        ov["experiment"]["method"] = "ilc_mbk"
        cfg = harness.load_config(args.config, ov)
        cfg.out = root / tag
        jobs.append((cfg, tag))
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    root.mkdir(parents=True, exist_ok=True)
    lines = ["point,rmse_position,rmse_force,status"]
    for tag, pos, frc, status in results:
        lines.append(f"{tag},{harness._num(pos)},{harness._num(frc)},{status}")
    (root / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def cmd_presets(args) -> int:
    for name in PRESET_NAMES:
        p = preset(name)
        print(
            f"{name:<20} m={p.params.m:g} b={p.params.b:g} k={p.params.k:g}  "
            f"depth={p.depth:g} {p.units.get('position', '')}  t_end={p.t_end:g} s  [{p.channel}]"
        )
    return 0


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "certify": cmd_certify,
    "sweep": cmd_sweep,
    "presets": cmd_presets,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DivergenceError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
