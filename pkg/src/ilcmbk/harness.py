"""Experiment orchestration: config loading, runs, persistence, comparison.

A run writes three files into its own directory:

* ``curve.csv``: one row per trial,
  ``iteration,rmse_position,rmse_force,e_inf,cert_norm_gm``, every value in
  positional decimal notation with 17 significant digits;
* ``summary.json``: final RMSE and MDR per channel, laid out one row per
  channel (position, then force or torque);
* ``certificate.json``: the last ILC-MBK step's certificate (ILC-MBK only).
"""
from __future__ import annotations

import copy
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .baselines import MfacConfig, run_mfac_ilc, run_pure_admittance
from .ilc import LearnConfig, run_learning
from .metrics import LearningCurve, mdr, rmse
from .plant import PRESET_NAMES, Preset, config_dir, make_reference, preset, preset_from_dict

__all__ = [
    "CSV_HEADER",
    "METHODS",
    "ExperimentConfig",
    "LearningCurve",
    "compare",
    "format_table",
    "load_config",
    "mdr",
    "read_curve_csv",
    "rmse",
    "run_experiment",
]

METHODS = ("ilc_mbk", "mfac", "admittance")
CSV_HEADER = "iteration,rmse_position,rmse_force,e_inf,cert_norm_gm"
OUT_ENV = "ILCMBK_OUT"


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "results"))


@dataclass
class ExperimentConfig:
    task: str = "auto_reset_button"
    method: str = "ilc_mbk"
    dt: float = 0.05
    iterations: int = 750
    seed: int = 0
    perturbation: float = 0.0
    learn: LearnConfig = field(default_factory=LearnConfig)
    mfac: MfacConfig = field(default_factory=MfacConfig)
    plant: Preset | None = None
    out: Path | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.plant is None and self.task not in PRESET_NAMES:
            raise ValueError(f"unknown task {self.task!r}; choose from {', '.join(PRESET_NAMES)}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError("iterations must be a positive integer")
        if self.perturbation < 0:
            raise ValueError("perturbation must be non-negative")

    def resolve_plant(self) -> Preset:
        return self.plant if self.plant is not None else preset(self.task)

    @property
    def out_dir(self) -> Path:
        if self.out is not None:
            return Path(self.out)
        return default_out_root() / f"{self.task}_{self.method}"


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in (over or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _coerce(name: str, value, default):
    # YAML reads 1.0e12 (no exponent sign) as a string; accept it as a number
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"{name} must be true or false, got {value!r}")
        return value
    if isinstance(default, (int, float)) and not isinstance(value, bool):
        try:
            num = float(value)
        except (TypeError, ValueError):
            raise ValueError(f"{name} must be a number, got {value!r}") from None
        if isinstance(default, int):
            if num != int(num):
                raise ValueError(f"{name} must be an integer, got {value!r}")
            return int(num)
        return num
    return value


def _build(cls, data: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    return cls(**{k: _coerce(k, v, known[k].default) for k, v in data.items()})


def default_tree() -> dict:
    with open(config_dir() / "defaults.yaml", encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def config_from_tree(tree: dict) -> ExperimentConfig:
    exp = dict(tree.get("experiment", {}))
    for key in ("iterations", "seed"):
        if key in exp:
            exp[key] = _coerce(key, exp[key], 0)
    learn = dict(tree.get("learn", {}))
    learn["iterations"] = exp.get("iterations", 750)
    learn["seed"] = exp.get("seed", 0)
    plant = tree.get("plant")
    if plant is not None:
        plant = preset_from_dict(plant)
        exp.setdefault("task", plant.name)
    if "out" in exp and exp["out"] is not None:
        exp["out"] = Path(exp["out"])
    return _build(
        ExperimentConfig,
        dict(
            exp,
            learn=_build(LearnConfig, learn),
            mfac=_build(MfacConfig, dict(tree.get("mfac", {}))),
            plant=plant,
        ),
    )


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the YAML file at ``path``, then ``overrides`` (same tree)."""
    tree = default_tree()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ValueError(f"{path}: expected a key/value tree")
        tree = _merge(tree, user)
    return config_from_tree(_merge(tree, overrides or {}))


def _num(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return np.format_float_positional(float(x), precision=17, unique=False, fractional=False, trim="k")


def _json_num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def write_curve_csv(curve: LearningCurve, path: Path) -> None:
    lines = [CSV_HEADER]
    for k in range(len(curve)):
        row = (curve.rmse_position[k], curve.rmse_force[k], curve.e_inf[k], curve.cert_norm_gm[k])
        lines.append(",".join([str(k)] + [_num(v) for v in row]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_curve_csv(path) -> dict:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if text[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {text[0]!r}")
    cols = {name: [] for name in CSV_HEADER.split(",")}
    for line in text[1:]:
        for name, val in zip(cols, line.split(",")):
            cols[name].append(int(val) if name == "iteration" else float(val))
    return cols


def summarize(cfg: ExperimentConfig, curve: LearningCurve, plant: Preset, horizon: int) -> dict:
    units = plant.units or {}

    def channel(label, series, unit):
        return {
            "label": label,
            "unit": unit,
            "rmse": _json_num(series[-1]),
            "rmse_initial": _json_num(series[0]),
            "mdr": _json_num(mdr(series)) if len(series) >= 2 else None,
        }

    cert = curve.certificate
    return {
        "task": plant.name,
        "method": cfg.method,
        "dt": cfg.dt,
        "iterations": cfg.iterations,
        "horizon": horizon,
        "seed": cfg.seed,
        "consistent_reference": cfg.perturbation == 0,
        "rows": {
            "position": channel("position", curve.rmse_position, units.get("position", "")),
            "force": channel(plant.channel, curve.rmse_force, units.get("force", "")),
        },
        "clamped_corrections": int(sum(curve.clamped)),
        "certificate": None if cert is None else certificate_dict(cert),
    }


def certificate_dict(cert) -> dict:
    d = asdict(cert)
    for key in ("norm_G", "norm_Gm", "bound_eq33", "n_alpha", "n_cu"):
        d[key] = _json_num(d[key])
    return d


def execute(cfg: ExperimentConfig) -> tuple[LearningCurve, Preset, int]:
    """Run the configured method without touching the filesystem."""
    plant = cfg.resolve_plant()
    ref = make_reference(plant.env, plant.depth, plant.t_end, cfg.dt, cfg.perturbation, cfg.seed)
    if cfg.method == "ilc_mbk":
        learn = LearnConfig(**dict(asdict(cfg.learn), iterations=cfg.iterations, seed=cfg.seed))
        curve, _, _ = run_learning(learn, plant.env, ref, plant.params, plant.initial_error)
    elif cfg.method == "mfac":
        curve = run_mfac_ilc(cfg.mfac, plant.env, ref, cfg.iterations, plant.params, plant.initial_error)
    else:
        curve = run_pure_admittance(plant.params, plant.env, ref, cfg.iterations, plant.initial_error)
    return curve, plant, ref.horizon


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def run_experiment(cfg: ExperimentConfig) -> LearningCurve:
    """Run one experiment and persist its CSV/JSON outputs."""
    curve, plant, horizon = execute(cfg)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_curve_csv(curve, out / "curve.csv")
    summary = summarize(cfg, curve, plant, horizon)
    (out / "summary.json").write_text(_dump(summary), encoding="utf-8")
    if summary["certificate"] is not None:
        (out / "certificate.json").write_text(_dump(summary["certificate"]), encoding="utf-8")
    curve.summary = summary
    return curve


def _run_summary(cfg: ExperimentConfig) -> dict:
    curve = run_experiment(cfg)
    return curve.summary


@dataclass
class ComparisonTable:
    rows: list  # one dict per (task, channel)

    def to_dict(self) -> dict:
        return {"rows": self.rows}


def compare(cfgs, workers: int = 1) -> ComparisonTable:
    """Run every config and tabulate final RMSE / MDR per task and channel.

    Configs are grouped by task; a group must agree on dt and iterations
    and may hold each method at most once. The lowest final RMSE in each
    row is flagged as best.
    """
    cfgs = list(cfgs)
    if not cfgs:
        raise ValueError("nothing to compare")
    groups: dict[str, list] = {}
    for cfg in cfgs:
        groups.setdefault(cfg.resolve_plant().name, []).append(cfg)
    for task, group in groups.items():
        if len({(c.dt, c.iterations) for c in group}) != 1:
            raise ValueError(f"{task}: configs disagree on dt or iterations")
        methods = [c.method for c in group]
        if len(set(methods)) != len(methods):
            raise ValueError(f"{task}: method listed twice")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_run_summary, cfgs))
    else:
        summaries = [_run_summary(c) for c in cfgs]

    rows = []
    for task in groups:
        mine = [s for s in summaries if s["task"] == task]
        for chan in ("position", "force"):
            cells = {
                s["method"]: {"rmse": s["rows"][chan]["rmse"], "mdr": s["rows"][chan]["mdr"]}
                for s in mine
            }
            finite = {m: c["rmse"] for m, c in cells.items() if c["rmse"] is not None}
            best = min(finite, key=finite.get) if finite else None
            rows.append(
                {
                    "task": task,
                    "channel": mine[0]["rows"][chan]["label"],
                    "methods": cells,
                    "best": best,
                }
            )
    return ComparisonTable(rows)


def format_table(table: ComparisonTable) -> str:
    methods = [m for m in METHODS if any(m in r["methods"] for r in table.rows)]
    head = f"{'task':<20}{'channel':<10}" + "".join(f"{m + ' RMSE':>18}{m + ' MDR':>18}" for m in methods)
    lines = [head, "-" * len(head)]
    for r in table.rows:
        cells = []
        for m in methods:
            c = r["methods"].get(m)
            if c is None:
                cells += ["", ""]
                continue
            mark = "*" if r["best"] == m else " "
            cells += [f"{_fmt(c['rmse'])}{mark}", _fmt(c["mdr"])]
        lines.append(f"{r['task']:<20}{r['channel']:<10}" + "".join(f"{c:>18}" for c in cells))
    lines.append("* lowest final RMSE in the row")
    return "\n".join(lines)


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.6e}"
