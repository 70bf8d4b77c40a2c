"""Synthetic rigid-contact force laws and reference trajectories.

Each task is described by a piecewise-linear force-position law anchored at
the origin. Built-in presets live as YAML files under ``configs/presets``;
users can point the harness at their own file with the same schema.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .admittance import AdmittanceParams

PRESET_NAMES = (
    "auto_reset_button",
    "second_gear_knob",
    "emergency_press",
    "emergency_reset",
)

# below this deflection the secant F(x)/x is replaced by the origin slope
SECANT_EPS = 1e-9


@dataclass(frozen=True)
class EnvironmentModel:
    breakpoints: tuple[tuple[float, float], ...]
    name: str = "custom"

    def __post_init__(self):
        pts = tuple((float(x), float(f)) for x, f in self.breakpoints)
        if len(pts) < 2:
            raise ValueError("a force law needs at least two breakpoints")
        if pts[0] != (0.0, 0.0):
            raise ValueError("the first breakpoint must be (0, 0)")
        xs = [p[0] for p in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("breakpoint positions must be strictly increasing")
        if not np.all(np.isfinite(pts)):
            raise ValueError("breakpoints must be finite")
        object.__setattr__(self, "breakpoints", pts)

    @classmethod
    def linear(cls, stiffness: float, reach: float = 1.0, name: str = "linear"):
        return cls(((0.0, 0.0), (reach, stiffness * reach)), name=name)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p[0] for p in self.breakpoints])

    @property
    def forces(self) -> np.ndarray:
        return np.array([p[1] for p in self.breakpoints])

    def slopes(self) -> np.ndarray:
        return np.diff(self.forces) / np.diff(self.positions)

    def origin_slope(self) -> float:
        """Tangent stiffness at x = 0 (slope of the first segment)."""
        return float(self.slopes()[0])


def force_at(env: EnvironmentModel, x: float) -> float:
    """Piecewise-linear force, extrapolated with the end-segment slopes."""
    pts = env.breakpoints
    if x <= pts[0][0]:
        (x0, f0), (x1, f1) = pts[0], pts[1]
    elif x >= pts[-1][0]:
        (x0, f0), (x1, f1) = pts[-2], pts[-1]
        return f1 + (f1 - f0) / (x1 - x0) * (x - x1)
    else:
        i = 1
        while pts[i][0] < x:
            i += 1
        (x0, f0), (x1, f1) = pts[i - 1], pts[i]
    return f0 + (f1 - f0) / (x1 - x0) * (x - x0)


def secant_stiffness(env: EnvironmentModel, x: float) -> float:
    if abs(x) < SECANT_EPS:
        return env.origin_slope()
    return force_at(env, x) / x


@dataclass(frozen=True)
class ReferenceTrajectory:
    dt: float
    samples: np.ndarray  # (n + 1, 3) rows of [v_r, x_r, f_r]
    consistent: bool = True

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] != 3 or s.shape[0] < 2:
            raise ValueError("reference needs at least two [v, x, f] samples")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def horizon(self) -> int:
        return self.samples.shape[0] - 1

    def __len__(self) -> int:
        return self.samples.shape[0]


def min_jerk(depth: float, t_end: float, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tau = np.clip(t / t_end, 0.0, 1.0)
    x = depth * (10 * tau**3 - 15 * tau**4 + 6 * tau**5)
    v = depth / t_end * (30 * tau**2 - 60 * tau**3 + 30 * tau**4)
    return v, x


def make_reference(
    env: EnvironmentModel,
    depth: float,
    t_end: float,
    dt: float,
    perturbation: float = 0.0,
    seed: int = 0,
) -> ReferenceTrajectory:
    """Minimum-jerk approach to ``depth`` with the force read off the law.

    A nonzero ``perturbation`` adds seeded Gaussian noise to the force
    reference, scaled by the peak reference force, and clears the
    ``consistent`` flag.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    n = int(round(t_end / dt))
    if n < 2:
        raise ValueError("t_end must cover at least two control periods")
    t = np.arange(n + 1) * dt
    v, x = min_jerk(depth, n * dt, t)
    f = np.array([force_at(env, xi) for xi in x])
    consistent = True
    if perturbation:
        rng = np.random.default_rng(seed)
        scale = perturbation * max(float(np.abs(f).max()), 1e-12)
        f = f + scale * rng.standard_normal(f.shape)
        consistent = False
    return ReferenceTrajectory(dt, np.column_stack([v, x, f]), consistent)


@dataclass(frozen=True)
class Preset:
    name: str
    params: AdmittanceParams
    env: EnvironmentModel
    depth: float
    t_end: float
    initial_error: tuple[float, float] = (0.0, 0.0)
    channel: str = "force"
    units: dict = field(default_factory=dict)
    description: str = ""


def preset_from_dict(d: dict) -> Preset:
    try:
        adm = d["admittance"]
        ref = d["reference"]
        return Preset(
            name=str(d["name"]),
            params=AdmittanceParams(float(adm["m"]), float(adm["b"]), float(adm["k"])),
            env=EnvironmentModel(tuple(tuple(p) for p in d["breakpoints"]), name=str(d["name"])),
            depth=float(ref["depth"]),
            t_end=float(ref["t_end"]),
            initial_error=tuple(float(v) for v in d.get("initial_error", (0.0, 0.0))),
            channel=str(d.get("channel", "force")),
            units=dict(d.get("units", {})),
            description=str(d.get("description", "")).strip(),
        )
    except KeyError as exc:
        raise ValueError(f"preset is missing field {exc}") from None


def load_preset_file(path) -> Preset:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if "plant" in data:
        data = data["plant"]
    return preset_from_dict(data)


def preset(name: str) -> Preset:
    if name not in PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    ref = resources.files("ilcmbk") / "configs" / "presets" / f"{name}.yaml"
    return preset_from_dict(yaml.safe_load(ref.read_text(encoding="utf-8")))


def config_dir() -> Path:
    return Path(str(resources.files("ilcmbk") / "configs"))
