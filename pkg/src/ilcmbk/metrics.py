"""Learning-curve metrics: per-channel RMSE and maximum descent rate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def rmse(errors) -> float:
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("rmse of an empty sequence")
    return float(np.sqrt(np.mean(e * e)))


def mdr(rmse_curve) -> float:
    """Maximum descent rate: the largest single-iteration drop of a curve.

    Negative when the curve only rises. This is the one place the metric
    is defined; swap it here if a different reading is wanted.
    """
    c = [float(x) for x in rmse_curve]
    if len(c) < 2:
        raise ValueError("mdr needs at least two points")
    return max(a - b for a, b in zip(c, c[1:]))


@dataclass
class LearningCurve:
    """Per-iteration metrics of one run plus a few summary accessors."""

    rmse_position: list = field(default_factory=list)
    rmse_force: list = field(default_factory=list)
    e_inf: list = field(default_factory=list)
    cert_norm_gm: list = field(default_factory=list)
    clamped: list = field(default_factory=list)
    certificate: object = None
    last_record: object = None
    summary: dict | None = None

    def append(self, record, cert_norm_gm: float = math.nan, clamped: int = 0):
        self.rmse_position.append(record.rmse_position)
        self.rmse_force.append(record.rmse_force)
        self.e_inf.append(record.e_inf)
        self.cert_norm_gm.append(cert_norm_gm)
        self.clamped.append(clamped)

    def __len__(self) -> int:
        return len(self.rmse_force)

    @property
    def final_rmse_position(self) -> float:
        return self.rmse_position[-1]

    @property
    def final_rmse_force(self) -> float:
        return self.rmse_force[-1]

    @property
    def mdr_position(self) -> float:
        return mdr(self.rmse_position) if len(self) >= 2 else math.nan

    @property
    def mdr_force(self) -> float:
        return mdr(self.rmse_force) if len(self) >= 2 else math.nan
