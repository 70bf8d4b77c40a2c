"""ILC-MBK: trial-to-trial learning of the admittance gain matrix.

Each trial runs the plant with the current gain schedule, refines the
per-time-step output-map estimate C_hat(t) with a normalised projection
step, and then corrects every gain with the rank-one update

    U(t) <- U(t) + alpha * pinv(C_hat(t+dt)) e(t+dt) pinv(e(t)),

limited in infinity norm to ``clamp_limit``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .admittance import (
    T_DC,
    AdmittanceParams,
    GainConstants,
    IterationRecord,
    build_gain,
    output_c,
    param_vector,
    simulate_iteration,
)
from .convergence import certify, gm_norm, operands_from_run
from .metrics import LearningCurve
from .numerics import ZERO_GUARD, inf_norm, pinv, vec_pinv

log = logging.getLogger(__name__)

#: abort once ||e_k||_inf exceeds this multiple of the first trial's value
DIVERGENCE_FACTOR = 1e6

__all__ = [
    "DivergenceError",
    "EstimatorState",
    "GainSchedule",
    "IterationRecord",
    "LearnConfig",
    "estimate_output_map",
    "initial_estimator",
    "initial_schedule",
    "run_learning",
    "update_gain",
]


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, e_inf: float, initial: float):
        self.iteration = iteration
        self.e_inf = e_inf
        self.initial = initial
        super().__init__(
            f"tracking error diverged at iteration {iteration}: "
            f"||e||_inf = {e_inf:.6g} (first trial {initial:.6g})"
        )


@dataclass(frozen=True)
class GainSchedule:
    dt: float
    gains: np.ndarray  # (n, 2, 3)

    def __post_init__(self):
        g = np.array(self.gains, dtype=float)
        if g.ndim != 3 or g.shape[1:] != (2, 3) or g.shape[0] < 1:
            raise ValueError(f"gain schedule must be (n, 2, 3), got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("gain schedule has non-finite entries")
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)

    def __len__(self) -> int:
        return self.gains.shape[0]


@dataclass(frozen=True)
class EstimatorState:
    C_hat: np.ndarray  # (n+1, 3, 2)
    mu: float
    eta: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 0 < self.eta <= 2:
            raise ValueError("eta must lie in (0, 2]")
        c = np.array(self.C_hat, dtype=float)
        if c.ndim != 3 or c.shape[1:] != (3, 2):
            raise ValueError(f"C_hat must be a (n+1, 3, 2) stack, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "C_hat", c)


@dataclass(frozen=True)
class LearnConfig:
    alpha: float = 0.3
    iterations: int = 750
    clamp_limit: float = 10.0
    mu: float = 1e-9
    eta: float = 1.0
    seed: int = 0
    true_C: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not self.clamp_limit > 0:
            raise ValueError("clamp_limit must be positive")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 0 < self.eta <= 2:
            raise ValueError("eta must lie in (0, 2]")


@dataclass
class ClampReport:
    clamped_steps: list = field(default_factory=list)
    max_norm: float = 0.0

    @property
    def count(self) -> int:
        return len(self.clamped_steps)


def initial_schedule(init: AdmittanceParams, dt: float, n: int) -> GainSchedule:
    U = build_gain(param_vector(init), GainConstants(dt))
    return GainSchedule(dt, np.repeat(U[None], n, axis=0))


def initial_estimator(env, n: int, mu: float, eta: float) -> EstimatorState:
    """Start every C_hat(t) from the contact slope at the origin."""
    C0 = output_c(env.origin_slope())
    return EstimatorState(np.repeat(C0[None], n + 1, axis=0), mu, eta)


def estimate_output_map(est: EstimatorState, prev: IterationRecord, ref) -> EstimatorState:
    """Normalised projection step of C_hat(t) towards the last trial's data."""
    samples = getattr(ref, "samples", ref)
    phi = prev.states + samples @ T_DC.T
    if phi.shape[0] != est.C_hat.shape[0]:
        raise ValueError("estimator and record horizons differ")
    resid = prev.outputs - np.einsum("tij,tj->ti", est.C_hat, phi)
    scale = est.eta / (est.mu + np.einsum("ti,ti->t", phi, phi))
    C_new = est.C_hat + scale[:, None, None] * resid[:, :, None] * phi[:, None, :]
    return EstimatorState(C_new, est.mu, est.eta)


def update_gain(
    U_k: GainSchedule,
    est: EstimatorState,
    rec: IterationRecord,
    alpha: float,
    clamp_limit: float = 10.0,
) -> tuple[GainSchedule, ClampReport]:
    n = len(U_k)
    if rec.errors.shape[0] != n + 1 or est.C_hat.shape[0] != n + 1:
        raise ValueError("gain schedule, estimator and record horizons differ")
    gains = U_k.gains.copy()
    report = ClampReport()
    E = rec.errors
    for t in range(n):
        e_now, e_next = E[t], E[t + 1]
        if math.sqrt(e_now @ e_now) <= ZERO_GUARD or not e_next.any():
            continue
        corr = alpha * np.outer(pinv(est.C_hat[t + 1]) @ e_next, vec_pinv(e_now))
        nrm = inf_norm(corr)
        report.max_norm = max(report.max_norm, nrm)
        if nrm > clamp_limit:
            corr *= clamp_limit / nrm
            report.clamped_steps.append(t)
        gains[t] += corr
    return GainSchedule(U_k.dt, gains), report


def true_output_maps(rec: IterationRecord) -> np.ndarray:
    return np.array([output_c(k) for k in rec.k_env])


def run_learning(
    cfg: LearnConfig,
    env,
    ref,
    init: AdmittanceParams,
    initial_error=(0.0, 0.0),
    certify_each: bool = True,
):
    """Run ``cfg.iterations`` trials of ILC-MBK.

    Returns the learning curve, the final gain schedule and the final
    estimator. Trial k is simulated with U_k; C_hat and U are then updated
    from that trial. The curve's ``cert_norm_gm`` column holds ||G_m||_inf
    for the step U_k -> U_{k+1} (NaN when the horizon is too short).
    """
    n = ref.horizon
    sched = initial_schedule(init, ref.dt, n)
    est = initial_estimator(env, n, cfg.mu, cfg.eta)
    curve = LearningCurve()
    first = None
    for k in range(cfg.iterations):
        rec = simulate_iteration(sched, env, ref, initial_error)
        if first is None:
            first = rec.e_inf
        elif not math.isfinite(rec.e_inf) or (
            first > 0 and rec.e_inf > DIVERGENCE_FACTOR * first
        ):
            raise DivergenceError(k, rec.e_inf, first)
        est = estimate_output_map(est, rec, ref)
        new_sched, report = update_gain(sched, est, rec, cfg.alpha, cfg.clamp_limit)
        cert_val = math.nan
        if certify_each and n >= 2:
            ops = operands_from_run(
                cfg.alpha, true_output_maps(rec), sched.gains, new_sched.gains, est.C_hat, cfg.true_C
            )
            cert_val = gm_norm(ops)
            if k == cfg.iterations - 1:
                curve.certificate = certify(ops)
        curve.append(rec, cert_val, report.count)
        if report.count:
            log.debug("iteration %d: %d corrections clamped", k, report.count)
        sched = new_sched
    curve.last_record = rec
    return curve, sched, est
