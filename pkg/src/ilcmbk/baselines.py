"""Comparison methods: fixed-gain admittance and a CFDL-MFAC style ILC.

The MFAC baseline tunes the parameter input u(t) = [b/m, k/m, 1/m] per time
step across trials using compact-form dynamic linearisation in the
iteration domain:

    PPD:   Phi(t) += eta_phi (dy - Phi du) du^T / (mu_phi + |du|^2)
    input: u(t)   += rho Phi^T e(t+dt) / (lam + |Phi|^2)

with du = u_k(t) - u_{k-1}(t) and dy = y_k(t+dt) - y_{k-1}(t+dt).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .admittance import AdmittanceParams, GainConstants, build_gain, param_vector, simulate_iteration
from .ilc import DIVERGENCE_FACTOR, DivergenceError, initial_schedule
from .metrics import LearningCurve


def _default_phi0():
    return ((1e-6, 0.0, 0.0), (0.0, 1e-6, 0.0), (0.0, 0.0, 1e-6))


@dataclass(frozen=True)
class MfacConfig:
    rho: float = 0.1
    lam: float = 0.01
    eta_phi: float = 1.0
    mu_phi: float = 1e-12
    phi0: tuple = field(default_factory=_default_phi0)
    reset_threshold: float = 1e-9
    u_floor: float = 1e-6

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not 0 < self.eta_phi <= 2:
            raise ValueError("eta_phi must lie in (0, 2]")
        if not self.mu_phi > 0:
            raise ValueError("mu_phi must be positive")
        if self.reset_threshold < 0:
            raise ValueError("reset_threshold must be non-negative")
        if not self.u_floor > 0:
            raise ValueError("u_floor must be positive")
        phi0 = np.array(self.phi0, dtype=float)
        if phi0.shape != (3, 3) or not np.all(np.isfinite(phi0)):
            raise ValueError("phi0 must be a finite 3x3 matrix")
        object.__setattr__(self, "phi0", tuple(map(tuple, phi0)))


def run_pure_admittance(init: AdmittanceParams, env, ref, iterations: int, initial_error=(0.0, 0.0)):
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    sched = initial_schedule(init, ref.dt, ref.horizon)
    curve = LearningCurve()
    for _ in range(iterations):
        rec = simulate_iteration(sched, env, ref, initial_error)
        curve.append(rec)
    curve.last_record = rec
    return curve


def ppd_update(phi, du, dy, cfg: MfacConfig) -> np.ndarray:
    phi = phi + cfg.eta_phi * np.outer(dy - phi @ du, du) / (cfg.mu_phi + du @ du)
    if np.linalg.norm(phi) < cfg.reset_threshold:
        phi = np.array(cfg.phi0)
    return phi


def input_update(u, phi, e_next, cfg: MfacConfig) -> np.ndarray:
    u = u + cfg.rho * phi.T @ e_next / (cfg.lam + float(np.sum(phi * phi)))
    u[2] = max(u[2], cfg.u_floor)
    return u


def run_mfac_ilc(cfg: MfacConfig, env, ref, iterations: int, init: AdmittanceParams, initial_error=(0.0, 0.0)):
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    n = ref.horizon
    consts = GainConstants(ref.dt)
    u = np.repeat(param_vector(init)[None], n, axis=0)
    phi = np.repeat(np.array(cfg.phi0)[None], n, axis=0)
    curve = LearningCurve()
    u_prev = y_prev = None
    first = None
    for k in range(iterations):
        gains = np.array([build_gain(u[t], consts) for t in range(n)])
        rec = simulate_iteration(gains, env, ref, initial_error)
        if first is None:
            first = rec.e_inf
        elif not math.isfinite(rec.e_inf) or (first > 0 and rec.e_inf > DIVERGENCE_FACTOR * first):
            raise DivergenceError(k, rec.e_inf, first)
        curve.append(rec)
        y = rec.outputs
        u_next = u.copy()
        for t in range(n):
            if u_prev is not None:
                phi[t] = ppd_update(phi[t], u[t] - u_prev[t], y[t + 1] - y_prev[t + 1], cfg)
            u_next[t] = input_update(u[t], phi[t], rec.errors[t + 1], cfg)
        u_prev, y_prev, u = u, y, u_next
    curve.last_record = rec
    return curve
