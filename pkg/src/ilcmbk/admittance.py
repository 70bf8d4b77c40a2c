"""Discrete admittance plant written in terms of a learnable gain matrix.

The admittance law m*ddx + b*dx + k*x = df is integrated with a semi-implicit
Euler step, which gives the state-error recursion

    s(t + dt) = U(t) (r(t) - y(t)),   U = beta u^T A + E,

with state error s = [dv, dx], output/reference triples [v, x, f] and
u = [b/m, k/m, 1/m].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# maps a reference [v, x, f] onto the state-error coordinates (D = C @ T_DC)
T_DC = -np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
T_DC.setflags(write=False)

#: relative drift of the row-2 identity beyond which a gain counts as off-manifold
MANIFOLD_RTOL = 1e-6


@dataclass(frozen=True)
class AdmittanceParams:
    m: float
    b: float
    k: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"inertia must be positive, got m={self.m}")
        if self.b < 0 or self.k < 0:
            raise ValueError("damping and stiffness must be non-negative")


@dataclass(frozen=True)
class GainConstants:
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def beta(self) -> np.ndarray:
        return np.array([[self.dt], [self.dt**2]])

    @property
    def A(self) -> np.ndarray:
        return np.diag([-1.0, -1.0, 1.0])

    @property
    def E(self) -> np.ndarray:
        return np.array([[1.0, 0.0, 0.0], [self.dt, 1.0, 0.0]])


def param_vector(p: AdmittanceParams) -> np.ndarray:
    if not p.m > 0:
        raise ValueError("inertia must be positive")
    return np.array([p.b / p.m, p.k / p.m, 1.0 / p.m])


def build_gain(u, g: GainConstants) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(1, 3)
    return g.beta @ u @ g.A + g.E


def params_from_gain(U, dt: float) -> tuple[AdmittanceParams | None, bool]:
    """Read (m, b, k) back from row 1 of a gain matrix.

    Returns the parameters (``None`` when row 1 implies a non-physical
    triple) and whether the row-2 manifold identity still holds.
    """
    U = np.asarray(U, dtype=float)
    on_manifold = manifold_drift(U, dt) <= MANIFOLD_RTOL
    if U[0, 2] <= 0:
        return None, on_manifold
    m = dt / U[0, 2]
    b = (1.0 - U[0, 0]) / dt * m
    k = -U[0, 1] / dt * m
    try:
        return AdmittanceParams(m, b, k), on_manifold
    except ValueError:
        return None, on_manifold


def manifold_drift(U, dt: float) -> float:
    """Relative violation of row2 = dt*row1 + [0, 1, 0]."""
    U = np.asarray(U, dtype=float)
    resid = U[1] - dt * U[0] - np.array([0.0, 1.0, 0.0])
    return float(np.abs(resid).max() / max(1.0, np.abs(U[1]).max()))


@dataclass(frozen=True)
class OutputMap:
    C: np.ndarray
    D: np.ndarray


def output_c(k_env: float) -> np.ndarray:
    return -np.array([[1.0, 0.0], [0.0, 1.0], [0.0, k_env]])


def output_map(k_env: float) -> OutputMap:
    if not np.isfinite(k_env):
        raise ValueError("k_env must be finite")
    C = output_c(k_env)
    return OutputMap(C, C @ T_DC)


def plant_step(U, r, y) -> np.ndarray:
    return np.asarray(U) @ (np.asarray(r, dtype=float) - np.asarray(y, dtype=float))


def observe(s, r, env) -> tuple[np.ndarray, float]:
    """Measured [v, x, f] for state error ``s`` and the secant stiffness there."""
    from .plant import force_at, secant_stiffness

    v = r[0] - s[0]
    x = r[1] - s[1]
    return np.array([v, x, force_at(env, x)]), secant_stiffness(env, x)


@dataclass
class IterationRecord:
    """One pass over the horizon: samples t = 0..n."""

    states: np.ndarray   # (n+1, 2) state errors [dv, dx]
    outputs: np.ndarray  # (n+1, 3) measured [v, x, f]
    errors: np.ndarray   # (n+1, 3) r - y
    k_env: np.ndarray    # (n+1,) secant stiffness along the run

    @property
    def horizon(self) -> int:
        return self.errors.shape[0] - 1

    @property
    def tracked(self) -> np.ndarray:
        # t = 0 is fixed by the initial condition and excluded from metrics
        return self.errors[1:]

    @property
    def rmse_position(self) -> float:
        return float(np.sqrt(np.mean(self.tracked[:, 1] ** 2)))

    @property
    def rmse_force(self) -> float:
        return float(np.sqrt(np.mean(self.tracked[:, 2] ** 2)))

    @property
    def e_inf(self) -> float:
        return float(np.abs(self.tracked).max())


def simulate_iteration(gains, env, ref, s0) -> IterationRecord:
    """Run the plant over one trial with the time-indexed gains ``gains``.

    ``gains`` is a sequence of n 2x3 matrices (a GainSchedule or a stacked
    array); ``ref`` has n + 1 samples.
    """
    G = np.asarray(getattr(gains, "gains", gains), dtype=float)
    R = ref.samples
    n = R.shape[0] - 1
    if G.shape != (n, 2, 3):
        raise ValueError(f"gain schedule of shape {G.shape} does not match horizon {n}")
    states = np.empty((n + 1, 2))
    outputs = np.empty((n + 1, 3))
    k_env = np.empty(n + 1)
    s = np.array(s0, dtype=float).reshape(2)
    for t in range(n + 1):
        states[t] = s
        outputs[t], k_env[t] = observe(s, R[t], env)
        if t < n:
            s = G[t] @ (R[t] - outputs[t])
    errors = R - outputs
    if not np.all(np.isfinite(errors)):
        raise FloatingPointError("non-finite tracking error during simulation")
    return IterationRecord(states, outputs, errors, k_env)
