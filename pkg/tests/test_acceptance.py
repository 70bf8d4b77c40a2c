"""End-to-end acceptance criteria, one test each; a PASS/FAIL line per
criterion is printed in the terminal summary."""
import time

import numpy as np
from conftest import record_acceptance
from ilcmbk.admittance import IterationRecord, output_c
from ilcmbk.cli import main
from ilcmbk.convergence import (
    TransferOperands,
    assemble_G,
    bound_eq33,
    gm_norm,
    lyapunov,
    row_sum_closed_form,
)
from ilcmbk.ilc import EstimatorState, LearnConfig, estimate_output_map, initial_schedule, run_learning
from ilcmbk.numerics import inf_norm, pinv
from ilcmbk.plant import PRESET_NAMES, EnvironmentModel, make_reference, preset

NA_GRID = np.linspace(0.1, 0.9, 10)
NC_GRID = np.linspace(0.05, 0.45, 10)


def check(number, title, ok, detail=""):
    record_acceptance(number, title, bool(ok), detail)
    assert ok, detail


def test_1_norm_domination():
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    worst = -np.inf
    for _ in range(200):
        n = int(rng.integers(2, 11))
        scale = rng.uniform(0.05, 0.6)
        ops = TransferOperands(
            rng.normal(scale=scale, size=(3, 3)),
            tuple(rng.normal(scale=scale, size=(3, 3)) for _ in range(n)),
            tuple(rng.normal(scale=scale, size=(3, 3)) for _ in range(n)),
        )
        worst = max(worst, inf_norm(assemble_G(ops)) - gm_norm(ops))
    elapsed = time.perf_counter() - start
    check(1, "||G|| <= ||G_m|| on 200 random instances", worst <= 1e-9 and elapsed < 5,
          f"max excess {worst:.3g}, {elapsed:.2f} s")


def scalar_ops(n, na, nc):
    return TransferOperands([[na]], tuple([[nc]] for _ in range(n)), tuple([[nc]] for _ in range(n)))


def test_2_closed_form_bound():
    n = 10
    mismatches = violations = 0
    worst = None
    for na in NA_GRID:
        for nc in NC_GRID:
            norm = gm_norm(scalar_ops(n, na, nc))
            closed = max(row_sum_closed_form(na, nc, i) for i in range(1, n + 1))
            if abs(norm - closed) > 1e-9:
                mismatches += 1
            if bound_eq33(na, nc) < norm:
                violations += 1
                if worst is None:
                    worst = (na, nc, norm, bound_eq33(na, nc))
    detail = f"{mismatches}/100 row-sum mismatches, {violations}/100 bound violations"
    if worst:
        detail += f"; e.g. n_alpha={worst[0]:.3g} n_cu={worst[1]:.3g}: ||G_m||={worst[2]:.4f} > {worst[3]:.4f}"
    check(2, "closed-form row sum and bound over the 10x10 grid", mismatches == 0 and violations == 0, detail)


def test_3_threshold():
    at_half = [bound_eq33(na, 0.5) for na in NA_GRID]
    below = [bound_eq33(na, nc) for na in NA_GRID for nc in NC_GRID]
    check(3, "bound is exactly 1 at n_cu = 1/2 and < 1 below",
          all(b == 1.0 for b in at_half) and all(b < 1.0 for b in below),
          f"max below-threshold bound {max(below):.6f}")


def test_4_desk_convergence():
    p = preset("auto_reset_button")
    env = EnvironmentModel.linear(1000.0)
    ref = make_reference(env, p.depth, p.t_end, 0.05)
    start = time.perf_counter()
    curve, _, _ = run_learning(LearnConfig(alpha=0.3, iterations=200), env, ref, p.params, p.initial_error)
    elapsed = time.perf_counter() - start
    ratio = curve.final_rmse_force / curve.rmse_force[0]
    k0 = lyapunov(curve, rtol=1e-12).monotone_from
    check(4, "linear plant: RMSE ratio < 1e-3, V monotone from k0 <= 10",
          ratio < 1e-3 and k0 <= 10 and elapsed < 10,
          f"ratio {ratio:.3g}, k0 = {k0}, {elapsed:.2f} s")


def test_5_method_ordering(protocol_runs):
    runs, elapsed = protocol_runs
    held = [t for t in PRESET_NAMES if runs[t, "ilc_mbk"] < runs[t, "mfac"] < runs[t, "admittance"]]
    missed = sorted(set(PRESET_NAMES) - set(held))
    check(5, "ILC-MBK < MFAC < admittance on >= 3 of 4 presets",
          len(held) >= 3 and elapsed < 120,
          f"{len(held)}/4 hold{'; missed ' + ', '.join(missed) if missed else ''}; {elapsed:.1f} s")


def test_6_zero_error_fixed_point():
    bad = []
    for name in PRESET_NAMES:
        p = preset(name)
        ref = make_reference(p.env, p.depth, p.t_end, 0.05)
        curve, sched, _ = run_learning(LearnConfig(iterations=50), p.env, ref, p.params, (0.0, 0.0))
        start = initial_schedule(p.params, 0.05, ref.horizon)
        if any(curve.e_inf) or any(curve.rmse_position) or not np.array_equal(sched.gains, start.gains):
            bad.append(name)
        if any(v != 0.0 for v in (curve.last_record.errors.ravel())):
            bad.append(name)
    check(6, "zero-error fixed point holds exactly for 50 trials", not bad, ", ".join(bad))


def _project(c_hat, c_true, phi, mu, eta):
    C = output_c(0.0)
    C[2, 1] = c_hat
    est = EstimatorState(np.array([C, C]), mu, eta)
    ref = np.array([[0.0, -phi, 0.0]] * 2)
    rec = IterationRecord(np.zeros((2, 2)), np.array([[0.0, -phi, c_true * phi]] * 2), np.zeros((2, 3)), np.zeros(2))
    errs = [abs(c_true * phi - c_hat * phi)]
    for _ in range(100):
        est = estimate_output_map(est, rec, ref)
        errs.append(abs(c_true * phi - est.C_hat[0, 2, 1] * phi))
    return errs


def test_7_estimator_projection():
    rng = np.random.default_rng(7)
    rises = stalls = 0
    for _ in range(100):
        c_true, c0 = rng.uniform(-5, 5, size=2)
        phi = rng.uniform(0.05, 20) * rng.choice([-1, 1])
        eta = 2.0 - rng.uniform(0.0, 2.0)  # (0, 2]
        errs = _project(c0, c_true, phi, rng.uniform(1e-6, 1.0), eta)
        rises += any(b > a * (1 + 1e-12) + 1e-15 for a, b in zip(errs, errs[1:]))
        # persistently exciting instance
        phi = rng.uniform(1.0, 20) * rng.choice([-1, 1])
        errs = _project(c0, c_true, phi, rng.uniform(1e-3, 0.1), rng.uniform(0.25, 1.75))
        stalls += errs[0] > 0 and errs[-1] >= 1e-6 * errs[0]
    check(7, "projection estimator error non-increasing and < 1e-6 under excitation",
          rises == 0 and stalls == 0, f"{rises} rises, {stalls} stalls in 100 instances")


def test_8_penrose():
    rng = np.random.default_rng(8)
    worst = 0.0
    for i in range(1000):
        if i % 4 == 0:
            m = np.outer(rng.normal(size=3), rng.normal(size=2))  # rank 1
        else:
            m = rng.normal(size=(3, 2)) * 10.0 ** rng.uniform(-3, 3)
        p = pinv(m)
        mp, pm = m @ p, p @ m
        worst = max(
            worst,
            np.abs(m @ p @ m - m).max() / np.abs(m).max(),
            np.abs(p @ m @ p - p).max() / np.abs(p).max(),
            np.abs(mp - mp.T).max() / max(np.abs(mp).max(), 1.0),
            np.abs(pm - pm.T).max() / max(np.abs(pm).max(), 1.0),
        )
    check(8, "four Penrose conditions on 1000 random 3x2 matrices", worst <= 1e-8, f"worst residual {worst:.2g}")


def test_9_determinism(tmp_path, capsys):
    variants = {
        "ilc_mbk defaults": [],
        "mfac, inconsistent reference": ["--method", "mfac", "--inconsistent", "0.05", "--seed", "3"],
    }
    differing = []
    for label, extra in variants.items():
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / label.replace(" ", "_").replace(",", "") / rep
            assert main(["run", "--task", "emergency_press", "--out", str(out)] + extra) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if outs[0] != outs[1] or len(outs[0]) < 2:
            differing.append(label)
    check(9, "repeated run produces byte-identical CSV/JSON", not differing,
          "; ".join(differing) or f"{len(variants)} invocations, each run twice")
