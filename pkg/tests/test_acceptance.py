"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line with the measured value; the lines are
printed in the "acceptance criteria" section of the pytest summary.
"""

import numpy as np
import pytest

from holodyn import decomposition as dc
from holodyn import study
from holodyn.cli import main
from holodyn.linalg import dagger, frobenius_norm, frobenius_norms
from holodyn.models import reference_propagator
from holodyn.propagation import evolve_frames

from conftest import CATALOG, CONFIG_DIR, brute_force_propagator, catalog_config

HALVINGS = 4
ALGEBRAIC_TOL = 1e-12
COMMUTING_TOL = 1e-10
STRUCTURE_TOL = 1e-10
COVARIANCE_TOL = 1e-9
ORDER_BAND = 0.2


@pytest.fixture(scope="module")
def studies():
    """Convergence studies over HALVINGS halvings of each catalog grid."""
    return {name: study.convergence_study(catalog_config(name), HALVINGS) for name in CATALOG}


def fixed_dt(name, dt):
    config = catalog_config(name)
    return config.with_steps(int(round(config.t_final / dt)))


def fmt(order):
    return order if order == "exact" else f"{order:.3f}"


def test_criterion_1_identity(record_criterion):
    worst = {}
    for name in CATALOG:
        for dt in (1e-2, 1e-3):
            config = fixed_dt(name, dt)
            traj = evolve_frames(config.model, config)
            worst[(name, dt)] = float(dc.identity_residuals(traj).max())
    value = max(worst.values())
    passed = value <= ALGEBRAIC_TOL
    record_criterion(1, "F = -iU†HU at every node, all models, dt in {1e-2, 1e-3}", passed,
                     f"max {value:.2e} (≤ {ALGEBRAIC_TOL:g})")
    assert passed, worst


def test_criterion_2_circularity(record_criterion, studies):
    values = {}
    for name in CATALOG:
        for dt in (1e-2, 1e-3):
            config = fixed_dt(name, dt)
            values[(name, dt)] = dc.circularity_equivalence(evolve_frames(config.model, config))
        values[(name, "study")] = max(studies[name].column("res_circularity"))
    value = max(values.values())
    passed = value <= ALGEBRAIC_TOL
    record_criterion(2, "dynamic factor via F_jk equals dynamic factor via -iU†HU", passed,
                     f"max {value:.2e} (≤ {ALGEBRAIC_TOL:g})")
    assert passed, values


def test_criterion_3_ode_order(record_criterion, studies):
    orders = {}
    for name in ("spin_half_rotating", "tripod_dark"):
        s = studies[name]
        orders[name] = study.fitted_order(s.column("dt"), s.column("res_ode_max"))
    passed = all(o != "exact" and abs(o - 2) <= ORDER_BAND for o in orders.values())
    record_criterion(3, "dU/dt = Pdot U + U F residual is second order", passed,
                     ", ".join(f"{k}: {fmt(v)}" for k, v in orders.items()) + " (2 ± 0.2)")
    assert passed, orders


def test_criterion_4_factorization(record_criterion, studies):
    orders = {name: studies[name].fitted_order_fact for name in CATALOG}
    converging = all(study.order_at_least(o, 1.0) for o in orders.values())
    exact = {name: max(studies[name].column("res_factorization")) for name in ("zero", "static_diagonal")}
    commuting_ok = all(v <= COMMUTING_TOL for v in exact.values())
    passed = converging and commuting_ok
    record_criterion(4, "||U - W D|| converges (order ≥ 1); ≤ 1e-10 on commuting cases", passed,
                     ", ".join(f"{k}: {fmt(v)}" for k, v in orders.items())
                     + "; commuting max " + f"{max(exact.values()):.2e}")
    assert passed, (orders, exact)


def test_criterion_5_partial_isometry(record_criterion, studies):
    u_defect = 0.0
    monotone = {}
    for name in CATALOG:
        s = studies[name]
        for traj in s.trajectories:
            U = traj.U()
            u_defect = max(u_defect,
                           float(frobenius_norms(dagger(U) @ U - traj.P[0]).max()),
                           float(frobenius_norms(U @ dagger(U) - traj.P).max()))
        defects = [max(r["iso_defect_src"], r["iso_defect_tgt"]) for r in s.rows]
        monotone[name] = all(b <= 1.1 * a or b < study.ROUNDING_FLOOR for a, b in zip(defects, defects[1:]))
    passed = u_defect <= STRUCTURE_TOL and all(monotone.values())
    record_criterion(5, "U†U = P(0), UU† = P(t); holonomy isometry defect decreases", passed,
                     f"U defect {u_defect:.2e} (≤ 1e-10); monotone: {all(monotone.values())}")
    assert passed, (u_defect, monotone)


def test_criterion_6_frame_covariance(record_criterion):
    devs = {}
    for name in CATALOG:
        config = catalog_config(name)
        traj = evolve_frames(config.model, config)
        devs[name] = study.covariance_deviation(config, traj, seed=2024)
    value = max(devs.values())
    passed = value <= COVARIANCE_TOL
    record_criterion(6, "U, P, W, D and residuals invariant under frame rotation", passed,
                     f"max deviation {value:.2e} (≤ {COVARIANCE_TOL:g})")
    assert passed, devs


def test_criterion_7_integrator(record_criterion):
    config = catalog_config("spin_half_rotating")
    model = config.model
    oracle_gap = frobenius_norm(reference_propagator(model, 2.0) - brute_force_propagator(model, 2.0))
    errors, dts = [], []
    for steps in (2000, 4000, 8000, 16000):
        traj = evolve_frames(model, config.with_steps(steps))
        exact = reference_propagator(model, float(traj.times[-1])) @ traj.frames[0]
        errors.append(frobenius_norm(traj.frames[-1] - exact))
        dts.append(traj.dt)
    order = study.fitted_order(dts, errors)
    passed = dts[0] == pytest.approx(1e-3) and errors[0] <= 5e-6 and abs(order - 2) <= ORDER_BAND \
        and oracle_gap <= 1e-8
    record_criterion(7, "spin-1/2 frame error vs closed form at dt = 1e-3, t = 2", passed,
                     f"error {errors[0]:.2e} (≤ 5e-6), order {order:.3f}, oracle vs RK4 {oracle_gap:.1e}")
    assert passed


def test_criterion_8_negative_control(record_criterion, studies, tmp_path, capsys):
    results = {}
    for name, fn in (("spin_half_rotating", dc.holonomy_ode_residuals),
                     ("tripod_dark", dc.holonomy_ode_residuals),
                     ("tripod_dark", dc.dynamic_ode_residuals)):
        s = studies[name]
        dts = s.column("dt")
        forward = study.fitted_order(dts, [fn(t).max() for t in s.trajectories])
        reverse = study.fitted_order(dts, [fn(t, reverse=True).max() for t in s.trajectories])
        results[(name, fn.__name__)] = (forward, reverse)
    degraded = all(abs(f - 2) <= ORDER_BAND and r <= study.DEGRADED_ORDER for f, r in results.values())

    text = (CONFIG_DIR / "tripod_dark.yaml").read_text()
    codes = {}
    for flag in ("reverse_holonomy_order", "reverse_dynamic_order"):
        path = tmp_path / f"{flag}.yaml"
        path.write_text(text + f"  flags: {{{flag}: true}}\n")
        codes[flag] = main(["verify", str(path)])
    out = capsys.readouterr().out
    reported = all(c == 1 for c in codes.values()) and out.count("[FAIL] ordering:") == 2
    passed = degraded and reported
    detail = "; ".join(f"{n}/{f.split('_')[0]}: {fmt(a)} -> {fmt(b)}" for (n, f), (a, b) in results.items())
    record_criterion(8, "reversed ordering degrades defining-ODE order; verify reports it", passed,
                     f"{detail} (reversed ≤ {study.DEGRADED_ORDER:g}); verify exit codes {sorted(codes.values())}")
    assert passed, (results, codes)
