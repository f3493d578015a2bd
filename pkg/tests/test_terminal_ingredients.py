import numpy as np
import pytest

from psmpc.errors import NotStabilizable
from psmpc.lti_model import ContinuousLti, DiscreteModel, zoh_discretize
from psmpc.polytope import contains, contains_many, from_box
from psmpc.terminal_ingredients import (
    CERT_TOL,
    check_assumption5,
    compute_moas,
    dare_residual,
    lqr_gain,
    solve_dare,
    synthesize_kit,
)

GOLDEN = (1 + np.sqrt(5)) / 2


def test_dare_deadbeat_plant():
    Q = np.diag([2.0, 3.0])
    P = solve_dare(np.zeros((2, 2)), np.eye(2), Q, np.eye(2))
    assert np.allclose(P, Q, atol=1e-12)


def test_dare_scalar_quadratic_formula():
    # a=0.5, b=1, q=r=1: p^2 = 0.25 p + 1 -> p = (0.25 + sqrt(4.0625)) / 2
    P = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])
    expected = (0.25 + np.sqrt(4.0625)) / 2
    assert abs(P[0, 0] - expected) < 1e-10
    assert abs(P[0, 0] - 1.13278) < 1e-5


def test_dare_golden_ratio_fixed_point():
    P = solve_dare([[1.0]], [[1.0]], [[1.0]], [[1.0]])
    assert abs(P[0, 0] - GOLDEN) < 1e-10
    K = lqr_gain(P, [[1.0]], [[1.0]], [[1.0]])
    assert abs(K[0, 0] - GOLDEN / (1 + GOLDEN)) < 1e-10


def test_dare_residual_small():
    rng = np.random.default_rng(2)
    Ad = 0.9 * rng.standard_normal((3, 3)) / np.sqrt(3)
    Bd = rng.standard_normal((3, 2))
    Q = np.diag([1.0, 2.0, 0.5])
    R = np.eye(2)
    P = solve_dare(Ad, Bd, Q, R)
    assert dare_residual(P, Ad, Bd, Q, R) <= 1e-9


def test_lqr_gain_deadbeat():
    P = solve_dare(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))
    K = lqr_gain(P, np.zeros((2, 2)), np.eye(2), np.eye(2))
    assert np.allclose(K, 0.0)


def test_lqr_gain_unstabilizable():
    # unreachable unstable mode
    Ad = np.array([[2.0, 0.0], [0.0, 0.5]])
    Bd = np.array([[0.0], [1.0]])
    with pytest.raises(NotStabilizable):
        solve_dare(Ad, Bd, np.eye(2), np.eye(1))


def double_integrator_kit(dt=0.2):
    sys = ContinuousLti(A=[[0.0, 1.0], [0.0, 0.0]], B=[[0.0], [1.0]])
    model = zoh_discretize(sys, dt)
    X = from_box([-1.0, -1.0], [1.0, 1.0])
    U = from_box([-1.0], [1.0])
    return model, X, U


def test_moas_deadbeat_one_step():
    # Acl = 0: Xn = X intersect {-Kx in U}, t* = 0
    K = np.array([[0.5, 0.0]])
    X = from_box([-1.0, -1.0], [1.0, 1.0])
    U = from_box([-1.0], [1.0])
    Xn, t_star = compute_moas(np.zeros((2, 2)), X, U, K)
    assert t_star == 0
    assert contains(Xn, [1.0, 1.0])
    assert not contains(Xn, [1.01, 0.0])


def test_moas_scalar_hand_computation():
    # a_cl = 0.5, |x| <= 1, k = 0.5 -> constraint tightest at j = 0
    X = from_box([-1.0], [1.0])
    U = from_box([-1.0], [1.0])
    Xn, t_star = compute_moas([[0.5]], X, U, [[0.5]])
    assert t_star == 0
    assert contains(Xn, [1.0]) and contains(Xn, [-1.0])
    assert not contains(Xn, [1.001])


def test_moas_double_integrator_vs_simulation_oracle():
    model, X, U = double_integrator_kit()
    P = solve_dare(model.Ad, model.Bd, np.eye(2), np.eye(1))
    K = lqr_gain(P, model.Ad, model.Bd, np.eye(1))
    Acl = model.Ad - model.Bd @ K
    Xn, t_star = compute_moas(Acl, X, U, K)
    assert t_star >= 1

    # brute-force oracle: simulate the closed loop from a grid, flag points
    # that never violate either box over 200 steps
    grid = np.linspace(-1, 1, 201)
    XX, YY = np.meshgrid(grid, grid)
    pts = np.column_stack([XX.ravel(), YY.ravel()])
    ok = np.ones(len(pts), dtype=bool)
    states = pts.T.copy()
    for _ in range(200):
        u = -K @ states
        ok &= np.all(np.abs(states) <= 1.0 + 1e-9, axis=0) & (np.abs(u[0]) <= 1.0 + 1e-9)
        states = model.Ad @ states + model.Bd @ u
    member = contains_many(Xn, pts)

    # compare away from the boundary: skip cells within one grid cell of
    # disagreement-prone region by requiring a margin on the oracle side
    margin = np.max(pts @ Xn.H.T - Xn.h, axis=1)
    interior = np.abs(margin) > 0.02
    agree = (member == ok)[interior]
    assert agree.mean() >= 0.99


def test_moas_invariance_random_points():
    model, X, U = double_integrator_kit()
    kit = synthesize_kit(model, np.eye(2), np.eye(1), X, U)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (10000, 2))
    inside = pts[contains_many(kit.Xn, pts)]
    assert len(inside) > 100
    nxt = inside @ kit.Acl.T
    assert contains_many(kit.Xn, nxt, tol=1e-7).all()
    u = -inside @ kit.K.T
    assert contains_many(U, u, tol=1e-7).all()


def test_moas_maximality_boundary_escape():
    model, X, U = double_integrator_kit()
    kit = synthesize_kit(model, np.eye(2), np.eye(1), X, U)
    rng = np.random.default_rng(1)
    escaped = 0
    total = 0
    for _ in range(200):
        d = rng.standard_normal(2)
        d /= np.linalg.norm(d)
        # walk outward to find a boundary point, then push 2% beyond
        from psmpc.polytope import support as sup
        r = sup(kit.Xn, d) / max(np.linalg.norm(d), 1e-12)
        x = 1.02 * r * d
        if contains(kit.Xn, x):
            continue
        total += 1
        violated = False
        s = x.copy()
        for _ in range(200):
            u = -kit.K @ s
            if np.any(np.abs(s) > 1.0 + 1e-9) or abs(u[0]) > 1.0 + 1e-9:
                violated = True
                break
            s = kit.Acl @ s
        escaped += violated
    assert total > 50
    assert escaped / total >= 0.95


def test_assumption5_self_pair_passes():
    model, X, U = double_integrator_kit()
    kit = synthesize_kit(model, np.eye(2), np.eye(1), X, U)
    report, kits = check_assumption5({1: kit}, {1: U})
    assert report.ok
    assert report.beta == 1.0


def test_assumption5_identical_controllers_symmetric():
    model, X, U = double_integrator_kit()
    kit = synthesize_kit(model, np.eye(2), np.eye(1), X, U)
    report, _ = check_assumption5({1: kit, 2: kit}, {1: U, 2: U})
    assert report.ok
    margins = {(p.leader, p.restrictor): p.invariance_margin for p in report.pairs}
    assert abs(margins[(1, 2)] - margins[(2, 1)]) < 1e-9


def test_assumption5_shrink_restores_input_admissibility():
    # controller 2 reuses controller 1's set and gain but declares a much
    # tighter input set, so the cross input condition fails at beta = 1
    # while invariance (scale invariant) still holds; shrinking must fix it
    from psmpc.terminal_ingredients import TerminalKit

    model, X, U = double_integrator_kit()
    kit = synthesize_kit(model, np.eye(2), np.eye(1), X, U)
    kit2 = TerminalKit(P=kit.P, K=kit.K, Xn=kit.Xn, Acl=kit.Acl, t_star=kit.t_star)
    U_tight = from_box([-0.2], [0.2])
    report, kits = check_assumption5({1: kit, 2: kit2}, {1: U, 2: U_tight})
    assert report.ok
    assert report.beta < 1.0
    # shrunk sets still satisfy every pair condition
    rep2, _ = check_assumption5(kits, {1: U, 2: U_tight}, shrink=False)
    assert rep2.ok


def test_cert_report_serialization():
    model, X, U = double_integrator_kit()
    kit = synthesize_kit(model, np.eye(2), np.eye(1), X, U)
    report, _ = check_assumption5({1: kit}, {1: U})
    report.dare_residuals[1] = 1e-12
    report.t_stars[1] = kit.t_star
    txt = report.to_text()
    assert "PASS" in txt
    import json
    blob = json.loads(report.to_json())
    assert blob["ok"] is True
