import numpy as np

from psmpc.supervisor import (
    ActivationRecord,
    EnergyParams,
    Supervisor,
    energy_deviation,
    permission_nominal,
    permission_robust,
    quadratic_W,
    quadratic_gamma,
    super_objective,
)


def rec(V=10.0, x=None):
    return ActivationRecord(ever_activated=True, t_activation=0.0,
                            V_at_activation=V,
                            x_at_activation=np.array([1.0, 0.0]) if x is None else x)


def test_permission_first_activation_unconstrained():
    assert permission_nominal(1e9, ActivationRecord(), quadratic_W(0.1))


def test_permission_nominal_inequality_arithmetic():
    W = quadratic_W(1.0)  # W(x) = |x|^2 = 1 at x = (1, 0)
    assert permission_nominal(8.9, rec(10.0), W)       # -1.1 <= -1
    assert not permission_nominal(9.5, rec(10.0), W)   # -0.5 <= -1 fails


def test_permission_robust_reduces_to_nominal_at_zero_disturbance():
    W = quadratic_W(1.0)
    g = quadratic_gamma(1e4)
    rng = np.random.default_rng(0)
    for _ in range(10000):
        V_now = rng.uniform(0, 20)
        r = rec(rng.uniform(0, 20), rng.standard_normal(2))
        nominal = permission_nominal(V_now, r, W)
        robust = permission_robust(V_now, r, W, g, np.zeros(3))
        assert nominal == robust


def test_permission_robust_gain_relaxes_gate():
    W = quadratic_W(1.0)
    # gamma tuned so gamma(|nu|) = 0.7 and 0.2 respectively
    assert permission_robust(9.5, rec(10.0), W, lambda s: 0.7, [1.0])
    assert not permission_robust(10.5, rec(10.0), W, lambda s: 0.2, [1.0])


def test_super_objective_zero_trajectory():
    ep = EnergyParams()
    traj = np.zeros((4, 41))
    assert super_objective(traj, ep, dz0=0.0) == 0.0


def test_super_objective_level_flight_constant_speed():
    ep = EnergyParams(mass=1200.0, v_trim=60.0)
    N = 10
    v = 2.5
    traj = np.zeros((4, N + 1))
    traj[2] = v
    traj[3] = traj[0]  # theta = alpha -> level
    J = super_objective(traj, ep, dz0=0.0)
    assert abs(J - (N + 1) * 0.5 * ep.mass * v**2) < 1e-9


def test_super_objective_single_step_climb():
    ep = EnergyParams(mass=1000.0, gravity=9.81, dt_mpc=0.05, v_trim=50.0)
    traj = np.zeros((4, 2))
    traj[3, 0] = np.pi / 2  # theta - alpha = 90 deg at j=0, V dev 0
    J = super_objective(traj, ep, dz0=0.0)
    # j=0 contributes 0; j=1 contributes m g V_trim dt
    assert abs(J - ep.mass * ep.gravity * ep.v_trim * ep.dt_mpc) < 1e-9


def test_super_objective_invariant_under_pitch_rate_sign():
    ep = EnergyParams()
    rng = np.random.default_rng(4)
    traj = rng.standard_normal((4, 21)) * 0.1
    flipped = traj.copy()
    flipped[1] = -flipped[1]
    assert super_objective(traj, ep) == super_objective(flipped, ep)


def test_energy_deviation_sample():
    ep = EnergyParams(mass=1000.0, gravity=9.81)
    state = np.array([0.0, 0.0, 3.0, 0.0])
    expected = np.hypot(0.5 * 1000 * 9.0, 1000 * 9.81 * 2.0)
    assert abs(energy_deviation(state, ep, dz=2.0) - expected) < 1e-9


def make_supervisor(mode="nominal"):
    return Supervisor([1, 2], EnergyParams(), sigma_W=0.1, c_gamma=1e4, mode=mode)


def flat_traj(scale):
    t = np.zeros((4, 5))
    t[2] = scale  # speed deviation drives the objective
    return t


def test_decide_first_activation_picks_min_objective():
    sup = make_supervisor()
    d = sup.decide(0.0, values={1: 5.0, 2: 5.0},
                   trajectories={1: flat_traj(2.0), 2: flat_traj(1.0)},
                   states={1: np.zeros(4), 2: np.zeros(4)}, dz0=0.0)
    assert d.chosen == 2
    assert sup.state.active == 2
    assert sup.state.records[2].ever_activated


def test_decide_equal_objectives_stays():
    sup = make_supervisor()
    sup.update_records(0.0, 1, 5.0, np.zeros(4))
    d = sup.decide(0.1, values={1: 5.0, 2: 5.0},
                   trajectories={1: flat_traj(1.0), 2: flat_traj(1.0)},
                   states={1: np.zeros(4), 2: np.zeros(4)}, dz0=0.0)
    assert d.chosen == 1
    assert d.reason == "Stay"


def test_decide_switches_to_better_permitted():
    sup = make_supervisor()
    sup.update_records(0.0, 1, 5.0, np.zeros(4))
    d = sup.decide(0.1, values={1: 5.0, 2: 4.0},
                   trajectories={1: flat_traj(2.0), 2: flat_traj(1.0)},
                   states={1: np.zeros(4), 2: np.ones(4) * 0.1}, dz0=0.0)
    assert d.chosen == 2
    assert d.reason == "SwitchedBetterObjective"
    assert sup.state.records[2].V_at_activation == 4.0


def test_decide_blocked_by_permission():
    sup = make_supervisor()
    # controller 2 was activated before at a low value; its value has not
    # decreased enough, so permission is denied despite a better objective
    sup.update_records(0.0, 2, 1.0, np.ones(4))
    sup.update_records(0.05, 1, 5.0, np.zeros(4))
    d = sup.decide(0.1, values={1: 5.0, 2: 1.0},
                   trajectories={1: flat_traj(2.0), 2: flat_traj(1.0)},
                   states={1: np.zeros(4), 2: np.zeros(4)}, dz0=0.0)
    assert d.chosen == 1
    assert not d.permissions[2]
    assert d.reason == "NoPermission"


def test_decide_never_returns_unpermitted_non_incumbent():
    rng = np.random.default_rng(7)
    for _ in range(200):
        sup = make_supervisor()
        sup.update_records(0.0, 1, rng.uniform(0, 10), rng.standard_normal(4))
        sup.update_records(0.01, 2, rng.uniform(0, 10), rng.standard_normal(4))
        sup.state.active = 1
        d = sup.decide(0.1, values={1: rng.uniform(0, 10), 2: rng.uniform(0, 10)},
                       trajectories={1: flat_traj(rng.uniform(0, 2)), 2: flat_traj(rng.uniform(0, 2))},
                       states={1: np.zeros(4), 2: np.zeros(4)}, dz0=0.0)
        assert d.permissions[d.chosen] or d.chosen == 1


def test_update_records_scripted_sequences():
    sup = make_supervisor()
    sup.update_records(0.0, 1, 9.0, np.array([1.0, 0, 0, 0]))
    sup.update_records(0.3, 2, 6.0, np.array([0.5, 0, 0, 0]))
    sup.update_records(0.9, 1, 4.0, np.array([0.2, 0, 0, 0]))
    st = sup.state
    assert st.active == 1
    assert st.history == [(0.0, None, 1), (0.3, 1, 2), (0.9, 2, 1)]
    assert st.records[1].t_activation == 0.9
    assert st.records[1].V_at_activation == 4.0
    assert st.records[2].t_activation == 0.3
    assert st.records[2].V_at_activation == 6.0
    assert np.array_equal(st.records[1].x_at_activation, [0.2, 0, 0, 0])
