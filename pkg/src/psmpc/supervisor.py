"""Switching supervisor: permissions, energy objective, decision logic.

The supervisor keeps one activation record per controller (value and state
at the last activation instant). A controller may be re-activated only if
its current optimal value has dropped below the value at its previous
activation by a positive-definite margin W (nominal), relaxed by a
disturbance gain term gamma(|nu|) in the robust mode. The incumbent is
never gated: the decrease conditions relate consecutive activations, not
samples within one active interval. The first activation of a controller
is unconstrained since there is no earlier activation to compare against.

Among the permitted candidates the supervisor picks the one whose
predicted trajectory minimizes the total-energy deviation objective;
ties keep the incumbent to avoid chattering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class EnergyParams:
    """Parameters of the total-energy deviation objective."""

    mass: float = 1000.0       # kg
    gravity: float = 9.81      # m/s^2
    dt_mpc: float = 0.05       # s, altitude integration step for predictions
    v_trim: float = 50.0       # m/s, trim airspeed added to the deviation

    def __post_init__(self):
        if self.mass <= 0 or self.gravity <= 0:
            raise ValueError("mass and gravity must be positive")


@dataclass
class ActivationRecord:
    ever_activated: bool = False
    t_activation: float = float("nan")
    V_at_activation: float = float("nan")
    x_at_activation: np.ndarray | None = None


@dataclass
class SwitchState:
    """Active controller, per-controller activation records, switch history."""

    active: int | None = None
    records: dict[int, ActivationRecord] = field(default_factory=dict)
    history: list[tuple[float, int | None, int]] = field(default_factory=list)


@dataclass
class SwitchDecision:
    chosen: int
    permissions: dict[int, bool]
    objectives: dict[int, float]
    reason: str  # Stay | SwitchedBetterObjective | NoPermission


def quadratic_W(sigma: float):
    """W(x) = sigma * |x|_2^2, the positive-definite switching margin."""
    return lambda x: sigma * float(np.asarray(x) @ np.asarray(x))


def quadratic_gamma(c: float):
    """gamma(s) = c * s^2 disturbance gain for the robust permission."""
    return lambda s: c * s * s


def permission_nominal(V_now: float, rec: ActivationRecord, W) -> bool:
    """Re-activation gate: value must have dropped by W since last activation."""
    if not rec.ever_activated:
        return True
    return V_now - rec.V_at_activation <= -W(rec.x_at_activation)


def permission_robust(V_now: float, rec: ActivationRecord, W, gamma,
                      nu_now) -> bool:
    """Nominal gate relaxed by the disturbance gain at the prospective instant."""
    if not rec.ever_activated:
        return True
    nu_norm = float(np.linalg.norm(np.asarray(nu_now, dtype=float)))
    return V_now - rec.V_at_activation <= -W(rec.x_at_activation) + gamma(nu_norm)


def super_objective(traj, ep: EnergyParams, dz0: float = 0.0,
                    dt: float | None = None) -> float:
    """Total-energy deviation summed along a trajectory.

    traj is (4, N+1) with rows (alpha, q, V, theta) in rad / SI deviation
    coordinates. Altitude deviation integrates the vertical speed
    sin(theta - alpha) * (v_trim + V) starting from dz0; the kinetic term
    uses the speed deviation directly.
    """
    traj = np.asarray(traj, dtype=float)
    if dt is None:
        dt = ep.dt_mpc
    gamma_fp = traj[3] - traj[0]
    vdot_z = np.sin(gamma_fp) * (ep.v_trim + traj[2])
    dz = dz0 + np.concatenate([[0.0], np.cumsum(vdot_z[:-1]) * dt])
    ke = 0.5 * ep.mass * traj[2] ** 2
    pe = ep.mass * ep.gravity * dz
    return float(np.sum(np.hypot(ke, pe)))


def energy_deviation(state, ep: EnergyParams, dz: float) -> float:
    """Instantaneous energy deviation of one realized sample."""
    state = np.asarray(state, dtype=float)
    ke = 0.5 * ep.mass * state[2] ** 2
    pe = ep.mass * ep.gravity * dz
    return float(np.hypot(ke, pe))


class Supervisor:
    """Sequential decision maker over the parallel OCP solutions."""

    def __init__(self, controller_ids, ep: EnergyParams, sigma_W: float,
                 c_gamma: float, mode: str = "nominal"):
        if mode not in ("nominal", "robust"):
            raise ValueError(f"unknown mode {mode!r}")
        self.ep = ep
        self.W = quadratic_W(sigma_W)
        self.gamma = quadratic_gamma(c_gamma)
        self.mode = mode
        self.state = SwitchState(
            active=None,
            records={i: ActivationRecord() for i in controller_ids},
        )

    def decide(self, t: float, values: dict[int, float],
               trajectories: dict[int, np.ndarray],
               states: dict[int, np.ndarray], dz0: float,
               nu_now=None) -> SwitchDecision:
        """Pick the controller to apply at time t.

        values/trajectories/states come from this step's parallel solves
        (composed values in nominal mode, soft-initial values in robust
        mode). Records are updated when the decision activates a different
        controller.
        """
        st = self.state
        objectives = {
            i: super_objective(trajectories[i], self.ep, dz0)
            for i in sorted(values)
        }
        permissions = {}
        for i in sorted(values):
            if i == st.active:
                permissions[i] = True
                continue
            rec = st.records[i]
            if self.mode == "nominal":
                permissions[i] = permission_nominal(values[i], rec, self.W)
            else:
                nu = nu_now if nu_now is not None else np.zeros(1)
                permissions[i] = permission_robust(values[i], rec, self.W,
                                                   self.gamma, nu)
        chosen = st.active
        if chosen is None:
            cands = [i for i in sorted(values) if permissions[i]]
            chosen = min(cands, key=lambda i: (objectives[i], i))
        else:
            for i in sorted(values):
                if i != chosen and permissions[i] and objectives[i] < objectives[chosen]:
                    chosen = i
        if chosen != st.active:
            reason = "SwitchedBetterObjective"
            self.update_records(t, chosen, values[chosen], states[chosen])
        else:
            blocked = any(
                not permissions[i] and objectives[i] < objectives[chosen]
                for i in values if i != chosen
            )
            reason = "NoPermission" if blocked else "Stay"
        return SwitchDecision(chosen=chosen, permissions=permissions,
                              objectives=objectives, reason=reason)

    def update_records(self, t: float, new_active: int, V_new: float, x_new):
        """Record a deactivation of the old controller and an activation of the new."""
        st = self.state
        st.history.append((t, st.active, new_active))
        rec = st.records[new_active]
        rec.ever_activated = True
        rec.t_activation = t
        rec.V_at_activation = float(V_new)
        rec.x_at_activation = np.asarray(x_new, dtype=float).copy()
        st.active = new_active
