"""Optimal control problems as sparse multiple-shooting QPs.

Three problem kinds share one transcription:

* nominal: finite-horizon cost with terminal penalty, hard initial state;
* composed: the nominal problem of a leader controller plus, for every
  restrictor controller, an extra predicted trajectory driven by the
  shared input sequence and subject to the restrictor's sets (the
  mechanism that keeps every controller feasible under arbitrary
  switching);
* robust: the initial state becomes a free variable pulled toward the
  measurement by a quadratic penalty, so the problem is always feasible
  and acts as a projection onto the feasible initial conditions.

Decision vector layout: [x_0 .. x_N, u_0 .. u_{N-1}, (restrictor states
x^l_1 .. x^l_N per restrictor)].  All builders produce an `OcpQp`, which
is the QP plus the unpacking metadata; `solve` turns a solved QP back
into trajectories.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from psmpc.errors import Lemma2Violation
from psmpc.lti_model import DiscreteModel, Translator
from psmpc.polytope import Polytope, contains
from psmpc.qp_core import QpProblem, QpSettings, QpStatus, QpWorkspace
from psmpc.terminal_ingredients import TerminalKit

OCP_SETTINGS = QpSettings(eps_abs=1e-8, eps_rel=1e-8, max_iter=20000)


@dataclass
class MpcConfig:
    """Everything one controller needs: model, weights, sets, terminal kit."""

    id: int
    model: DiscreteModel
    Q: np.ndarray
    R: np.ndarray
    kit: TerminalKit
    N: int
    X: Polytope
    U: Polytope
    lam: float = 0.0  # soft initial-state weight (robust mode only)
    translator: Translator | None = None
    name: str = ""

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if self.N < 2:
            raise ValueError("horizon must be at least 2 steps")
        if self.translator is None:
            self.translator = Translator.identity(self.model.n)
        if not self.name:
            self.name = f"mpc{self.id}"

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def m(self) -> int:
        return self.model.m


@dataclass
class SolveStats:
    status: QpStatus
    iters: int
    primal_res: float
    dual_res: float
    solve_time: float


@dataclass
class OcpSolution:
    U_star: np.ndarray  # (m, N)
    X_star: np.ndarray  # (n, N+1)
    V: float
    xbar: np.ndarray
    feasible: bool
    stats: SolveStats
    restrictor_X: dict[int, np.ndarray] = field(default_factory=dict)


class OcpQp:
    """A built OCP: the QP plus layout metadata and a reusable workspace."""

    def __init__(self, problem: QpProblem, cfg: MpcConfig, kind: str,
                 restrictors: list[MpcConfig] | None = None,
                 init_rows: slice | None = None, obj_constant: float = 0.0,
                 settings: QpSettings | None = None):
        self.problem = problem
        self.cfg = cfg
        self.kind = kind
        self.restrictors = restrictors or []
        self.init_rows = init_rows
        self.obj_constant = obj_constant
        self.workspace = QpWorkspace(problem, settings or OCP_SETTINGS)
        n, m, N = cfg.n, cfg.m, cfg.N
        self._nx = n * (N + 1)
        self._nu = m * N

    # layout helpers -------------------------------------------------------

    def x_slice(self, j: int) -> slice:
        n = self.cfg.n
        return slice(j * n, (j + 1) * n)

    def u_slice(self, j: int) -> slice:
        m = self.cfg.m
        return slice(self._nx + j * m, self._nx + (j + 1) * m)

    def restrictor_x_slice(self, r_index: int, s: int) -> slice:
        """State s (1..N) of the r_index-th restrictor chain."""
        n = self.cfg.n
        base = self._nx + self._nu + r_index * n * self.cfg.N
        return slice(base + (s - 1) * n, base + s * n)

    # per-step updates ------------------------------------------------------

    def set_initial_state(self, x0):
        """Move the hard initial-state equality (nominal / composed)."""
        x0 = np.asarray(x0, dtype=float).ravel()
        lb = self.problem.lb
        ub = self.problem.ub
        lb[self.init_rows] = x0
        ub[self.init_rows] = x0

    def set_measurement(self, x_meas):
        """Refresh the soft initial-state pull (robust)."""
        x_meas = np.asarray(x_meas, dtype=float).ravel()
        lamP = self.cfg.lam * self.cfg.kit.P
        g = self.problem.g
        g[self.x_slice(0)] = -2.0 * lamP @ x_meas
        self.obj_constant = float(self.cfg.lam * x_meas @ self.cfg.kit.P @ x_meas)
        self.workspace.update_lin_cost(g)


def _stack_rows(blocks):
    """blocks: list of (row_matrix, lb, ub) with matching widths."""
    C = np.vstack([b[0] for b in blocks])
    lb = np.concatenate([b[1] for b in blocks])
    ub = np.concatenate([b[2] for b in blocks])
    return C, lb, ub


def _nominal_blocks(cfg: MpcConfig, p: int, offset: int, x0):
    """Rows of the standard QIH problem on variables [X, U] at `offset`."""
    n, m, N = cfg.n, cfg.m, cfg.N
    Ad, Bd = cfg.model.Ad, cfg.model.Bd
    nx = n * (N + 1)
    blocks = []
    # dynamics x_{j+1} - Ad x_j - Bd u_j = 0
    Cd = np.zeros((n * N, p))
    for j in range(N):
        r = slice(j * n, (j + 1) * n)
        Cd[r, offset + (j + 1) * n: offset + (j + 2) * n] = np.eye(n)
        Cd[r, offset + j * n: offset + (j + 1) * n] = -Ad
        Cd[r, offset + nx + j * m: offset + nx + (j + 1) * m] = -Bd
    blocks.append((Cd, np.zeros(n * N), np.zeros(n * N)))
    # initial state equality
    Ci = np.zeros((n, p))
    Ci[:, offset: offset + n] = np.eye(n)
    x0 = np.asarray(x0, dtype=float).ravel()
    blocks.append((Ci, x0.copy(), x0.copy()))
    # stage state sets, j = 0..N-1
    qX = cfg.X.q
    Cx = np.zeros((qX * N, p))
    for j in range(N):
        Cx[j * qX:(j + 1) * qX, offset + j * n: offset + (j + 1) * n] = cfg.X.H
    blocks.append((Cx, np.full(qX * N, -np.inf), np.tile(cfg.X.h, N)))
    # stage input sets
    qU = cfg.U.q
    Cu = np.zeros((qU * N, p))
    for j in range(N):
        Cu[j * qU:(j + 1) * qU, offset + nx + j * m: offset + nx + (j + 1) * m] = cfg.U.H
    blocks.append((Cu, np.full(qU * N, -np.inf), np.tile(cfg.U.h, N)))
    # terminal set
    Xn = cfg.kit.Xn
    Ct = np.zeros((Xn.q, p))
    Ct[:, offset + N * n: offset + (N + 1) * n] = Xn.H
    blocks.append((Ct, np.full(Xn.q, -np.inf), Xn.h.copy()))
    return blocks


def _cost_matrices(cfg: MpcConfig, p: int):
    n, m, N = cfg.n, cfg.m, cfg.N
    Hc = np.zeros((p, p))
    for j in range(N):
        s = slice(j * n, (j + 1) * n)
        Hc[s, s] = 2.0 * cfg.Q
    sN = slice(N * n, (N + 1) * n)
    Hc[sN, sN] = 2.0 * cfg.kit.P
    nx = n * (N + 1)
    for j in range(N):
        s = slice(nx + j * m, nx + (j + 1) * m)
        Hc[s, s] = 2.0 * cfg.R
    return Hc


def build_nominal(cfg: MpcConfig, x0, settings: QpSettings | None = None) -> OcpQp:
    """Standard QIH problem with a hard initial state."""
    n, m, N = cfg.n, cfg.m, cfg.N
    p = n * (N + 1) + m * N
    C, lb, ub = _stack_rows(_nominal_blocks(cfg, p, 0, x0))
    Hc = _cost_matrices(cfg, p)
    prob = QpProblem(Hc=Hc, g=np.zeros(p), C=C, lb=lb, ub=ub)
    init_rows = slice(n * N, n * N + n)
    return OcpQp(prob, cfg, "nominal", init_rows=init_rows, settings=settings)


def build_composed(leader: MpcConfig, restrictors: list[MpcConfig],
                   x0, settings: QpSettings | None = None) -> OcpQp:
    """Leader problem plus restrictor chains driven by the shared inputs.

    Restrictor states start coupled to the leader's first predicted state;
    their stage sets bind from step 1 to N-1 and their terminal sets at N.
    The cost is the leader's alone. With no restrictors this is exactly
    `build_nominal`.
    """
    n, m, N = leader.n, leader.m, leader.N
    for r in restrictors:
        if r.m != m or r.N != N:
            raise ValueError("restrictors must share input dimension and horizon")
        if r.id == leader.id:
            raise ValueError("leader cannot restrict itself")
    nx = n * (N + 1)
    nu = m * N
    p = nx + nu + sum(r.n * N for r in restrictors)
    blocks = _nominal_blocks(leader, p, 0, x0)
    base = nx + nu
    for r in restrictors:
        nr = r.n
        # coupling x^l(1) = x^i(1)
        Cc = np.zeros((nr, p))
        Cc[:, base: base + nr] = np.eye(nr)
        Cc[:, n: 2 * n] = -np.eye(n)
        blocks.append((Cc, np.zeros(nr), np.zeros(nr)))
        # chain dynamics for s = 1..N-1
        Cd = np.zeros((nr * (N - 1), p))
        for s in range(1, N):
            row = slice((s - 1) * nr, s * nr)
            Cd[row, base + s * nr: base + (s + 1) * nr] = np.eye(nr)
            Cd[row, base + (s - 1) * nr: base + s * nr] = -r.model.Ad
            Cd[row, nx + s * m: nx + (s + 1) * m] = -r.model.Bd
        blocks.append((Cd, np.zeros(nr * (N - 1)), np.zeros(nr * (N - 1))))
        # restrictor state sets for s = 1..N-1
        qX = r.X.q
        Cx = np.zeros((qX * (N - 1), p))
        for s in range(1, N):
            Cx[(s - 1) * qX: s * qX, base + (s - 1) * nr: base + s * nr] = r.X.H
        blocks.append((Cx, np.full(qX * (N - 1), -np.inf), np.tile(r.X.h, N - 1)))
        # restrictor input sets on the shared inputs, s = 1..N-1
        qU = r.U.q
        Cu = np.zeros((qU * (N - 1), p))
        for s in range(1, N):
            Cu[(s - 1) * qU: s * qU, nx + s * m: nx + (s + 1) * m] = r.U.H
        blocks.append((Cu, np.full(qU * (N - 1), -np.inf), np.tile(r.U.h, N - 1)))
        # restrictor terminal set at s = N
        Xn = r.kit.Xn
        Ct = np.zeros((Xn.q, p))
        Ct[:, base + (N - 1) * nr: base + N * nr] = Xn.H
        blocks.append((Ct, np.full(Xn.q, -np.inf), Xn.h.copy()))
        base += nr * N
    C, lb, ub = _stack_rows(blocks)
    Hc = np.zeros((p, p))
    Hc[:nx + nu, :nx + nu] = _cost_matrices(leader, nx + nu)
    prob = QpProblem(Hc=Hc, g=np.zeros(p), C=C, lb=lb, ub=ub)
    init_rows = slice(n * N, n * N + n)
    return OcpQp(prob, leader, "composed", restrictors=restrictors,
                 init_rows=init_rows, settings=settings)


def build_robust(cfg: MpcConfig, x_measured, settings: QpSettings | None = None) -> OcpQp:
    """Soft initial state: x(0) free, pulled to the measurement by lam*|x - x0|_P^2."""
    if cfg.lam <= 0.0:
        raise ValueError("robust mode needs lam > 0")
    n, m, N = cfg.n, cfg.m, cfg.N
    p = n * (N + 1) + m * N
    blocks = _nominal_blocks(cfg, p, 0, np.zeros(n))
    blocks.pop(1)  # drop the hard initial-state equality
    C, lb, ub = _stack_rows(blocks)
    Hc = _cost_matrices(cfg, p)
    lamP = cfg.lam * cfg.kit.P
    Hc[:n, :n] += 2.0 * lamP
    x_measured = np.asarray(x_measured, dtype=float).ravel()
    g = np.zeros(p)
    g[:n] = -2.0 * lamP @ x_measured
    const = float(cfg.lam * x_measured @ cfg.kit.P @ x_measured)
    prob = QpProblem(Hc=Hc, g=g, C=C, lb=lb, ub=ub)
    return OcpQp(prob, cfg, "robust", obj_constant=const, settings=settings)


def solve(ocp: OcpQp, z0=None, y0=None) -> OcpSolution:
    """Solve (or re-solve) a built OCP and unpack trajectories.

    A composed problem reported primal-infeasible violates the recursive
    feasibility guarantee and raises Lemma2Violation; it is never handled
    silently.
    """
    cfg = ocp.cfg
    n, m, N = cfg.n, cfg.m, cfg.N
    t0 = time.perf_counter()
    sol = ocp.workspace.solve(z0=z0, y0=y0)
    dt = time.perf_counter() - t0
    stats = SolveStats(status=sol.status, iters=sol.iters,
                       primal_res=sol.primal_res, dual_res=sol.dual_res,
                       solve_time=dt)
    if sol.status == QpStatus.PRIMAL_INFEASIBLE:
        if ocp.kind == "composed":
            raise Lemma2Violation(
                f"composed OCP for leader {cfg.id} infeasible "
                f"(certificate norm {np.linalg.norm(sol.certificate):.3e})")
        return OcpSolution(U_star=np.zeros((m, N)), X_star=np.zeros((n, N + 1)),
                           V=np.inf, xbar=np.zeros(n), feasible=False, stats=stats)
    z = sol.z
    nx = n * (N + 1)
    X_star = z[:nx].reshape(N + 1, n).T.copy()
    U_star = z[nx:nx + m * N].reshape(N, m).T.copy()
    V = sol.obj + ocp.obj_constant
    restr = {}
    base = nx + m * N
    for r in ocp.restrictors:
        Xr = np.empty((r.n, N + 1))
        Xr[:, 0] = np.nan  # chain starts at s = 1
        Xr[:, 1:] = z[base: base + r.n * N].reshape(N, r.n).T
        restr[r.id] = Xr
        base += r.n * N
    feasible = sol.status == QpStatus.SOLVED
    return OcpSolution(U_star=U_star, X_star=X_star, V=float(V),
                       xbar=X_star[:, 0].copy(), feasible=feasible, stats=stats,
                       restrictor_X=restr)


def shifted_candidate(prev: OcpSolution, cfg: MpcConfig) -> np.ndarray:
    """Drop the first input, append the terminal controller's input.

    The constructive recursive-feasibility candidate: applied at the next
    step's state (the previously predicted first state) it satisfies every
    constraint of the problem it came from.
    """
    if not prev.feasible:
        raise ValueError("shifted candidate needs a feasible parent solution")
    tail = -cfg.kit.K @ prev.X_star[:, cfg.N]
    return np.column_stack([prev.U_star[:, 1:], tail])


def candidate_feasible(leader: MpcConfig, restrictors: list[MpcConfig],
                       x_next, U_cand, tol: float = 1e-7) -> tuple[bool, float]:
    """Constraint-evaluation oracle, independent of the QP solver.

    Rolls every chain forward from x_next under the candidate inputs and
    measures the worst constraint violation against the composed problem's
    sets. Returns (feasible within tol, worst violation).
    """
    x_next = np.asarray(x_next, dtype=float).ravel()
    N = leader.N
    worst = 0.0

    def set_violation(P: Polytope, v):
        return float(np.max(P.H @ v - P.h))

    x = x_next.copy()
    traj = [x.copy()]
    for j in range(N):
        u = U_cand[:, j]
        worst = max(worst, set_violation(leader.X, x))
        worst = max(worst, set_violation(leader.U, u))
        x = leader.model.step(x, u)
        traj.append(x.copy())
    worst = max(worst, set_violation(leader.kit.Xn, x))
    x1_leader = traj[1]
    for r in restrictors:
        xr = x1_leader.copy()
        for s in range(1, N):
            worst = max(worst, set_violation(r.X, xr))
            worst = max(worst, set_violation(r.U, U_cand[:, s]))
            xr = r.model.step(xr, U_cand[:, s])
        worst = max(worst, set_violation(r.kit.Xn, xr))
    return worst <= tol, worst
