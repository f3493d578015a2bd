"""Dense convex QP/LP solver based on operator splitting.

Solves

    minimize    1/2 z' Hc z + g' z
    subject to  lb <= C z <= ub        (equalities encoded as lb == ub)

with an over-relaxed ADMM iteration on the primal-dual pair followed by an
active-set polish step that solves the KKT system on the detected active
set.  LPs are the Hc = 0 special case.  The solver is dense: every problem
in this toolkit is small enough (a few hundred variables, a couple of
thousand rows) that one Cholesky factorization of the condensed matrix

    Hc + sigma*I + C' diag(rho) C

amortized over all iterations beats sparse machinery.

A `QpWorkspace` keeps that factorization alive so the closed-loop simulator
can re-solve the same problem structure every step, changing only the
bound vectors (the measured state enters through lb/ub of the initial-state
rows) and warm-starting from the previous iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg


class QpStatus(Enum):
    SOLVED = "Solved"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITER = "MaxIter"


@dataclass
class QpProblem:
    """Data of one dense QP.

    Hc : (p, p) symmetric PSD cost matrix
    g  : (p,) linear cost
    C  : (q, p) constraint matrix (q may be 0)
    lb, ub : (q,) bounds with lb <= ub; +-inf allowed
    """

    Hc: np.ndarray
    g: np.ndarray
    C: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.Hc = np.asarray(self.Hc, dtype=float)
        self.g = np.asarray(self.g, dtype=float).ravel()
        self.C = np.asarray(self.C, dtype=float).reshape(-1, self.g.size)
        self.lb = np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.asarray(self.ub, dtype=float).ravel()
        p = self.g.size
        if self.Hc.shape != (p, p):
            raise ValueError(f"Hc must be ({p},{p}), got {self.Hc.shape}")
        sym_err = np.max(np.abs(self.Hc - self.Hc.T)) if p else 0.0
        if sym_err > 1e-12 * max(1.0, np.max(np.abs(self.Hc))):
            raise ValueError(f"Hc not symmetric (err {sym_err:.2e})")
        if self.lb.size != self.C.shape[0] or self.ub.size != self.C.shape[0]:
            raise ValueError("lb/ub length must match rows of C")
        if np.any(self.lb > self.ub):
            raise ValueError("lb > ub in some row")

    @property
    def p(self) -> int:
        return self.g.size

    @property
    def q(self) -> int:
        return self.C.shape[0]


@dataclass
class QpSettings:
    eps_abs: float = 1e-8
    eps_rel: float = 1e-8
    max_iter: int = 20000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_pinf: float = 1e-7
    eps_dinf: float = 1e-7
    check_every: int = 25
    adaptive_rho: bool = True
    polish: bool = True
    # gate (multiple of the tolerance) at which polish attempts start; raw
    # ADMM stalls sublinearly on LPs, so the gate is deliberately loose and
    # failed attempts back off exponentially
    polish_gate: float = 1e6


@dataclass
class QpSolution:
    z: np.ndarray
    y: np.ndarray
    obj: float
    status: QpStatus
    iters: int
    primal_res: float
    dual_res: float
    certificate: np.ndarray | None = None
    polished: bool = False


class QpWorkspace:
    """Solver state bound to one problem structure.

    Not thread-safe; use one workspace per thread.  `update_bounds` /
    `update_lin_cost` mutate the problem vectors in place without touching
    the cached factorization, which only depends on (Hc, C, rho, sigma).
    """

    RHO_EQ_SCALE = 1e3
    RHO_MIN = 1e-6
    RHO_MAX = 1e6

    def __init__(self, problem: QpProblem, settings: QpSettings | None = None):
        self.prob = problem
        self.set = settings or QpSettings()
        p, q = problem.p, problem.q
        self._eq = np.isfinite(problem.lb) & np.isfinite(problem.ub) & (
            problem.ub - problem.lb <= 1e-11
        )
        self._rho_w = np.where(self._eq, self.RHO_EQ_SCALE, 1.0)
        # C' diag(w) C is rho-independent; the factorization reuses it on
        # every rho update.
        self._CtWC = problem.C.T @ (self._rho_w[:, None] * problem.C) if q else np.zeros((p, p))
        self._rho_base = self.set.rho
        self._factor = None
        self.z = np.zeros(p)
        self.zc = np.zeros(q)  # constraint-space iterate ("z" in the splitting)
        self.y = np.zeros(q)

    # -- problem vector updates -------------------------------------------

    def update_bounds(self, lb=None, ub=None):
        if lb is not None:
            self.prob.lb = np.asarray(lb, dtype=float).ravel()
        if ub is not None:
            self.prob.ub = np.asarray(ub, dtype=float).ravel()

    def update_lin_cost(self, g):
        self.prob.g = np.asarray(g, dtype=float).ravel()

    # -- internals ---------------------------------------------------------

    def _refactor(self):
        p = self.prob.p
        M = self.prob.Hc + self.set.sigma * np.eye(p) + self._rho_base * self._CtWC
        self._factor = scipy.linalg.cho_factor(M, lower=True, check_finite=False)

    def _rho_vec(self) -> np.ndarray:
        return self._rho_base * self._rho_w

    def _residuals(self, x, zc, y):
        prob = self.prob
        if prob.q == 0:
            r_prim, e_prim = 0.0, np.inf
            Cty = 0.0
        else:
            Cx = prob.C @ x
            r_prim = float(np.max(np.abs(Cx - zc)))
            e_prim = self.set.eps_abs + self.set.eps_rel * max(
                np.max(np.abs(Cx)), np.max(np.abs(zc)), 1e-30
            )
            Cty = prob.C.T @ y
        Hx = prob.Hc @ x
        dual_vec = Hx + prob.g + Cty
        r_dual = float(np.max(np.abs(dual_vec))) if prob.p else 0.0
        scale = max(
            np.max(np.abs(Hx)) if prob.p else 0.0,
            np.max(np.abs(Cty)) if prob.q else 0.0,
            np.max(np.abs(prob.g)) if prob.p else 0.0,
            1e-30,
        )
        e_dual = self.set.eps_abs + self.set.eps_rel * scale
        return r_prim, r_dual, e_prim, e_dual

    def _primal_infeasible(self, dy) -> bool:
        prob = self.prob
        ndy = np.max(np.abs(dy)) if dy.size else 0.0
        if ndy < 1e-14:
            return False
        eps = self.set.eps_pinf * ndy
        if np.max(np.abs(prob.C.T @ dy)) > eps:
            return False
        dyp = np.maximum(dy, 0.0)
        dym = np.minimum(dy, 0.0)
        # components pushing on an infinite bound invalidate the certificate
        if np.any(dyp[~np.isfinite(prob.ub)] > eps) or np.any(-dym[~np.isfinite(prob.lb)] > eps):
            return False
        ub = np.where(np.isfinite(prob.ub), prob.ub, 0.0)
        lb = np.where(np.isfinite(prob.lb), prob.lb, 0.0)
        return float(ub @ dyp + lb @ dym) < -eps

    def _dual_infeasible(self, dx) -> bool:
        prob = self.prob
        ndx = np.max(np.abs(dx)) if dx.size else 0.0
        if ndx < 1e-14:
            return False
        eps = self.set.eps_dinf * ndx
        if np.max(np.abs(prob.Hc @ dx)) > eps or float(prob.g @ dx) > -eps:
            return False
        if prob.q:
            Cdx = prob.C @ dx
            if np.any(Cdx[np.isfinite(prob.ub)] > eps):
                return False
            if np.any(Cdx[np.isfinite(prob.lb)] < -eps):
                return False
        return True

    def _polish(self, x, y):
        """Solve the KKT system on the detected active set.

        Returns (x, y, ok). The regularized system is corrected by two steps
        of iterative refinement so degenerate active sets (common in the LP
        mode) still come back usable; the caller accepts the result only if
        the polished residuals actually pass tolerance.
        """
        prob = self.prob
        p, q = prob.p, prob.q
        ytol = 1e-10
        low = self._eq | (y < -ytol)
        upp = ~self._eq & (y > ytol)
        if q:
            Cx = prob.C @ x
            slack_tol = 1e-7
            low |= np.isfinite(prob.lb) & (Cx - prob.lb <= slack_tol * (1.0 + np.abs(prob.lb)))
            upp |= np.isfinite(prob.ub) & (prob.ub - Cx <= slack_tol * (1.0 + np.abs(prob.ub))) & ~low
        act = low | upp
        n_act = int(np.count_nonzero(act))
        Ca = prob.C[act] if n_act else np.zeros((0, p))
        ba = np.where(low[act], prob.lb[act], prob.ub[act]) if n_act else np.zeros(0)
        n = p + n_act
        K = np.zeros((n, n))
        K[:p, :p] = prob.Hc
        if n_act:
            K[:p, p:] = Ca.T
            K[p:, :p] = Ca
        rhs = np.concatenate([-prob.g, ba])
        delta = 1e-9
        Kr = K.copy()
        Kr[:p, :p] += delta * np.eye(p)
        if n_act:
            Kr[p:, p:] -= delta * np.eye(n_act)
        try:
            lu = scipy.linalg.lu_factor(Kr, check_finite=False)
        except scipy.linalg.LinAlgError:
            return x, y, False
        t = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
        for _ in range(2):
            t += scipy.linalg.lu_solve(lu, rhs - K @ t, check_finite=False)
        if not np.all(np.isfinite(t)):
            return x, y, False
        x_pol = t[:p]
        y_pol = np.zeros(q)
        if n_act:
            y_pol[np.flatnonzero(act)] = t[p:]
        return x_pol, y_pol, True

    # -- main entry ---------------------------------------------------------

    def solve(self, z0=None, y0=None) -> QpSolution:
        prob, st = self.prob, self.set
        p, q = prob.p, prob.q
        if self._factor is None:
            self._refactor()
        x = np.array(z0, dtype=float).ravel().copy() if z0 is not None else self.z.copy()
        y = np.array(y0, dtype=float).ravel().copy() if y0 is not None else self.y.copy()
        zc = np.clip(prob.C @ x, prob.lb, prob.ub) if q else np.zeros(0)
        rho = self._rho_vec()
        alpha = st.alpha
        next_polish_at = 0
        status = QpStatus.MAX_ITER
        cert = None
        polished = False
        it = 0
        while it < st.max_iter:
            it += 1
            if q:
                rhs = st.sigma * x - prob.g + prob.C.T @ (rho * zc - y)
            else:
                rhs = st.sigma * x - prob.g
            xt = scipy.linalg.cho_solve(self._factor, rhs, check_finite=False)
            x_new = alpha * xt + (1.0 - alpha) * x
            if q:
                zt = prob.C @ xt
                w = alpha * zt + (1.0 - alpha) * zc
                zc_new = np.clip(w + y / rho, prob.lb, prob.ub)
                y_new = y + rho * (w - zc_new)
            else:
                zc_new, y_new = zc, y
            dx = x_new - x
            dy = y_new - y if q else np.zeros(0)
            x, zc, y = x_new, zc_new, y_new

            if it % st.check_every == 0 or it == st.max_iter:
                r_prim, r_dual, e_prim, e_dual = self._residuals(x, zc, y)
                if r_prim <= e_prim and r_dual <= e_dual:
                    status = QpStatus.SOLVED
                    break
                gate_ok = r_prim <= st.polish_gate * e_prim and r_dual <= st.polish_gate * e_dual
                if st.polish and gate_ok and it >= next_polish_at:
                    next_polish_at = 2 * it
                    x_pol, y_pol, ok = self._polish(x, y)
                    if ok:
                        zc_pol = prob.C @ x_pol if q else np.zeros(0)
                        rp, rd, ep, ed = self._residuals(x_pol, np.clip(zc_pol, prob.lb, prob.ub), y_pol)
                        # primal residual against the box, not the auxiliary
                        if q:
                            rp = float(np.max(np.abs(np.clip(zc_pol, prob.lb, prob.ub) - zc_pol)))
                        if rp <= ep and rd <= ed:
                            x, y = x_pol, y_pol
                            zc = np.clip(zc_pol, prob.lb, prob.ub) if q else zc
                            r_prim, r_dual = rp, rd
                            status = QpStatus.SOLVED
                            polished = True
                            break
                if q and self._primal_infeasible(dy):
                    status = QpStatus.PRIMAL_INFEASIBLE
                    cert = dy / np.max(np.abs(dy))
                    break
                if self._dual_infeasible(dx):
                    status = QpStatus.DUAL_INFEASIBLE
                    cert = dx / np.max(np.abs(dx))
                    break
                if st.adaptive_rho and q:
                    num = r_prim / max(e_prim, 1e-30)
                    den = r_dual / max(e_dual, 1e-30)
                    ratio = np.sqrt(num / max(den, 1e-30))
                    if ratio > 5.0 or ratio < 0.2:
                        self._rho_base = float(np.clip(self._rho_base * ratio, self.RHO_MIN, self.RHO_MAX))
                        self._refactor()
                        rho = self._rho_vec()
        if status == QpStatus.SOLVED and not polished and st.polish:
            x_pol, y_pol, ok = self._polish(x, y)
            if ok:
                zc_pol = prob.C @ x_pol if q else np.zeros(0)
                rp = float(np.max(np.abs(np.clip(zc_pol, prob.lb, prob.ub) - zc_pol))) if q else 0.0
                _, rd, ep, ed = self._residuals(x_pol, np.clip(zc_pol, prob.lb, prob.ub) if q else zc, y_pol)
                if rp <= ep and rd <= ed:
                    x, y = x_pol, y_pol
                    zc = np.clip(zc_pol, prob.lb, prob.ub) if q else zc
                    polished = True
        r_prim, r_dual, _, _ = self._residuals(x, zc, y)
        if q:
            Cx = prob.C @ x
            r_prim = float(np.max(np.abs(np.clip(Cx, prob.lb, prob.ub) - Cx)))
        self.z, self.zc, self.y = x.copy(), zc.copy(), y.copy()
        obj = float(0.5 * x @ (prob.Hc @ x) + prob.g @ x)
        return QpSolution(
            z=x, y=y, obj=obj, status=status, iters=it,
            primal_res=r_prim, dual_res=r_dual, certificate=cert, polished=polished,
        )


def solve_qp(problem: QpProblem, settings: QpSettings | None = None,
             z0=None, y0=None) -> QpSolution:
    """One-shot solve; builds a workspace, solves, throws the workspace away."""
    return QpWorkspace(problem, settings).solve(z0=z0, y0=y0)


def kkt_residuals(problem: QpProblem, sol: QpSolution):
    """Recompute (primal_res, dual_res, comp_slack) from scratch.

    Independent of any solver bookkeeping, so acceptance tests can trust it.
    For rows with an infinite bound the matching dual part must vanish; its
    magnitude is counted as complementary-slackness violation.
    """
    z, y = sol.z, sol.y
    Cz = problem.C @ z if problem.q else np.zeros(0)
    primal = float(np.max(np.abs(np.clip(Cz, problem.lb, problem.ub) - Cz))) if problem.q else 0.0
    dual_vec = problem.Hc @ z + problem.g
    if problem.q:
        dual_vec = dual_vec + problem.C.T @ y
    dual = float(np.max(np.abs(dual_vec))) if problem.p else 0.0
    comp = 0.0
    for i in range(problem.q):
        yp = max(y[i], 0.0)
        ym = min(y[i], 0.0)
        if yp > 0.0:
            comp = max(comp, yp * abs(problem.ub[i] - Cz[i])) if np.isfinite(problem.ub[i]) else max(comp, yp)
        if ym < 0.0:
            comp = max(comp, -ym * abs(Cz[i] - problem.lb[i])) if np.isfinite(problem.lb[i]) else max(comp, -ym)
    return primal, dual, comp
