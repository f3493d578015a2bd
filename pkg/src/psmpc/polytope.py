"""H-representation polytope algebra for constraint and terminal sets.

All queries reduce to LPs solved by the qp_core solver with a zero
quadratic term, so the whole toolkit rides on one numerical kernel.
Vertex enumeration exists only as a brute-force test oracle elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from psmpc.errors import EmptySet, InvalidSet, Unbounded
from psmpc.qp_core import QpProblem, QpSettings, QpStatus, solve_qp

MEMBER_TOL = 1e-9

_LP_SETTINGS = QpSettings(eps_abs=1e-9, eps_rel=1e-9, max_iter=40000)


@dataclass(frozen=True)
class Polytope:
    """Set {x : H x <= h} with rows normalized to unit Euclidean norm."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        h = np.asarray(self.h, dtype=float).ravel()
        if H.shape[0] != h.size or H.shape[0] < 1:
            raise InvalidSet("H rows must match h length and be >= 1")
        norms = np.linalg.norm(H, axis=1)
        if np.any(norms < 1e-12):
            raise InvalidSet("zero row in H")
        object.__setattr__(self, "H", H / norms[:, None])
        object.__setattr__(self, "h", h / norms)

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def q(self) -> int:
        return self.H.shape[0]

    def scale(self, beta: float) -> "Polytope":
        """beta * P for a set containing the origin: {x : H x <= beta h}."""
        return Polytope(self.H, beta * self.h)


def from_box(lower, upper) -> Polytope:
    """Box lower <= x <= upper as a 2n-row polytope."""
    lower = np.asarray(lower, dtype=float).ravel()
    upper = np.asarray(upper, dtype=float).ravel()
    if lower.size != upper.size:
        raise InvalidSet("bound length mismatch")
    if np.any(lower >= upper):
        raise InvalidSet("need lower < upper in every coordinate")
    n = lower.size
    H = np.vstack([np.eye(n), -np.eye(n)])
    h = np.concatenate([upper, -lower])
    return Polytope(H, h)


def contains(P: Polytope, x, tol: float = MEMBER_TOL) -> bool:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != P.n:
        raise InvalidSet(f"point dim {x.size} != polytope dim {P.n}")
    return bool(np.all(P.H @ x <= P.h + tol))


def contains_many(P: Polytope, X, tol: float = MEMBER_TOL) -> np.ndarray:
    """Vectorized membership for an (npts, n) array of points."""
    X = np.asarray(X, dtype=float)
    return np.all(X @ P.H.T <= P.h + tol, axis=1)


def intersect(P1: Polytope, P2: Polytope) -> Polytope:
    if P1.n != P2.n:
        raise InvalidSet("dimension mismatch in intersection")
    return Polytope(np.vstack([P1.H, P2.H]), np.concatenate([P1.h, P2.h]))


def _solve_lp(g, C, lb, ub):
    p = QpProblem(Hc=np.zeros((g.size, g.size)), g=g, C=C, lb=lb, ub=ub)
    return solve_qp(p, _LP_SETTINGS)


def support(P: Polytope, d) -> float:
    """max d'x over P via LP. Raises Unbounded / EmptySet accordingly.

    The direction is normalized before the solve (the value scales back
    linearly) so badly scaled queries keep the LP well conditioned.
    """
    d = np.asarray(d, dtype=float).ravel()
    if d.size != P.n:
        raise InvalidSet("direction dim mismatch")
    nd = np.linalg.norm(d)
    if nd == 0.0:
        return 0.0
    s = _solve_lp(-d / nd, P.H, np.full(P.q, -np.inf), P.h)
    if s.status == QpStatus.DUAL_INFEASIBLE:
        raise Unbounded("support direction unbounded over polytope")
    if s.status == QpStatus.PRIMAL_INFEASIBLE:
        raise EmptySet("support of empty polytope")
    if s.status != QpStatus.SOLVED:
        raise Unbounded(f"support LP did not converge ({s.status})")
    return float(-s.obj) * nd


def is_empty(P: Polytope) -> bool:
    """One feasibility LP: minimize 0 over P."""
    s = _solve_lp(np.zeros(P.n), P.H, np.full(P.q, -np.inf), P.h)
    return s.status == QpStatus.PRIMAL_INFEASIBLE


def remove_redundancy(P: Polytope, tol: float = 1e-7) -> Polytope:
    """Minimal H-representation via per-row LP certificates.

    Row r is dropped when max H_r x over the remaining rows (with the row's
    own bound relaxed by 1 to keep the LP bounded) stays <= h_r + tol.
    Raises EmptySet if P is infeasible.
    """
    if is_empty(P):
        raise EmptySet("cannot reduce an empty polytope")
    if P.q == 1:
        return P
    keep = np.ones(P.q, dtype=bool)
    for r in range(P.q):
        idx = keep.copy()
        idx[r] = False
        if not np.any(idx):
            continue
        C = np.vstack([P.H[idx], P.H[r][None, :]])
        ub = np.concatenate([P.h[idx], [P.h[r] + 1.0]])
        s = _solve_lp(-P.H[r], C, np.full(C.shape[0], -np.inf), ub)
        if s.status == QpStatus.SOLVED and -s.obj <= P.h[r] + tol:
            keep[r] = False
    if not np.any(keep):
        keep[0] = True
    return Polytope(P.H[keep], P.h[keep])


def chebyshev_center(P: Polytope):
    """Center and radius of the largest inscribed ball (rows are unit norm)."""
    n = P.n
    g = np.zeros(n + 1)
    g[-1] = -1.0
    C = np.hstack([P.H, np.ones((P.q, 1))])
    C = np.vstack([C, np.zeros((1, n + 1))])
    C[-1, -1] = 1.0
    lb = np.full(P.q + 1, -np.inf)
    lb[-1] = 0.0
    ub = np.concatenate([P.h, [np.inf]])
    s = _solve_lp(g, C, lb, ub)
    if s.status == QpStatus.PRIMAL_INFEASIBLE:
        raise EmptySet("chebyshev center of empty polytope")
    if s.status == QpStatus.DUAL_INFEASIBLE:
        raise Unbounded("polytope unbounded; no finite chebyshev ball")
    return s.z[:n], float(s.z[-1])
