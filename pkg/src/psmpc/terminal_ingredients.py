"""Terminal ingredient synthesis and certification.

For each controller: the terminal penalty P from a discrete Riccati
fixed-point recursion, the terminal LQR gain K, and a polytopic terminal
set computed as the maximal output admissible set of the closed loop
(x, -Kx) in X x U. A certification report checks the cross pair
conditions needed by the composed OCPs: every terminal set must be
invariant under every other controller's terminal closed loop, with
admissible inputs. If a pair fails, all terminal sets are shrunk by a
common scalar factor found by bisection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from psmpc.errors import NotFinitelyDetermined, NotStabilizable
from psmpc.lti_model import DiscreteModel
from psmpc.polytope import Polytope, intersect, remove_redundancy, support

CERT_TOL = 1e-7  # one order above the QP tolerance


@dataclass
class TerminalKit:
    """Terminal penalty P, gain K (u = -K x), terminal set Xn."""

    P: np.ndarray
    K: np.ndarray
    Xn: Polytope
    Acl: np.ndarray
    t_star: int


def solve_dare(Ad, Bd, Q, R, tol: float = 1e-12, max_iter: int = 100000) -> np.ndarray:
    """Fixed point of the discrete algebraic Riccati equation.

    Iterates P <- A'PA - A'PB (R + B'PB)^-1 B'PA + Q, symmetrizing each
    step, until the update stalls below tol in the max norm.
    """
    Ad = np.atleast_2d(np.asarray(Ad, dtype=float))
    Bd = np.atleast_2d(np.asarray(Bd, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    for _ in range(max_iter):
        BtP = Bd.T @ P
        G = R + BtP @ Bd
        try:
            Kt = np.linalg.solve(G, BtP @ Ad)
        except np.linalg.LinAlgError as e:
            raise NotStabilizable(f"singular R + B'PB in Riccati recursion: {e}")
        Pn = Ad.T @ P @ Ad - Ad.T @ P @ Bd @ Kt + Q
        Pn = 0.5 * (Pn + Pn.T)
        if not np.all(np.isfinite(Pn)) or np.max(np.abs(Pn)) > 1e14:
            raise NotStabilizable("Riccati recursion diverged; (Ad, Bd) not stabilizable")
        if np.max(np.abs(Pn - P)) <= tol:
            return Pn
        P = Pn
    raise NotStabilizable("Riccati recursion did not converge; (Ad, Bd) not stabilizable?")


def dare_residual(P, Ad, Bd, Q, R) -> float:
    BtP = Bd.T @ P
    G = R + BtP @ Bd
    Pn = Ad.T @ P @ Ad - Ad.T @ P @ Bd @ np.linalg.solve(G, BtP @ Ad) + Q
    return float(np.max(np.abs(P - Pn)))


def lqr_gain(P, Ad, Bd, R) -> np.ndarray:
    """K = (R + B'PB)^-1 B'PA from a converged Riccati solution."""
    Ad = np.atleast_2d(np.asarray(Ad, dtype=float))
    Bd = np.atleast_2d(np.asarray(Bd, dtype=float))
    BtP = Bd.T @ np.atleast_2d(P)
    G = np.atleast_2d(R) + BtP @ Bd
    try:
        K = np.linalg.solve(G, BtP @ Ad)
    except np.linalg.LinAlgError as e:
        raise NotStabilizable(f"singular R + B'PB: {e}")
    Acl = Ad - Bd @ K
    if np.max(np.abs(np.linalg.eigvals(Acl))) >= 1.0:
        raise NotStabilizable("closed loop not Schur stable")
    return K


def compute_moas(Acl, X: Polytope, U: Polytope, K, max_t: int = 500):
    """Maximal output admissible set of x+ = Acl x with output (x, -Kx).

    Builds O_t = {x : G Acl^j x <= g, j = 0..t} and stops at the first t
    where every next-step row is certified redundant by a support LP:
    support(O_t, (G Acl^(t+1))_r) <= g_r + tol. Returns the reduced O_t*
    and the determinability index t*.
    """
    Acl = np.atleast_2d(np.asarray(Acl, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if np.max(np.abs(np.linalg.eigvals(Acl))) >= 1.0:
        raise NotStabilizable("MOAS needs a Schur-stable closed loop")
    G = np.vstack([X.H, -U.H @ K])
    g = np.concatenate([X.h, U.h])
    Ot = Polytope(G, g)
    for t in range(max_t + 1):
        Gnext = G @ np.linalg.matrix_power(Acl, t + 1)
        determined = True
        for r in range(G.shape[0]):
            d = Gnext[r]
            if np.linalg.norm(d) < 1e-14:
                continue
            if support(Ot, d) > g[r] + CERT_TOL:
                determined = False
                break
        if determined:
            return remove_redundancy(Ot), t
        Ot = Polytope(np.vstack([Ot.H, Gnext]), np.concatenate([Ot.h, g]))
    raise NotFinitelyDetermined(f"admissible set not determined within {max_t} steps")


@dataclass
class PairCert:
    leader: int
    restrictor: int
    invariance_margin: float
    input_margin: float

    @property
    def ok(self) -> bool:
        return self.invariance_margin <= CERT_TOL and self.input_margin <= CERT_TOL


@dataclass
class CertReport:
    """Cross-invariance certification across all ordered controller pairs.

    Margins are signed support-LP slacks (<= 0 means satisfied). beta < 1
    records that all terminal sets were shrunk to restore the certificate.
    """

    pairs: list[PairCert] = field(default_factory=list)
    beta: float = 1.0
    dare_residuals: dict[int, float] = field(default_factory=dict)
    t_stars: dict[int, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(p.ok for p in self.pairs)

    def worst_margin(self) -> float:
        return max(max(p.invariance_margin, p.input_margin) for p in self.pairs)

    def to_text(self) -> str:
        lines = ["terminal ingredient certification"]
        for cid, res in sorted(self.dare_residuals.items()):
            ts = self.t_stars.get(cid, -1)
            lines.append(f"  controller {cid}: DARE residual {res:.3e}, MOAS t* = {ts}")
        if self.beta < 1.0:
            lines.append(f"  terminal sets shrunk by common factor beta = {self.beta:.6f}")
        for p in self.pairs:
            verdict = "pass" if p.ok else "FAIL"
            lines.append(
                f"  pair (K_{p.leader} on Xn_{p.restrictor}): {verdict}"
                f"  invariance margin {p.invariance_margin:+.3e}"
                f"  input margin {p.input_margin:+.3e}")
        lines.append(f"  overall: {'PASS' if self.ok else 'FAIL'}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({
            "ok": self.ok,
            "beta": self.beta,
            "dare_residuals": {str(k): v for k, v in self.dare_residuals.items()},
            "moas_t_star": {str(k): v for k, v in self.t_stars.items()},
            "pairs": [{
                "gain_of": p.leader,
                "terminal_set_of": p.restrictor,
                "ok": p.ok,
                "invariance_margin": p.invariance_margin,
                "input_margin": p.input_margin,
            } for p in self.pairs],
        }, indent=2)


def synthesize_kit(model: DiscreteModel, Q, R, X: Polytope, U: Polytope,
                   max_t: int = 500) -> TerminalKit:
    P = solve_dare(model.Ad, model.Bd, Q, R)
    K = lqr_gain(P, model.Ad, model.Bd, R)
    Acl = model.Ad - model.Bd @ K
    Xn, t_star = compute_moas(Acl, X, U, K, max_t=max_t)
    return TerminalKit(P=P, K=K, Xn=Xn, Acl=Acl, t_star=t_star)


def _pair_margins(kit_i: TerminalKit, Xn_l: Polytope, U_l: Polytope):
    """Signed slacks of the two pair conditions (<= 0 means satisfied)."""
    inv = -np.inf
    for r in range(Xn_l.q):
        d = kit_i.Acl.T @ Xn_l.H[r]
        inv = max(inv, support(Xn_l, d) - Xn_l.h[r])
    adm = -np.inf
    for r in range(U_l.q):
        d = -kit_i.K.T @ U_l.H[r]
        adm = max(adm, support(Xn_l, d) - U_l.h[r])
    return float(inv), float(adm)


def check_assumption5(kits: dict[int, TerminalKit], U_sets: dict[int, Polytope],
                      shrink: bool = True, max_bisect: int = 20) -> tuple[CertReport, dict[int, TerminalKit]]:
    """Certify cross invariance for every ordered pair of controllers.

    For gain i and terminal set l: (a) Acl_i maps Xn_l into Xn_l, and
    (b) -K_i x lands in U_l for every x in Xn_l; both checked row-by-row
    with support LPs. On failure, all terminal sets are shrunk by a common
    scalar beta (bisection) when that can restore the certificate; note
    that condition (a) is scale invariant, so only (b)-type failures are
    repairable this way.
    """
    ids = sorted(kits)

    def evaluate(beta):
        pairs = []
        for i in ids:
            for l in ids:
                Xn_l = kits[l].Xn.scale(beta)
                inv, adm = _pair_margins(kits[i], Xn_l, U_sets[l])
                pairs.append(PairCert(leader=i, restrictor=l,
                                      invariance_margin=inv, input_margin=adm))
        return pairs

    pairs = evaluate(1.0)
    beta = 1.0
    if not all(p.ok for p in pairs) and shrink:
        scale_fixable = all(p.invariance_margin <= CERT_TOL for p in pairs)
        if scale_fixable:
            lo, hi = 0.0, 1.0
            best = None
            for _ in range(max_bisect):
                mid = 0.5 * (lo + hi)
                trial = evaluate(mid)
                if all(p.ok for p in trial):
                    best = (mid, trial)
                    lo = mid
                else:
                    hi = mid
            if best is not None:
                beta, pairs = best
    report = CertReport(pairs=pairs, beta=beta)
    shrunk = kits
    if beta < 1.0:
        shrunk = {
            i: TerminalKit(P=k.P, K=k.K, Xn=k.Xn.scale(beta), Acl=k.Acl, t_star=k.t_star)
            for i, k in kits.items()
        }
    return report, shrunk
