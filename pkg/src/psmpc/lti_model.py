"""Continuous LTI plant, ZOH discretization, plant integration, translators.

The plant is xi_dot = A xi + B mu + nu; each controller predicts with an
exact zero-order-hold discretization of the same dynamics, so the sampled
plant state and the prediction state coincide whenever nu == 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from psmpc.errors import InvalidModel


@dataclass
class ContinuousLti:
    """Continuous-time plant xi_dot = A xi + B mu (+ disturbance).

    state_labels / input_labels carry name+unit strings for logging only.
    """

    A: np.ndarray
    B: np.ndarray
    state_labels: tuple[str, ...] = ()
    input_labels: tuple[str, ...] = ()

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if self.B.shape[0] != self.A.shape[0]:
            # allow a column vector given as 1-d
            if self.B.shape == (1, self.A.shape[0]):
                self.B = self.B.T
            else:
                raise InvalidModel(
                    f"B rows {self.B.shape[0]} != A rows {self.A.shape[0]}")
        if self.A.shape[0] != self.A.shape[1]:
            raise InvalidModel("A must be square")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))):
            raise InvalidModel("non-finite entries in A or B")
        if not self.state_labels:
            self.state_labels = tuple(f"x{i}" for i in range(self.n))
        if not self.input_labels:
            self.input_labels = tuple(f"u{i}" for i in range(self.m))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass
class DiscreteModel:
    """Exact ZOH discretization x(k+1) = Ad x(k) + Bd u(k) at step dt."""

    Ad: np.ndarray
    Bd: np.ndarray
    dt: float

    def __post_init__(self):
        self.Ad = np.atleast_2d(np.asarray(self.Ad, dtype=float))
        self.Bd = np.atleast_2d(np.asarray(self.Bd, dtype=float))
        if self.dt <= 0:
            raise InvalidModel("dt must be positive")
        if not (np.all(np.isfinite(self.Ad)) and np.all(np.isfinite(self.Bd))):
            raise InvalidModel("non-finite entries in Ad or Bd")

    @property
    def n(self) -> int:
        return self.Ad.shape[0]

    @property
    def m(self) -> int:
        return self.Bd.shape[1]

    def step(self, x, u) -> np.ndarray:
        return self.Ad @ np.asarray(x, dtype=float) + self.Bd @ np.asarray(u, dtype=float)


@dataclass
class Translator:
    """Linear map from the plant state to a controller's prediction state."""

    M: np.ndarray

    def __post_init__(self):
        self.M = np.atleast_2d(np.asarray(self.M, dtype=float))
        if np.linalg.matrix_rank(self.M) < self.M.shape[0]:
            raise InvalidModel("translator matrix must have full row rank")

    @classmethod
    def identity(cls, n: int) -> "Translator":
        return cls(np.eye(n))


def zoh_discretize(sys: ContinuousLti, dt: float) -> DiscreteModel:
    """Exact ZOH discretization via the augmented-matrix exponential.

    Ad = exp(A dt), Bd = (integral_0^dt exp(A tau) dtau) B, both read off
    exp([[A, B], [0, 0]] dt). Exact for LTI dynamics under ZOH inputs.
    """
    if dt <= 0:
        raise InvalidModel("dt must be positive")
    n, m = sys.n, sys.m
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = sys.A
    aug[:n, n:] = sys.B
    E = scipy.linalg.expm(aug * dt)
    if not np.all(np.isfinite(E)):
        raise InvalidModel("matrix exponential produced non-finite entries")
    return DiscreteModel(Ad=E[:n, :n], Bd=E[:n, n:], dt=dt)


def integrate_plant(sys: ContinuousLti, xi0, mu, nu_fn=None, dt: float = 0.01,
                    substeps: int = 4) -> np.ndarray:
    """Integrate the disturbed plant over one hold interval with fixed-step RK4.

    mu is held constant (ZOH); nu_fn maps local time in [0, dt] to a
    disturbance vector (None means no disturbance). With nu == 0 the result
    matches the exact ZOH discretization to integration tolerance.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    xi = np.asarray(xi0, dtype=float).copy()
    mu = np.asarray(mu, dtype=float)
    h = dt / substeps
    zero = np.zeros(sys.n)

    def f(t, x):
        nu = nu_fn(t) if nu_fn is not None else zero
        return sys.A @ x + sys.B @ mu + nu

    t = 0.0
    for _ in range(substeps):
        k1 = f(t, xi)
        k2 = f(t + h / 2, xi + h / 2 * k1)
        k3 = f(t + h / 2, xi + h / 2 * k2)
        k4 = f(t + h, xi + h * k3)
        xi = xi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return xi


def translate(tr: Translator, xi) -> np.ndarray:
    """Map the sampled plant state to the controller's prediction state."""
    xi = np.asarray(xi, dtype=float).ravel()
    if xi.size != tr.M.shape[1]:
        raise InvalidModel(f"state dim {xi.size} != translator cols {tr.M.shape[1]}")
    return tr.M @ xi


def stacked_rank_ok(translators: list[Translator], n: int) -> bool:
    """Sufficient regularity check for the translator family.

    If the stacked matrix of all translator maps has full column rank, the
    sum of prediction-state norms admits a linear lower bound in the plant
    state norm. Verified once per scenario.
    """
    if not translators:
        return False
    stacked = np.vstack([tr.M for tr in translators])
    if stacked.shape[1] != n:
        raise InvalidModel("translator column count does not match plant dim")
    return np.linalg.matrix_rank(stacked) == n
