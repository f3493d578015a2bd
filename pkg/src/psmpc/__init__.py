"""Parallel-switched MPC toolkit.

Synthesizes terminal ingredients for a family of quasi-infinite-horizon
MPCs, solves their optimal control problems in parallel (nominal composed
leader-restrictor form or robust soft-initial-state form), gates switching
through a supervisor that enforces multiple-Lyapunov-function decrease
conditions, and simulates the sampled-data closed loop from a declarative
scenario file.
"""

from psmpc.errors import (
    EmptySet,
    InvalidModel,
    InvalidSet,
    Lemma2Violation,
    NotFinitelyDetermined,
    NotStabilizable,
    PsmpcError,
    ScenarioError,
    Unbounded,
)

__version__ = "0.1.0"

__all__ = [
    "EmptySet",
    "InvalidModel",
    "InvalidSet",
    "Lemma2Violation",
    "NotFinitelyDetermined",
    "NotStabilizable",
    "PsmpcError",
    "ScenarioError",
    "Unbounded",
    "__version__",
]
