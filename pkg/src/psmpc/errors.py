"""Exception types shared across the toolkit."""


class PsmpcError(Exception):
    """Base class for all toolkit errors."""


class InvalidModel(PsmpcError):
    """Model matrices are inconsistent, non-finite, or dimensionally wrong."""


class InvalidSet(PsmpcError):
    """Polytope data is malformed (e.g. empty box, zero rows)."""


class EmptySet(PsmpcError):
    """A polytope required to be nonempty is infeasible."""


class Unbounded(PsmpcError):
    """A support LP is unbounded in the requested direction."""


class NotStabilizable(PsmpcError):
    """Riccati recursion failed to converge or gain synthesis is singular."""


class NotFinitelyDetermined(PsmpcError):
    """The admissible-set recursion did not terminate within max_t steps."""


class Lemma2Violation(PsmpcError):
    """A composed OCP came back infeasible.

    Under the leader-restrictor construction this must never happen for any
    switching signal, so it is raised as a hard error carrying diagnostics
    instead of being handled silently.
    """


class ScenarioError(PsmpcError):
    """Scenario file missing, unparsable, or semantically invalid."""
