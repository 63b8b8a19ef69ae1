"""Exception hierarchy shared by all modules."""


class AgebifError(Exception):
    """Base class for every error raised by the package."""


class GridError(AgebifError, ValueError):
    """Invalid grid sizes or mismatched array shapes."""


class IterationFailure(AgebifError):
    """An eigen-iteration did not converge within its cap."""


class NoConvergence(IterationFailure):
    """Power iteration on a birth operator hit the iteration cap."""


class NegativeDensity(AgebifError):
    """A marched density dropped below the round-off slack."""


class ZeroProfile(AgebifError, ValueError):
    """A birth profile is identically zero."""


class TailVanishes(AgebifError, ValueError):
    """A birth profile is not strictly positive near the maximal age."""


class NoPositiveSolution(AgebifError):
    """The single-species renewal problem has no nontrivial nonnegative solution."""


class Stagnation(AgebifError):
    """Picard and Newton both failed to reach the residual target."""


class EtaBelowThreshold(AgebifError, ValueError):
    """Lower bound requested below its validity threshold."""


class NoBracket(AgebifError):
    """A bifurcation condition has no sign change up to the cutoff."""


class SingularResolvent(AgebifError):
    """The resolvent needed for a tangent construction is numerically singular."""


class NewtonDivergence(AgebifError):
    """Newton on the coupled trace system failed."""


class NotUnbounded(AgebifError):
    """Unboundedness classification requested for a branch that closed up."""


class ConfigError(AgebifError, ValueError):
    """A run configuration violates the schema."""
