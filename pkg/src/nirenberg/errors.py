"""Exception and warning types shared across the package."""


class NirenbergError(Exception):
    """Base class for all package errors."""


class UnsupportedDimension(NirenbergError):
    """Sphere dimension outside the supported range 3..10."""


class AntipodalSingularity(NirenbergError):
    """Operation evaluated at the antipode of its base point."""


class CoincidentPoints(NirenbergError):
    """Two points required to be distinct coincide within tolerance."""


class NonpositiveLambda(NirenbergError):
    """Bubble concentration parameter must be positive."""


class NotMorse(NirenbergError):
    """Curvature field has a degenerate critical point."""


class UnknownConstant(NirenbergError, KeyError):
    """Requested name is not in the constants registry."""


class NonConvergent(NirenbergError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class Divergent(NirenbergError):
    """Radial integrand decays too slowly to be integrable."""


class ResolutionTooCoarse(NirenbergError):
    """Requested integral cannot be resolved at the given level."""


class OverflowGuard(NirenbergError):
    """Parameter magnitude exceeds the double-precision safety cap."""


class NonConvergence(NirenbergError):
    """Iterative solver did not reach its stopping tolerance."""


class LeftRegime(NirenbergError):
    """Solver iterates exited the admissible configuration window."""


class NoSolution(NirenbergError):
    """Interaction matrix fails the positivity precondition."""


class DimensionMismatch(NirenbergError):
    """Operation requires a specific sphere dimension."""


class NotBlowupCandidate(NirenbergError):
    """Point does not satisfy the blow-up sign condition."""


class IllConditioned(NirenbergError):
    """Gram system condition number exceeds the safety threshold."""


class UsageError(NirenbergError):
    """Invalid CLI arguments or malformed input file."""


class IncompleteSearch(UserWarning):
    """Critical point search failed a Morse-count parity check."""


class LocalMinWarning(UserWarning):
    """Restarted fits disagree; result may be a local minimum."""
