"""Exception types shared across the package."""


class EllipsoidCoverError(Exception):
    """Base class for domain errors raised by this package."""


class FrameError(EllipsoidCoverError, ValueError):
    """A tangent/normal frame is not orthonormal or has inconsistent shape."""


class DegenerateInputError(EllipsoidCoverError, ValueError):
    """Input for which a quantity is undefined (e.g. depth of the centre itself)."""


class MedialAxisError(EllipsoidCoverError, ValueError):
    """Closest-point projection requested on or too near the medial axis."""


class WindowError(EllipsoidCoverError, ValueError):
    """Persistence parameter outside the window where a bound is valid."""


class InfeasibleParametersError(EllipsoidCoverError, ValueError):
    """Parameter combination for which a formula has no real value."""


class RegionError(EllipsoidCoverError, ValueError):
    """Configuration outside the region a function is defined on."""


class CoverageError(EllipsoidCoverError, ValueError):
    """Lattice half-step too large for the cube cover argument."""


class DegenerateScanError(EllipsoidCoverError, RuntimeError):
    """A lattice scan found no configuration to evaluate."""


class DomainError(EllipsoidCoverError, ValueError):
    """Point outside the domain of a vector field or flow."""


class ContainmentError(EllipsoidCoverError, RuntimeError):
    """An integrated trajectory left the union of open ellipsoids."""


class ResolutionError(EllipsoidCoverError, ValueError):
    """Requested sampling density is finer than the internal grid supports."""


class FormatError(EllipsoidCoverError, ValueError):
    """A JSON input file is malformed or missing a field."""


class BudgetExceededError(EllipsoidCoverError, RuntimeError):
    """A computation would exceed its time or size budget."""
