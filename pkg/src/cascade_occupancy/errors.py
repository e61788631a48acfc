"""Exception hierarchy shared by all modules."""


class CascadeError(Exception):
    """Base class for library errors."""


class InvalidLawError(CascadeError, ValueError):
    """Malformed splitting-law parameters or law string."""


class GeometricLawError(InvalidLawError):
    """The requested law puts all atoms on a lattice {r^n}; such laws are rejected."""


class AtomCapExceeded(CascadeError):
    """More atoms were needed than the configured maximum."""


class DomainError(CascadeError, ValueError):
    """Argument outside the domain where the quantity is defined."""


class ProfileBuildError(CascadeError):
    """Analytic profile could not be built (non-finite or noisy derivatives)."""


class InvalidDistribution(CascadeError, ValueError):
    """Probability vector does not sum to one (or exceeds one, for defective vectors)."""


class ResourceCapExceeded(CascadeError):
    """A node or depth budget was exhausted."""


class NodeCapExceeded(ResourceCapExceeded):
    def __init__(self, cap, generation):
        super().__init__(f"node cap {cap} exceeded at generation {generation}")
        self.cap = cap
        self.generation = generation


class DepthCapExceeded(ResourceCapExceeded):
    pass


class TruncationTooCoarse(CascadeError):
    """Truncated mass tree is too coarse for the requested tolerance; lower p_min."""


class WindowTruncated(CascadeError):
    """Requested window reaches masses below the tree's threshold."""


class DecayViolation(CascadeError, ValueError):
    """Sampled test-function values breach the declared decay envelopes."""


class RegimeError(CascadeError):
    """Regime parameters violate the hypotheses of the requested limit."""


class GroundSetMismatch(CascadeError, ValueError):
    pass


class EmptyRestriction(CascadeError, ValueError):
    pass
