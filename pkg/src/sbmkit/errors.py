"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class UnboundedMassError(ToolkitError):
    """An interval mass is infinite (infinite-activity measure near zero)."""


class DivergentMomentError(ToolkitError):
    """A requested partial moment diverges on the given interval."""


class InvalidSpecError(ToolkitError):
    """An operation requires a valid subordinator spec; the report is attached."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid spec: " + "; ".join(self.violations))


class PrecisionUnattainableError(ToolkitError):
    """A truncation bound exceeds the requested tolerance."""


class DynamicRangeError(ToolkitError):
    """A ratio underflows even in the log domain."""


class SingularRegionError(ToolkitError):
    """Region integral requested at a point where the kernel is not integrable."""


class RecipeInapplicableError(ToolkitError):
    """The criteria engine's bracket is nonpositive (or a mass vanishes) at this index."""


class DriftPathsUnsupportedError(ToolkitError):
    """Path simulation is restricted to zero-drift subordinators."""


class TruncationRequiredError(ToolkitError):
    """Event sampling needs a truncation making the total jump rate finite."""


class ScenarioGeometryError(ToolkitError):
    """A verification scenario violates its geometric hypotheses."""
