"""Exception types shared across the toolkit.

All data-level failures derive from :class:`ToolkitError` so callers (and the
CLI) can distinguish bad input data from programming errors.
"""


class ToolkitError(Exception):
    """Base class for all toolkit data errors."""


class NonPositiveDepth(ToolkitError):
    """A 3D point with z <= 0 cannot be projected through a pinhole camera."""


class ParseError(ToolkitError):
    """Malformed model file. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class DegenerateInput(ToolkitError):
    """Input geometry too small or collapsed for the requested quantity."""


class InvalidK(ToolkitError):
    """Requested keypoint count is zero or exceeds the cloud size."""


class InsufficientPoints(ToolkitError):
    """Point cloud too small for the requested neighborhood size."""


class ShapeMismatch(ToolkitError):
    """Two array arguments that must agree in shape do not."""


class DegenerateConfiguration(ToolkitError):
    """Correspondences are rank-deficient (e.g. collinear 3D points)."""


class NoConsensus(ToolkitError):
    """RANSAC found no hypothesis with enough inliers."""


class StepOutOfRange(ToolkitError):
    """Schedule queried outside [0, total_steps]."""
