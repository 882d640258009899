"""Exception types shared across the toolkit."""


class ClsplatError(Exception):
    """Base class for toolkit errors."""


class ValidationError(ClsplatError, ValueError):
    """Invalid configuration or input (CLI exit code 1)."""


class NonPositiveDepth(ClsplatError):
    """A point lies at or behind the X-ray source."""


class DegenerateHistogram(ClsplatError):
    """All voxels share one value, so no threshold separates two classes."""


class EmptyMask(ClsplatError):
    """No voxel passed the threshold."""


class NonFiniteLoss(ClsplatError):
    """Training produced a NaN/inf loss."""

    def __init__(self, iteration: int, view: int, value: float):
        super().__init__(
            f"non-finite loss {value!r} at iteration {iteration} (view {view})"
        )
        self.iteration = iteration
        self.view = view
        self.value = value
