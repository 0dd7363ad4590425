"""Exception types raised across the package."""


class BiopsyFusionError(Exception):
    """Base class for all package errors."""


class EmptyOverlap(BiopsyFusionError):
    """No voxel is shared between the fixed grid and the moved image."""


class DegenerateImage(BiopsyFusionError):
    """An image is constant over the evaluation mask."""


class DegenerateConfiguration(BiopsyFusionError):
    """Point configuration does not determine a rigid transform."""


class DegenerateBox(BiopsyFusionError):
    """A bounding box has non-positive extent on some axis."""


class DegenerateSegment(BiopsyFusionError):
    """A needle segment has coincident endpoints."""


class EmptyInput(BiopsyFusionError):
    """An operation requiring at least one element received none."""


class MissingTransform(BiopsyFusionError):
    """A biopsy volume has no successful registration to the reference."""


class ConfigError(BiopsyFusionError):
    """Invalid phantom or registration configuration."""


class FormatError(BiopsyFusionError):
    """Malformed volume file."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DimensionMismatch(FormatError):
    """Volume header dimensions are invalid or inconsistent."""
