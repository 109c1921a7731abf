"""Typed errors raised across the pipeline.

Every failure the CLI maps to exit code 1 derives from PipelineError, so
callers can catch one type and still see which stage failed.
"""


class PipelineError(Exception):
    """Base class for all typed pipeline failures."""


# --- ingestion ---

class MissingField(PipelineError):
    def __init__(self, field: str):
        super().__init__(f"manifest is missing required field {field!r}")
        self.field = field


class DuplicateTileId(PipelineError):
    def __init__(self, tile_id: str):
        super().__init__(f"duplicate tile_id {tile_id!r} in manifest")
        self.tile_id = tile_id


class NonPositiveDimension(PipelineError):
    pass


class DimensionMismatch(PipelineError):
    pass


class TruncatedPayload(PipelineError):
    pass


class CountSumMismatch(PipelineError):
    pass


class OutOfTileBounds(PipelineError):
    pass


class IoFailure(PipelineError):
    pass


# --- morphometrics ---

class DegenerateContour(PipelineError):
    """Contour cannot support an ellipse fit (too few distinct points,
    collinear points, or no valid ellipse eigen-solution)."""


# --- stats ---

class EmptySample(PipelineError):
    pass


class InsufficientSample(PipelineError):
    pass


# --- evaluation / cli ---

class TileMismatch(PipelineError):
    pass


class MalformedMeasurements(PipelineError):
    pass


# --- review service ---

class PortInUse(PipelineError):
    pass


class MissingRunOutputs(PipelineError):
    pass


class UnknownInstance(PipelineError):
    pass


class BadPageParams(PipelineError):
    pass


class PersistFailure(PipelineError):
    pass
