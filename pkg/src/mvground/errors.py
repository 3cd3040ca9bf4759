"""Exception hierarchy shared across the pipeline.

Every error raised by this package derives from PipelineError. Errors that
surface through the CLI carry an optional ``stage`` attribute naming the
pipeline stage that raised them.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all pipeline errors."""

    stage: str | None = None


# -- scene loading -----------------------------------------------------------

class MissingAsset(PipelineError):
    def __init__(self, frame_id: str, asset: str):
        super().__init__(f"frame {frame_id!r}: missing required asset {asset!r}")
        self.frame_id = frame_id
        self.asset = asset


class MalformedFile(PipelineError):
    def __init__(self, path, offset: int, detail: str = ""):
        msg = f"{path}: malformed at byte {offset}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.path = str(path)
        self.offset = offset


class InvariantViolation(PipelineError):
    def __init__(self, type_name: str, rule: str, detail: str = ""):
        msg = f"{type_name}: invariant {rule!r} violated"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.type_name = type_name
        self.rule = rule


class LengthMismatch(PipelineError):
    """Run-length data does not cover exactly width*height pixels."""


class UnknownFrameId(PipelineError):
    pass


class DimensionMismatch(PipelineError):
    """Embedding vector dimension disagrees with the scene manifest."""


class DegenerateVector(PipelineError):
    """Embedding vector has (near-)zero norm."""


# -- geometry ----------------------------------------------------------------

class InvalidDepth(PipelineError):
    pass


class MissingPose(PipelineError):
    pass


class MissingDepth(PipelineError):
    pass


class DimMismatch(PipelineError):
    """Raster dimensions disagree (mask vs depth vs intrinsics)."""


class EmptyPointSet(PipelineError):
    pass


# -- reconstruction ----------------------------------------------------------

class MemoryCapExceeded(PipelineError):
    pass


class NoValidDepth(PipelineError):
    pass


class EmptySurface(PipelineError):
    pass


# -- view selection / oracle transport ---------------------------------------

class MissingEmbedding(PipelineError):
    pass


class OracleUnavailable(PipelineError):
    pass


class ProtocolViolation(PipelineError):
    pass


class MissingScore(PipelineError):
    pass


# -- proposals / grounding ---------------------------------------------------

class IndexOutOfRange(PipelineError):
    pass


class NoProposals(PipelineError):
    pass


class FallbackFailed(PipelineError):
    """No votes were cast and no view produced a usable lifted box."""


# -- evaluation / CLI --------------------------------------------------------

class EmptyGroundTruth(PipelineError):
    pass


class ConfigInvalid(PipelineError):
    pass


def annotate_stage(err: PipelineError, stage: str) -> PipelineError:
    """Tag an error with the pipeline stage it came from (idempotent)."""
    if getattr(err, "stage", None) is None:
        err.stage = stage
    return err
