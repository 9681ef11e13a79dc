"""Exception types shared across the pipeline."""


class Face2SceneError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(Face2SceneError, ValueError):
    """An argument is outside its documented domain."""


class ShapeError(Face2SceneError, ValueError):
    """Array shapes are inconsistent with the operation's contract."""


class AnnotationError(Face2SceneError, ValueError):
    """A face annotation is malformed or out of image bounds."""


class TooSmallFaceError(Face2SceneError, ValueError):
    """Face crop is below the 16-pixel minimum usable side."""


class ContractError(Face2SceneError, ValueError):
    """An input violates a numeric contract (e.g. non-unit embedding)."""


class CheckpointError(Face2SceneError, ValueError):
    """Checkpoint content does not match the expected parameter structure."""


class DegenerateTaskError(Face2SceneError, ValueError):
    """Training data cannot support the objective (e.g. a single label)."""


class DegenerateEmbeddingError(Face2SceneError, ValueError):
    """An embedding collapsed to zero and cannot be normalized."""


class DataError(Face2SceneError, ValueError):
    """A dataset record is missing required fields or files."""
