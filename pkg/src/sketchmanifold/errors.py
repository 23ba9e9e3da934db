"""Exception hierarchy shared across the package."""


class SketchManifoldError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SketchManifoldError, ValueError):
    """An argument violates a documented precondition."""


class DimensionMismatchError(InvalidInputError):
    """Shapes of rasters, latents, or models do not agree."""


class CorruptFileError(SketchManifoldError):
    """A persisted model or store file failed validation (magic, version, CRC)."""


class TrainingDivergedError(SketchManifoldError):
    """Autoencoder training produced a non-finite loss."""


class UnknownSessionError(SketchManifoldError, KeyError):
    """A session id does not refer to a live session."""
