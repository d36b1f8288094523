"""Exception hierarchy shared by every module."""


class MTKDError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(MTKDError, ValueError):
    pass


class UpdateRejected(MTKDError):
    """An optimizer step was refused because a gradient was not finite."""

    def __init__(self, layer: int, message: str = ""):
        self.layer = layer
        super().__init__(message or f"non-finite gradient in layer {layer}; update rejected")


class CheckpointError(MTKDError):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


class UnsupportedVersion(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class DataError(MTKDError):
    pass


class ParseError(DataError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConfigError(MTKDError):
    pass


class TrainingError(MTKDError):
    pass
