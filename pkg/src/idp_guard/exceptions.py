"""Exception types raised across the package."""


class IDPGuardError(Exception):
    """Base class for errors raised by idp_guard."""


class ShapeError(IDPGuardError, ValueError):
    """An array does not match the expected network or dataset shape."""

    def __init__(self, message, layer=None, expected=None, got=None):
        super().__init__(message)
        self.layer = layer
        self.expected = expected
        self.got = got


class DatasetError(IDPGuardError, ValueError):
    pass


class TrainingError(IDPGuardError, RuntimeError):
    """Training diverged or was given unusable input."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class EncodingError(IDPGuardError, ValueError):
    pass


class SolverError(IDPGuardError, RuntimeError):
    """The MILP backend failed. ``stats`` holds model statistics."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats or {}


class InstanceTooLarge(IDPGuardError, ValueError):
    pass


class ArtifactMissing(IDPGuardError, FileNotFoundError):
    """A persisted artifact is absent; ``producer`` names the command that writes it."""

    def __init__(self, path, producer):
        super().__init__(f"missing artifact {path} (run `idp-guard {producer}` first)")
        self.path = path
        self.producer = producer
