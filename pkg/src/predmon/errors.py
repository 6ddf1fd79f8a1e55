"""Exception types raised across the package."""


class PredmonError(Exception):
    """Base class for all engine errors."""


# ingestion / windowing
class MissingColumn(PredmonError, KeyError):
    pass


class NonMonotonicTimestamps(PredmonError, ValueError):
    pass


class IrregularSampling(PredmonError, ValueError):
    pass


class EmptyAfterFiltering(PredmonError, ValueError):
    pass


class NonFiniteData(PredmonError, ValueError):
    pass


class FrameTooShort(PredmonError, ValueError):
    pass


class ConstantChannel(PredmonError, ValueError):
    pass


# numerics
class DimensionMismatch(PredmonError, ValueError):
    pass


class NonFiniteGradient(PredmonError, FloatingPointError):
    pass


class InvalidRate(PredmonError, ValueError):
    pass


class EmptyDataset(PredmonError, ValueError):
    pass


class DivergedLoss(PredmonError, FloatingPointError):
    pass


# policy / environment / agent
class NonFiniteValue(PredmonError, ValueError):
    pass


class InvalidTable(PredmonError, ValueError):
    pass


class EmptySequence(PredmonError, ValueError):
    pass


class EpisodeFinished(PredmonError, RuntimeError):
    pass


class InvalidAction(PredmonError, ValueError):
    pass


class InsufficientMemory(PredmonError, RuntimeError):
    pass


# metrics
class EmptyInput(PredmonError, ValueError):
    pass


class ZeroActual(PredmonError, ZeroDivisionError):
    pass


# persistence / orchestration
class CheckpointMissing(PredmonError, FileNotFoundError):
    pass


class ChecksumMismatch(PredmonError, ValueError):
    pass


class VersionUnsupported(PredmonError, ValueError):
    pass


class ShapeMismatch(PredmonError, ValueError):
    pass


class ConfigError(PredmonError, ValueError):
    pass


class AgentRunError(PredmonError, RuntimeError):
    """Wraps a failure inside one agent's run with its channel name."""

    def __init__(self, channel: str, cause: BaseException):
        super().__init__(f"agent {channel!r} failed: {cause!r}")
        self.channel = channel
        self.cause = cause
