"""Exception hierarchy shared across the engine."""


class DoverError(Exception):
    """Base class for all engine errors."""


# --- trace store ---

class StoreUnavailable(DoverError):
    pass


class SessionSealed(DoverError):
    pass


class IndexOutOfRange(DoverError):
    pass


class ParseError(DoverError):
    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class UnknownFormat(DoverError):
    pass


class VersionMismatch(DoverError):
    pass


# --- runtime / replay ---

class ProviderError(DoverError):
    pass


class ProviderUnreachable(ProviderError):
    pass


class ScriptExhausted(ProviderError):
    pass


class MissingVariable(DoverError):
    pass


class MalformedOutput(DoverError):
    pass


class CodecMissing(DoverError):
    pass


class NoCheckpoint(DoverError):
    pass


class ImportedSessionNotReplayable(DoverError):
    pass


# --- pipeline stages ---

class SegmentationFailed(DoverError):
    pass


class AttributionFailed(DoverError):
    pass


class GenerationFailed(DoverError):
    pass


class NoEditProposed(DoverError):
    pass


class ExtractionFailed(DoverError):
    pass


class JudgeFailed(DoverError):
    pass


class NoFinalAnswer(DoverError):
    pass


class IncompleteRuns(DoverError):
    pass


class ScenarioNotFound(DoverError):
    pass


class UsageError(DoverError):
    pass
