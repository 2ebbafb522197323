"""Exception hierarchy shared by every layer of the package."""


class SynchronicError(Exception):
    """Base class. ``code`` is the stable identifier used on the wire."""

    code = "error"


class EncodingError(SynchronicError, ValueError):
    code = "encoding"


class KeyFormatError(SynchronicError, ValueError):
    code = "bad-key"


class DuplicateKeyError(SynchronicError, ValueError):
    code = "duplicate-key"


class NotFoundError(SynchronicError, LookupError):
    code = "not-found"


class GoneError(SynchronicError, LookupError):
    """The block exists but its full map was pruned."""

    code = "gone"


class PendingError(SynchronicError):
    """The index has not been sealed yet."""

    code = "pending"


class TooLateError(SynchronicError):
    code = "too-late"


class TooEarlyError(SynchronicError):
    code = "too-early"


class ConflictError(SynchronicError):
    code = "conflict"


class ThrottledError(SynchronicError):
    code = "throttled"


class OrderError(SynchronicError):
    """Blocks sealed or appended out of order."""

    code = "order"


class RetentionError(SynchronicError):
    code = "retention"


class PeriodError(SynchronicError, ValueError):
    code = "period"


class ComponentMismatchError(SynchronicError, ValueError):
    code = "mismatch"


class ConfigError(SynchronicError, ValueError):
    code = "config"


class EvidenceError(SynchronicError, ValueError):
    code = "bad-evidence"


class ForbiddenError(SynchronicError):
    code = "forbidden"


class ChainUnavailableError(SynchronicError):
    """The chain source could not be reached; distinct from a failed check."""

    code = "unavailable"


ERRORS_BY_CODE = {
    cls.code: cls
    for cls in (
        SynchronicError,
        EncodingError,
        KeyFormatError,
        DuplicateKeyError,
        NotFoundError,
        GoneError,
        PendingError,
        TooLateError,
        TooEarlyError,
        ConflictError,
        ThrottledError,
        OrderError,
        RetentionError,
        PeriodError,
        ComponentMismatchError,
        ConfigError,
        EvidenceError,
        ForbiddenError,
        ChainUnavailableError,
    )
}
