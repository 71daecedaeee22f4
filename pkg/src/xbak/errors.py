"""Exception hierarchy shared by the engine, the HTTP service, and the CLI.

Every error carries a stable ``code`` string; the HTTP layer maps codes to
status codes and the CLI prints them as ``code: message`` lines. The set of
codes is closed and guarded by a test.
"""

from __future__ import annotations


class XbakError(Exception):
    """Base class for all tool errors."""

    code = "INTERNAL"

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message


# --- statement catalog ------------------------------------------------------

class CatalogParseError(XbakError):
    code = "CATALOG_PARSE"


class DuplicateStatement(XbakError):
    code = "DUPLICATE_STATEMENT"


class MissingStatement(XbakError):
    code = "MISSING_STATEMENT"


class MissingArgument(XbakError):
    code = "MISSING_ARGUMENT"


class ExtraArgument(XbakError):
    code = "EXTRA_ARGUMENT"


class IllegalIdentifier(XbakError):
    code = "ILLEGAL_IDENTIFIER"


# --- adapters and the reference engine --------------------------------------

class AdapterUnavailable(XbakError):
    code = "ADAPTER_UNAVAILABLE"


class SessionClosed(XbakError):
    code = "SESSION_CLOSED"


class UnknownDatabase(XbakError):
    code = "UNKNOWN_DATABASE"


class DatabaseExists(XbakError):
    code = "DATABASE_EXISTS"


class UnknownArticle(XbakError):
    code = "UNKNOWN_ARTICLE"


class ConstraintViolation(XbakError):
    code = "CONSTRAINT_VIOLATION"


# --- archive format ----------------------------------------------------------

class MalformedHex(XbakError):
    code = "MALFORMED_HEX"


class NotABackupFile(XbakError):
    code = "NOT_A_BACKUP_FILE"


class MalformedDocument(XbakError):
    code = "MALFORMED_DOCUMENT"


class ChecksumMismatch(XbakError):
    code = "CHECKSUM_MISMATCH"


class UnsupportedVersion(XbakError):
    code = "UNSUPPORTED_VERSION"


# --- backup / restore engines -------------------------------------------------

class SelectionInvalid(XbakError):
    code = "SELECTION_INVALID"

    def __init__(self, message: str = "", report=None):
        super().__init__(message)
        self.report = report


class SnapshotFailed(XbakError):
    code = "SNAPSHOT_FAILED"


class SinkWriteFailed(XbakError):
    code = "SINK_WRITE_FAILED"


class StagingWriteFailed(XbakError):
    code = "STAGING_WRITE_FAILED"


class DialectMismatch(XbakError):
    code = "DIALECT_MISMATCH"


# --- service ------------------------------------------------------------------

class AuthFailed(XbakError):
    code = "AUTH_FAILED"


class AuthRequired(XbakError):
    code = "AUTH_REQUIRED"


class MalformedRequest(XbakError):
    code = "MALFORMED_REQUEST"


class ConnectionRequired(XbakError):
    code = "CONNECTION_REQUIRED"


class ConfigError(XbakError):
    code = "CONFIG_ERROR"
