"""Selective logical backup and restore for relational databases.

Databases are browsed article by article (tables, views, functions,
procedures, triggers, individual records), exported to a self-describing
XML archive, and restored whole, merged, or into a fresh database. A
dialect header guards archives against cross-DBMS restores, and an embedded
reference engine makes the whole stack testable without an external DBMS.
"""

from .adapter import ConnectionManager, ConnectionSpec
from .archive import Archive, read_archive, write_archive
from .backup import BackupEngine, BackupRequest, SinkSet
from .errors import XbakError
from .model import (
    ArticleKind,
    ArticleRef,
    DatabaseSnapshot,
    Dialect,
    Selection,
    validate_selection,
)
from .refengine import RefEngineAdapter, RefStore
from .restore import RestoreEngine, RestoreMode, StagingArea
from .statements import StatementCatalog, load_catalog, load_default_catalog

__version__ = "0.1.0"

__all__ = [
    "Archive",
    "ArticleKind",
    "ArticleRef",
    "BackupEngine",
    "BackupRequest",
    "ConnectionManager",
    "ConnectionSpec",
    "DatabaseSnapshot",
    "Dialect",
    "RefEngineAdapter",
    "RefStore",
    "RestoreEngine",
    "RestoreMode",
    "Selection",
    "SinkSet",
    "StagingArea",
    "StatementCatalog",
    "XbakError",
    "load_catalog",
    "load_default_catalog",
    "read_archive",
    "validate_selection",
    "write_archive",
    "__version__",
]
