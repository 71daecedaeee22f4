"""Restore modes: replace into an existing database, create a new one, or merge.

Partial and full restores differ only in what their archive contains; the
engine treats them identically. Merge is the genuinely different algorithm:
same-named articles are replaced in full (for tables: schema and all rows),
new ones are added, everything else is carried through untouched.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .adapter import ConnectionManager, ConnectionSpec
from .archive import Archive, read_archive
from .errors import (
    DatabaseExists,
    DialectMismatch,
    StagingWriteFailed,
    UnknownDatabase,
)
from .model import (
    ArticleKind,
    DatabaseSnapshot,
    full_selection,
)


class RestoreMode(Enum):
    PARTIAL_EXIST = "partial-exist"
    PARTIAL_NEW = "partial-new"
    FULL_EXIST = "full-exist"
    FULL_NEW = "full-new"
    MERGE = "merge"

    @property
    def creates_database(self) -> bool:
        return self in (RestoreMode.PARTIAL_NEW, RestoreMode.FULL_NEW)


def _empty_counts() -> dict[ArticleKind, int]:
    return {kind: 0 for kind in ArticleKind}


@dataclass
class RestoreReport:
    mode: RestoreMode
    db_name: str
    dialect: str
    atomic: bool
    added: dict[ArticleKind, int] = field(default_factory=_empty_counts)
    replaced: dict[ArticleKind, int] = field(default_factory=_empty_counts)
    kept: dict[ArticleKind, int] = field(default_factory=_empty_counts)
    removed: dict[ArticleKind, int] = field(default_factory=_empty_counts)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "db_name": self.db_name,
            "dialect": self.dialect,
            "atomic": self.atomic,
            "added": {k.value: v for k, v in self.added.items()},
            "replaced": {k.value: v for k, v in self.replaced.items()},
            "kept": {k.value: v for k, v in self.kept.items()},
            "removed": {k.value: v for k, v in self.removed.items()},
        }


def _article_counts(snapshot: DatabaseSnapshot) -> dict[ArticleKind, int]:
    counts = _empty_counts()
    for ref in snapshot.article_refs():
        counts[ref.kind] += 1
    return counts


def merge_overlay(
    current: DatabaseSnapshot, payload: DatabaseSnapshot
) -> tuple[DatabaseSnapshot, "RestoreReport"]:
    """Overlay payload articles onto the current image; count the outcome."""
    report = RestoreReport(
        RestoreMode.MERGE, current.db_name, current.dialect.name, atomic=True
    )
    tables = {t.schema.name: t for t in current.tables}
    for t in payload.tables:
        if t.schema.name in tables:
            report.replaced[ArticleKind.TABLE] += 1
        else:
            report.added[ArticleKind.TABLE] += 1
        tables[t.schema.name] = t

    definitions = {(d.ref.kind, d.ref.name): d for d in current.definitions}
    for d in payload.definitions:
        key = (d.ref.kind, d.ref.name)
        if key in definitions:
            report.replaced[d.ref.kind] += 1
        else:
            report.added[d.ref.kind] += 1
        definitions[key] = d

    payload_tables = {t.schema.name for t in payload.tables}
    payload_defs = {(d.ref.kind, d.ref.name) for d in payload.definitions}
    for name in tables:
        if name not in payload_tables:
            report.kept[ArticleKind.TABLE] += 1
    for kind, name in definitions:
        if (kind, name) not in payload_defs:
            report.kept[kind] += 1

    merged = DatabaseSnapshot(
        dialect=current.dialect,
        db_name=current.db_name,
        db_attributes=current.db_attributes,
        tables=tuple(tables[name] for name in sorted(tables)),
        definitions=tuple(definitions[key] for key in sorted(definitions, key=lambda k: (k[0].value, k[1]))),
    )
    return merged, report


class RestoreEngine:
    """One restore per target database at a time; different targets may overlap."""

    def __init__(self, manager: ConnectionManager):
        self.manager = manager
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, db_name: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._locks.get(db_name)
            if lock is None:
                lock = self._locks[db_name] = threading.Lock()
            return lock

    def restore(
        self,
        archive: Archive,
        mode: RestoreMode,
        db_name: str,
        connection: ConnectionSpec,
    ) -> RestoreReport:
        # The dialect guard runs before anything touches the target.
        if connection.dialect != archive.dialect:
            raise DialectMismatch(
                f"archive is for dialect {archive.dialect.name!r}, "
                f"connection is {connection.dialect.name!r}"
            )
        with self._lock_for(db_name):
            session = self.manager.connect(connection)
            try:
                exists = db_name in session.list_databases()
                if mode.creates_database:
                    if exists:
                        raise DatabaseExists(f"database already exists: {db_name}")
                    session.create_database(db_name)
                    try:
                        atomic = session.replace_contents(db_name, archive.payload)
                    except Exception:
                        session.drop_database(db_name)
                        raise
                    report = RestoreReport(mode, db_name, archive.dialect.name, atomic)
                    report.added = _article_counts(archive.payload)
                    return report

                if not exists:
                    raise UnknownDatabase(f"no such database: {db_name}")

                if mode is RestoreMode.MERGE:
                    current = session.snapshot(
                        db_name, full_selection(session.describe(db_name))
                    )
                    merged, report = merge_overlay(current, archive.payload)
                    report.atomic = session.replace_contents(db_name, merged)
                    return report

                removed = _article_counts(session.describe(db_name))
                atomic = session.replace_contents(db_name, archive.payload)
                report = RestoreReport(mode, db_name, archive.dialect.name, atomic)
                report.added = _article_counts(archive.payload)
                report.removed = removed
                return report
            finally:
                session.close()

    def restore_staged(
        self,
        staging: "StagingArea",
        token: str,
        mode: RestoreMode,
        db_name: str,
        connection: ConnectionSpec,
    ) -> RestoreReport:
        """Restore from a staged upload; the staged copy is deleted either way."""
        try:
            document = staging.read(token)
            archive = read_archive(document)
            return self.restore(archive, mode, db_name, connection)
        finally:
            staging.cleanup(token)


@dataclass(frozen=True)
class StagedUpload:
    token: str
    path: Path


class StagingArea:
    """Server-side holding area for uploaded archives."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self._staged: dict[str, Path] = {}
        self._lock = threading.Lock()

    def stage(self, data: bytes, original_name: str | None = None) -> StagedUpload:
        token = uuid.uuid4().hex
        suffix = ""
        if original_name:
            clean = Path(original_name).name.replace("\\", "_")
            suffix = f"_{clean}" if clean else ""
        path = self.directory / f"{token}{suffix}"
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
        except OSError as exc:
            raise StagingWriteFailed(f"cannot stage upload: {exc}") from None
        with self._lock:
            self._staged[token] = path
        return StagedUpload(token, path)

    def read(self, token: str) -> bytes:
        with self._lock:
            path = self._staged.get(token)
        if path is None or not path.exists():
            raise StagingWriteFailed(f"unknown staged upload: {token}")
        return path.read_bytes()

    def cleanup(self, token: str) -> None:
        """Delete the staged file; a second call is a no-op."""
        with self._lock:
            path = self._staged.pop(token, None)
        if path is not None:
            path.unlink(missing_ok=True)
