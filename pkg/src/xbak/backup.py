"""Backup orchestration: validate selection, snapshot, write, deliver to sinks.

A full backup is the select-everything partial backup; both run through the
same code path, so the two produce byte-identical archives for the same
database state.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from datetime import datetime
from ftplib import FTP, error_perm
from pathlib import Path
from typing import Callable
from urllib.parse import unquote, urlsplit

from .adapter import AdapterSession, ConnectionManager, ConnectionSpec
from .archive import default_archive_name, disambiguate_name, write_archive, _payload_checksum
from .errors import SelectionInvalid, SinkWriteFailed, SnapshotFailed, XbakError
from .model import (
    ArticleKind,
    DatabaseSnapshot,
    Selection,
    full_selection,
    validate_selection,
)

MODE_PARTIAL = "partial"
MODE_FULL = "full"


@dataclass(frozen=True)
class BackupRequest:
    connection: ConnectionSpec
    db_name: str
    mode: str = MODE_FULL
    selection: Selection | None = None
    output_name: str | None = None

    def __post_init__(self):
        if self.mode not in (MODE_PARTIAL, MODE_FULL):
            raise ValueError(f"bad backup mode: {self.mode!r}")
        if self.mode == MODE_PARTIAL and self.selection is None:
            raise ValueError("partial backup requires a selection")


@dataclass(frozen=True)
class SinkSet:
    primary_dir: Path
    mirror_dir: Path | None = None
    remote_url: str | None = None


@dataclass
class BackupReport:
    archive_name: str
    primary_path: Path
    checksum: str
    counts: dict[ArticleKind, int]
    total_rows: int
    db_name: str
    dialect: str
    mirror_path: Path | None = None
    mirror_error: str | None = None
    remote_delivered: bool = False
    remote_error: str | None = None

    def to_dict(self) -> dict:
        return {
            "archive_name": self.archive_name,
            "primary_path": str(self.primary_path),
            "mirror_path": str(self.mirror_path) if self.mirror_path else None,
            "mirror_error": self.mirror_error,
            "remote_delivered": self.remote_delivered,
            "remote_error": self.remote_error,
            "checksum": self.checksum,
            "counts": {k.value: v for k, v in self.counts.items()},
            "total_rows": self.total_rows,
            "db_name": self.db_name,
            "dialect": self.dialect,
        }


def selection_counts(sel: Selection) -> dict[ArticleKind, int]:
    """Articles per kind; explicit record keys count as Record articles."""
    counts = {kind: 0 for kind in ArticleKind}
    for ref in sel.articles:
        counts[ref.kind] += 1
    counts[ArticleKind.RECORD] = sel.record_count()
    return counts


def deliver_remote(url: str, name: str, data: bytes) -> None:
    """Single-shot upload; written under a temp name then renamed."""
    parts = urlsplit(url)
    if parts.scheme == "file":
        target_dir = Path(unquote(parts.path))
        if not target_dir.is_dir():
            raise OSError(f"remote directory does not exist: {target_dir}")
        part = target_dir / (name + ".part")
        part.write_bytes(data)
        part.replace(target_dir / name)
    elif parts.scheme == "ftp":
        import io

        ftp = FTP()
        ftp.connect(parts.hostname or "", parts.port or 21, timeout=30)
        ftp.login(unquote(parts.username or "anonymous"), unquote(parts.password or ""))
        try:
            if parts.path and parts.path != "/":
                ftp.cwd(parts.path)
            ftp.storbinary(f"STOR {name}.part", io.BytesIO(data))
            try:
                ftp.rename(name + ".part", name)
            except error_perm:
                ftp.delete(name)
                ftp.rename(name + ".part", name)
        finally:
            ftp.quit()
    else:
        raise ValueError(f"unsupported remote scheme: {parts.scheme!r}")


class BackupEngine:
    def __init__(self, manager: ConnectionManager, clock: Callable[[], datetime] = datetime.now):
        self.manager = manager
        self.clock = clock

    def backup_partial(self, req: BackupRequest, sinks: SinkSet) -> BackupReport:
        if req.mode != MODE_PARTIAL:
            raise ValueError("backup_partial requires a partial-mode request")
        return self._run(req, sinks, lambda session: req.selection)

    def backup_full(self, req: BackupRequest, sinks: SinkSet) -> BackupReport:
        if req.mode != MODE_FULL:
            raise ValueError("backup_full requires a full-mode request")
        return self._run(
            req, sinks, lambda session: full_selection(session.describe(req.db_name))
        )

    def _run(self, req: BackupRequest, sinks: SinkSet,
             select: Callable[[AdapterSession], Selection]) -> BackupReport:
        session = self.manager.connect(req.connection)
        try:
            sel = select(session)
            report = validate_selection(sel, session.describe(req.db_name))
            if not report.ok:
                raise SelectionInvalid(report.summary(), report)
            try:
                snapshot = session.snapshot(req.db_name, sel)
            except XbakError:
                raise
            except Exception as exc:  # adapter bug or I/O failure underneath
                raise SnapshotFailed(f"snapshot failed: {exc}") from exc
        finally:
            session.close()

        document = write_archive(snapshot)
        name = req.output_name or self._default_name(snapshot, sinks.primary_dir)
        out = BackupReport(
            archive_name=name,
            primary_path=sinks.primary_dir / name,
            checksum=_payload_checksum(snapshot),
            counts=selection_counts(sel),
            total_rows=sum(len(t.rows) for t in snapshot.tables),
            db_name=snapshot.db_name,
            dialect=snapshot.dialect.name,
        )

        self._write_primary(out.primary_path, document)
        if sinks.mirror_dir is not None:
            try:
                sinks.mirror_dir.mkdir(parents=True, exist_ok=True)
                mirror_path = sinks.mirror_dir / name
                shutil.copyfile(out.primary_path, mirror_path)
                out.mirror_path = mirror_path
            except OSError as exc:
                out.mirror_error = str(exc)
        if sinks.remote_url:
            try:
                deliver_remote(sinks.remote_url, name, document)
                out.remote_delivered = True
            except Exception as exc:  # remote failure never fails the backup
                out.remote_error = str(exc)
        return out

    def _default_name(self, snapshot: DatabaseSnapshot, primary_dir: Path) -> str:
        name = default_archive_name(snapshot.dialect, snapshot.db_name, self.clock())
        taken = {p.name for p in primary_dir.glob("*.xml")} if primary_dir.is_dir() else set()
        return disambiguate_name(name, taken)

    def _write_primary(self, path: Path, data: bytes) -> None:
        if not path.parent.is_dir():
            raise SinkWriteFailed(f"primary directory does not exist: {path.parent}")
        try:
            tmp = path.with_name(path.name + ".part")
            tmp.write_bytes(data)
            tmp.replace(path)
        except OSError as exc:
            raise SinkWriteFailed(f"cannot write archive: {exc}") from None
