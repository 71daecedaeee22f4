"""Command-line driver: backup, restore, inspect, validate, serve.

Exit codes: 0 success, 2 validation/guard error, 1 internal error. Errors
print as a single ``code: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from datetime import datetime
from pathlib import Path

from .adapter import ConnectionManager, ConnectionSpec
from .archive import read_archive, text_to_value
from .backup import BackupEngine, BackupRequest, MODE_FULL, MODE_PARTIAL, SinkSet
from .config import AppConfig, load_config
from .errors import SelectionInvalid, XbakError
from .model import ArticleKind, ArticleRef, Dialect, Selection
from .restore import RestoreEngine, RestoreMode
from .service import build_manager

INTERNAL_CODES = {
    "INTERNAL",
    "SNAPSHOT_FAILED",
    "SINK_WRITE_FAILED",
    "STAGING_WRITE_FAILED",
    "SESSION_CLOSED",
}

KEY_TUPLE_RE = re.compile(r"\(([^)]*)\)")
KEY_TUPLES_RE = re.compile(r"\([^)]*\)(?:,\([^)]*\))*")


def _use_color() -> bool:
    return sys.stdout.isatty() and not os.environ.get("NO_COLOR")


def _ok(text: str) -> str:
    return f"\x1b[32m{text}\x1b[0m" if _use_color() else text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xbak",
        description="Selective logical backup and restore with portable XML archives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_connection_flags(p):
        p.add_argument("--config", type=Path, help="YAML config file")
        p.add_argument("--dialect", required=True, help="dialect name, e.g. RefEngine")
        p.add_argument("--server", required=True, help="server (store root for RefEngine)")
        p.add_argument("--user", default="", help="user name")
        p.add_argument("--password", default="", help="password")

    p_backup = sub.add_parser("backup", help="back up a database to an XML archive")
    add_connection_flags(p_backup)
    p_backup.add_argument("--db", required=True, help="database name")
    p_backup.add_argument(
        "--table",
        action="append",
        default=[],
        metavar="NAME[:KEYS]",
        help="table to back up; ':1,2' selects records by key, ':(a|b),(c|d)' "
        "for composite keys; no suffix backs up the schema plus all records",
    )
    p_backup.add_argument("--view", action="append", default=[], metavar="NAME")
    p_backup.add_argument("--proc", action="append", default=[], metavar="NAME")
    p_backup.add_argument("--func", action="append", default=[], metavar="NAME")
    p_backup.add_argument("--trigger", action="append", default=[], metavar="NAME")
    p_backup.add_argument("--full", action="store_true", help="back up every article")
    p_backup.add_argument("--out", help="output file name (or path) for the archive")
    p_backup.add_argument(
        "--schema-only",
        action="append",
        default=[],
        metavar="TABLE",
        help="back up the named table without its records",
    )

    p_restore = sub.add_parser("restore", help="restore an XML archive")
    add_connection_flags(p_restore)
    p_restore.add_argument(
        "--mode", required=True, choices=[m.value for m in RestoreMode]
    )
    p_restore.add_argument("--archive", required=True, type=Path)
    p_restore.add_argument("--db", required=True, help="target database name")

    p_inspect = sub.add_parser("inspect", help="print an archive's header and counts")
    p_inspect.add_argument("--archive", required=True, type=Path)

    p_validate = sub.add_parser("validate", help="exit 0 iff the archive reads cleanly")
    p_validate.add_argument("--archive", required=True, type=Path)

    p_serve = sub.add_parser("serve", help="run the HTTP admin service")
    p_serve.add_argument("--config", type=Path, required=True, help="YAML config file")

    return parser


def _load_config(args) -> AppConfig:
    path = getattr(args, "config", None)
    if path is not None:
        return load_config(path)
    return AppConfig()


def _parse_key_text(keyspec: str) -> list[tuple[str, ...]]:
    if keyspec.startswith("("):
        if KEY_TUPLES_RE.fullmatch(keyspec) is None:
            raise SelectionInvalid(f"bad composite key syntax: {keyspec!r}")
        return [tuple(m.split("|")) for m in KEY_TUPLE_RE.findall(keyspec)]
    return [(token,) for token in keyspec.split(",")]


def _build_selection(args, session, db_name: str) -> Selection:
    image = session.describe(db_name)
    table_map = image.table_map
    articles: set[ArticleRef] = set()
    record_keys: dict[str, frozenset] = {}
    select_all: set[str] = set()

    for name in args.view:
        articles.add(ArticleRef(ArticleKind.VIEW, name))
    for name in args.proc:
        articles.add(ArticleRef(ArticleKind.STORED_PROCEDURE, name))
    for name in args.func:
        articles.add(ArticleRef(ArticleKind.FUNCTION, name))
    for name in args.trigger:
        articles.add(ArticleRef(ArticleKind.TRIGGER, name))
    for name in args.schema_only:
        articles.add(ArticleRef(ArticleKind.TABLE, name))

    for raw in args.table:
        name, _, keyspec = raw.partition(":")
        articles.add(ArticleRef(ArticleKind.TABLE, name))
        if not keyspec:
            select_all.add(name)
            continue
        tdata = table_map.get(name)
        if tdata is None:
            raise SelectionInvalid(f"unknown table: {name}")
        key_cols = tdata.schema.key_columns
        typed = set()
        for parts in _parse_key_text(keyspec):
            if len(parts) != len(key_cols):
                raise SelectionInvalid(
                    f"table {name}: key has {len(parts)} values, "
                    f"expected {len(key_cols)}"
                )
            try:
                typed.add(
                    tuple(
                        text_to_value(text, col.type)
                        for text, col in zip(parts, key_cols)
                    )
                )
            except ValueError as exc:
                raise SelectionInvalid(f"table {name}: {exc}") from None
        record_keys[name] = frozenset(typed)

    return Selection(
        db_name=db_name,
        articles=frozenset(articles),
        record_keys=record_keys,
        select_all_records=frozenset(select_all),
    )


def _print_report_table(pairs: list[tuple[str, str]]) -> None:
    width = max(len(k) for k, _ in pairs)
    for key, value in pairs:
        print(f"{key.ljust(width)}  {value}")


def _counts_text(counts: dict) -> str:
    parts = [f"{k.value}={v}" for k, v in counts.items() if v]
    return " ".join(parts) if parts else "none"


def cmd_backup(args) -> int:
    config = _load_config(args)
    manager = build_manager(config)
    spec = ConnectionSpec(Dialect(args.dialect), args.server, args.user, args.password)

    primary_dir = config.sinks.primary_dir
    output_name = None
    if args.out:
        out = Path(args.out)
        if out.parent != Path("."):
            primary_dir = out.parent
        output_name = out.name
    sinks = SinkSet(primary_dir, config.sinks.mirror_dir, config.sinks.remote_url)
    engine = BackupEngine(manager)

    if args.full:
        req = BackupRequest(spec, args.db, MODE_FULL, None, output_name)
        report = engine.backup_full(req, sinks)
    else:
        session = manager.connect(spec)
        try:
            selection = _build_selection(args, session, args.db)
        finally:
            session.close()
        req = BackupRequest(spec, args.db, MODE_PARTIAL, selection, output_name)
        report = engine.backup_partial(req, sinks)

    _print_report_table(
        [
            ("archive", report.archive_name),
            ("primary", str(report.primary_path)),
            ("mirror", str(report.mirror_path) if report.mirror_path else "-"),
            ("remote", "delivered" if report.remote_delivered
             else (report.remote_error or "not configured")),
            ("checksum", report.checksum),
            ("articles", _counts_text(report.counts)),
            ("rows", str(report.total_rows)),
        ]
    )
    print(_ok("Backup Completed"))
    return 0


def cmd_restore(args) -> int:
    config = _load_config(args)
    manager = build_manager(config)
    spec = ConnectionSpec(Dialect(args.dialect), args.server, args.user, args.password)
    archive = read_archive(Path(args.archive).read_bytes())
    engine = RestoreEngine(manager)
    report = engine.restore(archive, RestoreMode(args.mode), args.db, spec)
    _print_report_table(
        [
            ("mode", report.mode.value),
            ("database", report.db_name),
            ("added", _counts_text(report.added)),
            ("replaced", _counts_text(report.replaced)),
            ("kept", _counts_text(report.kept)),
            ("removed", _counts_text(report.removed)),
            ("atomic", "yes" if report.atomic else "no"),
        ]
    )
    print(_ok("Restore completed"))
    return 0


def cmd_inspect(args) -> int:
    archive = read_archive(Path(args.archive).read_bytes())
    counts = {kind: 0 for kind in ArticleKind}
    for ref in archive.payload.article_refs():
        counts[ref.kind] += 1
    _print_report_table(
        [
            ("dialect", archive.dialect.name),
            ("database", archive.db_name),
            ("format", str(archive.format_version)),
            ("checksum", f"{archive.checksum} (verified)"),
            ("articles", _counts_text(counts)),
            ("rows", str(sum(len(t.rows) for t in archive.payload.tables))),
        ]
    )
    return 0


def cmd_validate(args) -> int:
    archive = read_archive(Path(args.archive).read_bytes())
    print(_ok(f"OK: {archive.dialect.name} backup of {archive.db_name}"))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = _load_config(args)
    app = create_app(config)
    host, _, port = config.bind_addr.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8123))
    return 0


COMMANDS = {
    "backup": cmd_backup,
    "restore": cmd_restore,
    "inspect": cmd_inspect,
    "validate": cmd_validate,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except XbakError as exc:
        print(f"{exc.code}: {exc.message}", file=sys.stderr)
        return 1 if exc.code in INTERNAL_CODES else 2
    except OSError as exc:
        print(f"IO_ERROR: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
