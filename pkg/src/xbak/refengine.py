"""Embedded relational store: the reference engine behind the adapter contract.

Design: a single-writer, file-backed store with copy-on-write snapshots.
Each database is one durable file (magic ``RFE1``) under a root directory;
the committed state is an immutable object, so taking a snapshot is a
pointer grab that never blocks writers, and writers serialize per database
behind a lock. Every mutation builds a new state, writes the file atomically
(temp file + rename), then swaps the pointer, which makes clear+apply
restores a single commit.

View bodies are otherwise opaque text, but every identifier following a
``FROM`` keyword must name an existing table; functions, procedures, and
triggers are never parsed.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

from .adapter import AdapterSession, ConnectionSpec, ConnectionTestResult, DbmsAdapter
from .errors import (
    ConstraintViolation,
    DatabaseExists,
    SelectionInvalid,
    UnknownArticle,
    UnknownDatabase,
)
from .model import (
    ArticleKind,
    ArticleRef,
    ColumnDef,
    DatabaseSnapshot,
    DEFINITION_KINDS,
    DefinitionArticle,
    Dialect,
    ForeignKey,
    Selection,
    TableData,
    TableSchema,
    ValueType,
    format_timestamp,
    is_identifier,
    parse_timestamp,
    validate_selection,
)

MAGIC = b"RFE1"
FILE_SUFFIX = ".rfe"
META_DB = "_refmeta"
FIRST_USER_DBID = 5  # ids below are reserved for engine bookkeeping

REF_DIALECT = Dialect("RefEngine")

_FROM_RE = re.compile(r"\bFROM\s+([A-Za-z_][A-Za-z0-9_]*)", re.IGNORECASE)


@dataclass(frozen=True)
class TableState:
    schema: TableSchema
    rows: tuple[tuple, ...] = ()


@dataclass(frozen=True)
class DatabaseState:
    """Committed image of one database. Never mutated in place."""

    name: str
    dbid: int
    attributes: tuple[tuple[str, str], ...]
    tables: dict[str, TableState]
    table_order: tuple[str, ...]
    definitions: dict[tuple[ArticleKind, str], DefinitionArticle]

    def cleared(self) -> "DatabaseState":
        return replace(self, tables={}, table_order=(), definitions={})


def _encode_value(value, col_type: ValueType):
    if value is None:
        return None
    if col_type is ValueType.BLOB:
        return value.hex()
    if col_type is ValueType.TIMESTAMP:
        return format_timestamp(value)
    return value


def _decode_value(raw, col_type: ValueType):
    if raw is None:
        return None
    if col_type is ValueType.BLOB:
        return bytes.fromhex(raw)
    if col_type is ValueType.TIMESTAMP:
        return parse_timestamp(raw)
    if col_type is ValueType.BOOL:
        return bool(raw)
    if col_type is ValueType.INT:
        return int(raw)
    if col_type is ValueType.FLOAT:
        return float(raw)
    return raw


def _state_to_doc(state: DatabaseState) -> dict:
    tables = []
    for name in state.table_order:
        ts = state.tables[name]
        schema = ts.schema
        tables.append(
            {
                "name": name,
                "columns": [
                    {
                        "name": c.name,
                        "type": c.type.value,
                        "nullable": c.nullable,
                        "key": c.is_key,
                    }
                    for c in schema.columns
                ],
                "foreign_keys": [
                    [fk.column, fk.ref_table, fk.ref_column] for fk in schema.foreign_keys
                ],
                "rows": [
                    [_encode_value(v, c.type) for v, c in zip(row, schema.columns)]
                    for row in ts.rows
                ],
            }
        )
    definitions = [
        {
            "kind": d.ref.kind.value,
            "name": d.ref.name,
            "parent": d.ref.parent_table,
            "body": d.body,
        }
        for d in state.definitions.values()
    ]
    return {
        "format": 1,
        "name": state.name,
        "dbid": state.dbid,
        "attributes": [list(p) for p in state.attributes],
        "tables": tables,
        "definitions": definitions,
    }


def _state_from_doc(doc: dict) -> DatabaseState:
    tables: dict[str, TableState] = {}
    order: list[str] = []
    for t in doc["tables"]:
        columns = tuple(
            ColumnDef(c["name"], ValueType(c["type"]), c["nullable"], c["key"])
            for c in t["columns"]
        )
        schema = TableSchema(
            t["name"],
            columns,
            tuple(ForeignKey(*fk) for fk in t["foreign_keys"]),
        )
        rows = tuple(
            tuple(_decode_value(v, c.type) for v, c in zip(row, columns))
            for row in t["rows"]
        )
        tables[t["name"]] = TableState(schema, rows)
        order.append(t["name"])
    definitions = {}
    for d in doc["definitions"]:
        ref = ArticleRef(ArticleKind(d["kind"]), d["name"], d.get("parent"))
        definitions[(ref.kind, ref.name)] = DefinitionArticle(ref, d["body"])
    return DatabaseState(
        name=doc["name"],
        dbid=doc["dbid"],
        attributes=tuple((k, v) for k, v in doc["attributes"]),
        tables=tables,
        table_order=tuple(order),
        definitions=definitions,
    )


def _topo_sort_tables(snapshot: DatabaseSnapshot) -> list[TableData]:
    """Referenced tables first; lexicographic tie-break; self-loops allowed."""
    by_name = {t.schema.name: t for t in snapshot.tables}
    deps: dict[str, set[str]] = {}
    for t in snapshot.tables:
        deps[t.schema.name] = {
            fk.ref_table
            for fk in t.schema.foreign_keys
            if fk.ref_table in by_name and fk.ref_table != t.schema.name
        }
    out: list[TableData] = []
    remaining = dict(deps)
    while remaining:
        ready = sorted(n for n, d in remaining.items() if not d)
        if not ready:
            cyclic = ", ".join(sorted(remaining))
            raise ConstraintViolation(f"cyclic foreign keys among tables: {cyclic}")
        for name in ready:
            out.append(by_name[name])
            del remaining[name]
        for d in remaining.values():
            d.difference_update(ready)
    return out


def _check_view_body(name: str, body: str, table_names: set[str]) -> None:
    for referenced in _FROM_RE.findall(body):
        if referenced not in table_names:
            raise ConstraintViolation(
                f"view {name} references unknown table {referenced}"
            )


def _apply_to_state(state: DatabaseState, snapshot: DatabaseSnapshot) -> DatabaseState:
    """Add a snapshot's articles to a state; additive, validated, all-or-nothing."""
    problems = snapshot.problems()
    if problems:
        raise ConstraintViolation(problems[0])

    tables = dict(state.tables)
    order = list(state.table_order)
    for tdata in _topo_sort_tables(snapshot):
        schema = tdata.schema
        if schema.name in tables:
            raise ConstraintViolation(f"table already exists: {schema.name}")
        for fk in schema.foreign_keys:
            target = snapshot.table_map.get(fk.ref_table) or tables.get(fk.ref_table)
            target_schema = target.schema if target is not None else None
            if target_schema is None:
                raise ConstraintViolation(
                    f"table {schema.name}: foreign key references missing table {fk.ref_table}"
                )
            if fk.ref_column not in target_schema.column_names:
                raise ConstraintViolation(
                    f"table {schema.name}: foreign key references missing column "
                    f"{fk.ref_table}.{fk.ref_column}"
                )
        seen_keys = set()
        for row in tdata.rows:
            problem = schema.check_row(row)
            if problem:
                raise ConstraintViolation(problem)
            key = schema.key_of(row)
            if key in seen_keys:
                raise ConstraintViolation(f"table {schema.name}: duplicate key {key!r}")
            seen_keys.add(key)
        tables[schema.name] = TableState(schema, tdata.rows)
        order.append(schema.name)

    # FK row values are checked once everything is in, so fixtures with
    # self-referencing tables load no matter how their rows are ordered.
    for tdata in snapshot.tables:
        schema = tdata.schema
        for fk in schema.foreign_keys:
            col_idx = schema.column_names.index(fk.column)
            target = tables[fk.ref_table]
            ref_idx = target.schema.column_names.index(fk.ref_column)
            known = {row[ref_idx] for row in target.rows}
            for row in tdata.rows:
                value = row[col_idx]
                if value is not None and value not in known:
                    raise ConstraintViolation(
                        f"table {schema.name}: foreign key value {value!r} "
                        f"has no match in {fk.ref_table}.{fk.ref_column}"
                    )

    definitions = dict(state.definitions)
    incoming = sorted(
        snapshot.definitions,
        key=lambda d: (DEFINITION_KINDS.index(d.ref.kind), d.ref.name),
    )
    table_names = set(tables)
    for d in incoming:
        key = (d.ref.kind, d.ref.name)
        if key in definitions:
            raise ConstraintViolation(
                f"{d.ref.kind.value} already exists: {d.ref.name}"
            )
        if d.ref.kind is ArticleKind.VIEW:
            _check_view_body(d.ref.name, d.body, table_names)
        definitions[key] = d

    return replace(
        state, tables=tables, table_order=tuple(order), definitions=definitions
    )


class RefStore:
    """All databases under one root directory. One instance per root."""

    _registry: dict[Path, "RefStore"] = {}
    _registry_lock = threading.Lock()

    def __init__(self, root: Path):
        self.root = root
        self._slots: dict[str, DatabaseState] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._store_lock = threading.RLock()
        self._ensure_meta()

    @classmethod
    def open_root(cls, root: str | Path) -> "RefStore":
        path = Path(root).resolve()
        if not path.is_dir():
            raise UnknownDatabase(f"store not found: {root}")
        with cls._registry_lock:
            store = cls._registry.get(path)
            if store is None:
                store = cls(path)
                cls._registry[path] = store
            return store

    @classmethod
    def reset_cache(cls) -> None:
        """Drop cached stores so the next open re-reads the files."""
        with cls._registry_lock:
            cls._registry.clear()

    # -- files -----------------------------------------------------------

    def _db_path(self, name: str) -> Path:
        return self.root / f"{name}{FILE_SUFFIX}"

    def _write_file(self, path: Path, doc: dict) -> None:
        data = MAGIC + json.dumps(doc, ensure_ascii=False).encode("utf-8")
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(path)

    def _read_file(self, path: Path) -> dict:
        data = path.read_bytes()
        if data[:4] != MAGIC:
            raise UnknownDatabase(f"not a reference-engine database file: {path.name}")
        return json.loads(data[4:].decode("utf-8"))

    def _ensure_meta(self) -> None:
        meta_path = self._db_path(META_DB)
        if not meta_path.exists():
            self._write_file(
                meta_path,
                {
                    "format": 1,
                    "meta": True,
                    "next_dbid": FIRST_USER_DBID,
                    "created": format_timestamp(datetime.now(timezone.utc)),
                },
            )

    def _next_dbid(self) -> int:
        meta_path = self._db_path(META_DB)
        meta = self._read_file(meta_path)
        dbid = meta["next_dbid"]
        meta["next_dbid"] = dbid + 1
        self._write_file(meta_path, meta)
        return dbid

    # -- state access ------------------------------------------------------

    def _lock_for(self, name: str) -> threading.RLock:
        with self._store_lock:
            lock = self._locks.get(name)
            if lock is None:
                lock = self._locks[name] = threading.RLock()
            return lock

    def list_databases(self) -> list[str]:
        names = []
        for path in self.root.glob(f"*{FILE_SUFFIX}"):
            name = path.name[: -len(FILE_SUFFIX)]
            if name != META_DB:
                names.append(name)
        return sorted(names)

    def get_state(self, name: str) -> DatabaseState:
        """Current committed state; this is the snapshot-isolation read."""
        with self._store_lock:
            state = self._slots.get(name)
        if state is not None:
            return state
        path = self._db_path(name)
        if name == META_DB or not path.exists():
            raise UnknownDatabase(f"no such database: {name}")
        with self._lock_for(name):
            with self._store_lock:
                state = self._slots.get(name)
            if state is None:
                state = _state_from_doc(self._read_file(path))
                with self._store_lock:
                    self._slots[name] = state
            return state

    def mutate(self, name: str, fn) -> DatabaseState:
        """Run fn(state) -> new state under the database's writer lock."""
        with self._lock_for(name):
            state = self.get_state(name)
            new_state = fn(state)
            self._write_file(self._db_path(name), _state_to_doc(new_state))
            with self._store_lock:
                self._slots[name] = new_state
            return new_state

    def create_database(self, name: str) -> None:
        if not is_identifier(name):
            raise ConstraintViolation(f"bad database name: {name!r}")
        with self._store_lock:
            if name == META_DB or self._db_path(name).exists():
                raise DatabaseExists(f"database already exists: {name}")
            state = DatabaseState(
                name=name,
                dbid=self._next_dbid(),
                attributes=(),
                tables={},
                table_order=(),
                definitions={},
            )
            state = replace(
                state,
                attributes=(
                    ("name", name),
                    ("dbid", str(state.dbid)),
                    ("mode", "READ_WRITE"),
                    ("created", format_timestamp(datetime.now(timezone.utc))),
                ),
            )
            self._write_file(self._db_path(name), _state_to_doc(state))
            self._slots[name] = state

    def drop_database(self, name: str) -> None:
        with self._store_lock:
            path = self._db_path(name)
            if name == META_DB or not path.exists():
                raise UnknownDatabase(f"no such database: {name}")
            path.unlink()
            self._slots.pop(name, None)


class RefEngineSession(AdapterSession):
    """Adapter contract over a RefStore, plus native write operations."""

    def __init__(self, store: RefStore):
        super().__init__(REF_DIALECT)
        self.store = store

    # -- reads --------------------------------------------------------------

    def list_databases(self) -> list[str]:
        self._check_open()
        return self.store.list_databases()

    def _snapshot_of(self, state: DatabaseState, sel: Selection | None) -> DatabaseSnapshot:
        def def_order(key: tuple[ArticleKind, str]):
            return (key[0].value, key[1])

        if sel is None:
            table_names = set(state.tables)
            chosen_tables = sorted(state.tables)
            chosen_defs = sorted(state.definitions, key=def_order)
            all_rows: set[str] = set(state.tables)
            keys: dict[str, frozenset[tuple]] = {}
        else:
            table_names = sel.selected_tables()
            chosen_tables = sorted(table_names)
            chosen_defs = sorted(
                ((r.kind, r.name) for r in sel.articles if r.kind in DEFINITION_KINDS),
                key=def_order,
            )
            all_rows = set(sel.select_all_records)
            keys = dict(sel.record_keys)

        tables = []
        for name in chosen_tables:
            ts = state.tables[name]
            schema = ts.schema
            kept_fks = tuple(
                fk for fk in schema.foreign_keys if fk.ref_table in table_names
            )
            if kept_fks != schema.foreign_keys:
                # FK edges whose target table was not selected are pruned:
                # a data-level partial backup cannot carry them.
                schema = TableSchema(schema.name, schema.columns, kept_fks)
            if name in all_rows:
                rows = ts.rows
            elif name in keys:
                wanted = keys[name]
                rows = tuple(r for r in ts.rows if ts.schema.key_of(r) in wanted)
            else:
                rows = ()
            tables.append(TableData(schema, rows))

        definitions = tuple(state.definitions[k] for k in chosen_defs)
        return DatabaseSnapshot(
            dialect=self.dialect,
            db_name=state.name,
            db_attributes=state.attributes,
            tables=tuple(tables),
            definitions=definitions,
        )

    def describe(self, db_name: str) -> DatabaseSnapshot:
        self._check_open()
        state = self.store.get_state(db_name)
        full = self._snapshot_of(state, None)
        return DatabaseSnapshot(
            dialect=full.dialect,
            db_name=full.db_name,
            db_attributes=full.db_attributes,
            tables=tuple(TableData(t.schema, ()) for t in full.tables),
            definitions=full.definitions,
        )

    def row_counts(self, db_name: str) -> dict[str, int]:
        self._check_open()
        state = self.store.get_state(db_name)
        return {name: len(ts.rows) for name, ts in state.tables.items()}

    def snapshot(self, db_name: str, sel: Selection) -> DatabaseSnapshot:
        """One consistent point in time: reads the committed state pointer once."""
        self._check_open()
        state = self.store.get_state(db_name)
        report = validate_selection(sel, self._snapshot_of(state, None))
        if not report.ok:
            for violation in report.violations:
                if violation.code == "unknown_article":
                    raise UnknownArticle(violation.message)
            raise SelectionInvalid(report.summary(), report)
        return self._snapshot_of(state, sel)

    # -- adapter-contract writes ---------------------------------------------

    def create_database(self, name: str) -> None:
        self._check_open()
        self.store.create_database(name)

    def drop_database(self, name: str) -> None:
        self._check_open()
        self.store.drop_database(name)

    def drop_contents(self, db_name: str) -> None:
        self._check_open()
        self.store.mutate(db_name, lambda state: state.cleared())

    def apply_snapshot(self, db_name: str, snapshot: DatabaseSnapshot) -> None:
        self._check_open()
        self.store.mutate(db_name, lambda state: _apply_to_state(state, snapshot))

    def replace_contents(self, db_name: str, snapshot: DatabaseSnapshot) -> bool:
        self._check_open()
        self.store.mutate(
            db_name, lambda state: _apply_to_state(state.cleared(), snapshot)
        )
        return True

    # -- native writes (used by fixtures and concurrent-writer tests) ---------

    def create_table(self, db_name: str, schema: TableSchema) -> None:
        self._check_open()
        addition = DatabaseSnapshot(
            dialect=self.dialect, db_name=db_name, tables=(TableData(schema, ()),)
        )
        self.store.mutate(db_name, lambda state: _apply_to_state(state, addition))

    def put_definition(self, db_name: str, definition: DefinitionArticle) -> None:
        self._check_open()
        addition = DatabaseSnapshot(
            dialect=self.dialect, db_name=db_name, definitions=(definition,)
        )
        self.store.mutate(db_name, lambda state: _apply_to_state(state, addition))

    def insert_row(self, db_name: str, table: str, row: tuple) -> None:
        self._check_open()

        def fn(state: DatabaseState) -> DatabaseState:
            ts = state.tables.get(table)
            if ts is None:
                raise UnknownArticle(f"no such table: {table}")
            problem = ts.schema.check_row(tuple(row))
            if problem:
                raise ConstraintViolation(problem)
            key = ts.schema.key_of(tuple(row))
            if any(ts.schema.key_of(r) == key for r in ts.rows):
                raise ConstraintViolation(f"table {table}: duplicate key {key!r}")
            for fk in ts.schema.foreign_keys:
                col_idx = ts.schema.column_names.index(fk.column)
                value = tuple(row)[col_idx]
                if value is None:
                    continue
                target = state.tables.get(fk.ref_table)
                if target is None:
                    raise ConstraintViolation(
                        f"table {table}: foreign key references missing table {fk.ref_table}"
                    )
                ref_idx = target.schema.column_names.index(fk.ref_column)
                candidates = {r[ref_idx] for r in target.rows}
                if fk.ref_table == table:
                    candidates.add(tuple(row)[ref_idx])
                if value not in candidates:
                    raise ConstraintViolation(
                        f"table {table}: foreign key value {value!r} "
                        f"has no match in {fk.ref_table}.{fk.ref_column}"
                    )
            tables = dict(state.tables)
            tables[table] = TableState(ts.schema, ts.rows + (tuple(row),))
            return replace(state, tables=tables)

        self.store.mutate(db_name, fn)

    def delete_rows(self, db_name: str, table: str, keys: set[tuple]) -> int:
        self._check_open()
        removed = 0

        def fn(state: DatabaseState) -> DatabaseState:
            nonlocal removed
            ts = state.tables.get(table)
            if ts is None:
                raise UnknownArticle(f"no such table: {table}")
            kept = tuple(r for r in ts.rows if ts.schema.key_of(r) not in keys)
            removed = len(ts.rows) - len(kept)
            tables = dict(state.tables)
            tables[table] = TableState(ts.schema, kept)
            return replace(state, tables=tables)

        self.store.mutate(db_name, fn)
        return removed


class RefEngineAdapter(DbmsAdapter):
    """Adapter entry point; ``server`` in a ConnectionSpec is a store root path."""

    def __init__(self, roots: list[str | Path] | None = None):
        self.dialect = REF_DIALECT
        self.roots = [str(r) for r in (roots or [])]

    def list_servers(self) -> list[str]:
        return list(self.roots)

    def test_connection(self, spec: ConnectionSpec) -> ConnectionTestResult:
        if not Path(spec.server).is_dir():
            return ConnectionTestResult(False, "store not found")
        return ConnectionTestResult(True)

    def connect(self, spec: ConnectionSpec) -> RefEngineSession:
        store = RefStore.open_root(spec.server)
        return RefEngineSession(store)
