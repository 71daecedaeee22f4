"""Core vocabulary: dialects, articles, schemas, rows, snapshots, selections.

All values here are immutable after construction and safe to share between
threads. Rows are plain tuples of Python values, positionally aligned with
their table's column list; the supported value kinds are the seven tags of
:class:`ValueType`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Mapping

IDENTIFIER_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
DIALECT_RE = re.compile(r"[A-Za-z0-9_]+")

INT64_MIN = -(2 ** 63)
INT64_MAX = 2 ** 63 - 1

TIMESTAMP_RE = re.compile(
    r"(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})\.(\d{6})Z"
)


def is_identifier(text: str) -> bool:
    return isinstance(text, str) and IDENTIFIER_RE.fullmatch(text) is not None


def _require_identifier(text: str, what: str) -> None:
    if not is_identifier(text):
        raise ValueError(f"{what} is not a valid identifier: {text!r}")


def format_timestamp(value: datetime) -> str:
    """Canonical text form: UTC, microsecond precision, trailing ``Z``."""
    if value.tzinfo is None:
        raise ValueError("timestamp must be timezone-aware")
    utc = value.astimezone(timezone.utc)
    return (
        f"{utc.year:04d}-{utc.month:02d}-{utc.day:02d}"
        f"T{utc.hour:02d}:{utc.minute:02d}:{utc.second:02d}"
        f".{utc.microsecond:06d}Z"
    )


def parse_timestamp(text: str) -> datetime:
    m = TIMESTAMP_RE.fullmatch(text)
    if m is None:
        raise ValueError(f"bad timestamp text: {text!r}")
    y, mo, d, h, mi, s, us = (int(g) for g in m.groups())
    return datetime(y, mo, d, h, mi, s, us, tzinfo=timezone.utc)


@dataclass(frozen=True)
class Dialect:
    """A DBMS family name; archives carry it and restores are guarded by it."""

    name: str

    def __post_init__(self):
        if not isinstance(self.name, str) or DIALECT_RE.fullmatch(self.name) is None:
            raise ValueError(f"bad dialect name: {self.name!r}")

    def __str__(self) -> str:
        return self.name


class ArticleKind(Enum):
    STORED_PROCEDURE = "StoredProcedure"
    FUNCTION = "Function"
    TRIGGER = "Trigger"
    VIEW = "View"
    TABLE = "Table"
    RECORD = "Record"


#: Kinds whose bodies live in DefinitionArticle, in the order they are applied.
DEFINITION_KINDS = (
    ArticleKind.VIEW,
    ArticleKind.FUNCTION,
    ArticleKind.STORED_PROCEDURE,
    ArticleKind.TRIGGER,
)


class ValueType(Enum):
    NULL = "null"
    BOOL = "bool"
    INT = "int"
    FLOAT = "float"
    TEXT = "text"
    BLOB = "blob"
    TIMESTAMP = "timestamp"


#: Types a column may declare (NULL is a value tag, never a column type).
COLUMN_TYPES = (
    ValueType.BOOL,
    ValueType.INT,
    ValueType.FLOAT,
    ValueType.TEXT,
    ValueType.BLOB,
    ValueType.TIMESTAMP,
)


def tag_of(value) -> ValueType:
    """Classify a Python value into one of the seven tags.

    bool is checked before int because Python bools are ints.
    """
    if value is None:
        return ValueType.NULL
    if isinstance(value, bool):
        return ValueType.BOOL
    if isinstance(value, int):
        return ValueType.INT
    if isinstance(value, float):
        return ValueType.FLOAT
    if isinstance(value, str):
        return ValueType.TEXT
    if isinstance(value, (bytes, bytearray)):
        return ValueType.BLOB
    if isinstance(value, datetime):
        return ValueType.TIMESTAMP
    raise TypeError(f"unsupported value type: {type(value).__name__}")


def check_value(value, column: "ColumnDef") -> str | None:
    """Return a problem description if *value* does not fit *column*, else None."""
    try:
        tag = tag_of(value)
    except TypeError as exc:
        return f"column {column.name}: {exc}"
    if tag is ValueType.NULL:
        if not column.nullable:
            return f"column {column.name}: null in non-nullable column"
        return None
    if tag is not column.type:
        return (
            f"column {column.name}: expected {column.type.value}, got {tag.value}"
        )
    if tag is ValueType.INT and not INT64_MIN <= value <= INT64_MAX:
        return f"column {column.name}: integer out of 64-bit range"
    if tag is ValueType.TIMESTAMP and value.tzinfo is None:
        return f"column {column.name}: naive timestamp"
    if tag is ValueType.TEXT:
        try:
            value.encode("utf-8")
        except UnicodeEncodeError:
            return f"column {column.name}: text is not encodable (lone surrogate)"
    return None


@dataclass(frozen=True)
class ArticleRef:
    """Identity of a backup-able catalog object."""

    kind: ArticleKind
    name: str
    parent_table: str | None = None

    def __post_init__(self):
        _require_identifier(self.name, "article name")
        if self.parent_table is not None:
            _require_identifier(self.parent_table, "parent table")


@dataclass(frozen=True)
class ColumnDef:
    name: str
    type: ValueType
    nullable: bool = False
    is_key: bool = False

    def __post_init__(self):
        _require_identifier(self.name, "column name")
        if self.type not in COLUMN_TYPES:
            raise ValueError(f"column {self.name}: {self.type.value} is not a column type")


@dataclass(frozen=True)
class ForeignKey:
    column: str
    ref_table: str
    ref_column: str

    def __post_init__(self):
        _require_identifier(self.column, "foreign key column")
        _require_identifier(self.ref_table, "referenced table")
        _require_identifier(self.ref_column, "referenced column")


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[ColumnDef, ...]
    foreign_keys: tuple[ForeignKey, ...] = ()

    def __post_init__(self):
        _require_identifier(self.name, "table name")
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "foreign_keys", tuple(self.foreign_keys))
        names = [c.name for c in self.columns]
        if len(names) != len(set(names)):
            raise ValueError(f"table {self.name}: duplicate column names")
        if not any(c.is_key for c in self.columns):
            raise ValueError(f"table {self.name}: needs at least one key column")
        for fk in self.foreign_keys:
            if fk.column not in names:
                raise ValueError(
                    f"table {self.name}: foreign key on unknown column {fk.column}"
                )

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def key_columns(self) -> tuple[ColumnDef, ...]:
        return tuple(c for c in self.columns if c.is_key)

    def column(self, name: str) -> ColumnDef:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def key_of(self, row: tuple) -> tuple:
        """Project a row onto the key columns (the record-selection handle)."""
        return tuple(v for v, c in zip(row, self.columns) if c.is_key)

    def check_row(self, row: tuple) -> str | None:
        if len(row) != len(self.columns):
            return (
                f"table {self.name}: row arity {len(row)} != {len(self.columns)} columns"
            )
        for value, column in zip(row, self.columns):
            problem = check_value(value, column)
            if problem:
                return f"table {self.name}: {problem}"
        return None


@dataclass(frozen=True)
class DefinitionArticle:
    """A non-table article (view, function, procedure, trigger) as source text."""

    ref: ArticleRef
    body: str

    def __post_init__(self):
        if self.ref.kind not in DEFINITION_KINDS:
            raise ValueError(f"{self.ref.kind.value} is not a definition kind")
        if not self.body:
            raise ValueError(f"{self.ref.name}: empty definition body")


@dataclass(frozen=True)
class TableData:
    schema: TableSchema
    rows: tuple[tuple, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))


@dataclass(frozen=True)
class DatabaseSnapshot:
    """A consistent in-memory image of selected schema, definitions, and rows."""

    dialect: Dialect
    db_name: str
    db_attributes: tuple[tuple[str, str], ...] = ()
    tables: tuple[TableData, ...] = ()
    definitions: tuple[DefinitionArticle, ...] = ()

    def __post_init__(self):
        _require_identifier(self.db_name, "database name")
        object.__setattr__(self, "db_attributes", tuple(tuple(p) for p in self.db_attributes))
        object.__setattr__(self, "tables", tuple(self.tables))
        object.__setattr__(self, "definitions", tuple(self.definitions))
        for key, _ in self.db_attributes:
            _require_identifier(key, "database attribute key")

    @property
    def table_map(self) -> dict[str, TableData]:
        return {t.schema.name: t for t in self.tables}

    @property
    def definition_map(self) -> dict[tuple[ArticleKind, str], DefinitionArticle]:
        return {(d.ref.kind, d.ref.name): d for d in self.definitions}

    def article_refs(self) -> set[ArticleRef]:
        refs = {ArticleRef(ArticleKind.TABLE, t.schema.name) for t in self.tables}
        refs |= {d.ref for d in self.definitions}
        return refs

    def problems(self) -> list[str]:
        """Cross-object consistency issues (duplicate articles, dangling FKs)."""
        out: list[str] = []
        names = [t.schema.name for t in self.tables]
        if len(names) != len(set(names)):
            out.append("duplicate table names")
        keyed = [(d.ref.kind, d.ref.name) for d in self.definitions]
        if len(keyed) != len(set(keyed)):
            out.append("duplicate definition articles")
        table_map = self.table_map
        for t in self.tables:
            for fk in t.schema.foreign_keys:
                target = table_map.get(fk.ref_table)
                if target is None:
                    out.append(
                        f"table {t.schema.name}: foreign key references missing table {fk.ref_table}"
                    )
                elif fk.ref_column not in target.schema.column_names:
                    out.append(
                        f"table {t.schema.name}: foreign key references missing column "
                        f"{fk.ref_table}.{fk.ref_column}"
                    )
            for row in t.rows:
                problem = t.schema.check_row(row)
                if problem:
                    out.append(problem)
                    break
        return out


@dataclass(frozen=True)
class Selection:
    """The user's checkbox state: articles plus per-table record choices.

    ``record_keys`` maps a table name to the set of key tuples to include;
    ``select_all_records`` names tables whose every row is included. A table
    in neither collection is backed up schema-only.
    """

    db_name: str
    articles: frozenset[ArticleRef] = frozenset()
    record_keys: Mapping[str, frozenset[tuple]] = field(default_factory=dict)
    select_all_records: frozenset[str] = frozenset()

    def __post_init__(self):
        _require_identifier(self.db_name, "database name")
        object.__setattr__(self, "articles", frozenset(self.articles))
        object.__setattr__(
            self,
            "record_keys",
            {t: frozenset(tuple(k) for k in keys) for t, keys in self.record_keys.items()},
        )
        object.__setattr__(self, "select_all_records", frozenset(self.select_all_records))

    def selected_tables(self) -> set[str]:
        return {r.name for r in self.articles if r.kind is ArticleKind.TABLE}

    def record_count(self) -> int:
        return sum(len(keys) for keys in self.record_keys.values())


def full_selection(snapshot: DatabaseSnapshot) -> Selection:
    """The select-everything Selection for a database image."""
    return Selection(
        db_name=snapshot.db_name,
        articles=frozenset(snapshot.article_refs()),
        record_keys={},
        select_all_records=frozenset(t.schema.name for t in snapshot.tables),
    )


# --- selection validation -----------------------------------------------------

V_UNKNOWN_ARTICLE = "unknown_article"
V_ORPHAN_RECORDS = "orphan_records"
V_RECORD_REF = "record_ref_in_articles"
V_KEY_ARITY = "key_arity"
V_KEY_TYPE = "key_type"
V_DB_MISMATCH = "db_mismatch"
V_CONFLICTING_RECORDS = "conflicting_records"

W_EMPTY_SELECTION = "empty selection: zero articles"


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(v.message for v in self.violations)


def validate_selection(sel: Selection, snapshot: DatabaseSnapshot) -> ValidationReport:
    """Check a selection against a database image.

    Returns a report; zero violations means the selection can be fed to the
    backup engine. Record choices under an unselected table are flagged as
    orphan record selections.
    """
    violations: list[Violation] = []
    warnings: list[str] = []

    if sel.db_name != snapshot.db_name:
        violations.append(
            Violation(
                V_DB_MISMATCH,
                sel.db_name,
                f"selection targets {sel.db_name!r} but snapshot is {snapshot.db_name!r}",
            )
        )

    known = snapshot.article_refs()
    known_keyed = {(r.kind, r.name) for r in known}
    for ref in sorted(sel.articles, key=lambda r: (r.kind.value, r.name)):
        if ref.kind is ArticleKind.RECORD:
            violations.append(
                Violation(
                    V_RECORD_REF,
                    ref.name,
                    f"record ref {ref.name!r} not allowed in articles; use record_keys",
                )
            )
        elif (ref.kind, ref.name) not in known_keyed:
            violations.append(
                Violation(
                    V_UNKNOWN_ARTICLE,
                    ref.name,
                    f"unknown article: {ref.kind.value} {ref.name!r}",
                )
            )

    selected_tables = sel.selected_tables()
    table_map = snapshot.table_map

    for table in sorted(set(sel.record_keys) | set(sel.select_all_records)):
        if table not in selected_tables:
            violations.append(
                Violation(
                    V_ORPHAN_RECORDS,
                    table,
                    f"orphan record selection: table {table!r} is not selected",
                )
            )
    for table in sorted(set(sel.record_keys) & set(sel.select_all_records)):
        violations.append(
            Violation(
                V_CONFLICTING_RECORDS,
                table,
                f"table {table!r} is in both record_keys and select_all_records",
            )
        )

    for table, keys in sorted(sel.record_keys.items()):
        if table not in selected_tables or table not in table_map:
            continue
        schema = table_map[table].schema
        key_cols = schema.key_columns
        for key in keys:
            if len(key) != len(key_cols):
                violations.append(
                    Violation(
                        V_KEY_ARITY,
                        table,
                        f"table {table!r}: key arity {len(key)} != {len(key_cols)} key columns",
                    )
                )
                continue
            for value, column in zip(key, key_cols):
                problem = check_value(value, column)
                if problem:
                    violations.append(
                        Violation(V_KEY_TYPE, table, f"table {table!r} key: {problem}")
                    )

    if not sel.articles:
        warnings.append(W_EMPTY_SELECTION)

    return ValidationReport(tuple(violations), tuple(warnings))
