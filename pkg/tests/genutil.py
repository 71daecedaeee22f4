"""Deterministic database generation and comparison helpers.

The seeded generator is the workhorse for round-trip testing: databases of
up to 8 tables and 500 rows, covering all seven value tags (blobs included),
with acyclic foreign keys and a sprinkling of definitions.
"""

from __future__ import annotations

import random
from collections import Counter
from datetime import datetime, timezone

from xbak.model import (
    ArticleKind,
    ArticleRef,
    ColumnDef,
    DatabaseSnapshot,
    DefinitionArticle,
    Dialect,
    ForeignKey,
    TableData,
    TableSchema,
    ValueType,
)

COLUMN_TAGS = (
    ValueType.BOOL,
    ValueType.INT,
    ValueType.FLOAT,
    ValueType.TEXT,
    ValueType.BLOB,
    ValueType.TIMESTAMP,
)

_WORDS = ("lake", "pine", "ox", "iris", "moss", "fox", "elm", "wren", "ash", "kit")


def gen_value(rng: random.Random, tag: ValueType):
    if tag is ValueType.BOOL:
        return rng.random() < 0.5
    if tag is ValueType.INT:
        return rng.choice(
            [rng.randint(-100, 100), rng.randint(-(2**63), 2**63 - 1), 0]
        )
    if tag is ValueType.FLOAT:
        return rng.choice(
            [0.0, -1.5, rng.random() * 10 ** rng.randint(-3, 3), float(rng.randint(-9, 9))]
        )
    if tag is ValueType.TEXT:
        length = rng.randint(0, 12)
        alphabet = "abc XYZ0_äöü€<&>'\"%|\\"
        return "".join(rng.choice(alphabet) for _ in range(length))
    if tag is ValueType.BLOB:
        return rng.randbytes(rng.randint(0, 48))
    if tag is ValueType.TIMESTAMP:
        return datetime(
            rng.randint(1990, 2035),
            rng.randint(1, 12),
            rng.randint(1, 28),
            rng.randint(0, 23),
            rng.randint(0, 59),
            rng.randint(0, 59),
            rng.randint(0, 999999),
            tzinfo=timezone.utc,
        )
    raise AssertionError(tag)


def gen_database(rng: random.Random, db_name: str = "gendb") -> DatabaseSnapshot:
    n_tables = rng.randint(1, 8)
    row_budget = 500
    tables: list[TableData] = []
    names: list[str] = []

    for i in range(n_tables):
        name = f"t{i}_{rng.choice(_WORDS)}"
        columns = [ColumnDef("id", ValueType.INT, False, True)]
        if i == 0:
            # one column of every tag so each database exercises all of them
            for j, tag in enumerate(COLUMN_TAGS):
                columns.append(ColumnDef(f"c{j}_{tag.value}", tag, nullable=True))
        else:
            for j in range(rng.randint(0, 4)):
                tag = rng.choice(COLUMN_TAGS)
                columns.append(
                    ColumnDef(f"c{j}_{tag.value}", tag, nullable=rng.random() < 0.5)
                )

        fks: list[ForeignKey] = []
        if i > 0 and rng.random() < 0.6:
            target = tables[rng.randrange(len(tables))]
            col = ColumnDef(f"ref_{target.schema.name}", ValueType.INT, nullable=True)
            columns.append(col)
            fks.append(ForeignKey(col.name, target.schema.name, "id"))

        schema = TableSchema(name, tuple(columns), tuple(fks))
        n_rows = min(rng.randint(0, 90), row_budget)
        row_budget -= n_rows
        rows = []
        for key in range(n_rows):
            row = []
            for col in schema.columns:
                if col.name == "id":
                    row.append(key)
                elif fks and col.name == fks[0].column:
                    target = next(t for t in tables if t.schema.name == fks[0].ref_table)
                    if target.rows and rng.random() < 0.8:
                        row.append(rng.choice(target.rows)[0])
                    else:
                        row.append(None)
                elif col.nullable and rng.random() < 0.25:
                    row.append(None)
                else:
                    row.append(gen_value(rng, col.type))
            rows.append(tuple(row))
        tables.append(TableData(schema, tuple(rows)))
        names.append(name)

    definitions = []
    for i in range(rng.randint(0, 2)):
        definitions.append(
            DefinitionArticle(
                ArticleRef(ArticleKind.VIEW, f"v{i}_all"),
                f"SELECT * FROM {rng.choice(names)}",
            )
        )
    for kind, prefix in (
        (ArticleKind.FUNCTION, "fn"),
        (ArticleKind.STORED_PROCEDURE, "sp"),
        (ArticleKind.TRIGGER, "tg"),
    ):
        for i in range(rng.randint(0, 2)):
            parent = rng.choice(names) if kind is ArticleKind.TRIGGER else None
            definitions.append(
                DefinitionArticle(
                    ArticleRef(kind, f"{prefix}{i}_{rng.choice(_WORDS)}", parent),
                    f"BEGIN touch {rng.choice(_WORDS)} ünicode; END",
                )
            )

    return DatabaseSnapshot(
        dialect=Dialect("RefEngine"),
        db_name=db_name,
        tables=tuple(tables),
        definitions=tuple(definitions),
    )


def snapshot_contents_equal(a: DatabaseSnapshot, b: DatabaseSnapshot) -> bool:
    """Schemas and definitions exactly, rows as multisets; attributes ignored."""
    a_tables = {t.schema.name: t for t in a.tables}
    b_tables = {t.schema.name: t for t in b.tables}
    if set(a_tables) != set(b_tables):
        return False
    for name, ta in a_tables.items():
        tb = b_tables[name]
        if ta.schema != tb.schema:
            return False
        if Counter(ta.rows) != Counter(tb.rows):
            return False
    a_defs = {(d.ref.kind, d.ref.name, d.ref.parent_table, d.body) for d in a.definitions}
    b_defs = {(d.ref.kind, d.ref.name, d.ref.parent_table, d.body) for d in b.definitions}
    return a_defs == b_defs


def contents_diff(a: DatabaseSnapshot, b: DatabaseSnapshot) -> str:
    a_tables = {t.schema.name: t for t in a.tables}
    b_tables = {t.schema.name: t for t in b.tables}
    if set(a_tables) != set(b_tables):
        return f"tables {sorted(a_tables)} != {sorted(b_tables)}"
    for name, ta in a_tables.items():
        tb = b_tables[name]
        if ta.schema != tb.schema:
            return f"schema of {name} differs"
        if Counter(ta.rows) != Counter(tb.rows):
            return f"rows of {name} differ"
    return "definitions differ"
