from __future__ import annotations

import pytest

from xbak.adapter import ConnectionManager, ConnectionSpec
from xbak.model import (
    ArticleKind,
    ArticleRef,
    ColumnDef,
    DatabaseSnapshot,
    DefinitionArticle,
    ForeignKey,
    TableData,
    TableSchema,
    ValueType,
)
from xbak.refengine import REF_DIALECT, RefEngineAdapter, RefStore

JPEG_HEADER = bytes.fromhex("FFD8FFE0") + b"\x01\x04FCF6" + bytes(range(24))

#: The three seeded admin accounts used across service and engine fixtures.
USER_ROWS = (
    (19, "user1", "123456"),
    (20, "user20", "pswrd20"),
    (21, "user21", "pswrd21"),
)


def users_schema() -> TableSchema:
    return TableSchema(
        "users",
        (
            ColumnDef("ID", ValueType.INT, False, True),
            ColumnDef("Username", ValueType.TEXT),
            ColumnDef("Password", ValueType.TEXT),
        ),
    )


def school_snapshot() -> DatabaseSnapshot:
    """3 tables (one empty), 1 view, 1 trigger, 1 function, 1 procedure."""
    photographs = TableSchema(
        "photographs",
        (
            ColumnDef("ID", ValueType.INT, False, True),
            ColumnDef("CategoryID", ValueType.INT, True),
            ColumnDef("Name", ValueType.TEXT, True),
            ColumnDef("Photograph", ValueType.BLOB, True),
            ColumnDef("OwnerID", ValueType.INT, True),
        ),
        (ForeignKey("OwnerID", "users", "ID"),),
    )
    teacher = TableSchema(
        "teacher",
        (
            ColumnDef("ID", ValueType.INT, False, True),
            ColumnDef("FullName", ValueType.TEXT, True),
        ),
    )
    return DatabaseSnapshot(
        dialect=REF_DIALECT,
        db_name="school",
        tables=(
            TableData(users_schema(), USER_ROWS),
            TableData(
                photographs,
                (
                    (1, 3, "image1", JPEG_HEADER, 19),
                    (2, 1, "image2", JPEG_HEADER + b"\x02", None),
                ),
            ),
            TableData(teacher, ()),
        ),
        definitions=(
            DefinitionArticle(
                ArticleRef(ArticleKind.VIEW, "v_users"), "SELECT * FROM users"
            ),
            DefinitionArticle(
                ArticleRef(ArticleKind.FUNCTION, "fn_count"), "RETURN COUNT(users)"
            ),
            DefinitionArticle(
                ArticleRef(ArticleKind.STORED_PROCEDURE, "sp_reset"),
                "BEGIN reset sessions; END",
            ),
            DefinitionArticle(
                ArticleRef(ArticleKind.TRIGGER, "tr_audit", "users"),
                "AFTER INSERT log row",
            ),
        ),
    )


@pytest.fixture(autouse=True)
def _fresh_store_cache():
    RefStore.reset_cache()
    yield
    RefStore.reset_cache()


@pytest.fixture
def store_root(tmp_path):
    root = tmp_path / "stores"
    root.mkdir()
    return root


@pytest.fixture
def manager(store_root):
    mgr = ConnectionManager()
    mgr.register(RefEngineAdapter([store_root]))
    return mgr


@pytest.fixture
def ref_spec(store_root):
    return ConnectionSpec(REF_DIALECT, str(store_root), "dba", "sekret-pw")


@pytest.fixture
def session(manager, ref_spec):
    s = manager.connect(ref_spec)
    yield s
    s.close()


@pytest.fixture
def school_db(session):
    """The fixture database, loaded into the reference engine as 'school'."""
    session.create_database("school")
    session.apply_snapshot("school", school_snapshot())
    return "school"
