from __future__ import annotations

import pytest

from xbak.archive import read_archive, write_archive
from xbak.backup import BackupEngine, BackupRequest, SinkSet
from xbak.errors import (
    DatabaseExists,
    DialectMismatch,
    StagingWriteFailed,
    UnknownDatabase,
)
from xbak.model import (
    ArticleKind,
    ArticleRef,
    ColumnDef,
    DatabaseSnapshot,
    DefinitionArticle,
    Dialect,
    Selection,
    TableData,
    TableSchema,
    ValueType,
    full_selection,
)
from xbak.refengine import REF_DIALECT
from xbak.restore import RestoreEngine, RestoreMode, StagingArea

from conftest import school_snapshot
from genutil import snapshot_contents_equal, contents_diff


@pytest.fixture
def sink_dir(tmp_path):
    d = tmp_path / "backups"
    d.mkdir()
    return d


@pytest.fixture
def restore_engine(manager):
    return RestoreEngine(manager)


def full_archive(manager, ref_spec, sink_dir, db_name, name="src.xml"):
    engine = BackupEngine(manager)
    req = BackupRequest(ref_spec, db_name, "full", None, name)
    report = engine.backup_full(req, SinkSet(sink_dir))
    return read_archive(report.primary_path.read_bytes())


def simple_table(name: str, rows: tuple, extra_col: str = "v") -> TableData:
    schema = TableSchema(
        name,
        (
            ColumnDef("id", ValueType.INT, False, True),
            ColumnDef(extra_col, ValueType.TEXT, True),
        ),
    )
    return TableData(schema, rows)


class TestReplaceAndCreate:
    def test_full_new_round_trip(self, manager, ref_spec, session, school_db, sink_dir, restore_engine):
        archive = full_archive(manager, ref_spec, sink_dir, "school")
        report = restore_engine.restore(archive, RestoreMode.FULL_NEW, "rebuilt", ref_spec)
        assert report.atomic
        assert report.added[ArticleKind.TABLE] == 3
        result = session.snapshot("rebuilt", full_selection(session.describe("rebuilt")))
        assert snapshot_contents_equal(result, school_snapshot()), contents_diff(
            result, school_snapshot()
        )

    def test_full_exist_clears_target_first(self, manager, ref_spec, session, school_db, sink_dir, restore_engine):
        archive = full_archive(manager, ref_spec, sink_dir, "school")
        session.create_database("target")
        session.apply_snapshot(
            "target",
            DatabaseSnapshot(
                dialect=REF_DIALECT,
                db_name="target",
                tables=(simple_table("junk", ((1, "old"),)),),
            ),
        )
        report = restore_engine.restore(archive, RestoreMode.FULL_EXIST, "target", ref_spec)
        result = session.snapshot("target", full_selection(session.describe("target")))
        assert "junk" not in result.table_map
        assert snapshot_contents_equal(result, school_snapshot())
        assert report.removed[ArticleKind.TABLE] == 1

    def test_exist_mode_preserves_database_identity(self, manager, ref_spec, session, school_db, sink_dir, restore_engine):
        archive = full_archive(manager, ref_spec, sink_dir, "school")
        dbid_before = dict(session.describe("school").db_attributes)["dbid"]
        restore_engine.restore(archive, RestoreMode.PARTIAL_EXIST, "school", ref_spec)
        assert dict(session.describe("school").db_attributes)["dbid"] == dbid_before

    def test_new_mode_rejects_existing_name_before_mutation(self, manager, ref_spec, session, school_db, sink_dir, restore_engine):
        archive = full_archive(manager, ref_spec, sink_dir, "school")
        before = session.snapshot("school", full_selection(session.describe("school")))
        with pytest.raises(DatabaseExists):
            restore_engine.restore(archive, RestoreMode.PARTIAL_NEW, "school", ref_spec)
        after = session.snapshot("school", full_selection(session.describe("school")))
        assert write_archive(before) == write_archive(after)

    def test_exist_mode_requires_existing_database(self, manager, ref_spec, school_db, sink_dir, restore_engine):
        archive = full_archive(manager, ref_spec, sink_dir, "school")
        with pytest.raises(UnknownDatabase):
            restore_engine.restore(archive, RestoreMode.FULL_EXIST, "ghost", ref_spec)

    def test_failed_new_restore_leaves_no_residue(self, manager, ref_spec, session, school_db, sink_dir, restore_engine):
        archive = full_archive(manager, ref_spec, sink_dir, "school")
        broken = DatabaseSnapshot(
            dialect=archive.dialect,
            db_name=archive.db_name,
            db_attributes=archive.db_attributes,
            tables=archive.payload.tables,
            definitions=archive.payload.definitions
            + (
                DefinitionArticle(
                    ArticleRef(ArticleKind.VIEW, "v_broken"), "SELECT * FROM nowhere"
                ),
            ),
        )
        import dataclasses

        bad_archive = dataclasses.replace(archive, payload=broken)
        with pytest.raises(Exception):
            restore_engine.restore(bad_archive, RestoreMode.FULL_NEW, "scratch", ref_spec)
        assert "scratch" not in session.list_databases()


class TestDialectGuard:
    def test_mismatch_rejected_and_target_untouched(self, manager, ref_spec, session, school_db, store_root, restore_engine):
        foreign = DatabaseSnapshot(
            dialect=Dialect("SQL2008"),
            db_name="alien",
            tables=(simple_table("t", ((1, "x"),)),),
        )
        archive = read_archive(write_archive(foreign))
        store_file = store_root / "school.rfe"
        before = store_file.read_bytes()
        with pytest.raises(DialectMismatch):
            restore_engine.restore(archive, RestoreMode.FULL_EXIST, "school", ref_spec)
        assert store_file.read_bytes() == before


def _merge_fixture(session):
    """Target db holds tables A and B; the archive holds A' and C."""
    session.create_database("maindb")
    base = DatabaseSnapshot(
        dialect=REF_DIALECT,
        db_name="maindb",
        tables=(
            simple_table("a", ((1, "a-old"), (2, "a-keep"))),
            simple_table("b", ((1, "b-untouched"),)),
        ),
        definitions=(
            DefinitionArticle(ArticleRef(ArticleKind.VIEW, "v_b"), "SELECT * FROM b"),
        ),
    )
    session.apply_snapshot("maindb", base)
    payload = DatabaseSnapshot(
        dialect=REF_DIALECT,
        db_name="maindb",
        tables=(
            simple_table("a", ((1, "a-new"), (9, "a-added"))),
            simple_table("c", ((5, "c-new"),)),
        ),
    )
    return read_archive(write_archive(payload))


def _partial_archive_of(session, ref_spec, db, table):
    sel = Selection(
        db_name=db,
        articles=frozenset({ArticleRef(ArticleKind.TABLE, table)}),
        select_all_records=frozenset({table}),
    )
    return write_archive(session.snapshot(db, sel))


class TestMerge:
    def test_replaces_adds_and_keeps(self, session, ref_spec, restore_engine):
        archive = _merge_fixture(session)
        b_before = _partial_archive_of(session, ref_spec, "maindb", "b")
        report = restore_engine.restore(archive, RestoreMode.MERGE, "maindb", ref_spec)

        result = session.snapshot("maindb", full_selection(session.describe("maindb")))
        assert set(result.table_map) == {"a", "b", "c"}
        assert result.table_map["a"].rows == ((1, "a-new"), (9, "a-added"))
        assert result.table_map["c"].rows == ((5, "c-new"),)
        assert report.replaced[ArticleKind.TABLE] == 1
        assert report.added[ArticleKind.TABLE] == 1
        assert report.kept[ArticleKind.TABLE] == 1
        assert report.kept[ArticleKind.VIEW] == 1

        # frame property: B is bit-identical before and after
        assert _partial_archive_of(session, ref_spec, "maindb", "b") == b_before

    def test_merge_is_idempotent(self, session, ref_spec, restore_engine):
        archive = _merge_fixture(session)
        restore_engine.restore(archive, RestoreMode.MERGE, "maindb", ref_spec)
        once = write_archive(
            session.snapshot("maindb", full_selection(session.describe("maindb")))
        )
        restore_engine.restore(archive, RestoreMode.MERGE, "maindb", ref_spec)
        twice = write_archive(
            session.snapshot("maindb", full_selection(session.describe("maindb")))
        )
        assert once == twice

    def test_merge_requires_existing_target(self, session, ref_spec, restore_engine):
        archive = _merge_fixture(session)
        with pytest.raises(UnknownDatabase):
            restore_engine.restore(archive, RestoreMode.MERGE, "elsewhere", ref_spec)


class TestStaging:
    def test_upload_then_restore_empties_staging(self, manager, ref_spec, session, school_db, sink_dir, tmp_path, restore_engine):
        staging = StagingArea(tmp_path / "Temp_Restore")
        archive_bytes = write_archive(
            session.snapshot("school", full_selection(session.describe("school")))
        )
        staged = staging.stage(archive_bytes, "My_Backup.xml")
        assert staged.path.exists()
        restore_engine.restore_staged(
            staging, staged.token, RestoreMode.FULL_NEW, "fromupload", ref_spec
        )
        assert list((tmp_path / "Temp_Restore").iterdir()) == []
        assert "fromupload" in session.list_databases()

    def test_failed_restore_still_cleans_up(self, manager, ref_spec, tmp_path, restore_engine):
        staging = StagingArea(tmp_path / "Temp_Restore")
        staged = staging.stage(b"<not-a-backup/>", "junk.xml")
        with pytest.raises(Exception):
            restore_engine.restore_staged(
                staging, staged.token, RestoreMode.FULL_NEW, "x", ref_spec
            )
        assert list((tmp_path / "Temp_Restore").iterdir()) == []

    def test_same_name_uploads_get_distinct_paths(self, tmp_path):
        staging = StagingArea(tmp_path / "stage")
        paths = {staging.stage(b"data", "same.xml").path for _ in range(100)}
        assert len(paths) == 100

    def test_cleanup_is_idempotent(self, tmp_path):
        staging = StagingArea(tmp_path / "stage")
        staged = staging.stage(b"data", "a.xml")
        staging.cleanup(staged.token)
        staging.cleanup(staged.token)  # no-op
        assert not staged.path.exists()

    def test_read_unknown_token(self, tmp_path):
        staging = StagingArea(tmp_path / "stage")
        with pytest.raises(StagingWriteFailed):
            staging.read("nope")
