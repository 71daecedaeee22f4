from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from xbak.config import AppConfig, SinkConfig
from xbak.model import full_selection
from xbak.service import STATUS_BY_CODE, create_app, create_users_file

from conftest import USER_ROWS, school_snapshot


@pytest.fixture
def service_env(tmp_path, manager, store_root, ref_spec, session, school_db):
    backups = tmp_path / "backups"
    backups.mkdir()
    users_file = tmp_path / "users.json"
    create_users_file(users_file, USER_ROWS)
    config = AppConfig(
        refengine_roots=[store_root],
        sinks=SinkConfig(primary_dir=backups),
        staging_dir=tmp_path / "Temp_Restore",
        users_file=users_file,
    )
    clock = {"now": 1_000_000.0}
    app = create_app(config, manager, clock=lambda: clock["now"])
    client = TestClient(app, raise_server_exceptions=False)
    return client, manager, ref_spec, backups, clock, tmp_path


def login(client, username="user1", password="123456"):
    response = client.post(
        "/api/login", json={"username": username, "password": password}
    )
    assert response.status_code == 200, response.text
    return {"Authorization": f"Bearer {response.json()['token']}"}


def connect(client, headers, ref_spec):
    response = client.post(
        "/api/connections/test",
        json={
            "dialect": ref_spec.dialect.name,
            "server": ref_spec.server,
            "user": ref_spec.user,
            "password": ref_spec.password,
        },
        headers=headers,
    )
    assert response.status_code == 200 and response.json()["ok"], response.text
    return headers


class TestAuth:
    def test_seeded_credentials_log_in(self, service_env):
        client = service_env[0]
        for _, username, password in USER_ROWS:
            headers = login(client, username, password)
            assert client.get("/api/dialects", headers=headers).status_code == 200

    def test_wrong_password_uniform_failure(self, service_env):
        client = service_env[0]
        wrong = client.post(
            "/api/login", json={"username": "user1", "password": "nope"}
        )
        unknown = client.post(
            "/api/login", json={"username": "ghost", "password": "nope"}
        )
        assert wrong.status_code == unknown.status_code == 401
        assert wrong.json()["code"] == unknown.json()["code"] == "AUTH_FAILED"

    def test_token_reuse_after_logout(self, service_env):
        client = service_env[0]
        headers = login(client)
        assert client.post("/api/logout", headers=headers).status_code == 200
        response = client.get("/api/dialects", headers=headers)
        assert response.status_code == 401
        assert response.json()["code"] == "AUTH_REQUIRED"

    def test_session_expires_after_idle(self, service_env):
        client, _, _, _, clock, _ = service_env
        headers = login(client)
        clock["now"] += 31 * 60
        response = client.get("/api/dialects", headers=headers)
        assert response.status_code == 401

    def test_every_endpoint_requires_token_except_login(self, service_env):
        client = service_env[0]
        app = client.app
        checked = 0
        for route in app.routes:
            path = getattr(route, "path", "")
            methods = getattr(route, "methods", None) or set()
            if not path.startswith("/api/"):
                continue
            for method in methods - {"HEAD", "OPTIONS"}:
                concrete = path.replace("{db}", "school").replace(
                    "{table}", "users"
                ).replace("{name}", "x.xml")
                response = client.request(method, concrete)
                if path == "/api/login":
                    assert response.status_code != 401
                else:
                    assert response.status_code == 401, (method, path, response.text)
                    assert response.json()["code"] == "AUTH_REQUIRED"
                checked += 1
        assert checked >= 12  # the full surface was actually swept

    def test_logout_reports_closed_adapter_sessions(self, service_env):
        client, manager, ref_spec, *_ = service_env
        headers = connect(client, login(client), ref_spec)
        base_open = manager.open_session_count()
        assert client.get("/api/databases", headers=headers).status_code == 200
        assert manager.open_session_count() == base_open + 1
        closed = client.post("/api/logout", headers=headers).json()["closed"]
        assert closed == 1
        assert manager.open_session_count() == base_open


class TestConnectionEndpoints:
    def test_dialects_and_servers(self, service_env):
        client, _, ref_spec, *_ = service_env
        headers = login(client)
        dialects = client.get("/api/dialects", headers=headers).json()["dialects"]
        assert "RefEngine" in dialects
        servers = client.get(
            "/api/servers", params={"dialect": "RefEngine"}, headers=headers
        ).json()["servers"]
        assert ref_spec.server in servers

    def test_failed_connection_test(self, service_env):
        client = service_env[0]
        headers = login(client)
        response = client.post(
            "/api/connections/test",
            json={"dialect": "RefEngine", "server": "/no/such/store"},
            headers=headers,
        )
        assert response.status_code == 200
        body = response.json()
        assert not body["ok"] and body["reason"] == "store not found"

    def test_endpoints_require_bound_connection(self, service_env):
        client = service_env[0]
        headers = login(client)
        response = client.get("/api/databases", headers=headers)
        assert response.status_code == 409
        assert response.json()["code"] == "CONNECTION_REQUIRED"


class TestBrowsing:
    def test_databases_listing(self, service_env):
        client, _, ref_spec, *_ = service_env
        headers = connect(client, login(client), ref_spec)
        body = client.get("/api/databases", headers=headers).json()
        assert "school" in body["databases"]

    def test_articles_grouped_with_empty_flags(self, service_env, session):
        session.create_database("plain")
        from xbak.model import (
            ColumnDef,
            DatabaseSnapshot,
            TableData,
            TableSchema,
            ValueType,
        )
        from xbak.refengine import REF_DIALECT

        session.apply_snapshot(
            "plain",
            DatabaseSnapshot(
                dialect=REF_DIALECT,
                db_name="plain",
                tables=(
                    TableData(
                        TableSchema(
                            "only", (ColumnDef("id", ValueType.INT, False, True),)
                        ),
                        ((1,),),
                    ),
                ),
            ),
        )
        client, _, ref_spec, *_ = service_env
        headers = connect(client, login(client), ref_spec)
        groups = {
            g["kind"]: g
            for g in client.get("/api/databases/plain/articles", headers=headers).json()[
                "groups"
            ]
        }
        assert groups["Function"]["empty"] is True
        assert groups["Trigger"]["empty"] is True
        assert groups["Table"]["empty"] is False
        assert groups["Table"]["items"] == [{"name": "only", "row_count": 1}]

    def test_school_articles(self, service_env):
        client, _, ref_spec, *_ = service_env
        headers = connect(client, login(client), ref_spec)
        groups = {
            g["kind"]: g
            for g in client.get(
                "/api/databases/school/articles", headers=headers
            ).json()["groups"]
        }
        tables = {item["name"]: item["row_count"] for item in groups["Table"]["items"]}
        assert tables == {"users": 3, "photographs": 2, "teacher": 0}
        assert groups["View"]["items"] == [{"name": "v_users"}]

    def test_rows_and_keys_only(self, service_env):
        client, _, ref_spec, *_ = service_env
        headers = connect(client, login(client), ref_spec)
        full = client.get(
            "/api/databases/school/tables/users/rows", headers=headers
        ).json()
        assert [c["name"] for c in full["columns"]] == ["ID", "Username", "Password"]
        assert [19, "user1", "123456"] in full["rows"]
        keys = client.get(
            "/api/databases/school/tables/users/rows",
            params={"keys_only": "true"},
            headers=headers,
        ).json()
        assert keys["rows"] == [[19], [20], [21]]
        assert [c["name"] for c in keys["columns"]] == ["ID"]

    def test_blob_values_serialized_as_hex_objects(self, service_env):
        client, _, ref_spec, *_ = service_env
        headers = connect(client, login(client), ref_spec)
        rows = client.get(
            "/api/databases/school/tables/photographs/rows", headers=headers
        ).json()["rows"]
        blob_cell = rows[0][3]
        assert blob_cell["$blob"].startswith("0xFFD8FFE0")


class TestBackupAndRestoreEndpoints:
    def test_partial_backup_flow(self, service_env):
        client, _, ref_spec, backups, _, _ = service_env
        headers = connect(client, login(client), ref_spec)
        response = client.post(
            "/api/backup",
            json={
                "db_name": "school",
                "mode": "partial",
                "output_name": "picked.xml",
                "selection": {
                    "articles": [{"kind": "Table", "name": "users"}],
                    "record_keys": {"users": [[19], [20]]},
                },
            },
            headers=headers,
        )
        assert response.status_code == 200, response.text
        report = response.json()
        assert report["counts"]["Table"] == 1 and report["counts"]["Record"] == 2
        listed = client.get("/api/archives", headers=headers).json()["archives"]
        assert any(a["name"] == "picked.xml" for a in listed)
        download = client.get("/api/archives/picked.xml", headers=headers)
        assert download.status_code == 200
        assert download.content == (backups / "picked.xml").read_bytes()

    def test_orphan_selection_rejected(self, service_env):
        client, _, ref_spec, *_ = service_env
        headers = connect(client, login(client), ref_spec)
        response = client.post(
            "/api/backup",
            json={
                "db_name": "school",
                "mode": "partial",
                "selection": {"record_keys": {"users": [[19]]}},
            },
            headers=headers,
        )
        assert response.status_code == 422
        assert response.json()["code"] == "SELECTION_INVALID"

    def test_upload_restore_round_trip(self, service_env, session):
        client, _, ref_spec, _, _, tmp_path = service_env
        headers = connect(client, login(client), ref_spec)
        from xbak.archive import write_archive

        data = write_archive(
            session.snapshot("school", full_selection(session.describe("school")))
        )
        staging_dir = tmp_path / "Temp_Restore"
        upload = client.post(
            "/api/restore/upload",
            files={"file": ("My_Backup.xml", data, "application/xml")},
            headers=headers,
        )
        assert upload.status_code == 200, upload.text
        token = upload.json()["staged"]
        assert len(list(staging_dir.iterdir())) == 1
        response = client.post(
            "/api/restore",
            json={"mode": "full-new", "db_name": "viaweb", "staged": token},
            headers=headers,
        )
        assert response.status_code == 200, response.text
        assert response.json()["added"]["Table"] == 3
        assert list(staging_dir.iterdir()) == []
        assert "viaweb" in session.list_databases()

    def test_non_backup_upload_rejected_and_staging_cleaned(self, service_env):
        client, _, ref_spec, _, _, tmp_path = service_env
        headers = connect(client, login(client), ref_spec)
        upload = client.post(
            "/api/restore/upload",
            files={"file": ("random.xml", b"<surprise/>", "application/xml")},
            headers=headers,
        )
        token = upload.json()["staged"]
        response = client.post(
            "/api/restore",
            json={"mode": "full-new", "db_name": "never", "staged": token},
            headers=headers,
        )
        assert response.status_code == 422
        assert response.json()["code"] == "NOT_A_BACKUP_FILE"
        assert list((tmp_path / "Temp_Restore").iterdir()) == []

    def test_restore_by_archive_name(self, service_env, session):
        client, _, ref_spec, *_ = service_env
        headers = connect(client, login(client), ref_spec)
        client.post(
            "/api/backup",
            json={"db_name": "school", "mode": "full", "output_name": "named.xml"},
            headers=headers,
        )
        response = client.post(
            "/api/restore",
            json={"mode": "full-new", "db_name": "bynme", "archive": "named.xml"},
            headers=headers,
        )
        assert response.status_code == 200, response.text
        assert "bynme" in session.list_databases()

    def test_dialect_mismatch_maps_to_409(self, service_env, session):
        client, _, ref_spec, backups, _, _ = service_env
        headers = connect(client, login(client), ref_spec)
        from xbak.archive import write_archive
        from xbak.model import DatabaseSnapshot, Dialect

        foreign = write_archive(
            DatabaseSnapshot(dialect=Dialect("SQL2008"), db_name="alien")
        )
        (backups / "alien.xml").write_bytes(foreign)
        response = client.post(
            "/api/restore",
            json={"mode": "full-exist", "db_name": "school", "archive": "alien.xml"},
            headers=headers,
        )
        assert response.status_code == 409
        assert response.json()["code"] == "DIALECT_MISMATCH"

    def test_restore_without_source_is_malformed_request(self, service_env):
        client, _, ref_spec, *_ = service_env
        headers = connect(client, login(client), ref_spec)
        response = client.post(
            "/api/restore", json={"mode": "full-new", "db_name": "x"}, headers=headers
        )
        assert response.status_code == 422
        assert response.json()["code"] == "MALFORMED_REQUEST"

    def test_missing_query_param_keeps_error_shape(self, service_env):
        client = service_env[0]
        headers = login(client)
        response = client.get("/api/servers", headers=headers)  # no ?dialect=
        assert response.status_code == 422
        body = response.json()
        assert body["code"] == "MALFORMED_REQUEST" and "message" in body

    def test_download_traversal_guard(self, service_env):
        client, _, ref_spec, *_ = service_env
        headers = connect(client, login(client), ref_spec)
        response = client.get("/api/archives/..%2Fusers.json", headers=headers)
        assert response.status_code in (404, 422)


class TestErrorCodeRegistry:
    def test_codes_are_a_closed_stable_set(self):
        assert set(STATUS_BY_CODE) == {
            "AUTH_FAILED", "AUTH_REQUIRED", "CONNECTION_REQUIRED",
            "SELECTION_INVALID", "NOT_A_BACKUP_FILE", "MALFORMED_DOCUMENT",
            "CHECKSUM_MISMATCH", "UNSUPPORTED_VERSION", "MALFORMED_HEX",
            "MISSING_ARGUMENT", "EXTRA_ARGUMENT", "ILLEGAL_IDENTIFIER",
            "MALFORMED_REQUEST",
            "DIALECT_MISMATCH", "DATABASE_EXISTS", "CONSTRAINT_VIOLATION",
            "SESSION_CLOSED", "UNKNOWN_DATABASE", "UNKNOWN_ARTICLE",
            "MISSING_STATEMENT", "ADAPTER_UNAVAILABLE", "CATALOG_PARSE",
            "DUPLICATE_STATEMENT", "SNAPSHOT_FAILED", "SINK_WRITE_FAILED",
            "STAGING_WRITE_FAILED", "CONFIG_ERROR", "INTERNAL",
        }

    def test_every_error_class_has_a_mapped_code(self):
        import inspect

        from xbak import errors

        for _, cls in inspect.getmembers(errors, inspect.isclass):
            if issubclass(cls, errors.XbakError):
                assert cls.code in STATUS_BY_CODE, cls
