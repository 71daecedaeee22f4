"""HTTP admin service: authentication, catalog browsing, backup and restore.

Browsers never see real file paths: uploads are staged server-side and
referred to by opaque tokens, and the staged copy is deleted when the
restore finishes, pass or fail.

Passwords are stored salted and hashed (PBKDF2-HMAC-SHA256); login failure
is uniform, with no username-exists oracle.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from fastapi import Depends, FastAPI, File, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response

from .adapter import AdapterSession, ConnectionManager, ConnectionSpec
from .backup import BackupEngine, BackupRequest, MODE_FULL, MODE_PARTIAL, SinkSet
from .config import AppConfig
from .errors import (
    AuthFailed,
    AuthRequired,
    ConnectionRequired,
    MalformedRequest,
    UnknownDatabase,
    XbakError,
)
from .model import (
    ArticleKind,
    ArticleRef,
    Dialect,
    Selection,
    ValueType,
)
from .archive import encode_blob, decode_blob, value_to_text, text_to_value
from .model import format_timestamp, parse_timestamp
from .refengine import RefEngineAdapter
from .restore import RestoreEngine, RestoreMode, StagingArea
from .statements import load_default_catalog
from .adapter import CatalogBackedAdapter

PBKDF2_ITERATIONS = 60_000

STATUS_BY_CODE = {
    "AUTH_FAILED": 401,
    "AUTH_REQUIRED": 401,
    "CONNECTION_REQUIRED": 409,
    "SELECTION_INVALID": 422,
    "NOT_A_BACKUP_FILE": 422,
    "MALFORMED_DOCUMENT": 422,
    "CHECKSUM_MISMATCH": 422,
    "UNSUPPORTED_VERSION": 422,
    "MALFORMED_HEX": 422,
    "MALFORMED_REQUEST": 422,
    "MISSING_ARGUMENT": 422,
    "EXTRA_ARGUMENT": 422,
    "ILLEGAL_IDENTIFIER": 422,
    "DIALECT_MISMATCH": 409,
    "DATABASE_EXISTS": 409,
    "CONSTRAINT_VIOLATION": 409,
    "SESSION_CLOSED": 409,
    "UNKNOWN_DATABASE": 404,
    "UNKNOWN_ARTICLE": 404,
    "MISSING_STATEMENT": 404,
    "ADAPTER_UNAVAILABLE": 503,
    "CATALOG_PARSE": 500,
    "DUPLICATE_STATEMENT": 500,
    "SNAPSHOT_FAILED": 500,
    "SINK_WRITE_FAILED": 500,
    "STAGING_WRITE_FAILED": 500,
    "CONFIG_ERROR": 500,
    "INTERNAL": 500,
}


# --- credential store -----------------------------------------------------------

def hash_password(password: str, salt: bytes, iterations: int = PBKDF2_ITERATIONS) -> str:
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)
    return digest.hex()


def create_users_file(path: Path, users: Iterable[tuple[int, str, str]]) -> None:
    """Write a credential store, running plaintext passwords through the hasher."""
    records = []
    for user_id, username, password in users:
        salt = secrets.token_bytes(16)
        records.append(
            {
                "id": user_id,
                "username": username,
                "salt": salt.hex(),
                "hash": hash_password(password, salt),
                "iterations": PBKDF2_ITERATIONS,
            }
        )
    path.write_text(json.dumps(records, indent=2), encoding="utf-8")


class UserStore:
    def __init__(self, path: Path):
        self._users: dict[str, dict] = {}
        for record in json.loads(Path(path).read_text(encoding="utf-8")):
            self._users[record["username"]] = record
        self._dummy_salt = secrets.token_bytes(16)

    def verify(self, username: str, password: str) -> int | None:
        record = self._users.get(username)
        if record is None:
            # burn the same work so missing users are indistinguishable
            hash_password(password, self._dummy_salt)
            return None
        computed = hash_password(
            password, bytes.fromhex(record["salt"]), record["iterations"]
        )
        if secrets.compare_digest(computed, record["hash"]):
            return record["id"]
        return None


# --- web sessions -----------------------------------------------------------------

@dataclass
class WebSession:
    token: str
    user_id: int
    expires_at: float
    connection: ConnectionSpec | None = None
    adapter_session: AdapterSession | None = None
    opened: list[AdapterSession] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def close_adapter_sessions(self) -> int:
        closed = 0
        for session in self.opened:
            if session.is_open:
                session.close()
                closed += 1
        self.opened.clear()
        self.adapter_session = None
        return closed


class SessionRegistry:
    def __init__(self, idle_seconds: float, clock=time.time):
        self.idle_seconds = idle_seconds
        self.clock = clock
        self._sessions: dict[str, WebSession] = {}
        self._lock = threading.Lock()

    def create(self, user_id: int) -> WebSession:
        token = secrets.token_hex(16)  # 128-bit opaque token
        session = WebSession(token, user_id, self.clock() + self.idle_seconds)
        with self._lock:
            self._sessions[token] = session
        return session

    def get(self, token: str | None) -> WebSession:
        if not token:
            raise AuthRequired("missing session token")
        with self._lock:
            session = self._sessions.get(token)
            if session is None:
                raise AuthRequired("unknown or expired session token")
            now = self.clock()
            if now > session.expires_at:
                del self._sessions[token]
                session.close_adapter_sessions()
                raise AuthRequired("session expired")
            session.expires_at = now + self.idle_seconds
            return session

    def drop(self, token: str) -> WebSession | None:
        with self._lock:
            return self._sessions.pop(token, None)


# --- JSON wire forms ----------------------------------------------------------------

def value_to_json(value):
    if isinstance(value, bytes):
        return {"$blob": encode_blob(value)}
    if hasattr(value, "tzinfo"):
        return {"$ts": format_timestamp(value)}
    return value


def json_to_value(data):
    if isinstance(data, dict):
        if set(data) == {"$blob"}:
            return decode_blob(data["$blob"])
        if set(data) == {"$ts"}:
            return parse_timestamp(data["$ts"])
        raise ValueError(f"bad value object: {sorted(data)}")
    return data


def selection_from_json(db_name: str, data: dict) -> Selection:
    articles = frozenset(
        ArticleRef(ArticleKind(a["kind"]), a["name"], a.get("parent_table"))
        for a in data.get("articles", [])
    )
    record_keys = {
        table: frozenset(tuple(json_to_value(v) for v in key) for key in keys)
        for table, keys in data.get("record_keys", {}).items()
    }
    return Selection(
        db_name=db_name,
        articles=articles,
        record_keys=record_keys,
        select_all_records=frozenset(data.get("select_all_records", [])),
    )


# --- application -----------------------------------------------------------------------

ARTICLE_GROUPS = (
    ArticleKind.STORED_PROCEDURE,
    ArticleKind.FUNCTION,
    ArticleKind.TRIGGER,
    ArticleKind.VIEW,
    ArticleKind.TABLE,
)


def build_manager(config: AppConfig) -> ConnectionManager:
    manager = ConnectionManager()
    manager.register(RefEngineAdapter(config.refengine_roots))
    catalog = load_default_catalog()
    manager.register(CatalogBackedAdapter(Dialect("SQL2005"), catalog))
    manager.register(CatalogBackedAdapter(Dialect("Oracle10g"), catalog))
    return manager


def create_app(
    config: AppConfig,
    manager: ConnectionManager | None = None,
    clock=time.time,
) -> FastAPI:
    if config.users_file is None:
        raise XbakError("auth.users_file is not configured")
    manager = manager or build_manager(config)
    users = UserStore(config.users_file)
    registry = SessionRegistry(config.idle_minutes * 60.0, clock)
    staging = StagingArea(config.staging_dir)
    backup_engine = BackupEngine(manager)
    restore_engine = RestoreEngine(manager)
    sinks = SinkSet(
        primary_dir=config.sinks.primary_dir,
        mirror_dir=config.sinks.mirror_dir,
        remote_url=config.sinks.remote_url,
    )

    app = FastAPI(title="xbak", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.manager = manager
    app.state.registry = registry
    app.state.staging = staging

    @app.exception_handler(XbakError)
    async def _xbak_error(request: Request, exc: XbakError):
        status = STATUS_BY_CODE.get(exc.code, 500)
        return JSONResponse({"code": exc.code, "message": exc.message}, status_code=status)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            {"code": "MALFORMED_REQUEST", "message": str(exc.errors()[:3])},
            status_code=422,
        )

    @app.middleware("http")
    async def _require_token(request: Request, call_next):
        # every /api endpoint except login needs a live token; this runs
        # before body validation so a missing token is always a plain 401
        path = request.url.path
        if path.startswith("/api/") and path != "/api/login":
            header = request.headers.get("authorization", "")
            token = header[7:] if header.lower().startswith("bearer ") else None
            try:
                request.state.web = registry.get(token)
            except AuthRequired as exc:
                return JSONResponse(
                    {"code": exc.code, "message": exc.message}, status_code=401
                )
        return await call_next(request)

    def require_session(request: Request) -> WebSession:
        return request.state.web

    def bound_adapter_session(web: WebSession) -> AdapterSession:
        if web.connection is None:
            raise ConnectionRequired("test a connection first")
        if web.adapter_session is None or not web.adapter_session.is_open:
            session = manager.connect(web.connection)
            web.adapter_session = session
            web.opened.append(session)
        return web.adapter_session

    # -- auth ------------------------------------------------------------------

    @app.post("/api/login")
    async def login(body: dict):
        username = str(body.get("username", ""))
        password = str(body.get("password", ""))
        user_id = users.verify(username, password)
        if user_id is None:
            raise AuthFailed("enter a correct user name and password")
        session = registry.create(user_id)
        return {"token": session.token, "user_id": user_id}

    @app.post("/api/logout")
    async def logout(web: WebSession = Depends(require_session)):
        registry.drop(web.token)
        with web.lock:
            closed = web.close_adapter_sessions()
        return {"closed": closed}

    # -- connection ---------------------------------------------------------------

    @app.get("/api/dialects")
    async def dialects(web: WebSession = Depends(require_session)):
        return {"dialects": manager.dialects()}

    @app.get("/api/servers")
    async def servers(dialect: str, web: WebSession = Depends(require_session)):
        return {"servers": manager.list_servers(Dialect(dialect))}

    @app.post("/api/connections/test")
    async def test_connection(body: dict, web: WebSession = Depends(require_session)):
        spec = ConnectionSpec(
            dialect=Dialect(str(body.get("dialect", ""))),
            server=str(body.get("server", "")),
            user=str(body.get("user", "")),
            password=str(body.get("password", "")),
        )
        result = manager.test_connection(spec)
        if result.ok:
            with web.lock:
                web.close_adapter_sessions()
                web.connection = spec
        return {"ok": result.ok, "reason": result.reason}

    # -- catalog browsing -----------------------------------------------------------

    @app.get("/api/databases")
    async def databases(web: WebSession = Depends(require_session)):
        with web.lock:
            session = bound_adapter_session(web)
            return {"databases": session.list_databases()}

    @app.get("/api/databases/{db}/articles")
    async def articles(db: str, web: WebSession = Depends(require_session)):
        with web.lock:
            session = bound_adapter_session(web)
            image = session.describe(db)
            counts = session.row_counts(db)
        groups = []
        definition_names: dict[ArticleKind, list[str]] = {k: [] for k in ARTICLE_GROUPS}
        for d in image.definitions:
            definition_names[d.ref.kind].append(d.ref.name)
        for kind in ARTICLE_GROUPS:
            if kind is ArticleKind.TABLE:
                items = [
                    {"name": t.schema.name, "row_count": counts.get(t.schema.name, 0)}
                    for t in image.tables
                ]
            else:
                items = [{"name": n} for n in sorted(definition_names[kind])]
            groups.append({"kind": kind.value, "empty": not items, "items": items})
        return {"db_name": db, "groups": groups}

    @app.get("/api/databases/{db}/tables/{table}/rows")
    async def table_rows(
        db: str,
        table: str,
        keys_only: bool = False,
        web: WebSession = Depends(require_session),
    ):
        sel = Selection(
            db_name=db,
            articles=frozenset({ArticleRef(ArticleKind.TABLE, table)}),
            select_all_records=frozenset({table}),
        )
        with web.lock:
            session = bound_adapter_session(web)
            snapshot = session.snapshot(db, sel)
        tdata = snapshot.table_map[table]
        columns = tdata.schema.columns
        if keys_only:
            rows = [
                [value_to_json(v) for v in tdata.schema.key_of(row)] for row in tdata.rows
            ]
            columns = tdata.schema.key_columns
        else:
            rows = [[value_to_json(v) for v in row] for row in tdata.rows]
        return {
            "columns": [
                {
                    "name": c.name,
                    "type": c.type.value,
                    "nullable": c.nullable,
                    "key": c.is_key,
                }
                for c in columns
            ],
            "rows": rows,
        }

    # -- backup ------------------------------------------------------------------------

    @app.post("/api/backup")
    async def backup(body: dict, web: WebSession = Depends(require_session)):
        if web.connection is None:
            raise ConnectionRequired("test a connection first")
        db_name = str(body.get("db_name", ""))
        mode = str(body.get("mode", MODE_FULL))
        output_name = body.get("output_name") or None
        with web.lock:
            if mode == MODE_PARTIAL:
                sel = selection_from_json(db_name, body.get("selection") or {})
                request_obj = BackupRequest(
                    web.connection, db_name, MODE_PARTIAL, sel, output_name
                )
                report = backup_engine.backup_partial(request_obj, sinks)
            else:
                request_obj = BackupRequest(
                    web.connection, db_name, MODE_FULL, None, output_name
                )
                report = backup_engine.backup_full(request_obj, sinks)
        return report.to_dict()

    @app.get("/api/archives")
    async def archives(web: WebSession = Depends(require_session)):
        out = []
        if sinks.primary_dir.is_dir():
            for path in sorted(sinks.primary_dir.glob("*.xml")):
                stat = path.stat()
                out.append({"name": path.name, "size": stat.st_size})
        return {"archives": out}

    @app.get("/api/archives/{name}")
    async def download(name: str, web: WebSession = Depends(require_session)):
        if "/" in name or "\\" in name or name.startswith("."):
            raise UnknownDatabase(f"no such archive: {name}")
        path = sinks.primary_dir / name
        if not path.is_file():
            raise UnknownDatabase(f"no such archive: {name}")
        return Response(content=path.read_bytes(), media_type="application/xml")

    # -- restore -----------------------------------------------------------------------

    @app.post("/api/restore/upload")
    async def upload(file: UploadFile = File(...), web: WebSession = Depends(require_session)):
        data = await file.read()
        staged = staging.stage(data, file.filename)
        return {"staged": staged.token, "file_name": file.filename}

    @app.post("/api/restore")
    async def restore(body: dict, web: WebSession = Depends(require_session)):
        if web.connection is None:
            raise ConnectionRequired("test a connection first")
        mode = RestoreMode(str(body.get("mode", "")))
        db_name = str(body.get("db_name", ""))
        with web.lock:
            if body.get("staged"):
                report = restore_engine.restore_staged(
                    staging, str(body["staged"]), mode, db_name, web.connection
                )
            elif body.get("archive"):
                name = str(body["archive"])
                if "/" in name or "\\" in name:
                    raise UnknownDatabase(f"no such archive: {name}")
                path = sinks.primary_dir / name
                if not path.is_file():
                    raise UnknownDatabase(f"no such archive: {name}")
                from .archive import read_archive

                archive = read_archive(path.read_bytes())
                report = restore_engine.restore(archive, mode, db_name, web.connection)
            else:
                raise MalformedRequest("restore needs a staged token or an archive name")
        return report.to_dict()

    # -- static console ------------------------------------------------------------------

    if config.static_dir and Path(config.static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(config.static_dir), html=True))

    return app
