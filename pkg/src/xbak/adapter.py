"""Adapter contract, connection manager, and catalog-backed dialect stubs.

Every dialect implements :class:`DbmsAdapter`; the embedded reference engine
(:mod:`xbak.refengine`) implements it fully, commercial dialects ship as
stubs that render statements from the catalog and raise AdapterUnavailable
until a live driver is plugged in.
"""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import AdapterUnavailable, SessionClosed
from .model import DatabaseSnapshot, Dialect, Selection
from .statements import StatementCatalog, StatementKey


@dataclass(frozen=True)
class ConnectionSpec:
    """Where and as whom to connect. The password never reaches repr or logs."""

    dialect: Dialect
    server: str
    user: str = ""
    password: str = field(default="", repr=False)

    def __repr__(self) -> str:  # keep the secret out of tracebacks too
        return (
            f"ConnectionSpec(dialect={self.dialect.name!r}, server={self.server!r}, "
            f"user={self.user!r}, password='***')"
        )


@dataclass(frozen=True)
class ConnectionTestResult:
    ok: bool
    reason: str | None = None


@dataclass(frozen=True)
class ArticleIndexEntry:
    name: str
    row_count: int | None = None


class AdapterSession(ABC):
    """A live connection to one server. Confine each session to one task."""

    def __init__(self, dialect: Dialect):
        self.dialect = dialect
        self._open = True

    @property
    def is_open(self) -> bool:
        return self._open

    def close(self) -> None:
        self._open = False

    def _check_open(self) -> None:
        if not self._open:
            raise SessionClosed("session is closed")

    @abstractmethod
    def list_databases(self) -> list[str]: ...

    @abstractmethod
    def describe(self, db_name: str) -> DatabaseSnapshot:
        """Schemas, definitions, and attributes of a database; no rows."""

    @abstractmethod
    def row_counts(self, db_name: str) -> dict[str, int]: ...

    @abstractmethod
    def snapshot(self, db_name: str, sel: Selection) -> DatabaseSnapshot: ...

    @abstractmethod
    def create_database(self, name: str) -> None: ...

    @abstractmethod
    def drop_database(self, name: str) -> None: ...

    @abstractmethod
    def drop_contents(self, db_name: str) -> None: ...

    @abstractmethod
    def apply_snapshot(self, db_name: str, snapshot: DatabaseSnapshot) -> None: ...

    def replace_contents(self, db_name: str, snapshot: DatabaseSnapshot) -> bool:
        """Clear and apply. Returns True when the two commit atomically."""
        self.drop_contents(db_name)
        self.apply_snapshot(db_name, snapshot)
        return False


class DbmsAdapter(ABC):
    """Per-dialect entry point: connection tests, server discovery, sessions."""

    dialect: Dialect

    @abstractmethod
    def test_connection(self, spec: ConnectionSpec) -> ConnectionTestResult: ...

    @abstractmethod
    def connect(self, spec: ConnectionSpec) -> AdapterSession: ...

    @abstractmethod
    def list_servers(self) -> list[str]: ...


class ConnectionManager:
    """Registry of adapters plus the set of sessions they have opened."""

    def __init__(self):
        self._adapters: dict[str, DbmsAdapter] = {}
        self._sessions: list[AdapterSession] = []
        self._lock = threading.Lock()

    def register(self, adapter: DbmsAdapter) -> None:
        with self._lock:
            self._adapters[adapter.dialect.name] = adapter

    def dialects(self) -> list[str]:
        with self._lock:
            return sorted(self._adapters)

    def adapter(self, dialect: Dialect) -> DbmsAdapter:
        with self._lock:
            found = self._adapters.get(dialect.name)
        if found is None:
            raise AdapterUnavailable(f"no adapter registered for dialect {dialect.name!r}")
        return found

    def test_connection(self, spec: ConnectionSpec) -> ConnectionTestResult:
        try:
            adapter = self.adapter(spec.dialect)
        except AdapterUnavailable:
            return ConnectionTestResult(False, "no adapter registered")
        return adapter.test_connection(spec)

    def list_servers(self, dialect: Dialect) -> list[str]:
        return self.adapter(dialect).list_servers()

    def connect(self, spec: ConnectionSpec) -> AdapterSession:
        session = self.adapter(spec.dialect).connect(spec)
        with self._lock:
            self._sessions.append(session)
        return session

    def disconnect_all(self) -> int:
        """Close every open session; idempotent. Returns the number closed."""
        with self._lock:
            sessions, self._sessions = self._sessions, []
        closed = 0
        for session in sessions:
            if session.is_open:
                session.close()
                closed += 1
        return closed

    def open_session_count(self) -> int:
        with self._lock:
            return sum(1 for s in self._sessions if s.is_open)


#: Runs a rendered statement against a live server and yields result rows.
StatementExecutor = Callable[[str], Sequence[Sequence[str]]]


class CatalogBackedAdapter(DbmsAdapter):
    """Stub adapter for a commercial dialect.

    It renders statements from the catalog and delegates execution to a
    configured driver callback; without one, every operation reports
    AdapterUnavailable. This keeps the dialect's contract (and its catalog
    rows) testable without bundling vendor drivers.
    """

    def __init__(
        self,
        dialect: Dialect,
        catalog: StatementCatalog,
        executor: StatementExecutor | None = None,
    ):
        self.dialect = dialect
        self._catalog = catalog
        self._executor = executor

    def _run(self, spec: str, args: dict[str, str] | None = None) -> Sequence[Sequence[str]]:
        rendered = self._catalog.render(StatementKey(self.dialect, spec), args)
        if self._executor is None:
            raise AdapterUnavailable(
                f"no live driver configured for {self.dialect.name}; would run: {rendered}"
            )
        return self._executor(rendered)

    def test_connection(self, spec: ConnectionSpec) -> ConnectionTestResult:
        if self._executor is None:
            return ConnectionTestResult(False, "no live driver configured")
        try:
            self._run("Get_All_DataBases")
        except AdapterUnavailable as exc:
            return ConnectionTestResult(False, exc.message)
        return ConnectionTestResult(True)

    def list_servers(self) -> list[str]:
        return [row[0] for row in self._run("Get_All_Servers")]

    def connect(self, spec: ConnectionSpec) -> AdapterSession:
        raise AdapterUnavailable(
            f"no live driver configured for dialect {self.dialect.name}"
        )
