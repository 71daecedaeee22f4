"""Dialect-keyed query template store.

New DBMS dialects are added by data (catalog rows) plus a thin adapter, not
by engine changes. Templates use ``{name}`` placeholders that substitute
identifiers only; arguments are validated against the identifier grammar
instead of being string-escaped, which closes the injection hole that naive
concatenation leaves open.

The catalog document grammar is described in docs/catalog_format.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

from .errors import (
    CatalogParseError,
    DuplicateStatement,
    ExtraArgument,
    IllegalIdentifier,
    MissingArgument,
    MissingStatement,
)
from .model import Dialect, is_identifier

PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")

#: Closed vocabulary of statement names. The first group is the introspection
#: and management set every adapter understands; the last three are the
#: restore-side additions.
STATEMENT_SPECS = frozenset(
    {
        "Get_All_DataBases",
        "Get_All_Tables",
        "Get_All_StoredProcedures",
        "Get_All_Views",
        "Get_All_Functions",
        "Get_All_Triggers",
        "Get_Selected_StoredProcedures",
        "Get_Selected_Views",
        "Get_Selected_DataBase",
        "Get_Selected_Functions",
        "Get_Selected_Triggers",
        "Get_Selected_Tables",
        "Get_All_Records",
        "Delete_DataBase",
        "Add_DataBase",
        "Get_All_Attributes",
        "Get_All_Keys",
        "Disconnect_All_Connections",
        "Get_DataBase_ID",
        "Get_All_Servers",
        "Create_Table",
        "Insert_Row",
        "Create_Definition",
    }
)


@dataclass(frozen=True)
class StatementKey:
    dialect: Dialect
    spec: str

    def __post_init__(self):
        if self.spec not in STATEMENT_SPECS:
            raise ValueError(f"unknown statement spec: {self.spec!r}")


@dataclass(frozen=True)
class StatementTemplate:
    key: StatementKey
    text: str
    params: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        seen = set()
        for p in self.params:
            if not is_identifier(p):
                raise ValueError(f"bad parameter name: {p!r}")
            if p in seen:
                raise ValueError(f"duplicate parameter: {p!r}")
            seen.add(p)
        placeholders = _scan_placeholders(self.text)
        if set(placeholders) != set(self.params):
            raise ValueError(
                f"placeholders {sorted(set(placeholders))} do not match "
                f"params {sorted(self.params)}"
            )


def _scan_placeholders(text: str) -> list[str]:
    """Collect placeholder names; any stray brace is an error."""
    names = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "}":
            raise ValueError(f"unbalanced '}}' at offset {i}")
        if ch == "{":
            m = PLACEHOLDER_RE.match(text, i)
            if m is None:
                raise ValueError(f"malformed placeholder at offset {i}")
            names.append(m.group(1))
            i = m.end()
        else:
            i += 1
    return names


class StatementCatalog:
    """Immutable lookup table of (dialect, spec) -> template."""

    def __init__(self, templates: Mapping[tuple[str, str], StatementTemplate]):
        self._templates = dict(templates)

    def __len__(self) -> int:
        return len(self._templates)

    def keys(self) -> list[StatementKey]:
        return [t.key for t in self._templates.values()]

    def dialects(self) -> list[str]:
        return sorted({d for d, _ in self._templates})

    def has(self, key: StatementKey) -> bool:
        return (key.dialect.name, key.spec) in self._templates

    def get(self, key: StatementKey) -> StatementTemplate:
        try:
            return self._templates[(key.dialect.name, key.spec)]
        except KeyError:
            raise MissingStatement(
                f"no statement for dialect {key.dialect.name!r}, spec {key.spec!r}"
            ) from None

    def render(self, key: StatementKey, args: Mapping[str, str] | None = None) -> str:
        """Substitute identifier arguments into a template.

        Arguments that fail the identifier grammar are rejected; the output
        never contains a placeholder brace.
        """
        args = dict(args or {})
        template = self.get(key)
        for name in template.params:
            if name not in args:
                raise MissingArgument(f"{key.spec}: missing argument {name!r}")
        for name in args:
            if name not in template.params:
                raise ExtraArgument(f"{key.spec}: unexpected argument {name!r}")
        for name, value in args.items():
            if not is_identifier(value):
                raise IllegalIdentifier(
                    f"{key.spec}: argument {name}={value!r} is not a legal identifier"
                )
        out = template.text
        for name in template.params:
            out = out.replace("{" + name + "}", args[name])
        assert "{" not in out
        return out


def _split_fields(line: str, lineno: int) -> list[str]:
    """Split a record line on unescaped '|'; '\\|' and '\\\\' are escapes."""
    fields: list[str] = []
    buf: list[str] = []
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "\\":
            if i + 1 >= len(line) or line[i + 1] not in "|\\":
                raise CatalogParseError(f"line {lineno}: bad escape sequence")
            buf.append(line[i + 1])
            i += 2
        elif ch == "|":
            fields.append("".join(buf))
            buf = []
            i += 1
        else:
            buf.append(ch)
            i += 1
    fields.append("".join(buf))
    return fields


def load_catalog(source: bytes | str) -> StatementCatalog:
    """Parse a catalog document (see docs/catalog_format.md).

    Duplicate (dialect, spec) keys are rejected; unknown statement names and
    malformed records raise CatalogParseError.
    """
    if isinstance(source, bytes):
        try:
            text = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CatalogParseError(f"catalog is not UTF-8: {exc}") from None
    else:
        text = source

    templates: dict[tuple[str, str], StatementTemplate] = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw[:-1] if raw.endswith("\r") else raw
        stripped = line.strip()
        if stripped.startswith("#%"):
            directive = stripped[2:].split()
            if directive[:1] == ["version"]:
                if directive[1:] != ["1"]:
                    raise CatalogParseError(
                        f"line {lineno}: unsupported catalog version {' '.join(directive[1:])!r}"
                    )
            else:
                raise CatalogParseError(f"line {lineno}: unknown directive {stripped!r}")
            continue
        if not stripped or stripped.startswith("#"):
            continue
        fields = _split_fields(line, lineno)
        if len(fields) != 4:
            raise CatalogParseError(
                f"line {lineno}: expected 4 '|'-separated fields, got {len(fields)}"
            )
        dialect_name, spec, params_field, query = (f.strip(" \t") for f in fields)
        try:
            dialect = Dialect(dialect_name)
        except ValueError as exc:
            raise CatalogParseError(f"line {lineno}: {exc}") from None
        if spec not in STATEMENT_SPECS:
            raise CatalogParseError(f"line {lineno}: unknown statement spec {spec!r}")
        params = tuple(p.strip(" \t") for p in params_field.split(",")) if params_field else ()
        key = (dialect_name, spec)
        if key in templates:
            raise DuplicateStatement(
                f"line {lineno}: duplicate statement ({dialect_name}, {spec})"
            )
        try:
            templates[key] = StatementTemplate(StatementKey(dialect, spec), query, params)
        except ValueError as exc:
            raise CatalogParseError(f"line {lineno}: {exc}") from None
    return StatementCatalog(templates)


def load_default_catalog() -> StatementCatalog:
    """Load the catalog document shipped with the package."""
    data = resources.files("xbak").joinpath("data/statements.cat").read_bytes()
    return load_catalog(data)
