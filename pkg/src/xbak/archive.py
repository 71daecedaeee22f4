"""The portable backup document: XML writer, reader, validator, blob codec.

The document grammar is described in docs/archive_format.md. Two header
element names (``DataBase_Mangment_System``, ``DBMS_name``) are kept exactly
as legacy tools spell them, misspelling included, so archives stay
recognizable; everything else is this format's own design.

Writing is byte-deterministic for equal snapshots. The checksum is a
32-hex-char blake2s digest over a canonical (compact) serialization of the
payload model, so formatting whitespace never affects integrity while any
change to names, schema, rows, or definitions does.
"""

from __future__ import annotations

import hashlib
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime

from .errors import (
    ChecksumMismatch,
    MalformedDocument,
    MalformedHex,
    NotABackupFile,
    UnsupportedVersion,
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
    TableData,
    TableSchema,
    ValueType,
    format_timestamp,
    parse_timestamp,
)

ROOT_TAG = "DataBase_Mangment_System"
DIALECT_TAG = "DBMS_name"
FORMAT_VERSION = 1

HEX_BLOB_RE = re.compile(r"0x(?:[0-9A-F]{2})*")
INT_TEXT_RE = re.compile(r"-?[0-9]+")
FLOAT_TEXT_RE = re.compile(
    r"[+-]?(?:inf|nan|[0-9]+\.?[0-9]*(?:[eE][+-]?[0-9]+)?|\.[0-9]+(?:[eE][+-]?[0-9]+)?)"
)

_XML_UNSAFE = re.compile(r"[\x00-\x08\x0b\x0c\x0d\x0e-\x1f￾￿]")


# --- blob codec -----------------------------------------------------------------

def encode_blob(data: bytes) -> str:
    """Bytes -> ``0x`` + uppercase hex pairs."""
    return "0x" + data.hex().upper()


def decode_blob(text: str) -> bytes:
    """Strict inverse of encode_blob; anything off-grammar is MalformedHex."""
    if HEX_BLOB_RE.fullmatch(text) is None:
        raise MalformedHex(f"not a hex blob: {text[:40]!r}")
    return bytes.fromhex(text[2:])


def _needs_hex(text: str) -> bool:
    """True when a text payload cannot survive XML 1.0 verbatim."""
    if _XML_UNSAFE.search(text):
        return True
    try:
        text.encode("utf-8")
    except UnicodeEncodeError:
        return True
    return False


# --- tiny deterministic XML emitter ----------------------------------------------

@dataclass
class _Node:
    tag: str
    attrs: dict[str, str] = field(default_factory=dict)
    text: str | None = None
    children: list["_Node"] = field(default_factory=list)
    cdata: bool = False

    def child(self, tag: str, attrs: dict[str, str] | None = None, text: str | None = None,
              cdata: bool = False) -> "_Node":
        node = _Node(tag, attrs or {}, text, [], cdata)
        self.children.append(node)
        return node


def _escape_text(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _escape_attr(text: str) -> str:
    return _escape_text(text).replace('"', "&quot;")


def _emit(node: _Node, out: list[str], indent: int, pretty: bool) -> None:
    pad = "  " * indent if pretty else ""
    attrs = "".join(f' {k}="{_escape_attr(v)}"' for k, v in node.attrs.items())
    if node.children:
        out.append(f"{pad}<{node.tag}{attrs}>")
        if pretty:
            out.append("\n")
        for child in node.children:
            _emit(child, out, indent + 1, pretty)
        out.append(f"{pad}</{node.tag}>")
    elif node.cdata and node.text:
        body = node.text.replace("]]>", "]]]]><![CDATA[>")
        out.append(f"{pad}<{node.tag}{attrs}><![CDATA[{body}]]></{node.tag}>")
    elif node.text:
        out.append(f"{pad}<{node.tag}{attrs}>{_escape_text(node.text)}</{node.tag}>")
    else:
        out.append(f"{pad}<{node.tag}{attrs}/>")
    if pretty:
        out.append("\n")


def _serialize(node: _Node, pretty: bool) -> bytes:
    out: list[str] = []
    _emit(node, out, 0, pretty)
    text = "".join(out)
    if pretty and text.endswith("\n"):
        text = text[:-1]  # the document ends at the root close tag
    return text.encode("utf-8")


# --- value cells ------------------------------------------------------------------

def value_to_text(value, col_type: ValueType) -> str:
    if col_type is ValueType.BOOL:
        return "true" if value else "false"
    if col_type is ValueType.INT:
        return str(value)
    if col_type is ValueType.FLOAT:
        return repr(value)
    if col_type is ValueType.TEXT:
        return value
    if col_type is ValueType.BLOB:
        return encode_blob(value)
    if col_type is ValueType.TIMESTAMP:
        return format_timestamp(value)
    raise ValueError(f"no text form for {col_type}")


def text_to_value(text: str, col_type: ValueType):
    if col_type is ValueType.BOOL:
        if text == "true":
            return True
        if text == "false":
            return False
        raise ValueError(f"bad bool text: {text!r}")
    if col_type is ValueType.INT:
        if INT_TEXT_RE.fullmatch(text) is None:
            raise ValueError(f"bad int text: {text!r}")
        return int(text)
    if col_type is ValueType.FLOAT:
        if FLOAT_TEXT_RE.fullmatch(text) is None:
            raise ValueError(f"bad float text: {text!r}")
        return float(text)
    if col_type is ValueType.TEXT:
        return text
    if col_type is ValueType.BLOB:
        try:
            return decode_blob(text)
        except MalformedHex as exc:
            raise ValueError(exc.message) from None
    if col_type is ValueType.TIMESTAMP:
        return parse_timestamp(text)
    raise ValueError(f"no parser for {col_type}")


def _text_node(parent: _Node, tag: str, text: str, attrs: dict[str, str] | None = None,
               cdata: bool = False) -> None:
    """Attach a text payload, hex-wrapping anything XML cannot carry."""
    attrs = dict(attrs or {})
    if _needs_hex(text):
        attrs["enc"] = "hex"
        parent.child(tag, attrs, encode_blob(text.encode("utf-8", "strict")))
    else:
        parent.child(tag, attrs, text, cdata=cdata)


# --- payload model <-> nodes -------------------------------------------------------

def _payload_nodes(snapshot: DatabaseSnapshot) -> list[_Node]:
    db = _Node("DataBase")
    _text_node(db, "Name", snapshot.db_name)
    for key, value in snapshot.db_attributes:
        _text_node(db, "Attribute", value, {"name": key})
    nodes = [db]

    if snapshot.tables:
        tables = _Node("Tables")
        for tdata in snapshot.tables:
            schema = tdata.schema
            table = tables.child("Table")
            _text_node(table, "Name", schema.name)
            columns = table.child("Columns")
            for col in schema.columns:
                columns.child(
                    "Column",
                    {
                        "name": col.name,
                        "type": col.type.value,
                        "nullable": "true" if col.nullable else "false",
                        "key": "true" if col.is_key else "false",
                    },
                )
            if schema.foreign_keys:
                fks = table.child("ForeignKeys")
                for fk in schema.foreign_keys:
                    fks.child(
                        "ForeignKey",
                        {"column": fk.column, "table": fk.ref_table,
                         "references": fk.ref_column},
                    )
            if tdata.rows:
                rows = table.child("Rows")
                for row in tdata.rows:
                    row_node = rows.child("Row")
                    for value, col in zip(row, schema.columns):
                        if value is None:
                            row_node.child(col.name, {"null": "true"})
                        else:
                            _text_node(row_node, col.name, value_to_text(value, col.type))
        nodes.append(tables)

    if snapshot.definitions:
        definitions = _Node("Definitions")
        for d in snapshot.definitions:
            attrs = {"kind": d.ref.kind.value, "name": d.ref.name}
            if d.ref.parent_table:
                attrs["parent"] = d.ref.parent_table
            _text_node(definitions, "Definition", d.body, attrs, cdata=True)
        nodes.append(definitions)

    return nodes


def _payload_checksum(snapshot: DatabaseSnapshot) -> str:
    canonical = b"".join(_serialize(n, pretty=False) for n in _payload_nodes(snapshot))
    return hashlib.blake2s(canonical, digest_size=16).hexdigest()


# --- archive ------------------------------------------------------------------------

@dataclass(frozen=True)
class Archive:
    """A parsed, checksum-verified backup document."""

    dialect: Dialect
    format_version: int
    db_name: str
    db_attributes: tuple[tuple[str, str], ...]
    payload: DatabaseSnapshot
    checksum: str


def write_archive(snapshot: DatabaseSnapshot) -> bytes:
    """Serialize a snapshot; equal snapshots produce byte-identical documents."""
    root = _Node(ROOT_TAG, {"encrypted": "false"})
    root.child(DIALECT_TAG, text=snapshot.dialect.name)
    root.child("Format_Version", text=str(FORMAT_VERSION))
    root.child("Checksum", text=_payload_checksum(snapshot))
    root.children.extend(_payload_nodes(snapshot))
    return b'<?xml version="1.0" encoding="UTF-8"?>\n' + _serialize(root, pretty=True)


# --- reading ------------------------------------------------------------------------

def _malformed(message: str) -> MalformedDocument:
    return MalformedDocument(message)


def _require_structural(elem: ET.Element) -> None:
    if elem.text is not None and elem.text.strip():
        raise _malformed(f"unexpected text inside <{elem.tag}>")
    for child in elem:
        if child.tail is not None and child.tail.strip():
            raise _malformed(f"unexpected text after <{child.tag}>")


def _require_leaf(elem: ET.Element, allowed_attrs: set[str]) -> None:
    if len(elem) != 0:
        raise _malformed(f"<{elem.tag}> must not have children")
    extra = set(elem.attrib) - allowed_attrs
    if extra:
        raise _malformed(f"<{elem.tag}> has unknown attributes: {sorted(extra)}")


def _leaf_text(elem: ET.Element) -> str:
    """Text payload of a leaf, honoring the enc=\"hex\" wrapper."""
    text = elem.text or ""
    enc = elem.attrib.get("enc")
    if enc is None:
        return text
    if enc != "hex":
        raise _malformed(f"<{elem.tag}> has unknown encoding {enc!r}")
    try:
        return decode_blob(text).decode("utf-8")
    except (MalformedHex, UnicodeDecodeError):
        raise _malformed(f"<{elem.tag}> has a bad hex payload") from None


def _parse_flag(elem: ET.Element, name: str) -> bool:
    raw = elem.attrib.get(name)
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise _malformed(f"<{elem.tag}> attribute {name} must be true or false")


def _parse_columns(elem: ET.Element) -> tuple[ColumnDef, ...]:
    _require_structural(elem)
    columns = []
    for child in elem:
        if child.tag != "Column":
            raise _malformed(f"unexpected <{child.tag}> inside <Columns>")
        _require_leaf(child, {"name", "type", "nullable", "key"})
        try:
            col_type = ValueType(child.attrib.get("type", ""))
        except ValueError:
            raise _malformed(f"unknown column type {child.attrib.get('type')!r}") from None
        try:
            columns.append(
                ColumnDef(
                    child.attrib.get("name", ""),
                    col_type,
                    _parse_flag(child, "nullable"),
                    _parse_flag(child, "key"),
                )
            )
        except ValueError as exc:
            raise _malformed(str(exc)) from None
    return tuple(columns)


def _parse_row(elem: ET.Element, schema: TableSchema) -> tuple:
    _require_structural(elem)
    cells = list(elem)
    if len(cells) != len(schema.columns):
        raise _malformed(
            f"table {schema.name}: row has {len(cells)} cells, "
            f"schema has {len(schema.columns)} columns"
        )
    values = []
    for cell, col in zip(cells, schema.columns):
        if cell.tag != col.name:
            raise _malformed(
                f"table {schema.name}: expected cell <{col.name}>, found <{cell.tag}>"
            )
        _require_leaf(cell, {"null", "enc"})
        if cell.attrib.get("null") == "true":
            if cell.text is not None and cell.text != "":
                raise _malformed(f"null cell <{cell.tag}> must be empty")
            values.append(None)
            continue
        try:
            values.append(text_to_value(_leaf_text(cell), col.type))
        except ValueError as exc:
            raise _malformed(f"table {schema.name}, cell <{cell.tag}>: {exc}") from None
    return tuple(values)


def _parse_table(elem: ET.Element) -> TableData:
    _require_structural(elem)
    children = list(elem)
    if not children or children[0].tag != "Name":
        raise _malformed("<Table> must start with <Name>")
    _require_leaf(children[0], {"enc"})
    name = _leaf_text(children[0])
    rest = children[1:]
    if not rest or rest[0].tag != "Columns":
        raise _malformed(f"table {name}: missing <Columns>")
    columns = _parse_columns(rest[0])
    rest = rest[1:]

    fks: tuple[ForeignKey, ...] = ()
    if rest and rest[0].tag == "ForeignKeys":
        _require_structural(rest[0])
        parsed = []
        for child in rest[0]:
            if child.tag != "ForeignKey":
                raise _malformed(f"unexpected <{child.tag}> inside <ForeignKeys>")
            _require_leaf(child, {"column", "table", "references"})
            try:
                parsed.append(
                    ForeignKey(
                        child.attrib.get("column", ""),
                        child.attrib.get("table", ""),
                        child.attrib.get("references", ""),
                    )
                )
            except ValueError as exc:
                raise _malformed(str(exc)) from None
        fks = tuple(parsed)
        rest = rest[1:]

    try:
        schema = TableSchema(name, columns, fks)
    except ValueError as exc:
        raise _malformed(str(exc)) from None

    rows: list[tuple] = []
    if rest and rest[0].tag == "Rows":
        _require_structural(rest[0])
        for child in rest[0]:
            if child.tag != "Row":
                raise _malformed(f"unexpected <{child.tag}> inside <Rows>")
            rows.append(_parse_row(child, schema))
        rest = rest[1:]
    if rest:
        raise _malformed(f"table {name}: unexpected <{rest[0].tag}>")
    return TableData(schema, tuple(rows))


def _parse_definitions(elem: ET.Element) -> tuple[DefinitionArticle, ...]:
    _require_structural(elem)
    out = []
    for child in elem:
        if child.tag != "Definition":
            raise _malformed(f"unexpected <{child.tag}> inside <Definitions>")
        _require_leaf(child, {"kind", "name", "parent", "enc"})
        kind_raw = child.attrib.get("kind", "")
        try:
            kind = ArticleKind(kind_raw)
        except ValueError:
            raise _malformed(f"unknown definition kind {kind_raw!r}") from None
        if kind not in DEFINITION_KINDS:
            raise _malformed(f"{kind_raw} is not a definition kind")
        try:
            ref = ArticleRef(kind, child.attrib.get("name", ""), child.attrib.get("parent"))
            out.append(DefinitionArticle(ref, _leaf_text(child)))
        except ValueError as exc:
            raise _malformed(str(exc)) from None
    return tuple(out)


def read_archive(document: bytes) -> Archive:
    """Parse and validate a backup document.

    Returns an Archive or raises exactly one of NotABackupFile,
    MalformedDocument, ChecksumMismatch, UnsupportedVersion.
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise _malformed(f"not well-formed XML: {exc}") from None

    if root.tag != ROOT_TAG:
        raise NotABackupFile(f"root element is <{root.tag}>, not <{ROOT_TAG}>")
    header = {child.tag: child for child in root}
    dialect_elem = header.get(DIALECT_TAG)
    if dialect_elem is None or not (dialect_elem.text or "").strip():
        raise NotABackupFile(f"missing <{DIALECT_TAG}> header")
    db_elem = header.get("DataBase")
    name_elem = db_elem.find("Name") if db_elem is not None else None
    if name_elem is None or not (name_elem.text or "").strip():
        raise NotABackupFile("missing database name tags")

    encrypted = root.attrib.get("encrypted", "false")
    if encrypted != "false":
        raise UnsupportedVersion("encrypted archives are not supported")
    extra_attrs = set(root.attrib) - {"encrypted"}
    if extra_attrs:
        raise _malformed(f"unknown root attributes: {sorted(extra_attrs)}")

    _require_structural(root)
    expected = [DIALECT_TAG, "Format_Version", "Checksum", "DataBase"]
    children = list(root)
    if [c.tag for c in children[: len(expected)]] != expected:
        raise _malformed(
            f"header must be {expected}, found {[c.tag for c in children[:4]]}"
        )

    _require_leaf(dialect_elem, set())
    try:
        dialect = Dialect((dialect_elem.text or "").strip())
    except ValueError as exc:
        raise _malformed(str(exc)) from None

    version_elem = header["Format_Version"]
    _require_leaf(version_elem, set())
    version_text = (version_elem.text or "").strip()
    if INT_TEXT_RE.fullmatch(version_text) is None:
        raise _malformed(f"bad format version text: {version_text!r}")
    version = int(version_text)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"format version {version} is not supported")

    checksum_elem = header["Checksum"]
    _require_leaf(checksum_elem, set())
    stored_checksum = (checksum_elem.text or "").strip().lower()

    _require_structural(db_elem)
    db_children = list(db_elem)
    _require_leaf(db_children[0], {"enc"})
    db_name = _leaf_text(db_children[0])
    attributes = []
    for child in db_children[1:]:
        if child.tag != "Attribute":
            raise _malformed(f"unexpected <{child.tag}> inside <DataBase>")
        _require_leaf(child, {"name", "enc"})
        key = child.attrib.get("name", "")
        attributes.append((key, _leaf_text(child)))

    tables: tuple[TableData, ...] = ()
    definitions: tuple[DefinitionArticle, ...] = ()
    rest = children[len(expected):]
    if rest and rest[0].tag == "Tables":
        _require_structural(rest[0])
        parsed_tables = []
        for child in rest[0]:
            if child.tag != "Table":
                raise _malformed(f"unexpected <{child.tag}> inside <Tables>")
            parsed_tables.append(_parse_table(child))
        tables = tuple(parsed_tables)
        rest = rest[1:]
    if rest and rest[0].tag == "Definitions":
        definitions = _parse_definitions(rest[0])
        rest = rest[1:]
    if rest:
        raise _malformed(f"unexpected <{rest[0].tag}> after payload")

    try:
        payload = DatabaseSnapshot(
            dialect=dialect,
            db_name=db_name,
            db_attributes=tuple(attributes),
            tables=tables,
            definitions=definitions,
        )
    except ValueError as exc:
        raise _malformed(str(exc)) from None

    computed = _payload_checksum(payload)
    if stored_checksum != computed:
        raise ChecksumMismatch(
            f"stored checksum {stored_checksum!r} != computed {computed!r}"
        )

    return Archive(
        dialect=dialect,
        format_version=version,
        db_name=db_name,
        db_attributes=tuple(attributes),
        payload=payload,
        checksum=computed,
    )


# --- default file names --------------------------------------------------------------

def default_archive_name(dialect: Dialect, db_name: str, timestamp: datetime) -> str:
    """``{dialect}_{db}_{DD-MM-YYYY}_{HH.MM}.xml`` from a wall-clock instant."""
    t = timestamp
    return (
        f"{dialect.name}_{db_name}_{t.day:02d}-{t.month:02d}-{t.year:04d}"
        f"_{t.hour:02d}.{t.minute:02d}.xml"
    )


def disambiguate_name(name: str, taken) -> str:
    """Append ``_2``, ``_3``, ... before the extension until the name is free."""
    if name not in taken:
        return name
    stem, dot, ext = name.rpartition(".")
    if not dot:
        stem, ext = name, ""
    n = 2
    while True:
        candidate = f"{stem}_{n}.{ext}" if dot else f"{stem}_{n}"
        if candidate not in taken:
            return candidate
        n += 1
