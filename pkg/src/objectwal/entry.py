"""On-storage byte formats: transaction log entries and framed metadata blobs.

A transaction's delta records are persisted as one contiguous, checksummed
entry so the whole transaction is either fully decodable or rejected as part
of the torn tail.  Layout (all integers little-endian):

    entry  := magic[4]="MSL1" | version u8 | reserved u8[3]
              | csn u64 | dsn u64 | record_count u32 | body_length u32
              | crc32c u32 | body
    record := kind u8 | reserved u8[3] | table_id u32 | rid u64
              | field_mask u64 | payload

The crc covers the 32 header bytes before the crc field plus the body.
``kind`` is 1/2/3 for insert/update/delete; 0 is reserved.  The entry's dsn
is the commit sequence number of the newest transaction whose versions this
one read or overwrote (0 when it has no predecessor) and is always strictly
below the entry's own csn.

Records carry no explicit payload length: for a fixed-width schema the
payload is ``popcount(field_mask) * field_width`` bytes (new values of the
masked fields in ascending field order); a schema with variable-width fields
prefixes each masked field value with a u16 length.  Decoding therefore
takes a schema lookup, defaulting to fixed 8-byte fields everywhere.

Checkpoint metadata and segment footers use a smaller framed-blob layout
with their own magic values but the same crc coverage rule.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Iterable

from ._crc32c import crc32c

MAGIC = b"MSL1"
FORMAT_VERSION = 1

FOOTER_MAGIC = b"MSF1"
META_MAGIC = b"MSM1"

KIND_INSERT = 1
KIND_UPDATE = 2
KIND_DELETE = 3
_KINDS = (KIND_INSERT, KIND_UPDATE, KIND_DELETE)

# magic, version, pad, csn, dsn, record_count, body_length; crc packed after
_HEADER_PREFIX = struct.Struct("<4sB3xQQLL")
_CRC = struct.Struct("<L")
HEADER_SIZE = _HEADER_PREFIX.size + _CRC.size  # 36

_REC_HEADER = struct.Struct("<B3xLQQ")  # kind, pad, table_id, rid, field_mask
REC_HEADER_SIZE = _REC_HEADER.size  # 24

_BLOB_HEADER = struct.Struct("<4sB3xLL")  # magic, version, pad, length, crc
BLOB_HEADER_SIZE = _BLOB_HEADER.size  # 16

_U16 = struct.Struct("<H")
_U64_MAX = (1 << 64) - 1
_U32_MAX = (1 << 32) - 1


class FormatError(Exception):
    """Structurally invalid data that is not a torn tail (caller bug)."""


class UnsupportedFormat(FormatError):
    """Entry checksums correctly but declares an unknown format version."""


@dataclass(frozen=True)
class Schema:
    """Record shape: ``field_width=None`` means variable-width fields."""

    field_count: int
    field_width: int | None = 8

    @property
    def full_mask(self) -> int:
        return (1 << self.field_count) - 1


DEFAULT_SCHEMA = Schema(field_count=10, field_width=8)

SchemaLookup = Callable[[int], Schema]


def _default_lookup(table_id: int) -> Schema:
    return DEFAULT_SCHEMA


@dataclass(frozen=True)
class TornTail:
    """End of the valid prefix of a log: a value, not an error.

    Returned when the magic does not match, the declared length exceeds the
    remaining bytes, or the checksum fails at ``offset``.
    """

    offset: int
    reason: str


@dataclass(frozen=True)
class DeltaRecord:
    kind: int
    table_id: int
    rid: int
    field_mask: int
    payload: bytes = b""

    def encoded_size(self) -> int:
        return REC_HEADER_SIZE + len(self.payload)


@dataclass(frozen=True)
class TxnEntry:
    csn: int
    dsn: int
    records: tuple[DeltaRecord, ...]

    def encoded_size(self) -> int:
        return HEADER_SIZE + sum(r.encoded_size() for r in self.records)


@dataclass(frozen=True)
class Lsn:
    """Position within one log, ordered lexicographically by
    (segment_index, byte_offset)."""

    log_id: int
    segment_index: int
    byte_offset: int

    def _key(self) -> tuple[int, int]:
        return (self.segment_index, self.byte_offset)

    def __lt__(self, other: "Lsn") -> bool:
        return self._key() < other._key()

    def __le__(self, other: "Lsn") -> bool:
        return self._key() <= other._key()


def pack_fields(schema: Schema, field_mask: int, values: Iterable[bytes]) -> bytes:
    """Concatenate masked field values in ascending field-index order."""
    out = bytearray()
    values = list(values)
    if bin(field_mask).count("1") != len(values):
        raise FormatError("value count does not match field mask")
    if field_mask >> schema.field_count:
        raise FormatError("field mask exceeds schema field count")
    for val in values:
        if schema.field_width is not None:
            if len(val) != schema.field_width:
                raise FormatError(f"field value must be {schema.field_width} bytes")
            out += val
        else:
            if len(val) > 0xFFFF:
                raise FormatError("variable field longer than 65535 bytes")
            out += _U16.pack(len(val)) + val
    return bytes(out)


def unpack_fields(schema: Schema, field_mask: int, payload: bytes) -> list[bytes]:
    """Split a payload back into the masked fields' values, in field order."""
    n_fields = bin(field_mask).count("1")
    values: list[bytes] = []
    pos = 0
    if schema.field_width is not None:
        if len(payload) != n_fields * schema.field_width:
            raise FormatError("payload length does not match field mask")
        w = schema.field_width
        for _ in range(n_fields):
            values.append(payload[pos : pos + w])
            pos += w
    else:
        for _ in range(n_fields):
            if pos + 2 > len(payload):
                raise FormatError("truncated variable-width field prefix")
            (ln,) = _U16.unpack_from(payload, pos)
            pos += 2
            if pos + ln > len(payload):
                raise FormatError("truncated variable-width field value")
            values.append(payload[pos : pos + ln])
            pos += ln
        if pos != len(payload):
            raise FormatError("payload has trailing bytes")
    return values


def _payload_size(schema: Schema, field_mask: int, body: memoryview, pos: int) -> int:
    n_fields = bin(field_mask).count("1")
    if schema.field_width is not None:
        return n_fields * schema.field_width
    size = 0
    for _ in range(n_fields):
        if pos + size + 2 > len(body):
            raise FormatError("truncated variable-width field prefix")
        (ln,) = _U16.unpack_from(body, pos + size)
        size += 2 + ln
    return size


def _check_record(rec: DeltaRecord) -> None:
    if rec.kind not in _KINDS:
        raise FormatError(f"unknown record kind {rec.kind}")
    if not 0 <= rec.table_id <= _U32_MAX:
        raise FormatError("table_id out of range")
    if not 0 <= rec.rid <= _U64_MAX:
        raise FormatError("rid out of range")
    if not 0 <= rec.field_mask <= _U64_MAX:
        raise FormatError("field_mask out of range")
    if rec.kind == KIND_DELETE and rec.payload:
        raise FormatError("delete records carry no payload")


def entry_size(records) -> int:
    """Encoded size is a deterministic function of the records alone."""
    return HEADER_SIZE + sum(r.encoded_size() for r in records)


def encode_record(rec: DeltaRecord) -> bytes:
    _check_record(rec)
    return _REC_HEADER.pack(rec.kind, rec.table_id, rec.rid, rec.field_mask) + rec.payload


def encode_txn_entry(csn: int, dsn: int, records) -> bytes:
    """Serialize one transaction's records as a single checksummed block."""
    if not records:
        raise ValueError("transaction entry requires at least one record")
    if csn <= dsn:
        raise ValueError(f"csn {csn} must exceed dsn {dsn}")
    if not 0 < csn <= _U64_MAX or dsn < 0:
        raise ValueError("sequence number out of range")
    body = b"".join(encode_record(r) for r in records)
    if len(body) > _U32_MAX:
        raise ValueError("entry body too large")
    prefix = _HEADER_PREFIX.pack(MAGIC, FORMAT_VERSION, csn, dsn, len(records), len(body))
    crc = crc32c(body, crc32c(prefix))
    return prefix + _CRC.pack(crc) + body


def decode_txn_entry(buf, offset: int = 0, schema_for: SchemaLookup = _default_lookup):
    """Decode one entry at ``offset``; returns ``(TxnEntry, next_offset)``.

    Returns a :class:`TornTail` when the bytes at ``offset`` are not the
    start of a complete, intact entry.  Raises :class:`UnsupportedFormat`
    only for entries that checksum correctly but declare an unknown version.
    """
    view = memoryview(buf)
    remaining = len(view) - offset
    if remaining < HEADER_SIZE:
        return TornTail(offset, "short header")
    magic, version, csn, dsn, count, body_len = _HEADER_PREFIX.unpack_from(view, offset)
    if magic != MAGIC:
        return TornTail(offset, "bad magic")
    if remaining < HEADER_SIZE + body_len:
        return TornTail(offset, "body extends past end")
    (stored_crc,) = _CRC.unpack_from(view, offset + _HEADER_PREFIX.size)
    body_start = offset + HEADER_SIZE
    body = view[body_start : body_start + body_len]
    crc = crc32c(body, crc32c(view[offset : offset + _HEADER_PREFIX.size]))
    if crc != stored_crc:
        return TornTail(offset, "crc mismatch")
    if version != FORMAT_VERSION:
        raise UnsupportedFormat(f"format version {version}")
    if csn == 0 or csn <= dsn:
        raise FormatError("entry checksums but violates csn > dsn >= 0")
    records = _parse_body(body, count, schema_for)
    return TxnEntry(csn, dsn, records), body_start + body_len


def _parse_body(body: memoryview, count: int, schema_for: SchemaLookup):
    records = []
    pos = 0
    n = len(body)
    for _ in range(count):
        if pos + REC_HEADER_SIZE > n:
            raise FormatError("record header extends past body")
        kind, table_id, rid, mask = _REC_HEADER.unpack_from(body, pos)
        pos += REC_HEADER_SIZE
        if kind not in _KINDS:
            raise FormatError(f"unknown record kind {kind}")
        if kind == KIND_DELETE:
            payload = b""
        else:
            size = _payload_size(schema_for(table_id), mask, body, pos)
            if pos + size > n:
                raise FormatError("record payload extends past body")
            payload = bytes(body[pos : pos + size])
            pos += size
        records.append(DeltaRecord(kind, table_id, rid, mask, payload))
    if pos != n:
        raise FormatError("body has trailing bytes")
    return tuple(records)


def decode_stream(buf, offset: int = 0, schema_for: SchemaLookup = _default_lookup):
    """Decode entries until the end of the valid prefix.

    Returns ``(entries, tail)`` where ``tail`` is ``None`` when the buffer
    ends exactly at an entry boundary and a :class:`TornTail` otherwise.
    """
    entries: list[TxnEntry] = []
    view = memoryview(buf)
    while offset < len(view):
        result = decode_txn_entry(view, offset, schema_for)
        if isinstance(result, TornTail):
            return entries, result
        entry, offset = result
        entries.append(entry)
    return entries, None


# -- framed blobs -----------------------------------------------------------
#
# Segment footers and checkpoint metadata reuse the entry format's integrity
# rule: crc32c over the header bytes before the crc field plus the payload.


def encode_blob(magic: bytes, payload: bytes) -> bytes:
    if len(magic) != 4:
        raise FormatError("blob magic must be 4 bytes")
    prefix = struct.pack("<4sB3xL", magic, FORMAT_VERSION, len(payload))
    crc = crc32c(payload, crc32c(prefix))
    return prefix + _CRC.pack(crc) + payload


def decode_blob(buf, offset: int, magic: bytes):
    """Returns ``(payload, next_offset)`` or :class:`TornTail`."""
    view = memoryview(buf)
    if len(view) - offset < BLOB_HEADER_SIZE:
        return TornTail(offset, "short blob header")
    got_magic, version, length, stored_crc = _BLOB_HEADER.unpack_from(view, offset)
    if got_magic != magic:
        return TornTail(offset, "bad blob magic")
    if len(view) - offset < BLOB_HEADER_SIZE + length:
        return TornTail(offset, "blob extends past end")
    start = offset + BLOB_HEADER_SIZE
    payload = view[start : start + length]
    crc = crc32c(payload, crc32c(view[offset : offset + 12]))
    if crc != stored_crc:
        return TornTail(offset, "blob crc mismatch")
    if version != FORMAT_VERSION:
        raise UnsupportedFormat(f"blob format version {version}")
    return bytes(payload), start + length


_FOOTER_BODY = struct.Struct("<QQ")


def encode_segment_footer(max_csn: int, data_length: int) -> bytes:
    """Footer appended as a sealed segment's final part."""
    return encode_blob(FOOTER_MAGIC, _FOOTER_BODY.pack(max_csn, data_length))


def decode_segment_footer(buf, offset: int):
    """Returns ``(max_csn, data_length, next_offset)`` or :class:`TornTail`."""
    result = decode_blob(buf, offset, FOOTER_MAGIC)
    if isinstance(result, TornTail):
        return result
    payload, next_offset = result
    if len(payload) != _FOOTER_BODY.size:
        return TornTail(offset, "footer payload size")
    max_csn, data_length = _FOOTER_BODY.unpack(payload)
    return max_csn, data_length, next_offset
