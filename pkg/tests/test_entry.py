import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objectwal import entry as ent
from objectwal.entry import (
    KIND_DELETE,
    KIND_INSERT,
    KIND_UPDATE,
    DeltaRecord,
    Schema,
    TornTail,
    TxnEntry,
    UnsupportedFormat,
    decode_segment_footer,
    decode_stream,
    decode_txn_entry,
    encode_segment_footer,
    encode_txn_entry,
    entry_size,
    pack_fields,
    unpack_fields,
)


def crc32c_reference(data: bytes) -> int:
    """Bit-at-a-time CRC-32C, independent of the package's table/numba path."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ 0x82F63B78 if crc & 1 else crc >> 1
    return crc ^ 0xFFFFFFFF


def test_crc32c_check_value():
    # standard CRC-32C check value for "123456789"
    from objectwal._crc32c import crc32c, _crc32c_py

    assert crc32c(b"123456789") == 0xE3069283
    assert _crc32c_py(b"123456789") == 0xE3069283
    assert crc32c_reference(b"123456789") == 0xE3069283
    data = bytes(range(256)) * 3
    assert crc32c(data) == crc32c_reference(data)
    assert crc32c(bytearray(data)) == crc32c_reference(data)
    assert crc32c(b"") == crc32c_reference(b"") == 0


def upd(table=1, rid=7, mask=0b1, payload=b"A" * 8):
    return DeltaRecord(KIND_UPDATE, table, rid, mask, payload)


def test_paper_example_header_fields():
    # entry for csn=102, dsn=98 with one update record reads back verbatim
    data = encode_txn_entry(102, 98, [upd()])
    decoded, nxt = decode_txn_entry(data)
    assert decoded.csn == 102
    assert decoded.dsn == 98
    assert len(decoded.records) == 1
    assert nxt == len(data)


def test_no_predecessor_entry():
    rec = DeltaRecord(KIND_INSERT, 2, 3, 0x3FF, b"\x00" * 80)
    data = encode_txn_entry(1, 0, [rec])
    decoded, _ = decode_txn_entry(data)
    assert decoded.dsn == 0
    assert decoded.records[0].payload == b"\x00" * 80


def test_exact_byte_layout():
    rec = DeltaRecord(KIND_UPDATE, 0x11223344, 0x0102030405060708, 0b101, b"x" * 16)
    data = encode_txn_entry(0x0A0B0C0D0E0F1011, 0x0A0B0C0D0E0F1010, [rec])
    assert data[0:4] == b"MSL1"
    assert data[4] == 1  # format version
    assert data[5:8] == b"\x00\x00\x00"
    assert data[8:16] == struct.pack("<Q", 0x0A0B0C0D0E0F1011)  # csn
    assert data[16:24] == struct.pack("<Q", 0x0A0B0C0D0E0F1010)  # dsn
    assert data[24:28] == struct.pack("<L", 1)  # record_count
    assert data[28:32] == struct.pack("<L", 24 + 16)  # body_length
    crc = struct.unpack_from("<L", data, 32)[0]
    assert crc == crc32c_reference(data[:32] + data[36:])
    body = data[36:]
    assert body[0] == KIND_UPDATE
    assert body[1:4] == b"\x00\x00\x00"
    assert body[4:8] == struct.pack("<L", 0x11223344)  # table_id
    assert body[8:16] == struct.pack("<Q", 0x0102030405060708)  # rid
    assert body[16:24] == struct.pack("<Q", 0b101)  # field_mask
    assert body[24:] == b"x" * 16
    assert len(data) == 36 + 40


def test_encode_rejects_bad_args():
    with pytest.raises(ValueError):
        encode_txn_entry(5, 5, [upd()])
    with pytest.raises(ValueError):
        encode_txn_entry(4, 5, [upd()])
    with pytest.raises(ValueError):
        encode_txn_entry(5, 4, [])
    with pytest.raises(ent.FormatError):
        encode_txn_entry(5, 4, [DeltaRecord(KIND_DELETE, 0, 0, 0, b"junk")])
    with pytest.raises(ent.FormatError):
        encode_txn_entry(5, 4, [DeltaRecord(0, 0, 0, 0, b"")])


def random_records(rng, schema=ent.DEFAULT_SCHEMA):
    records = []
    for _ in range(rng.randint(1, 6)):
        kind = rng.choice((KIND_INSERT, KIND_UPDATE, KIND_DELETE))
        if kind == KIND_DELETE:
            mask, payload = 0, b""
        else:
            mask = rng.randint(1, schema.full_mask)
            payload = rng.randbytes(bin(mask).count("1") * schema.field_width)
        records.append(DeltaRecord(kind, rng.randint(0, 5), rng.randint(0, 2**48), mask, payload))
    return records


def test_round_trip_randomized_1000():
    rng = random.Random(0xC0FFEE)
    for _ in range(1000):
        dsn = rng.randint(0, 1000)
        csn = dsn + rng.randint(1, 1000)
        records = random_records(rng)
        data = encode_txn_entry(csn, dsn, records)
        assert len(data) == entry_size(records)
        decoded, nxt = decode_txn_entry(data)
        assert decoded == TxnEntry(csn, dsn, tuple(records))
        assert nxt == len(data)
        # re-encoding the decoded entry is bit-identical
        assert encode_txn_entry(decoded.csn, decoded.dsn, decoded.records) == data


@given(
    dsn=st.integers(min_value=0, max_value=2**40),
    gap=st.integers(min_value=1, max_value=2**20),
    seed=st.integers(min_value=0, max_value=2**32),
)
@settings(max_examples=200, deadline=None)
def test_round_trip_property(dsn, gap, seed):
    records = random_records(random.Random(seed))
    data = encode_txn_entry(dsn + gap, dsn, records)
    decoded, nxt = decode_txn_entry(data)
    assert decoded == TxnEntry(dsn + gap, dsn, tuple(records))
    assert nxt == len(data)


def test_empty_input_is_torn_tail():
    assert isinstance(decode_txn_entry(b""), TornTail)


def test_every_single_byte_flip_detected():
    data = encode_txn_entry(102, 98, [upd(), upd(rid=9, mask=0b11, payload=b"B" * 16)])
    for pos in range(len(data)):
        corrupted = bytearray(data)
        corrupted[pos] ^= 0x01
        result = decode_txn_entry(bytes(corrupted))
        assert isinstance(result, TornTail), f"flip at {pos} not detected"


def test_prefix_safety():
    rng = random.Random(7)
    blobs = [encode_txn_entry(i + 10, i, random_records(rng)) for i in range(1, 5)]
    stream = b"".join(blobs)
    entries, tail = decode_stream(stream)
    assert len(entries) == 4 and tail is None
    # any strict prefix of entry k+1 after k whole entries yields exactly k
    for k in range(4):
        base = b"".join(blobs[:k])
        for cut in range(len(blobs[k])):
            entries, tail = decode_stream(base + blobs[k][:cut])
            assert len(entries) == k
            if cut == 0:
                assert tail is None  # clean boundary, no torn tail
            else:
                assert isinstance(tail, TornTail)
                assert tail.offset == len(base)


def test_unknown_version_is_distinct_error():
    data = bytearray(encode_txn_entry(10, 2, [upd()]))
    data[4] = 9  # bump version and fix the crc so only the version is wrong
    prefix = bytes(data[:32])
    body = bytes(data[36:])
    struct.pack_into("<L", data, 32, crc32c_reference(prefix + body))
    with pytest.raises(UnsupportedFormat):
        decode_txn_entry(bytes(data))


def test_declared_length_beyond_end_is_torn():
    data = bytearray(encode_txn_entry(10, 2, [upd()]))
    struct.pack_into("<L", data, 28, 10_000)  # body_length says more than present
    assert isinstance(decode_txn_entry(bytes(data)), TornTail)


def test_variable_width_schema_round_trip():
    schema = Schema(field_count=4, field_width=None)
    values = [b"", b"abc", b"0123456789"]
    payload = pack_fields(schema, 0b1011, values)
    assert unpack_fields(schema, 0b1011, payload) == values
    rec = DeltaRecord(KIND_UPDATE, 77, 5, 0b1011, payload)
    data = encode_txn_entry(3, 0, [rec, rec])
    decoded, _ = decode_txn_entry(data, 0, lambda tid: schema)
    assert decoded.records == (rec, rec)


def test_pack_fields_fixed_width_validation():
    schema = Schema(field_count=3, field_width=8)
    with pytest.raises(ent.FormatError):
        pack_fields(schema, 0b11, [b"x" * 8])  # mask/value count mismatch
    with pytest.raises(ent.FormatError):
        pack_fields(schema, 0b1, [b"short"])
    with pytest.raises(ent.FormatError):
        pack_fields(schema, 0b1000, [b"x" * 8])  # mask beyond field count
    payload = pack_fields(schema, 0b101, [b"a" * 8, b"b" * 8])
    assert unpack_fields(schema, 0b101, payload) == [b"a" * 8, b"b" * 8]


def test_segment_footer_round_trip():
    blob = encode_segment_footer(123456, 789)
    max_csn, data_len, nxt = decode_segment_footer(blob, 0)
    assert (max_csn, data_len, nxt) == (123456, 789, len(blob))
    # footer is not decodable as an entry, and corrupt footers are torn
    assert isinstance(decode_txn_entry(blob), TornTail)
    for pos in range(len(blob)):
        corrupted = bytearray(blob)
        corrupted[pos] ^= 0xFF
        assert isinstance(decode_segment_footer(bytes(corrupted), 0), TornTail)
