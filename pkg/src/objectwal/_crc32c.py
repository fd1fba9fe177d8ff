"""CRC-32C (Castagnoli) used for all on-storage integrity framing.

One corrupted byte anywhere under the checksum's coverage is guaranteed to
change the value, which is what the torn-tail detection relies on.  A
numba-compiled kernel is used when available; the table-driven fallback is
identical but ~25x slower.
"""

from __future__ import annotations

_POLY = 0x82F63B78

_TABLE = []
for _n in range(256):
    _c = _n
    for _ in range(8):
        _c = (_c >> 1) ^ _POLY if _c & 1 else _c >> 1
    _TABLE.append(_c)


def _crc32c_py(data: bytes, crc: int = 0) -> int:
    crc ^= 0xFFFFFFFF
    tab = _TABLE
    for b in data:
        crc = tab[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFF


try:
    import numba
    import numpy as _np

    _TAB_NP = _np.array(_TABLE, dtype=_np.uint32)

    @numba.njit(
        numba.uint32(numba.types.Array(numba.uint8, 1, "C", readonly=True), numba.uint32),
        cache=True,
    )
    def _crc32c_nb(data, crc):  # pragma: no cover - exercised via crc32c()
        crc = crc ^ numba.uint32(0xFFFFFFFF)
        for i in range(data.shape[0]):
            crc = _TAB_NP[(crc ^ data[i]) & numba.uint32(0xFF)] ^ (crc >> numba.uint32(8))
        return crc ^ numba.uint32(0xFFFFFFFF)

    def crc32c(data: bytes | bytearray | memoryview, crc: int = 0) -> int:
        return int(_crc32c_nb(_np.frombuffer(data, dtype=_np.uint8), crc))

except ImportError:  # pragma: no cover
    crc32c = _crc32c_py
