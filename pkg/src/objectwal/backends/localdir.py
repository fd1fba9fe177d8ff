"""Local-directory backend: one file per object under {root}/{bucket}/.

Appends are positional writes at the expected offset after a length check,
fsynced before acknowledging, which makes this the real-durability backend
for crash-recovery tests.  Part counts are tracked in memory only; after a
restart the engine starts a fresh segment, so the append limit still holds
per object lifetime within a process.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path

from . import (
    HARD_PART_LIMIT,
    MAX_PART_BYTES,
    CostCounters,
    FaultInjector,
    NotFoundError,
    OffsetMismatch,
    PartLimitExceeded,
    RangeInvalid,
    check_key,
)


class LocalDirStore:
    def __init__(self, root, bucket: str = "bucket", fsync: bool = True):
        check_key(bucket)
        self.bucket = bucket
        self.root = Path(root) / bucket
        self.root.mkdir(parents=True, exist_ok=True)
        self.fsync = fsync
        self.counters = CostCounters()
        self.faults = FaultInjector()
        self._lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        self._parts: dict[str, int] = {}

    def _path(self, key: str) -> Path:
        check_key(key)
        if "/" in key or key in (".", ".."):
            raise ValueError(f"invalid object key {key!r}")
        return self.root / key

    def _key_lock(self, key: str) -> threading.Lock:
        with self._lock:
            lock = self._key_locks.get(key)
            if lock is None:
                lock = self._key_locks[key] = threading.Lock()
            return lock

    def append(self, key: str, expected_offset: int, payload) -> int:
        if not payload:
            raise ValueError("append payload must be non-empty")
        if len(payload) > MAX_PART_BYTES:
            raise ValueError("payload exceeds maximum part size")
        self.faults.check("append", key)
        path = self._path(key)
        with self._key_lock(key):
            exists = path.exists()
            if not exists:
                if expected_offset != 0:
                    raise OffsetMismatch(0)
                flags = os.O_CREAT | os.O_WRONLY
            else:
                flags = os.O_WRONLY
            if self._parts.get(key, 0) >= HARD_PART_LIMIT:
                raise PartLimitExceeded(key)
            fd = os.open(path, flags, 0o644)
            try:
                length = os.fstat(fd).st_size
                if length != expected_offset:
                    raise OffsetMismatch(length)
                os.lseek(fd, expected_offset, os.SEEK_SET)
                os.write(fd, payload)
                if self.fsync:
                    os.fsync(fd)
                new_length = expected_offset + len(payload)
            finally:
                os.close(fd)
            self._parts[key] = self._parts.get(key, 0) + 1
            self.counters.count("append", uploaded=len(payload))
            return new_length

    def get(self, key: str, byte_range: tuple[int, int] | None = None) -> bytes:
        self.faults.check("get", key)
        path = self._path(key)
        with self._key_lock(key):
            if not path.exists():
                raise NotFoundError(key)
            with open(path, "rb") as f:
                if byte_range is None:
                    data = f.read()
                else:
                    start, end = byte_range
                    size = os.fstat(f.fileno()).st_size
                    if start < 0 or end < start or end > size:
                        raise RangeInvalid(f"range {byte_range} for length {size}")
                    f.seek(start)
                    data = f.read(end - start)
            self.counters.count("get", downloaded=len(data))
            return data

    def put(self, key: str, data) -> None:
        self.faults.check("put", key)
        path = self._path(key)
        with self._key_lock(key):
            tmp = path.with_name(path.name + ".tmp")
            with open(tmp, "wb") as f:
                f.write(data)
                if self.fsync:
                    os.fsync(f.fileno())
            os.replace(tmp, path)
            self._parts[key] = 1 if data else 0
            self.counters.count("put", uploaded=len(data))

    def delete(self, key: str) -> None:
        self.faults.check("delete", key)
        path = self._path(key)
        with self._key_lock(key):
            try:
                os.unlink(path)
            except FileNotFoundError:
                pass  # idempotent
            self._parts.pop(key, None)
            self.counters.count("delete")

    def object_length(self, key: str) -> int:
        path = self._path(key)
        if not path.exists():
            raise NotFoundError(key)
        return path.stat().st_size

    def keys(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if not p.name.endswith(".tmp"))
