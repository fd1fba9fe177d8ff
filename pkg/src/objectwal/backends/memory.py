"""In-memory backend with simulated request latency.

Appends to one object are serialized by a per-object lock (the mutation is
the linearization point); the sampled latency is then slept off before the
call returns, so concurrent callers overlap realistically.  A semaphore caps
in-flight requests per backend.
"""

from __future__ import annotations

import random
import sys
import threading
import time

_SLEEP_MARGIN = 0.0025


def precise_sleep(seconds: float) -> None:
    """Sleep with ~0.05 ms accuracy.

    The OS timer rounds millisecond sleeps up to a coarse tick in some
    environments, which is too blunt for replication-ack timing checks.
    Sleep short of the deadline, then yield-loop the rest; sleep(0) releases
    the interpreter lock each pass so concurrent delays do not convoy.
    """
    deadline = time.monotonic() + seconds
    coarse = seconds - _SLEEP_MARGIN
    if coarse > 0:
        time.sleep(coarse)
    while time.monotonic() < deadline:
        time.sleep(0)

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
from .latency import LatencyModel, sample_latency


class _Obj:
    __slots__ = ("data", "parts", "lock")

    def __init__(self):
        self.data = bytearray()
        self.parts = 0
        self.lock = threading.Lock()


class MemoryStore:
    def __init__(
        self,
        bucket: str = "bucket",
        model: LatencyModel | None = None,
        seed: int = 0,
        max_inflight: int = 64,
        sleep=time.sleep,
        precise_delays: bool = False,
    ):
        check_key(bucket)
        if precise_delays:
            sleep = precise_sleep
            # keep spinning delay threads from hogging the interpreter lock
            sys.setswitchinterval(min(sys.getswitchinterval(), 0.0005))
        self.bucket = bucket
        self.model = model
        self.counters = CostCounters()
        self.faults = FaultInjector()
        self._objects: dict[str, _Obj] = {}
        self._dict_lock = threading.Lock()
        self._rng = random.Random(seed)
        self._rng_lock = threading.Lock()
        self._inflight = threading.BoundedSemaphore(max_inflight)
        self._sleep = sleep

    def _sample_ms(self, op: str, size: int) -> float:
        if self.model is None:
            return 0.0
        with self._rng_lock:
            return sample_latency(self.model, op, size, self._rng)

    def _delay(self, op: str, size: int) -> None:
        ms = self._sample_ms(op, size)
        if ms > 0:
            self._sleep(ms / 1000.0)

    def _lookup(self, key: str, create: bool) -> _Obj | None:
        with self._dict_lock:
            obj = self._objects.get(key)
            if obj is None and create:
                obj = self._objects[key] = _Obj()
            return obj

    def append_begin(self, key: str, expected_offset: int, payload) -> tuple[int, float]:
        """Apply the append and return ``(new_length, latency_ms)`` without
        waiting.  The mutation under the object lock is the linearization
        point; callers that want realistic timing sleep off the latency
        themselves (as :meth:`append` does)."""
        check_key(key)
        if not payload:
            raise ValueError("append payload must be non-empty")
        if len(payload) > MAX_PART_BYTES:
            raise ValueError("payload exceeds maximum part size")
        self.faults.check("append", key)
        with self._inflight:
            obj = self._lookup(key, create=expected_offset == 0)
            if obj is None:
                raise OffsetMismatch(0)
            with obj.lock:
                if len(obj.data) != expected_offset:
                    raise OffsetMismatch(len(obj.data))
                if obj.parts >= HARD_PART_LIMIT:
                    raise PartLimitExceeded(f"{key} already has {obj.parts} parts")
                obj.data += payload
                obj.parts += 1
                new_length = len(obj.data)
            self.counters.count("append", uploaded=len(payload))
            return new_length, self._sample_ms("append", len(payload))

    def append(self, key: str, expected_offset: int, payload) -> int:
        new_length, ms = self.append_begin(key, expected_offset, payload)
        if ms > 0:
            self._sleep(ms / 1000.0)
        return new_length

    def get(self, key: str, byte_range: tuple[int, int] | None = None) -> bytes:
        check_key(key)
        self.faults.check("get", key)
        with self._inflight:
            obj = self._lookup(key, create=False)
            if obj is None:
                raise NotFoundError(key)
            with obj.lock:
                if byte_range is None:
                    data = bytes(obj.data)
                else:
                    start, end = byte_range
                    if start < 0 or end < start or end > len(obj.data):
                        raise RangeInvalid(f"range {byte_range} for length {len(obj.data)}")
                    data = bytes(obj.data[start:end])
            self.counters.count("get", downloaded=len(data))
            self._delay("get", len(data))
            return data

    def put(self, key: str, data) -> None:
        check_key(key)
        self.faults.check("put", key)
        with self._inflight:
            obj = self._lookup(key, create=True)
            with obj.lock:
                obj.data = bytearray(data)
                obj.parts = 1 if data else 0
            self.counters.count("put", uploaded=len(data))
            self._delay("put", len(data))

    def delete(self, key: str) -> None:
        check_key(key)
        self.faults.check("delete", key)
        with self._inflight:
            with self._dict_lock:
                self._objects.pop(key, None)  # idempotent
            self.counters.count("delete")
            self._delay("delete", 0)

    # introspection used by tests
    def object_length(self, key: str) -> int:
        obj = self._lookup(key, create=False)
        if obj is None:
            raise NotFoundError(key)
        return len(obj.data)

    def keys(self) -> list[str]:
        with self._dict_lock:
            return sorted(self._objects)
