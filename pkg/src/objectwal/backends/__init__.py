"""Storage backends with offset-checked append semantics.

All backends expose the same four operations:

    append(key, expected_offset, payload) -> new_length
    get(key, byte_range=None) -> bytes
    put(key, data)
    delete(key)

``append`` succeeds only when the object's current length equals
``expected_offset``; otherwise it raises :class:`OffsetMismatch` carrying the
actual length, which makes retries idempotent (a retry whose expected offset
plus payload length equals the actual length was already applied).  Objects
accept at most :data:`HARD_PART_LIMIT` appends; ``put`` replaces the object
and resets its part count.

Every call increments exactly one request counter and the matching byte
counters on the backend's :class:`CostCounters`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

HARD_PART_LIMIT = 10_000
MAX_PART_BYTES = 5 * 1024**3

REQUEST_KINDS = ("append", "put", "get", "delete")


class StorageError(Exception):
    pass


class OffsetMismatch(StorageError):
    """Append offset did not match the object's length; carries the actual."""

    def __init__(self, actual: int):
        super().__init__(f"offset mismatch, object length is {actual}")
        self.actual = actual


class PartLimitExceeded(StorageError):
    pass


class NotFoundError(StorageError):
    pass


class RangeInvalid(StorageError):
    pass


class Unavailable(StorageError):
    """Transient failure; safe to retry."""


class ReplicationDiverged(StorageError):
    """Replica states disagree in a way the idempotent-retry rule cannot fix."""


@dataclass
class CostCounters:
    """Monotone request/byte counters, priced by :func:`estimate_cost`."""

    requests: dict = field(default_factory=lambda: {k: 0 for k in REQUEST_KINDS})
    bytes_uploaded: int = 0
    bytes_downloaded: int = 0
    storage_byte_seconds: float = 0.0

    def count(self, kind: str, uploaded: int = 0, downloaded: int = 0) -> None:
        self.requests[kind] += 1
        self.bytes_uploaded += uploaded
        self.bytes_downloaded += downloaded

    @property
    def total_requests(self) -> int:
        return sum(self.requests.values())

    def merged(self, other: "CostCounters") -> "CostCounters":
        out = CostCounters()
        for k in REQUEST_KINDS:
            out.requests[k] = self.requests[k] + other.requests[k]
        out.bytes_uploaded = self.bytes_uploaded + other.bytes_uploaded
        out.bytes_downloaded = self.bytes_downloaded + other.bytes_downloaded
        out.storage_byte_seconds = self.storage_byte_seconds + other.storage_byte_seconds
        return out


@dataclass(frozen=True)
class Pricing:
    """Pay-as-you-go rates; defaults match the low-latency storage class."""

    per_request_dollars_per_million: float = 1.13
    per_gb_upload_dollars: float = 0.0032
    per_gb_month_storage_dollars: float = 0.16
    include_storage: bool = False


def estimate_cost(counters: CostCounters, pricing: Pricing = Pricing()) -> float:
    """Dollars for the requests issued and bytes uploaded (decimal GB)."""
    cost = counters.total_requests * pricing.per_request_dollars_per_million / 1e6
    cost += counters.bytes_uploaded / 1e9 * pricing.per_gb_upload_dollars
    if pricing.include_storage:
        gb_months = counters.storage_byte_seconds / 1e9 / (30 * 24 * 3600)
        cost += gb_months * pricing.per_gb_month_storage_dollars
    return cost


def check_key(key: str) -> None:
    if not key:
        raise ValueError("object key must be non-empty")


class FaultInjector:
    """Test hook: raise a canned error for the next N matching calls."""

    def __init__(self):
        self._lock = threading.Lock()
        self._rules: list[list] = []  # [op, key_substring, remaining, exc]

    def fail(self, op: str, key_substring: str, times: int, exc: Exception) -> None:
        with self._lock:
            self._rules.append([op, key_substring, times, exc])

    def check(self, op: str, key: str) -> None:
        with self._lock:
            for rule in self._rules:
                rop, sub, remaining, exc = rule
                if remaining > 0 and rop == op and sub in key:
                    rule[2] -= 1
                    raise exc
