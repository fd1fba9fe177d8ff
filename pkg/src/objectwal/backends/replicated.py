"""Replication fan-out across buckets with all/majority acknowledgment.

Writes are dispatched to every replica concurrently; the call returns as
soon as the acknowledgment policy is satisfied and stragglers finish in the
background.  Divergence between replicas is reconciled by the idempotent
retry rule (an offset mismatch whose actual length equals expected+payload
was already applied); anything else halts with an error.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import (
    CostCounters,
    NotFoundError,
    OffsetMismatch,
    ReplicationDiverged,
    StorageError,
    Unavailable,
)


@dataclass(frozen=True)
class ReplicationPolicy:
    ack: str = "all"  # "all" or "majority"

    def required_acks(self, replica_count: int) -> int:
        if self.ack == "all":
            return replica_count
        if self.ack == "majority":
            return replica_count // 2 + 1
        raise ValueError(f"unknown ack policy {self.ack!r}")


@dataclass
class AckReport:
    new_length: int
    ack_ms: float  # wall time until the ack policy was satisfied
    # simulated durability time: k-th smallest replica completion instant on
    # the simulation clock (None when replicas expose no simulated latency)
    ack_sim_ms: float | None = None
    replica_ms: list = field(default_factory=list)  # (bucket, wall_ms, ok)


def retry_storage_op(fn, retries: int = 3, retry_base_ms: float = 10.0):
    """Run ``fn`` with bounded retries and doubling backoff on Unavailable."""
    delay = retry_base_ms / 1000.0
    for attempt in range(retries + 1):
        try:
            return fn()
        except Unavailable:
            if attempt == retries:
                raise
            time.sleep(delay)
            delay *= 2


class ReplicatedStore:
    """Presents the backend interface over a set of replica backends."""

    def __init__(
        self,
        replicas: list,
        policy: ReplicationPolicy = ReplicationPolicy("all"),
        retries: int = 3,
        retry_base_ms: float = 10.0,
    ):
        if not replicas:
            raise ValueError("replica list must be non-empty")
        self.replicas = list(replicas)
        self.policy = policy
        self.retries = retries
        self.retry_base_ms = retry_base_ms
        self._pool = ThreadPoolExecutor(max_workers=max(4, 2 * len(replicas)))
        self._closed = threading.Event()
        # spawn replica-count threads up front so first appends dispatch fast
        barrier = threading.Barrier(len(replicas) + 1)
        for _ in range(len(replicas)):
            self._pool.submit(barrier.wait)
        barrier.wait()

    # -- write path ---------------------------------------------------------

    def _replica_append(self, replica, key: str, expected_offset: int, payload):
        """Apply the append on one replica; returns (new_length, deadline).

        ``deadline`` is the simulated completion instant (monotonic seconds)
        for backends that expose their latency model, else None; the caller
        then waits it out so concurrency behaves like real requests.
        """
        begin = getattr(replica, "append_begin", None)

        def attempt():
            try:
                if begin is not None:
                    new_length, ms = begin(key, expected_offset, payload)
                    return new_length, time.monotonic() + ms / 1000.0
                return replica.append(key, expected_offset, payload), None
            except OffsetMismatch as exc:
                if exc.actual == expected_offset + len(payload):
                    return exc.actual, None  # retry of an already-applied append
                raise ReplicationDiverged(
                    f"replica {getattr(replica, 'bucket', '?')} at length {exc.actual}, "
                    f"expected {expected_offset}"
                ) from exc

        return retry_storage_op(attempt, self.retries, self.retry_base_ms)

    class _Tally:
        """Counts replica completions; wakes the caller at ack or failure."""

        def __init__(self, replica_count: int, need: int):
            self.need = need
            self.max_failures = replica_count - need
            self.ok = 0
            self.failed = 0
            self.done = threading.Semaphore(0)
            self.lock = threading.Lock()

        def record(self, ok: bool) -> None:
            with self.lock:
                if ok:
                    self.ok += 1
                else:
                    self.failed += 1
            self.done.release()

        def wait_for_ack(self, op_name: str, policy: str) -> None:
            # one wakeup per completion: decide after each
            for _ in range(self.need + self.max_failures + 1):
                self.done.acquire()
                with self.lock:
                    if self.ok >= self.need:
                        return
                    if self.failed > self.max_failures:
                        raise Unavailable(
                            f"{op_name} unsatisfiable under {policy}: "
                            f"{self.failed} replicas failed"
                        )
            raise Unavailable(f"{op_name} finished without satisfying {policy}")

    def append_with_report(self, key: str, expected_offset: int, payload) -> AckReport:
        start = time.monotonic()
        report = AckReport(new_length=expected_offset + len(payload), ack_ms=0.0)
        report_lock = threading.Lock()
        tally = self._Tally(len(self.replicas), self.policy.required_acks(len(self.replicas)))

        def run(replica):
            t0 = time.monotonic()
            try:
                self._replica_append(replica, key, expected_offset, payload)
                ok = True
            except StorageError:
                ok = False
            with report_lock:
                report.replica_ms.append(
                    (getattr(replica, "bucket", "?"), (time.monotonic() - t0) * 1000.0, ok)
                )
            tally.record(ok)

        for replica in self.replicas:
            self._pool.submit(run, replica)
        tally.wait_for_ack("append", self.policy.ack)
        report.ack_ms = (time.monotonic() - start) * 1000.0
        return report

    def append(self, key: str, expected_offset: int, payload) -> int:
        return self.append_with_report(key, expected_offset, payload).new_length

    def _fan_out(self, op_name: str, fn) -> None:
        tally = self._Tally(len(self.replicas), self.policy.required_acks(len(self.replicas)))

        def run(replica):
            try:
                retry_storage_op(lambda: fn(replica), self.retries, self.retry_base_ms)
                tally.record(True)
            except StorageError:
                tally.record(False)

        for replica in self.replicas:
            self._pool.submit(run, replica)
        tally.wait_for_ack(op_name, self.policy.ack)

    def put(self, key: str, data) -> None:
        self._fan_out("put", lambda r: r.put(key, data))

    def delete(self, key: str) -> None:
        self._fan_out("delete", lambda r: r.delete(key))

    # -- read path ----------------------------------------------------------

    def get(self, key: str, byte_range: tuple[int, int] | None = None) -> bytes:
        last_exc: StorageError | None = None
        for replica in self.replicas:
            try:
                return replica.get(key, byte_range)
            except (Unavailable, NotFoundError) as exc:
                last_exc = exc
        raise last_exc if last_exc is not None else NotFoundError(key)

    @property
    def counters(self) -> CostCounters:
        merged = CostCounters()
        for replica in self.replicas:
            merged = merged.merged(replica.counters)
        return merged

    def close(self) -> None:
        if not self._closed.is_set():
            self._closed.set()
            self._pool.shutdown(wait=True)
