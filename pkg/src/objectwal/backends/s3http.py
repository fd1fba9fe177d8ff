"""HTTP client for an S3-compatible object store with write-offset appends.

Appends are issued as PUT requests carrying an ``x-amz-write-offset-bytes``
header, matching the low-latency object-storage API shape; responses carry
the resulting object size in ``x-amz-object-size``.  Request signing is out
of scope: deployments front this with a gateway or an instance role.  The
test suite runs a loopback mock server implementing the same contract.
"""

from __future__ import annotations

import requests

from . import (
    CostCounters,
    FaultInjector,
    NotFoundError,
    OffsetMismatch,
    PartLimitExceeded,
    RangeInvalid,
    Unavailable,
    check_key,
)

OFFSET_HEADER = "x-amz-write-offset-bytes"
SIZE_HEADER = "x-amz-object-size"


class S3HttpStore:
    def __init__(
        self,
        endpoint: str,
        bucket: str,
        session: requests.Session | None = None,
        timeout: float = 30.0,
        extra_headers: dict | None = None,
    ):
        check_key(bucket)
        self.endpoint = endpoint.rstrip("/")
        self.bucket = bucket
        self.timeout = timeout
        self.extra_headers = dict(extra_headers or {})
        self._session = session or requests.Session()
        self.counters = CostCounters()
        self.faults = FaultInjector()

    def _url(self, key: str) -> str:
        check_key(key)
        return f"{self.endpoint}/{self.bucket}/{key}"

    def _request(self, method: str, key: str, **kwargs) -> requests.Response:
        headers = kwargs.pop("headers", {})
        headers.update(self.extra_headers)
        try:
            return self._session.request(
                method, self._url(key), headers=headers, timeout=self.timeout, **kwargs
            )
        except requests.RequestException as exc:
            raise Unavailable(str(exc)) from exc

    @staticmethod
    def _raise_for(resp: requests.Response, key: str) -> None:
        if resp.status_code == 404:
            raise NotFoundError(key)
        if resp.status_code == 409:
            raise OffsetMismatch(int(resp.headers.get(SIZE_HEADER, -1)))
        if resp.status_code == 400 and "TooManyParts" in resp.text:
            raise PartLimitExceeded(key)
        if resp.status_code == 416:
            raise RangeInvalid(key)
        if resp.status_code >= 500:
            raise Unavailable(f"{resp.status_code} from store")
        if resp.status_code >= 400:
            raise Unavailable(f"unexpected status {resp.status_code}: {resp.text[:200]}")

    def append(self, key: str, expected_offset: int, payload) -> int:
        if not payload:
            raise ValueError("append payload must be non-empty")
        self.faults.check("append", key)
        resp = self._request(
            "PUT", key, data=bytes(payload), headers={OFFSET_HEADER: str(expected_offset)}
        )
        self._raise_for(resp, key)
        self.counters.count("append", uploaded=len(payload))
        return int(resp.headers[SIZE_HEADER])

    def put(self, key: str, data) -> None:
        self.faults.check("put", key)
        resp = self._request("PUT", key, data=bytes(data))
        self._raise_for(resp, key)
        self.counters.count("put", uploaded=len(data))

    def get(self, key: str, byte_range: tuple[int, int] | None = None) -> bytes:
        self.faults.check("get", key)
        headers = {}
        if byte_range is not None:
            start, end = byte_range
            if start < 0 or end < start:
                raise RangeInvalid(str(byte_range))
            headers["Range"] = f"bytes={start}-{end - 1}"  # HTTP ranges are inclusive
        resp = self._request("GET", key, headers=headers)
        self._raise_for(resp, key)
        self.counters.count("get", downloaded=len(resp.content))
        return resp.content

    def delete(self, key: str) -> None:
        self.faults.check("delete", key)
        resp = self._request("DELETE", key)
        if resp.status_code not in (200, 204, 404):
            self._raise_for(resp, key)
        self.counters.count("delete")
