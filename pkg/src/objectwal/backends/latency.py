"""Piecewise request-size -> latency curves for the simulated backend.

Each operation kind has a flat region up to a byte threshold and a linear
region beyond it.  The express profile is calibrated to measured append
behaviour of low-latency object storage: ~8 ms flat up to 512 KiB and ~22 ms
at 2 MiB, giving a slope of 14 ms per 1.5 MiB; gets are ~5 ms flat and start
growing past 2 MiB at the same slope.  The standard profile models the
classic high-latency storage class (77 ms for a 2 MiB put) and does not
support appends.

Jitter is a multiplicative lognormal draw (median 1.0) plus a rare tail
spike; both are calibration knobs for tail-shape realism, not measured
values.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

KIB = 1024
MIB = 1024 * 1024

EXPRESS_SLOPE_MS_PER_BYTE = 14.0 / (1.5 * MIB)


@dataclass(frozen=True)
class OpCurve:
    flat_ms: float
    flat_threshold_bytes: int
    slope_ms_per_byte: float = 0.0

    def at(self, size_bytes: int) -> float:
        extra = max(0, size_bytes - self.flat_threshold_bytes)
        return self.flat_ms + extra * self.slope_ms_per_byte


@dataclass(frozen=True)
class LatencyModel:
    curves: dict = field(default_factory=dict)  # op kind -> OpCurve
    jitter_sigma: float = 0.25
    spike_probability: float = 0.005
    spike_multiplier: float = 5.0
    jitter_enabled: bool = True

    def deterministic_ms(self, op_kind: str, size_bytes: int) -> float:
        return self.curves[op_kind].at(size_bytes)

    def without_jitter(self) -> "LatencyModel":
        return replace(self, jitter_enabled=False)


def sample_latency(
    model: LatencyModel, op_kind: str, size_bytes: int, rng: random.Random | None = None
) -> float:
    """One latency draw in milliseconds; deterministic when jitter is off."""
    if size_bytes < 0:
        raise ValueError("size must be non-negative")
    ms = model.deterministic_ms(op_kind, size_bytes)
    if model.jitter_enabled and rng is not None:
        ms *= math.exp(rng.gauss(0.0, model.jitter_sigma))
        if rng.random() < model.spike_probability:
            ms *= model.spike_multiplier
    return ms


def express_model(jitter: bool = True) -> LatencyModel:
    append = OpCurve(8.0, 512 * KIB, EXPRESS_SLOPE_MS_PER_BYTE)
    return LatencyModel(
        curves={
            "append": append,
            "put": append,
            "get": OpCurve(5.0, 2 * MIB, EXPRESS_SLOPE_MS_PER_BYTE),
            "delete": OpCurve(5.0, 2 * MIB),
        },
        jitter_enabled=jitter,
    )


def standard_model(jitter: bool = True) -> LatencyModel:
    # Only the 2 MiB put point is measured; the rest is invented calibration.
    put = OpCurve(77.0, 2 * MIB, EXPRESS_SLOPE_MS_PER_BYTE)
    return LatencyModel(
        curves={
            "append": put,
            "put": put,
            "get": OpCurve(25.0, 2 * MIB, EXPRESS_SLOPE_MS_PER_BYTE),
            "delete": OpCurve(25.0, 2 * MIB),
        },
        jitter_enabled=jitter,
    )


@dataclass(frozen=True)
class BackendProfile:
    name: str
    model: LatencyModel
    appends_supported: bool = True


def express_profile(jitter: bool = True) -> BackendProfile:
    return BackendProfile("express", express_model(jitter), appends_supported=True)


def standard_profile(jitter: bool = True) -> BackendProfile:
    return BackendProfile("standard", standard_model(jitter), appends_supported=False)
