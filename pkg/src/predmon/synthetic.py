"""Seeded synthetic corpora: noisy sinusoids with occasional excursions into alert bands."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import ThresholdTable, five_band
from .timeseries import TimeSeriesFrame


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    center: float
    amplitude: float
    period: float
    excursion: float  # peak size of an excursion, in channel units
    table: ThresholdTable


DOMAINS: dict[str, tuple[ChannelSpec, ...]] = {
    "health": (
        ChannelSpec("heart_rate", 80.0, 28.0, 60.0, 45.0,
                    five_band("heart_rate", (40, 51, 100, 111), "bpm")),
        ChannelSpec("respiration", 16.0, 6.0, 90.0, 10.0,
                    five_band("respiration", (9, 12, 21, 25), "breaths/min")),
        ChannelSpec("temperature", 37.0, 1.3, 140.0, 2.2,
                    five_band("temperature", (35.0, 36.0, 38.0, 39.0), "degC")),
    ),
    # second domain for transfer runs: other periods, other thresholds
    "city": (
        ChannelSpec("traffic_volume", 800.0, 450.0, 48.0, 700.0,
                    five_band("traffic_volume", (200, 400, 1200, 1500), "veh/h",
                              ("operator", "escalation"))),
        ChannelSpec("wind_speed", 17.0, 14.0, 75.0, 22.0,
                    five_band("wind_speed", (2, 5, 30, 45), "km/h", ("operator", "escalation"))),
        ChannelSpec("air_temp", 18.0, 13.0, 110.0, 14.0,
                    five_band("air_temp", (0, 5, 30, 35), "degC", ("operator", "escalation"))),
    ),
}


def domain_tables(domain: str) -> dict[str, ThresholdTable]:
    return {c.name: c.table for c in DOMAINS[domain]}


def generate(seed: int = 7, steps: int = 3000, domain: str = "health", noise: float = 0.02,
             excursion_rate: float = 1 / 150) -> TimeSeriesFrame:
    """Build a corpus of ``steps`` unit-spaced rows.

    ``noise`` is the Gaussian sigma as a fraction of each channel's
    sinusoid range (2 * amplitude).
    """
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; choose from {sorted(DOMAINS)}")
    rng = np.random.default_rng(seed)
    t = np.arange(steps)
    cols = []
    for spec in DOMAINS[domain]:
        phase = rng.uniform(0, 2 * np.pi)
        x = spec.center + spec.amplitude * np.sin(2 * np.pi * t / spec.period + phase)
        x += _excursions(rng, steps, spec.excursion, excursion_rate)
        x += rng.normal(0.0, noise * 2 * spec.amplitude, size=steps)
        cols.append(x)
    return TimeSeriesFrame(t, tuple(c.name for c in DOMAINS[domain]), np.column_stack(cols))


def _excursions(rng, steps: int, size: float, rate: float) -> np.ndarray:
    out = np.zeros(steps)
    n = rng.poisson(rate * steps)
    for _ in range(n):
        start = int(rng.integers(0, steps))
        width = int(rng.integers(6, 20))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        bump = size * rng.uniform(0.6, 1.0) * np.sin(np.pi * np.arange(width) / (width - 1))
        stop = min(steps, start + width)
        out[start:stop] += sign * bump[: stop - start]
    return out
