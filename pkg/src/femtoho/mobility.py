"""Femtocell entry events and straight-line residence times.

All quantities are SI: metres, seconds, metres per second.  Conversions from
km/h happen where configuration is read (see :mod:`femtoho.config`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KMH",
    "FemtocellGeometry",
    "MobilityParams",
    "MobilityDraw",
    "EntryBatch",
    "sample_entry",
    "sample_entries",
    "residence_time",
    "residence_times",
    "relative_handover_frequency",
]

KMH = 1000.0 / 3600.0  # m/s per km/h

HALF_PI = math.pi / 2


@dataclass(frozen=True)
class FemtocellGeometry:
    radius: float = 10.0

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class MobilityParams:
    """Entry-event distributions.

    Velocity and remaining call life are exponential with the given means; the
    entry angle, measured from the ray towards the access point, is uniform on
    (-pi/2, pi/2).
    """

    mean_velocity: float = 1.0 * KMH
    mean_call_life: float = 90.0

    def __post_init__(self) -> None:
        if not self.mean_velocity > 0:
            raise ValueError(f"mean_velocity must be > 0, got {self.mean_velocity}")
        if not self.mean_call_life > 0:
            raise ValueError(f"mean_call_life must be > 0, got {self.mean_call_life}")


@dataclass(frozen=True)
class MobilityDraw:
    velocity: float
    entry_angle: float
    call_remaining: float


@dataclass(frozen=True)
class EntryBatch:
    """Column-wise block of entry draws (same fields as :class:`MobilityDraw`)."""

    velocity: np.ndarray
    entry_angle: np.ndarray
    call_remaining: np.ndarray

    def __len__(self) -> int:
        return len(self.velocity)

    def __getitem__(self, i: int) -> MobilityDraw:
        return MobilityDraw(
            float(self.velocity[i]), float(self.entry_angle[i]), float(self.call_remaining[i])
        )


def _positive_exponential(rng: np.random.Generator, mean: float, size: int) -> np.ndarray:
    out = rng.exponential(mean, size)
    # an exact 0.0 is possible in principle; velocity must stay strictly positive
    while not out.all():
        zeros = out == 0
        out[zeros] = rng.exponential(mean, int(zeros.sum()))
    return out


def sample_entries(params: MobilityParams, rng: np.random.Generator, n: int) -> EntryBatch:
    """Draw ``n`` entry events.  Velocities, then angles, then call lives."""
    v = _positive_exponential(rng, params.mean_velocity, n)
    theta = rng.uniform(-HALF_PI, HALF_PI, n)
    call = rng.exponential(params.mean_call_life, n)
    return EntryBatch(v, theta, call)


def sample_entry(params: MobilityParams, rng: np.random.Generator) -> MobilityDraw:
    return sample_entries(params, rng, 1)[0]


def residence_time(geom: FemtocellGeometry, draw: MobilityDraw) -> float:
    """Time to cross the disc along a straight chord: ``2 r cos(theta) / v``."""
    if not draw.velocity > 0:
        raise ValueError(f"velocity must be > 0, got {draw.velocity}")
    if abs(draw.entry_angle) >= HALF_PI:
        return 0.0
    return max(0.0, 2.0 * geom.radius * math.cos(draw.entry_angle) / draw.velocity)


def residence_times(geom: FemtocellGeometry, batch: EntryBatch) -> np.ndarray:
    if not (batch.velocity > 0).all():
        raise ValueError("velocities must be > 0")
    t = 2.0 * geom.radius * np.cos(batch.entry_angle) / batch.velocity
    t[np.abs(batch.entry_angle) >= HALF_PI] = 0.0
    return np.maximum(t, 0.0)


def relative_handover_frequency(radius: float, velocity: float, angle: float) -> float:
    """Unitless trend indicator ``v sin(theta) / r`` (no proportionality constant)."""
    if not radius > 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    return velocity * math.sin(angle) / radius
