"""Admission decisions for macrocell-to-femtocell handovers.

Two independent gates live here.  :func:`decide` is the per-user handover CAC:
the product of a signal-persistence factor, a velocity factor and a CIR
factor.  :func:`guard_admission` is the per-call channel gate of the
guard-channel pool, used by the event simulator.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .mobility import KMH
from .queuing import GuardChannelParams

__all__ = [
    "CallClass",
    "CacThresholds",
    "HandoverContext",
    "Decision",
    "signal_factor",
    "velocity_factor",
    "cir_factor",
    "decide",
    "guard_admission",
]


class CallClass(str, Enum):
    NEW = "new"
    HANDOVER = "handover"


@dataclass(frozen=True)
class CacThresholds:
    """CAC thresholds.

    ``min_dwell`` is the time the femto signal must stay usable; 0 reproduces
    the traditional scheme.  ``cir_threshold=None`` disables the CIR check.
    ``rssi_threshold`` is carried for completeness: signal level enters only
    through the predicted dwell time.
    """

    min_dwell: float = 0.0
    velocity_threshold: float = 10.0 * KMH
    cir_threshold: float | None = None
    rssi_threshold: float | None = None

    def __post_init__(self) -> None:
        if not self.min_dwell >= 0:
            raise ValueError(f"min_dwell must be >= 0, got {self.min_dwell}")
        if not self.velocity_threshold > 0:
            raise ValueError(f"velocity_threshold must be > 0, got {self.velocity_threshold}")


@dataclass(frozen=True)
class HandoverContext:
    predicted_dwell: float
    velocity: float
    cir_femto: float | None = None
    cir_macro: float | None = None

    def __post_init__(self) -> None:
        if not self.predicted_dwell >= 0:
            raise ValueError(f"predicted_dwell must be >= 0, got {self.predicted_dwell}")


@dataclass(frozen=True)
class Decision:
    s_factor: int
    v_factor: int
    cir_factor: int

    @property
    def x(self) -> int:
        return self.s_factor * self.v_factor * self.cir_factor

    @property
    def accepted(self) -> bool:
        return self.x == 1


def signal_factor(ctx: HandoverContext, th: CacThresholds) -> int:
    return int(ctx.predicted_dwell >= th.min_dwell)


def velocity_factor(ctx: HandoverContext, th: CacThresholds) -> int:
    # strict: a user exactly at the threshold is rejected
    return int(ctx.velocity < th.velocity_threshold)


def cir_factor(ctx: HandoverContext, th: CacThresholds) -> int:
    if th.cir_threshold is None or ctx.cir_femto is None:
        return 1
    if ctx.cir_femto >= th.cir_threshold:
        return 1
    return int(ctx.cir_macro is not None and ctx.cir_femto >= ctx.cir_macro)


def decide(ctx: HandoverContext, th: CacThresholds) -> Decision:
    """Accept the handover iff all three factors are 1.

    A rejection keeps the call on the macrocell; it is not a drop.
    """
    return Decision(signal_factor(ctx, th), velocity_factor(ctx, th), cir_factor(ctx, th))


def guard_admission(occupancy: int, params: GuardChannelParams, call_class: CallClass | str) -> bool:
    """True if a call of ``call_class`` arriving at ``occupancy`` gets a channel."""
    if not 0 <= occupancy <= params.num_channels:
        raise ValueError(f"occupancy must lie in [0, {params.num_channels}], got {occupancy}")
    call_class = CallClass(call_class)
    if call_class is CallClass.NEW:
        return occupancy < params.guard_threshold
    return occupancy < params.num_channels
