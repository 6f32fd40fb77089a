"""Monte Carlo harness for the handover CAC and an event-driven loss simulator.

The CAC experiment treats every femto access point as an independent source
of macrocell users entering its coverage disc.  Each FAP gets its own random
substream spawned from the master seed, so results do not depend on the order
in which FAPs are processed and the same seed reused across threshold times
gives common random numbers (accepted sets are nested in T).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .admission import CacThresholds, CallClass, Decision, HandoverContext, decide, guard_admission
from .mobility import (
    EntryBatch,
    FemtocellGeometry,
    MobilityParams,
    residence_time,
    residence_times,
    sample_entries,
)
from .queuing import GuardChannelParams, blocking_report

__all__ = [
    "DEFAULT_SEED",
    "Outcome",
    "ScenarioConfig",
    "TrialOutcome",
    "AggregateStats",
    "DesResult",
    "classify_outcome",
    "classify_outcomes",
    "trial_outcomes",
    "run_unnecessary_handover_experiment",
    "sweep_threshold_time",
    "run_blocking_des",
    "compare_des",
]

DEFAULT_SEED = 20090902

Z95 = 1.959963984540054


class Outcome(str, Enum):
    NOT_PERFORMED = "not_performed"
    NECESSARY = "necessary"
    UNNECESSARY_RETURN = "unnecessary_return"
    UNNECESSARY_TERMINATION = "unnecessary_termination"


# integer codes used by the vectorised path, in Outcome declaration order
_CODES = list(Outcome)


@dataclass(frozen=True)
class ScenarioConfig:
    """CAC experiment setup; defaults are the reference scenario (10 m cells, 1 km/h, 90 s calls).

    ``trials`` counts entry events per FAP, so a run has
    ``trials * num_faps`` entries in total.
    """

    geometry: FemtocellGeometry = field(default_factory=FemtocellGeometry)
    mobility: MobilityParams = field(default_factory=MobilityParams)
    thresholds: CacThresholds = field(default_factory=CacThresholds)
    num_faps: int = 150
    trials: int = 1000
    seed: int = DEFAULT_SEED
    unnecessary_return_window: float = 40.0
    unnecessary_termination_window: float = 10.0

    def __post_init__(self) -> None:
        if self.num_faps < 1:
            raise ValueError(f"num_faps must be >= 1, got {self.num_faps}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.unnecessary_return_window > 0:
            raise ValueError("unnecessary_return_window must be > 0")
        if not self.unnecessary_termination_window > 0:
            raise ValueError("unnecessary_termination_window must be > 0")

    def with_threshold_time(self, t: float) -> "ScenarioConfig":
        return replace(self, thresholds=replace(self.thresholds, min_dwell=t))


@dataclass(frozen=True)
class TrialOutcome:
    classification: Outcome
    residence: float
    call_remaining: float
    decision: Decision


@dataclass(frozen=True)
class AggregateStats:
    entries: int
    handovers: int
    necessary: int
    unnecessary_return: int
    unnecessary_termination: int
    return_handovers: int

    def __post_init__(self) -> None:
        if self.handovers > self.entries:
            raise ValueError("more handovers than entries")
        if self.necessary + self.unnecessary != self.handovers:
            raise ValueError("outcome counts do not add up to handovers")

    @property
    def unnecessary(self) -> int:
        return self.unnecessary_return + self.unnecessary_termination

    @property
    def rejected(self) -> int:
        return self.entries - self.handovers

    @property
    def round_trip_handovers(self) -> int:
        """Handovers in both directions: each entry plus each return to the macrocell."""
        return self.handovers + self.return_handovers

    @property
    def unnecessary_fraction(self) -> float | None:
        if self.handovers == 0:
            return None
        return self.unnecessary / self.handovers

    @property
    def ci95_halfwidth(self) -> float | None:
        p = self.unnecessary_fraction
        if p is None:
            return None
        return Z95 * math.sqrt(p * (1.0 - p) / self.handovers)

    def __add__(self, other: "AggregateStats") -> "AggregateStats":
        return AggregateStats(
            entries=self.entries + other.entries,
            handovers=self.handovers + other.handovers,
            necessary=self.necessary + other.necessary,
            unnecessary_return=self.unnecessary_return + other.unnecessary_return,
            unnecessary_termination=self.unnecessary_termination + other.unnecessary_termination,
            return_handovers=self.return_handovers + other.return_handovers,
        )

    @classmethod
    def empty(cls) -> "AggregateStats":
        return cls(0, 0, 0, 0, 0, 0)


def classify_outcome(
    residence: float,
    call_remaining: float,
    return_window: float = 40.0,
    termination_window: float = 10.0,
) -> Outcome:
    """Classify a performed macro-to-femto handover.

    The clock starts at handover execution.  An early hang-up inside the disc
    is checked first; otherwise a live call that leaves the disc before the
    return window closes is an unnecessary return.
    """
    if residence < 0 or call_remaining < 0:
        raise ValueError("residence and call_remaining must be >= 0")
    if call_remaining < residence and call_remaining < termination_window:
        return Outcome.UNNECESSARY_TERMINATION
    if residence <= call_remaining and residence < return_window:
        return Outcome.UNNECESSARY_RETURN
    return Outcome.NECESSARY


def classify_outcomes(
    residence: np.ndarray,
    call_remaining: np.ndarray,
    return_window: float = 40.0,
    termination_window: float = 10.0,
) -> np.ndarray:
    """Array form of :func:`classify_outcome`; returns indices into ``list(Outcome)``."""
    codes = np.full(residence.shape, _CODES.index(Outcome.NECESSARY), dtype=np.int8)
    ret = (residence <= call_remaining) & (residence < return_window)
    term = (call_remaining < residence) & (call_remaining < termination_window)
    codes[ret] = _CODES.index(Outcome.UNNECESSARY_RETURN)
    codes[term] = _CODES.index(Outcome.UNNECESSARY_TERMINATION)
    return codes


def _fap_streams(config: ScenarioConfig) -> list[np.random.Generator]:
    children = np.random.SeedSequence(config.seed).spawn(config.num_faps)
    return [np.random.default_rng(s) for s in children]


def _fap_batches(config: ScenarioConfig) -> Iterable[EntryBatch]:
    for rng in _fap_streams(config):
        yield sample_entries(config.mobility, rng, config.trials)


def trial_outcomes(config: ScenarioConfig) -> list[TrialOutcome]:
    """Per-entry outcomes, evaluated one entry at a time through :func:`decide`.

    Slow; intended for small runs and for checking the vectorised aggregate.
    """
    out = []
    for batch in _fap_batches(config):
        for i in range(len(batch)):
            draw = batch[i]
            dwell = residence_time(config.geometry, draw)
            decision = decide(HandoverContext(dwell, draw.velocity), config.thresholds)
            if decision.accepted:
                cls = classify_outcome(
                    dwell,
                    draw.call_remaining,
                    config.unnecessary_return_window,
                    config.unnecessary_termination_window,
                )
            else:
                cls = Outcome.NOT_PERFORMED
            out.append(TrialOutcome(cls, dwell, draw.call_remaining, decision))
    return out


def _aggregate_batch(
    config: ScenarioConfig, batch: EntryBatch, dwell: np.ndarray, min_dwell: float
) -> AggregateStats:
    th = config.thresholds
    # the simulated contexts carry no CIR, so the CIR factor is always 1
    accepted = (dwell >= min_dwell) & (batch.velocity < th.velocity_threshold)
    res = dwell[accepted]
    call = batch.call_remaining[accepted]
    codes = classify_outcomes(
        res, call, config.unnecessary_return_window, config.unnecessary_termination_window
    )
    counts = np.bincount(codes, minlength=len(_CODES))
    return AggregateStats(
        entries=len(batch),
        handovers=int(accepted.sum()),
        necessary=int(counts[_CODES.index(Outcome.NECESSARY)]),
        unnecessary_return=int(counts[_CODES.index(Outcome.UNNECESSARY_RETURN)]),
        unnecessary_termination=int(counts[_CODES.index(Outcome.UNNECESSARY_TERMINATION)]),
        return_handovers=int((call >= res).sum()),
    )


def sweep_threshold_time(
    config: ScenarioConfig, t_values: Sequence[float]
) -> list[tuple[float, AggregateStats]]:
    """Run the experiment once per threshold time on the same entry draws."""
    for t in t_values:
        if not t >= 0:
            raise ValueError(f"threshold times must be >= 0, got {t}")
    totals = [AggregateStats.empty() for _ in t_values]
    for batch in _fap_batches(config):
        dwell = residence_times(config.geometry, batch)
        for i, t in enumerate(t_values):
            totals[i] = totals[i] + _aggregate_batch(config, batch, dwell, t)
    return list(zip(t_values, totals))


def run_unnecessary_handover_experiment(config: ScenarioConfig) -> AggregateStats:
    [(_, stats)] = sweep_threshold_time(config, [config.thresholds.min_dwell])
    return stats


@dataclass(frozen=True)
class DesResult:
    """Empirical blocking from :func:`run_blocking_des`.

    Standard errors are batch means over equal-length time slices.  A
    probability is ``None`` when its class had no arrivals.
    """

    new_arrivals: int
    handover_arrivals: int
    blocked_new: int
    blocked_handover: int
    new_call_blocking: float | None
    handover_blocking: float | None
    utilization: float
    se_new_call_blocking: float | None
    se_handover_blocking: float | None
    se_utilization: float


def _batch_mean_se(values: np.ndarray) -> float | None:
    values = values[~np.isnan(values)]
    if len(values) < 2:
        return None
    return float(values.std(ddof=1) / math.sqrt(len(values)))


def run_blocking_des(
    params: GuardChannelParams,
    horizon: float,
    seed: int = DEFAULT_SEED,
    batches: int = 20,
    warmup: float | None = None,
) -> DesResult:
    """Event-driven simulation of the guard-channel pool.

    Poisson arrivals of both classes, exponential holding times, and
    :func:`~femtoho.admission.guard_admission` at every arrival.  Statistics
    are collected over ``(warmup, warmup + horizon]``; the default warm-up is
    2% of the horizon.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    if batches < 2:
        raise ValueError("need at least two batches for a standard error")
    warmup = 0.02 * horizon if warmup is None else warmup
    end = warmup + horizon
    width = horizon / batches
    n = params.num_channels

    arrivals = np.zeros((2, batches), dtype=np.int64)
    blocked = np.zeros((2, batches), dtype=np.int64)
    busy_area = np.zeros(batches)

    def integrate(t0: float, t1: float, busy: int) -> None:
        t0 = max(t0, warmup)
        while t0 < t1:
            b = min(int((t0 - warmup) / width), batches - 1)
            edge = min(t1, warmup + (b + 1) * width) if b < batches - 1 else t1
            if edge <= t0:
                # t0 sits on a batch edge that rounding put in the previous batch
                b += 1
                edge = min(t1, warmup + (b + 1) * width) if b < batches - 1 else t1
            busy_area[b] += busy * (edge - t0)
            t0 = edge

    rng = np.random.default_rng(seed)
    total_rate = params.new_call_rate + params.handover_rate
    p_new = params.new_call_rate / total_rate if total_rate > 0 else 0.0
    departures: list[float] = []
    t = 0.0
    chunk = 1 << 14
    while total_rate > 0:
        gaps = rng.exponential(1.0 / total_rate, chunk)
        is_new = rng.random(chunk) < p_new
        holds = rng.exponential(1.0 / params.service_rate, chunk)
        done = False
        for gap, new, hold in zip(gaps.tolist(), is_new.tolist(), holds.tolist()):
            t_next = t + gap
            while departures and departures[0] <= t_next:
                t_dep = heapq.heappop(departures)
                integrate(t, min(t_dep, end), len(departures) + 1)
                t = t_dep
            if t_next > end:
                done = True
                break
            integrate(t, t_next, len(departures))
            t = t_next
            cls = CallClass.NEW if new else CallClass.HANDOVER
            ok = guard_admission(len(departures), params, cls)
            if t > warmup:
                row = 0 if new else 1
                b = min(int((t - warmup) / width), batches - 1)
                arrivals[row, b] += 1
                blocked[row, b] += not ok
            if ok:
                heapq.heappush(departures, t + hold)
        if done:
            break
    if t < end:
        integrate(t, end, len(departures))

    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = blocked / arrivals
    util_batches = busy_area / (width * n)
    tot_arr = arrivals.sum(axis=1)
    tot_blk = blocked.sum(axis=1)
    p = [float(tot_blk[i] / tot_arr[i]) if tot_arr[i] else None for i in range(2)]
    se = [_batch_mean_se(ratios[i]) if tot_arr[i] else None for i in range(2)]
    return DesResult(
        new_arrivals=int(tot_arr[0]),
        handover_arrivals=int(tot_arr[1]),
        blocked_new=int(tot_blk[0]),
        blocked_handover=int(tot_blk[1]),
        new_call_blocking=p[0],
        handover_blocking=p[1],
        utilization=float(busy_area.sum() / (horizon * n)),
        se_new_call_blocking=se[0],
        se_handover_blocking=se[1],
        se_utilization=_batch_mean_se(util_batches) or 0.0,
    )


@dataclass(frozen=True)
class DesComparison:
    metric: str
    closed_form: float
    empirical: float | None
    std_error: float | None
    z: float | None
    passed: bool


def compare_des(params: GuardChannelParams, result: DesResult, sigmas: float = 3.0) -> list[DesComparison]:
    """Closed form vs simulation for P_B, P_D and utilization at ``sigmas`` standard errors.

    A metric whose class had no arrivals is reported but counts as passed.
    A zero standard error (e.g. every new call blocked at K=0) requires an
    exact match up to 1e-12.
    """
    rep = blocking_report(params)
    rows = []
    for name, cf, emp, se in (
        ("P_B", rep.new_call_blocking, result.new_call_blocking, result.se_new_call_blocking),
        ("P_D", rep.handover_blocking, result.handover_blocking, result.se_handover_blocking),
        ("utilization", rep.utilization, result.utilization, result.se_utilization),
    ):
        if emp is None:
            rows.append(DesComparison(name, cf, None, None, None, True))
            continue
        if not se:
            ok = abs(emp - cf) <= 1e-12
            rows.append(DesComparison(name, cf, emp, se, None, ok))
            continue
        z = (emp - cf) / se
        rows.append(DesComparison(name, cf, emp, se, z, abs(z) <= sigmas))
    return rows
