"""Scenario files: ``key = value`` lines grouped in ``[sections]``.

Values may carry a unit suffix (``velocity_threshold = 10 km/h``,
``service_time = 120 s``); everything is converted to SI on the way in.
Omitted CAC fields take the default scenario values.  Example::

    [run]
    command = sweep-k
    seed = 7

    [queuing]
    N = 10
    lambda_nf = 0.1
    lambda_hm = 0.075 /s
    service_time = 120 s

    [cac]
    t_values = 0, 10 s, 20 s
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .admission import CacThresholds
from .mobility import KMH, FemtocellGeometry, MobilityParams
from .queuing import GuardChannelParams, OptimizationCriterion
from .sim import DEFAULT_SEED, ScenarioConfig
from .signaling import FlowKind, Topology

__all__ = [
    "COMMANDS",
    "ConfigError",
    "QueuingSection",
    "RunConfig",
    "parse_config",
    "render_config",
    "validate",
]

COMMANDS = ("blocking", "sweep-k", "optimize-k", "cac-sim", "sweep-t", "des-validate", "flow")
FORMATS = ("csv", "summary")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


_UNITS: dict[str, dict[str, float]] = {
    "time": {"s": 1.0, "sec": 1.0, "ms": 1e-3, "min": 60.0, "h": 3600.0},
    "rate": {"1/s": 1.0, "/s": 1.0, "1/min": 1 / 60.0, "/min": 1 / 60.0},
    "speed": {"m/s": 1.0, "km/h": KMH, "km/hr": KMH},
    "length": {"m": 1.0, "km": 1000.0},
    "db": {"dB": 1.0},
    "dbm": {"dBm": 1.0},
    "number": {},
}
_CANONICAL_UNIT = {"time": "s", "rate": "1/s", "speed": "m/s", "length": "m", "db": "dB", "dbm": "dBm"}


def _quantity(dim: str) -> Callable[[str], float]:
    def parse(text: str) -> float:
        m = re.fullmatch(r"([-+0-9.eE]+|inf)\s*(\S*)", text.strip())
        if not m:
            raise ValueError(f"cannot read {text!r} as a number")
        value = float(m.group(1))
        unit = m.group(2)
        if unit:
            scale = _UNITS[dim].get(unit)
            if scale is None:
                allowed = ", ".join(_UNITS[dim]) or "none"
                raise ValueError(f"unit {unit!r} not allowed here (allowed: {allowed})")
            value *= scale
        return value

    return parse


def _integer(text: str) -> int:
    return int(text.strip())


def _text(text: str) -> str:
    return text.strip()


def _time_list(text: str) -> tuple[float, ...]:
    one = _quantity("time")
    return tuple(one(part) for part in text.split(",") if part.strip())


# section -> key -> (field name, reader); aliases map onto the same field
_KEYS: dict[str, dict[str, tuple[str, Callable[[str], Any]]]] = {
    "run": {
        "command": ("command", _text),
        "seed": ("seed", _integer),
        "output": ("output", _text),
        "format": ("format", _text),
    },
    "queuing": {
        "channels": ("num_channels", _integer),
        "N": ("num_channels", _integer),
        "guard_threshold": ("guard_threshold", _integer),
        "K": ("guard_threshold", _integer),
        "new_call_rate": ("new_call_rate", _quantity("rate")),
        "lambda_nf": ("new_call_rate", _quantity("rate")),
        "handover_rate": ("handover_rate", _quantity("rate")),
        "lambda_hm": ("handover_rate", _quantity("rate")),
        "service_rate": ("service_rate", _quantity("rate")),
        "mu": ("service_rate", _quantity("rate")),
        "service_time": ("service_time", _quantity("time")),
        "horizon": ("horizon", _quantity("time")),
        "criterion": ("criterion", _text),
        "pd_target": ("pd_target", _quantity("number")),
        "ratio_threshold": ("ratio_threshold", _quantity("number")),
    },
    "cac": {
        "radius": ("radius", _quantity("length")),
        "mean_velocity": ("mean_velocity", _quantity("speed")),
        "mean_call_life": ("mean_call_life", _quantity("time")),
        "num_faps": ("num_faps", _integer),
        "trials": ("trials", _integer),
        "velocity_threshold": ("velocity_threshold", _quantity("speed")),
        "threshold_time": ("min_dwell", _quantity("time")),
        "T": ("min_dwell", _quantity("time")),
        "t_values": ("t_values", _time_list),
        "cir_threshold": ("cir_threshold", _quantity("db")),
        "rssi_threshold": ("rssi_threshold", _quantity("dbm")),
        "return_window": ("unnecessary_return_window", _quantity("time")),
        "termination_window": ("unnecessary_termination_window", _quantity("time")),
    },
    "flow": {
        "kind": ("kind", _text),
        "topology": ("topology", _text),
        "drop_step": ("drop_step", _integer),
    },
}


@dataclass(frozen=True)
class QueuingSection:
    """Guard-channel inputs; ``guard_threshold`` is optional for the K sweeps."""

    num_channels: int
    new_call_rate: float
    handover_rate: float
    service_rate: float
    guard_threshold: int | None = None
    horizon: float = 1.2e6
    criterion: OptimizationCriterion = field(default_factory=OptimizationCriterion)

    def params(self, k: int | None = None) -> GuardChannelParams:
        k = self.guard_threshold if k is None else k
        if k is None:
            k = self.num_channels
        return GuardChannelParams(
            self.num_channels, k, self.new_call_rate, self.handover_rate, self.service_rate
        )


@dataclass(frozen=True)
class RunConfig:
    command: str | None = None
    seed: int = DEFAULT_SEED
    output: str | None = None
    format: str = "csv"
    queuing: QueuingSection | None = None
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    t_values: tuple[float, ...] = (0.0, 10.0, 20.0)
    flow_kind: str | None = None
    topology: str | None = None
    drop_step: int | None = None


def _read(text: str) -> dict[str, dict[str, tuple[Any, int]]]:
    sections: dict[str, dict[str, tuple[Any, int]]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[\s*([A-Za-z_-]+)\s*\]", line)
        if m:
            current = m.group(1)
            if current not in _KEYS:
                raise ConfigError(f"unknown section [{current}]", lineno)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", lineno)
            sections[current] = {"__line__": (None, lineno)}
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if current is None:
            raise ConfigError("key outside of any [section]", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        spec = _KEYS[current].get(key)
        if spec is None:
            raise ConfigError(f"unknown key {key!r} in [{current}]", lineno)
        name, reader = spec
        if name in sections[current]:
            raise ConfigError(f"{key!r} sets {name} twice in [{current}]", lineno)
        try:
            sections[current][name] = (reader(value), lineno)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", lineno) from None
    return sections


def _get(section: dict, name: str, default: Any = None) -> Any:
    return section[name][0] if name in section else default


def _line(section: dict, name: str) -> int | None:
    if name in section:
        return section[name][1]
    return section.get("__line__", (None, None))[1]


def _build_queuing(q: dict) -> QueuingSection:
    header = _line(q, "__line__")
    for name in ("num_channels", "new_call_rate", "handover_rate"):
        if name not in q:
            raise ConfigError(f"[queuing] is missing required field {name}", header)
    if "service_rate" in q and "service_time" in q:
        raise ConfigError("give service_rate or service_time, not both", _line(q, "service_time"))
    if "service_time" in q:
        st = _get(q, "service_time")
        if not st > 0:
            raise ConfigError(f"service_time must be > 0, got {st}", _line(q, "service_time"))
        mu = 1.0 / st
    elif "service_rate" in q:
        mu = _get(q, "service_rate")
        if not mu > 0:
            raise ConfigError(f"service_rate must be > 0, got {mu}", _line(q, "service_rate"))
    else:
        raise ConfigError("[queuing] is missing required field service_rate (or service_time)", header)

    n = _get(q, "num_channels")
    if n < 1:
        raise ConfigError(f"N must be >= 1, got {n}", _line(q, "num_channels"))
    for name in ("new_call_rate", "handover_rate"):
        if _get(q, name) < 0:
            raise ConfigError(f"{name} must be >= 0, got {_get(q, name)}", _line(q, name))
    k = _get(q, "guard_threshold")
    if k is not None and not 0 <= k <= n:
        raise ConfigError(f"K = {k} must lie in [0, N = {n}]", _line(q, "guard_threshold"))
    horizon = _get(q, "horizon", QueuingSection.horizon)
    if not horizon > 0:
        raise ConfigError(f"horizon must be > 0, got {horizon}", _line(q, "horizon"))
    defaults = OptimizationCriterion()
    try:
        criterion = OptimizationCriterion(
            kind=_get(q, "criterion", defaults.kind),
            pd_target=_get(q, "pd_target", defaults.pd_target),
            ratio_threshold=_get(q, "ratio_threshold", defaults.ratio_threshold),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), _line(q, "criterion")) from None
    return QueuingSection(n, _get(q, "new_call_rate"), _get(q, "handover_rate"), mu, k, horizon, criterion)


def _build_scenario(c: dict, seed: int) -> tuple[ScenarioConfig, tuple[float, ...] | None]:
    def positive(name: str, default: float) -> float:
        v = _get(c, name, default)
        if not v > 0:
            raise ConfigError(f"{name} must be > 0, got {v}", _line(c, name))
        return v

    base = ScenarioConfig()
    geometry = FemtocellGeometry(positive("radius", base.geometry.radius))
    mobility = MobilityParams(
        positive("mean_velocity", base.mobility.mean_velocity),
        positive("mean_call_life", base.mobility.mean_call_life),
    )
    min_dwell = _get(c, "min_dwell", base.thresholds.min_dwell)
    if min_dwell < 0:
        raise ConfigError(f"threshold time must be >= 0, got {min_dwell}", _line(c, "min_dwell"))
    thresholds = CacThresholds(
        min_dwell=min_dwell,
        velocity_threshold=positive("velocity_threshold", base.thresholds.velocity_threshold),
        cir_threshold=_get(c, "cir_threshold"),
        rssi_threshold=_get(c, "rssi_threshold"),
    )
    for name in ("num_faps", "trials"):
        if _get(c, name, 1) < 1:
            raise ConfigError(f"{name} must be >= 1, got {_get(c, name)}", _line(c, name))
    t_values = _get(c, "t_values")
    if t_values is not None:
        if not t_values or any(t < 0 for t in t_values):
            raise ConfigError("t_values must be a non-empty list of times >= 0", _line(c, "t_values"))
    scenario = ScenarioConfig(
        geometry=geometry,
        mobility=mobility,
        thresholds=thresholds,
        num_faps=_get(c, "num_faps", base.num_faps),
        trials=_get(c, "trials", base.trials),
        seed=seed,
        unnecessary_return_window=positive("unnecessary_return_window", base.unnecessary_return_window),
        unnecessary_termination_window=positive(
            "unnecessary_termination_window", base.unnecessary_termination_window
        ),
    )
    return scenario, t_values


def parse_config(text: str, command: str | None = None, check_command: bool = True) -> RunConfig:
    """Parse and validate a scenario file.

    ``command`` overrides ``[run] command``.  When a command is known (and
    ``check_command`` is set) the config is also checked for that command's
    required fields.
    """
    sections = _read(text)
    run = sections.get("run", {})
    cmd = command or _get(run, "command")
    if cmd is not None and cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}", _line(run, "command"))
    fmt = _get(run, "format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {', '.join(FORMATS)}", _line(run, "format"))
    seed = _get(run, "seed", DEFAULT_SEED)
    if seed < 0:
        raise ConfigError(f"seed must be >= 0, got {seed}", _line(run, "seed"))

    queuing = _build_queuing(sections["queuing"]) if "queuing" in sections else None
    scenario, t_values = _build_scenario(sections.get("cac", {}), seed)

    flow = sections.get("flow", {})
    kind = _get(flow, "kind")
    if kind is not None and kind not in FlowKind.__members__:
        raise ConfigError(f"unknown flow kind {kind!r}", _line(flow, "kind"))
    topology = _get(flow, "topology")
    if topology is not None and topology not in {t.value for t in Topology}:
        raise ConfigError(f"topology must be small or medium, got {topology!r}", _line(flow, "topology"))

    config = RunConfig(
        command=cmd,
        seed=seed,
        output=_get(run, "output"),
        format=fmt,
        queuing=queuing,
        scenario=scenario,
        t_values=t_values if t_values is not None else RunConfig.t_values,
        flow_kind=kind,
        topology=topology,
        drop_step=_get(flow, "drop_step"),
    )
    if cmd is not None and check_command:
        validate(config)
    return config


def validate(config: RunConfig) -> RunConfig:
    """Check that ``config`` carries what its command needs."""
    cmd = config.command
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}")
    if cmd in ("blocking", "sweep-k", "optimize-k", "des-validate"):
        if config.queuing is None:
            raise ConfigError(f"{cmd} needs a [queuing] section")
        if cmd in ("blocking", "des-validate") and config.queuing.guard_threshold is None:
            raise ConfigError(f"{cmd} needs guard_threshold (K) in [queuing]")
    if cmd == "flow":
        if config.flow_kind is None:
            raise ConfigError("flow needs a flow kind ([flow] kind or on the command line)")
        if config.flow_kind not in FlowKind.__members__:
            raise ConfigError(f"unknown flow kind {config.flow_kind!r}")
    return config


def _fmt(value: float, dim: str | None = None) -> str:
    text = repr(float(value))
    unit = _CANONICAL_UNIT.get(dim or "")
    return f"{text} {unit}" if unit else text


def render_config(config: RunConfig) -> str:
    """Inverse of :func:`parse_config` (canonical keys, SI units)."""
    out = ["[run]"]
    if config.command is not None:
        out.append(f"command = {config.command}")
    out.append(f"seed = {config.seed}")
    if config.output is not None:
        out.append(f"output = {config.output}")
    out.append(f"format = {config.format}")

    q = config.queuing
    if q is not None:
        out += [
            "",
            "[queuing]",
            f"channels = {q.num_channels}",
            f"new_call_rate = {_fmt(q.new_call_rate, 'rate')}",
            f"handover_rate = {_fmt(q.handover_rate, 'rate')}",
            f"service_rate = {_fmt(q.service_rate, 'rate')}",
        ]
        if q.guard_threshold is not None:
            out.append(f"guard_threshold = {q.guard_threshold}")
        out += [
            f"horizon = {_fmt(q.horizon, 'time')}",
            f"criterion = {q.criterion.kind}",
            f"pd_target = {_fmt(q.criterion.pd_target)}",
            f"ratio_threshold = {_fmt(q.criterion.ratio_threshold)}",
        ]

    s = config.scenario
    th = s.thresholds
    out += [
        "",
        "[cac]",
        f"radius = {_fmt(s.geometry.radius, 'length')}",
        f"mean_velocity = {_fmt(s.mobility.mean_velocity, 'speed')}",
        f"mean_call_life = {_fmt(s.mobility.mean_call_life, 'time')}",
        f"num_faps = {s.num_faps}",
        f"trials = {s.trials}",
        f"velocity_threshold = {_fmt(th.velocity_threshold, 'speed')}",
        f"threshold_time = {_fmt(th.min_dwell, 'time')}",
        "t_values = " + ", ".join(_fmt(t, "time") for t in config.t_values),
        f"return_window = {_fmt(s.unnecessary_return_window, 'time')}",
        f"termination_window = {_fmt(s.unnecessary_termination_window, 'time')}",
    ]
    if th.cir_threshold is not None:
        out.append(f"cir_threshold = {_fmt(th.cir_threshold, 'db')}")
    if th.rssi_threshold is not None:
        out.append(f"rssi_threshold = {_fmt(th.rssi_threshold, 'dbm')}")

    flow = [
        (key, value)
        for key, value in (("kind", config.flow_kind), ("topology", config.topology), ("drop_step", config.drop_step))
        if value is not None
    ]
    if flow:
        out += ["", "[flow]"] + [f"{k} = {v}" for k, v in flow]
    return "\n".join(out) + "\n"


def with_overrides(config: RunConfig, **changes: Any) -> RunConfig:
    """Apply command-line overrides; a new seed also reseeds the scenario."""
    changes = {k: v for k, v in changes.items() if v is not None}
    if "trials" in changes:
        trials = changes.pop("trials")
        if trials < 1:
            raise ConfigError(f"trials must be >= 1, got {trials}")
        config = replace(config, scenario=replace(config.scenario, trials=trials))
    if "seed" in changes:
        if changes["seed"] < 0:
            raise ConfigError(f"seed must be >= 0, got {changes['seed']}")
        config = replace(config, scenario=replace(config.scenario, seed=changes["seed"]))
    if "format" in changes and changes["format"] not in FORMATS:
        raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
    return replace(config, **changes)
