"""Handover call flows between macrocell and femtocell.

Each of the four flows (small/medium deployment, macro-to-femto and
femto-to-macro) is a numbered script of messages and local actions.  Scripts
are enacted by per-entity state machines over an in-memory FIFO bus, and
traces can be checked against the script and against ordering rules that
every flow must respect.

Labels are ``<phase>`` or ``<phase>.<n>`` for steps the call flow groups
under one number range ("steps 12, 13, and 14").
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

__all__ = [
    "Role",
    "StepKind",
    "FlowKind",
    "Topology",
    "TOPOLOGY_ROLES",
    "Step",
    "FlowScript",
    "TraceEntry",
    "TraceRecord",
    "TraceValidation",
    "Violation",
    "MissingRoleError",
    "ProtocolError",
    "build_flow_script",
    "execute_flow",
    "validate_trace",
    "precedence_check",
    "format_trace",
    "parse_trace",
]


class Role(str, Enum):
    MS = "MS"
    NODEB = "NodeB"
    FAP = "FAP"
    RNC = "RNC"
    FIS = "FIS"
    CN = "CN"
    FGW = "FGW"
    NEIGHBOR_DB = "NeighborDB"


class StepKind(str, Enum):
    MESSAGE = "message"
    LOCAL = "local_action"


class FlowKind(str, Enum):
    SMALL_MACRO_TO_FEMTO = "SMALL_MACRO_TO_FEMTO"
    SMALL_FEMTO_TO_MACRO = "SMALL_FEMTO_TO_MACRO"
    MEDIUM_MACRO_TO_FEMTO = "MEDIUM_MACRO_TO_FEMTO"
    MEDIUM_FEMTO_TO_MACRO = "MEDIUM_FEMTO_TO_MACRO"

    @property
    def topology(self) -> "Topology":
        return Topology.SMALL if self.name.startswith("SMALL") else Topology.MEDIUM


class Topology(str, Enum):
    SMALL = "small"
    MEDIUM = "medium"


_COMMON = {Role.MS, Role.NODEB, Role.FAP, Role.RNC, Role.CN}
TOPOLOGY_ROLES: dict[Topology, frozenset[Role]] = {
    Topology.SMALL: frozenset(_COMMON | {Role.FIS}),
    Topology.MEDIUM: frozenset(_COMMON | {Role.FGW, Role.NEIGHBOR_DB}),
}


class MissingRoleError(ValueError):
    pass


class ProtocolError(RuntimeError):
    """An entity was handed an event its state machine did not expect."""


@dataclass(frozen=True)
class Step:
    seq_no: int
    kind: StepKind
    actor: Role
    # message receiver, or the co-actor of a joint local action
    peer: Role | None
    label: str

    @property
    def phase(self) -> str:
        head, _, tail = self.label.rpartition(".")
        return head if head and tail.isdigit() else self.label

    def signature(self) -> tuple:
        return (self.kind, self.actor, self.peer, self.label)


@dataclass(frozen=True)
class FlowScript:
    flow_kind: FlowKind
    topology: Topology
    steps: tuple[Step, ...]
    # steps inferred to close a gap in the documented sequence
    reconstructed: tuple[int, ...] = ()

    def roles(self) -> frozenset[Role]:
        used = set()
        for s in self.steps:
            used.add(s.actor)
            if s.peer is not None:
                used.add(s.peer)
        return frozenset(used)

    def __len__(self) -> int:
        return len(self.steps)


MS, NB, FAP, RNC, FIS, CN, FGW, NDB = (
    Role.MS, Role.NODEB, Role.FAP, Role.RNC, Role.FIS, Role.CN, Role.FGW, Role.NEIGHBOR_DB,
)


def _msg(actor: Role, peer: Role, label: str) -> tuple:
    return (StepKind.MESSAGE, actor, peer, label)


def _local(actor: Role, label: str, with_: Role | None = None) -> tuple:
    return (StepKind.LOCAL, actor, with_, label)


_SCRIPTS: dict[FlowKind, list[tuple]] = {
    FlowKind.SMALL_MACRO_TO_FEMTO: [
        _msg(MS, NB, "measurement-report.1"),
        _msg(NB, RNC, "measurement-report.2"),
        _local(MS, "handover-decision"),
        _msg(NB, RNC, "handover-request"),
        _msg(RNC, FIS, "fis-info-check.1"),
        _msg(FIS, RNC, "fis-info-check.2"),
        _msg(RNC, CN, "handover-request-forward.1"),
        _msg(CN, RNC, "handover-request-forward.2"),
        _msg(RNC, FAP, "handover-request-forward.3"),
        _local(FAP, "cac-rrc"),
        _msg(FAP, RNC, "handover-response"),
        _msg(RNC, FAP, "link-setup.1"),
        _msg(FAP, RNC, "link-setup.2"),
        _msg(RNC, FAP, "link-setup.3"),
        _msg(RNC, FAP, "data-forwarding"),
        _msg(NB, MS, "handover-command"),
        _msg(MS, FAP, "channel-reestablishment"),
        _msg(MS, NB, "detach"),
        _msg(FAP, MS, "synchronization.1"),
        _msg(MS, FAP, "synchronization.2"),
        _msg(MS, FAP, "handover-complete.1"),
        _msg(FAP, RNC, "handover-complete.2"),
        _msg(RNC, NB, "old-link-deletion.1"),
        _local(NB, "old-link-deletion.2"),
        _msg(NB, RNC, "old-link-deletion.3"),
        _msg(RNC, FIS, "fis-update.1"),
        _msg(FIS, RNC, "fis-update.2"),
    ],
    FlowKind.SMALL_FEMTO_TO_MACRO: [
        _msg(MS, FAP, "measurement-report.1"),
        _msg(FAP, RNC, "measurement-report.2"),
        _local(MS, "handover-decision"),
        _msg(FAP, RNC, "handover-request"),
        _msg(RNC, CN, "handover-request-forward.1"),
        _msg(CN, RNC, "handover-request-forward.2"),
        _msg(RNC, NB, "handover-request-forward.3"),
        _local(NB, "cac-rrc", with_=RNC),
        _msg(NB, RNC, "handover-response"),
        _msg(RNC, NB, "link-setup.1"),
        _msg(NB, RNC, "link-setup.2"),
        _msg(RNC, NB, "link-setup.3"),
        _msg(RNC, NB, "data-forwarding"),
        _msg(FAP, MS, "handover-command"),
        _msg(MS, NB, "channel-reestablishment"),
        _msg(MS, FAP, "detach"),
        _msg(NB, MS, "synchronization.1"),
        _msg(MS, NB, "synchronization.2"),
        _msg(MS, NB, "handover-complete.1"),
        _msg(NB, RNC, "handover-complete.2"),
        _msg(RNC, FAP, "old-link-deletion.1"),
        _local(FAP, "old-link-deletion.2"),
        _msg(FAP, RNC, "old-link-deletion.3"),
        _msg(RNC, FIS, "fis-update.1"),
        _msg(FIS, RNC, "fis-update.2"),
    ],
    FlowKind.MEDIUM_MACRO_TO_FEMTO: [
        _msg(MS, NB, "measurement-report.1"),
        _msg(NB, RNC, "measurement-report.2"),
        _local(MS, "handover-decision"),
        _msg(NDB, NB, "neighbor-list"),
        _msg(NB, RNC, "handover-request"),
        _msg(RNC, CN, "handover-request-forward.1"),
        _msg(CN, FGW, "handover-request-forward.2"),
        _msg(FGW, FAP, "handover-request-forward.3"),
        _msg(FAP, FGW, "authorization-check.1"),
        _msg(FGW, FAP, "authorization-check.2"),
        # CAC, RRC and the interference comparison are one admission step
        _local(FAP, "cac-rrc"),
        _msg(FAP, FGW, "handover-response.1"),
        _msg(FGW, CN, "handover-response.2"),
        _msg(CN, RNC, "handover-response.3"),
        _msg(RNC, CN, "link-setup.1"),
        _msg(CN, FGW, "link-setup.2"),
        _msg(FGW, FAP, "link-setup.3"),
        _msg(FAP, FGW, "link-setup.4"),
        _msg(FGW, CN, "link-setup.5"),
        _msg(FGW, FAP, "data-forwarding"),
        _msg(NB, MS, "handover-command"),
        _msg(MS, FAP, "channel-reestablishment"),
        _msg(MS, NB, "detach"),
        _msg(FAP, MS, "synchronization.1"),
        _msg(MS, FAP, "synchronization.2"),
        _msg(MS, FAP, "handover-complete.1"),
        _msg(FAP, FGW, "handover-complete.2"),
        # FGW-RNC signalling transits the CN; shown as one logical hop
        _msg(FGW, RNC, "path-switch-ack"),
        _msg(RNC, NB, "old-link-deletion.1"),
        _local(NB, "old-link-deletion.2"),
        _msg(NB, RNC, "old-link-deletion.3"),
    ],
    FlowKind.MEDIUM_FEMTO_TO_MACRO: [
        _msg(MS, FAP, "measurement-report.1"),
        _msg(FAP, FGW, "measurement-report.2"),
        _local(MS, "handover-decision"),
        _msg(FAP, FGW, "handover-request"),
        _msg(FGW, CN, "handover-request-forward.1"),
        _msg(CN, RNC, "handover-request-forward.2"),
        _msg(RNC, NB, "handover-request-forward.3"),
        _local(NB, "cac-rrc", with_=RNC),
        _msg(NB, RNC, "handover-response"),
        _msg(RNC, NB, "link-setup.1"),
        _msg(NB, RNC, "link-setup.2"),
        _msg(RNC, CN, "link-setup.3"),
        _msg(CN, FGW, "link-setup.4"),
        _msg(FGW, CN, "link-setup.5"),
        _msg(CN, RNC, "link-setup.6"),
        _msg(RNC, NB, "link-setup.7"),
        _msg(RNC, NB, "data-forwarding"),
        _msg(FAP, MS, "handover-command"),
        _msg(MS, NB, "channel-reestablishment"),
        _msg(MS, FAP, "detach"),
        _msg(NB, MS, "synchronization.1"),
        _msg(MS, NB, "synchronization.2"),
        _msg(MS, NB, "handover-complete.1"),
        _msg(NB, RNC, "handover-complete.2"),
        _msg(RNC, CN, "handover-complete.3"),
        _msg(CN, FGW, "old-link-deletion.1"),
        _msg(FGW, FAP, "old-link-deletion.2"),
        _msg(FAP, FGW, "old-link-deletion.3"),
    ],
}

_RECONSTRUCTED = {FlowKind.MEDIUM_MACRO_TO_FEMTO: (26, 27, 28)}


def build_flow_script(flow_kind: FlowKind | str) -> FlowScript:
    try:
        kind = FlowKind(flow_kind)
    except ValueError:
        raise ValueError(f"unknown flow kind {flow_kind!r}") from None
    steps = tuple(
        Step(i, k, actor, peer, label)
        for i, (k, actor, peer, label) in enumerate(_SCRIPTS[kind], start=1)
    )
    return FlowScript(kind, kind.topology, steps, _RECONSTRUCTED.get(kind, ()))


@dataclass(frozen=True)
class TraceEntry:
    clock: int
    step: Step


@dataclass(frozen=True)
class TraceRecord:
    flow_kind: FlowKind
    entries: tuple[TraceEntry, ...]
    diverged_at: int | None = None

    @property
    def outcome(self) -> str:
        return "completed" if self.diverged_at is None else f"diverged({self.diverged_at})"

    @property
    def completed(self) -> bool:
        return self.diverged_at is None

    @property
    def steps(self) -> list[Step]:
        return [e.step for e in self.entries]

    @classmethod
    def from_steps(
        cls, flow_kind: FlowKind, steps: Iterable[Step], diverged_at: int | None = None
    ) -> "TraceRecord":
        entries = tuple(TraceEntry(i, s) for i, s in enumerate(steps, start=1))
        return cls(FlowKind(flow_kind), entries, diverged_at)


class _Entity:
    """One network element's view of a flow: the ordered events it takes part in."""

    def __init__(self, role: Role, script: FlowScript):
        self.role = role
        self.expected: list[tuple[str, int]] = []
        for s in script.steps:
            if s.kind is StepKind.LOCAL:
                if role in (s.actor, s.peer):
                    self.expected.append(("do", s.seq_no))
            elif s.actor is role:
                self.expected.append(("send", s.seq_no))
            elif s.peer is role:
                self.expected.append(("recv", s.seq_no))
        self.position = 0

    @property
    def next_event(self) -> tuple[str, int] | None:
        if self.position < len(self.expected):
            return self.expected[self.position]
        return None

    def handle(self, action: str, seq_no: int) -> None:
        if self.next_event != (action, seq_no):
            raise ProtocolError(
                f"{self.role.value} got {action} #{seq_no}, expected {self.next_event}"
            )
        self.position += 1


def execute_flow(
    script: FlowScript,
    topology: Topology | str | Iterable[Role | str] | None = None,
    drop_step: int | None = None,
) -> TraceRecord:
    """Enact ``script`` and return the resulting trace.

    A step becomes enabled once its predecessor has completed; a message
    completes when the bus delivers it.  ``drop_step`` names a message the bus
    loses: nothing after it can be enabled, and the trace ends in
    ``diverged(drop_step)``.
    """
    if topology is None:
        topology = script.topology
    if isinstance(topology, (Topology, str)):
        available = TOPOLOGY_ROLES[Topology(topology)]
    else:
        available = frozenset(Role(r) for r in topology)
    missing = script.roles() - available
    if missing:
        names = ", ".join(sorted(r.value for r in missing))
        raise MissingRoleError(f"{script.flow_kind.value} needs roles missing from topology: {names}")
    by_seq = {s.seq_no: s for s in script.steps}
    if drop_step is not None:
        if drop_step not in by_seq:
            raise ValueError(f"no step {drop_step} in {script.flow_kind.value}")
        if by_seq[drop_step].kind is not StepKind.MESSAGE:
            raise ValueError(f"step {drop_step} is a local action and cannot be dropped")

    entities = {role: _Entity(role, script) for role in sorted(available, key=lambda r: r.value)}
    bus: deque[Step] = deque()
    entries: list[TraceEntry] = []
    clock = 0
    done = 0  # highest completed seq_no

    def complete(step: Step) -> None:
        nonlocal clock, done
        clock += 1
        entries.append(TraceEntry(clock, step))
        done = step.seq_no

    progressed = True
    while progressed:
        progressed = False
        while bus:
            msg = bus.popleft()
            if msg.seq_no == drop_step:
                continue
            entities[msg.peer].handle("recv", msg.seq_no)
            complete(msg)
            progressed = True
        for ent in entities.values():
            event = ent.next_event
            if event is None or event[1] != done + 1 or event[0] == "recv":
                continue
            step = by_seq[event[1]]
            if step.kind is StepKind.LOCAL:
                ent.handle("do", step.seq_no)
                if step.peer is not None:
                    entities[step.peer].handle("do", step.seq_no)
                complete(step)
            else:
                ent.handle("send", step.seq_no)
                bus.append(step)
            progressed = True
            break

    diverged = None if done == len(script.steps) else done + 1
    return TraceRecord(script.flow_kind, tuple(entries), diverged)


@dataclass(frozen=True)
class TraceValidation:
    first_divergence: int | None = None

    @property
    def ok(self) -> bool:
        return self.first_divergence is None

    def __bool__(self) -> bool:
        return self.ok


def validate_trace(trace: TraceRecord, script: FlowScript) -> TraceValidation:
    """Compare the trace to the script position by position."""
    got = trace.steps
    for i, want in enumerate(script.steps):
        if i >= len(got) or got[i].signature() != want.signature():
            return TraceValidation(want.seq_no)
    if len(got) > len(script.steps):
        return TraceValidation(len(script.steps) + 1)
    return TraceValidation()


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str


def _positions(steps: Sequence[Step], pred) -> list[int]:
    return [i for i, s in enumerate(steps) if pred(s)]


def precedence_check(trace: TraceRecord) -> list[Violation]:
    """Ordering rules every handover flow must satisfy.

    P1  data forwarding only after target link setup is complete.
    P2  old-link deletion only after the completion notice has reached the RNC.
    P3  small deployments: the FIS update closes the flow.
    P4  medium macro-to-femto: the authorization check precedes CAC/RRC.
    """
    steps = trace.steps
    out: list[Violation] = []

    setup = _positions(steps, lambda s: s.phase == "link-setup")
    for pos in _positions(steps, lambda s: s.phase == "data-forwarding"):
        if not setup or max(setup) > pos:
            out.append(Violation("P1", f"data forwarding (#{steps[pos].seq_no}) before link setup completed"))

    notices = _positions(
        steps,
        lambda s: s.kind is StepKind.MESSAGE
        and s.peer is Role.RNC
        and s.phase in ("handover-complete", "path-switch-ack"),
    )
    for pos in _positions(steps, lambda s: s.phase == "old-link-deletion"):
        if not notices or min(notices) > pos:
            out.append(Violation("P2", f"old-link deletion (#{steps[pos].seq_no}) before RNC saw handover complete"))

    if trace.flow_kind.topology is Topology.SMALL:
        updates = _positions(steps, lambda s: s.phase == "fis-update")
        if not updates:
            if trace.completed:
                out.append(Violation("P3", "no FIS update in a completed small-scale flow"))
        elif updates != list(range(len(steps) - len(updates), len(steps))):
            late = next(steps[i] for i in range(min(updates), len(steps)) if i not in updates)
            out.append(Violation("P3", f"step #{late.seq_no} ({late.label}) follows the FIS update"))

    if trace.flow_kind is FlowKind.MEDIUM_MACRO_TO_FEMTO:
        auth = _positions(steps, lambda s: s.phase == "authorization-check")
        for pos in _positions(steps, lambda s: s.phase == "cac-rrc"):
            if not auth or max(auth) > pos:
                out.append(Violation("P4", f"CAC/RRC (#{steps[pos].seq_no}) before authorization check"))
    return out


def format_trace(trace: TraceRecord) -> str:
    """Tab-separated ``seq_no kind actor peer label`` lines; ``-`` for no peer."""
    lines = [
        "\t".join(
            (str(s.seq_no), s.kind.value, s.actor.value, s.peer.value if s.peer else "-", s.label)
        )
        for s in trace.steps
    ]
    return "".join(line + "\n" for line in lines)


def parse_trace(text: str, flow_kind: FlowKind | str) -> TraceRecord:
    steps = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise ValueError(f"line {lineno}: expected 5 tab-separated fields, got {len(fields)}")
        seq, kind, actor, peer, label = fields
        steps.append(
            Step(int(seq), StepKind(kind), Role(actor), None if peer == "-" else Role(peer), label)
        )
    return TraceRecord.from_steps(FlowKind(flow_kind), steps)
