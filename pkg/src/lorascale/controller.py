"""End-to-end experiment orchestration.

Drives an experiment through its phases: load the device roster,
prompt the operator to switch devices on, wait out the experiment,
collect per-device packets from the network server, turn delivered and
sent counts out of the frame-counter sequence, shut devices down in
three priority tiers, and write the report files.

The controller is transport-agnostic: any object with a
``query(dev_eui, from_ts, to_ts) -> list[PacketRecord]`` method works
as the server client (TCP client, in-process store, or a simulated
world), and any object with ``now()``/``sleep(dt)`` works as the clock.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Protocol

from .netserver import PacketRecord, ProtocolError


class OrchestrationError(Exception):
    """The experiment cannot proceed (bad roster, dead server, ...)."""


# --- clocks ---------------------------------------------------------------

class Clock(Protocol):
    def now(self) -> float: ...
    def sleep(self, seconds: float) -> None: ...


class RealClock:
    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock:
    """Clock whose sleeps simply advance a counter; for replayed runs."""

    def __init__(self, start: float = 0.0):
        self._t = start

    def now(self) -> float:
        return self._t

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep a negative time")
        self._t += seconds


class WorldClock:
    """Clock that advances a live simulated world as time passes."""

    def __init__(self, world):
        self._world = world

    def now(self) -> float:
        return self._world.now

    def sleep(self, seconds: float) -> None:
        self._world.advance(seconds)


# --- operator interface ---------------------------------------------------

@dataclass(frozen=True)
class TurnOn:
    device_id: str


@dataclass(frozen=True)
class TurnOff:
    device_id: str


class Operator(Protocol):
    def prompt(self, action: TurnOn | TurnOff) -> bool: ...


class ScriptedOperator:
    """Replays a recorded list of confirm/skip replies."""

    def __init__(self, replies: Iterable[bool]):
        self._replies = list(replies)
        self._i = 0
        self.transcript: list[tuple[TurnOn | TurnOff, bool]] = []

    def prompt(self, action: TurnOn | TurnOff) -> bool:
        if self._i >= len(self._replies):
            raise OrchestrationError(
                f"operator script exhausted after {self._i} replies, "
                f"but {action} still needs an answer"
            )
        reply = self._replies[self._i]
        self._i += 1
        self.transcript.append((action, reply))
        return reply


class SimulatedOperator:
    """Auto-confirms every prompt, toggling a simulated world if given."""

    def __init__(self, world=None):
        self._world = world
        self.transcript: list[tuple[TurnOn | TurnOff, bool]] = []

    def prompt(self, action: TurnOn | TurnOff) -> bool:
        if self._world is not None:
            if isinstance(action, TurnOn):
                self._world.set_active(action.device_id, True)
            else:
                self._world.set_active(action.device_id, False)
        self.transcript.append((action, True))
        return True


# --- roster ---------------------------------------------------------------

@dataclass(frozen=True)
class RosterEntry:
    device_id: str
    dev_eui: str


class DeviceMatrix:
    """Ordered id <-> EUI mapping for the experiment's devices."""

    def __init__(self, entries: Iterable[RosterEntry]):
        self.entries = list(entries)
        if not self.entries:
            raise OrchestrationError("device matrix is empty")
        ids = [e.device_id for e in self.entries]
        euis = [e.dev_eui.lower() for e in self.entries]
        if len(set(ids)) != len(ids):
            raise OrchestrationError("duplicate device id in matrix")
        if len(set(euis)) != len(euis):
            raise OrchestrationError("duplicate device EUI in matrix")
        self._eui_by_id = {e.device_id: e.dev_eui for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def ids(self) -> list[str]:
        return [e.device_id for e in self.entries]

    def eui_for(self, device_id: str) -> str:
        return self._eui_by_id[device_id]


def _data_lines(path) -> list[list[str]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([f.strip() for f in line.split(",")])
    return rows


def load_roster(experiment_table, mapping_table) -> DeviceMatrix:
    """Build the device matrix from the two roster files.

    The experiment table lists the ids taking part, one per line; the
    mapping table holds ``id,eui`` lines for the whole fleet.  The
    matrix keeps the experiment table's order.
    """
    wanted = [row[0] for row in _data_lines(experiment_table)]
    if not wanted:
        raise OrchestrationError(f"experiment table {experiment_table} lists no devices")
    if len(set(wanted)) != len(wanted):
        raise OrchestrationError("duplicate device id in experiment table")
    mapping: dict[str, str] = {}
    for row in _data_lines(mapping_table):
        if len(row) != 2:
            raise OrchestrationError(f"mapping line needs 'id,eui', got {','.join(row)!r}")
        device_id, eui = row
        if device_id in mapping:
            raise OrchestrationError(f"duplicate device id {device_id} in mapping table")
        mapping[device_id] = eui
    entries = []
    for device_id in wanted:
        if device_id not in mapping:
            raise OrchestrationError(f"unmapped id {device_id}")
        entries.append(RosterEntry(device_id, mapping[device_id]))
    return DeviceMatrix(entries)


# --- report flags and records ----------------------------------------------

@dataclass(frozen=True)
class TurnOnFailed:
    pass


@dataclass(frozen=True)
class NeverResponded:
    pass


@dataclass(frozen=True)
class RespondedAfterShutdown:
    after_id: str


@dataclass(frozen=True)
class QueryFailed:
    reason: str


@dataclass
class DeviceReport:
    device_id: str
    delivered: int = 0
    sent: int = 0
    flags: set = field(default_factory=set)

    def __post_init__(self) -> None:
        if not 0 <= self.delivered <= self.sent:
            raise ValueError("delivered must lie in [0, sent]")


@dataclass(frozen=True)
class ShutdownRecord:
    device_id: str
    at: float
    confirmed: bool
    priority: str  # "high" | "middle" | "low"


# --- phases ----------------------------------------------------------------

def turn_on_sequence(matrix: DeviceMatrix, operator: Operator, client, clock: Clock,
                     probe_window: float, step: float = 0.0) -> set[str]:
    """Prompt devices on in matrix order, then probe for silent ones.

    After the prompts, ``probe_window`` seconds pass and every device
    without a single packet since the sequence began is flagged as a
    failed turn-on.  The server's data is the authority: a skipped or
    dead device shows up the same way, as silence.
    """
    began = clock.now()
    for entry in matrix:
        operator.prompt(TurnOn(entry.device_id))
        if step > 0:
            clock.sleep(step)
    if probe_window > 0:
        clock.sleep(probe_window)
    failed = set()
    for entry in matrix:
        try:
            packets = client.query(entry.dev_eui, began, clock.now())
        except (ProtocolError, OSError) as exc:
            raise OrchestrationError(f"server unreachable during turn-on probe: {exc}")
        if not packets:
            failed.add(entry.device_id)
    return failed


def collect(matrix: DeviceMatrix, start_ts: float, end_ts: float, client
            ) -> tuple[dict[str, list[PacketRecord]], dict[str, QueryFailed]]:
    """One window query per device; a failing query flags the device."""
    if end_ts <= start_ts:
        raise ValueError("experiment window is empty")
    packets: dict[str, list[PacketRecord]] = {}
    failures: dict[str, QueryFailed] = {}
    for entry in matrix:
        try:
            packets[entry.device_id] = client.query(entry.dev_eui, start_ts, end_ts)
        except ProtocolError as exc:
            packets[entry.device_id] = []
            failures[entry.device_id] = QueryFailed(str(exc))
    return packets, failures


def compute_counts(packets: list[PacketRecord]) -> tuple[int, int]:
    """(delivered, sent) from one device's frame-counter sequence.

    Delivered is the number of distinct counter values seen.  Sent sums
    ``max - min + 1`` over monotone counter segments: counters only
    ever increase, so a decrease means the device restarted counting
    and must not produce a negative gap.
    """
    if not packets:
        return 0, 0
    fcnts = [p.fcnt for p in packets]
    delivered = len(set(fcnts))
    sent = 0
    seg_min = seg_max = fcnts[0]
    for fc in fcnts[1:]:
        if fc < seg_max:
            sent += seg_max - seg_min + 1
            seg_min = seg_max = fc
        else:
            seg_max = fc
    sent += seg_max - seg_min + 1
    return delivered, sent


def turn_off_sequence(matrix: DeviceMatrix, reports: dict[str, DeviceReport],
                      operator: Operator, client, clock: Clock,
                      recheck_window: float
                      ) -> tuple[list[ShutdownRecord], dict[str, str]]:
    """Three-priority shutdown with late-responder detection.

    Devices that delivered during the experiment go first (high tier,
    matrix order).  After every shutdown the server is polled over
    ``recheck_window``; a previously silent device that now shows
    packets is appended to the middle tier and flagged.  Whatever is
    left forms the low tier.  A skipped device is retried once at the
    end of its tier, then logged as an unconfirmed shutdown.
    """
    high = [e.device_id for e in matrix if reports[e.device_id].delivered > 0]
    silent = [e.device_id for e in matrix if reports[e.device_id].delivered == 0]
    pending_silent = set(silent)
    middle: list[str] = []
    late: dict[str, str] = {}
    log: list[ShutdownRecord] = []
    retried: set[str] = set()

    def recheck(after_id: str, shutdown_at: float, middle_open: bool) -> None:
        clock.sleep(recheck_window)
        for candidate in matrix.ids():
            if candidate not in pending_silent:
                continue
            try:
                fresh = client.query(matrix.eui_for(candidate), shutdown_at, clock.now())
            except ProtocolError:
                continue
            if fresh:
                late[candidate] = after_id
                pending_silent.discard(candidate)
                if middle_open:
                    middle.append(candidate)
                # once the low tier is formed, a late responder keeps
                # its slot there; the flag still goes to the report

    def drain(queue: list[str], priority: str, middle_open: bool) -> None:
        while queue:
            device_id = queue.pop(0)
            confirmed = operator.prompt(TurnOff(device_id))
            if not confirmed and device_id not in retried:
                retried.add(device_id)
                queue.append(device_id)
                continue
            pending_silent.discard(device_id)
            shutdown_at = clock.now()
            log.append(ShutdownRecord(device_id, shutdown_at, confirmed, priority))
            recheck(device_id, shutdown_at, middle_open)

    drain(high, "high", middle_open=True)
    drain(middle, "middle", middle_open=True)
    low = [d for d in matrix.ids() if not any(r.device_id == d for r in log)]
    drain(low, "low", middle_open=False)

    for device_id, after_id in late.items():
        reports[device_id].flags.add(RespondedAfterShutdown(after_id))
    for report in reports.values():
        if report.delivered == 0 and report.device_id not in late:
            report.flags.add(NeverResponded())
    return log, late


# --- output files ----------------------------------------------------------

@dataclass
class ExperimentResult:
    name: str
    matrix: DeviceMatrix
    reports: dict[str, DeviceReport]
    turn_on_failures: set[str]
    late_responders: dict[str, str]
    shutdown_log: list[ShutdownRecord]
    start_ts: float
    end_ts: float
    packets: dict[str, list[PacketRecord]]


def write_output(result: ExperimentResult, report_path, timestamp_path) -> None:
    """Write the main report and the auxiliary timestamp file.

    Report layout: experiment header, one line per failed turn-on, one
    ``id delivered sent`` line per roster device in matrix order, then
    one trailer line per late responder.  The timestamp file lists
    every collected packet as ``eui fcnt ts``, ascending in time.
    """
    duration = result.end_ts - result.start_ts
    lines = [
        f"# experiment {result.name} start {result.start_ts:.6f} "
        f"end {result.end_ts:.6f} duration {duration:.6f}"
    ]
    for device_id in result.matrix.ids():
        if device_id in result.turn_on_failures:
            lines.append(f"# turn-on-failed {device_id}")
    for device_id in result.matrix.ids():
        report = result.reports[device_id]
        lines.append(f"{device_id} {report.delivered} {report.sent}")
    for device_id, after_id in result.late_responders.items():
        lines.append(f"# late-responder {device_id} after {after_id}")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    stamped = []
    for device_id in result.matrix.ids():
        eui = result.matrix.eui_for(device_id)
        for p in result.packets.get(device_id, []):
            stamped.append((p.received_ts, eui, p.fcnt))
    stamped.sort()
    with open(timestamp_path, "w", encoding="utf-8") as fh:
        for ts, eui, fcnt in stamped:
            fh.write(f"{eui} {fcnt} {ts:.6f}\n")


@dataclass
class ParsedReport:
    name: str
    start_ts: float
    end_ts: float
    duration: float
    reports: dict[str, DeviceReport]
    turn_on_failures: set[str]
    late_responders: dict[str, str]


def parse_report(path) -> ParsedReport:
    """Read a report file back; inverse of :func:`write_output`."""
    name, start_ts, end_ts, duration = "", 0.0, 0.0, 0.0
    reports: dict[str, DeviceReport] = {}
    failures: set[str] = set()
    late: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("# experiment "):
                parts = line.split()
                name = parts[2]
                start_ts = float(parts[parts.index("start") + 1])
                end_ts = float(parts[parts.index("end") + 1])
                duration = float(parts[parts.index("duration") + 1])
            elif line.startswith("# turn-on-failed "):
                failures.add(line.split()[-1])
            elif line.startswith("# late-responder "):
                parts = line.split()
                late[parts[2]] = parts[4]
            elif line.startswith("#"):
                continue
            else:
                device_id, delivered, sent = line.split()
                reports[device_id] = DeviceReport(device_id, int(delivered), int(sent))
    for device_id in failures:
        if device_id in reports:
            reports[device_id].flags.add(TurnOnFailed())
    for device_id, after_id in late.items():
        if device_id in reports:
            reports[device_id].flags.add(RespondedAfterShutdown(after_id))
    return ParsedReport(name, start_ts, end_ts, duration, reports, failures, late)


# --- full workflow ----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSettings:
    name: str
    duration: float
    probe_window: float
    recheck_window: float
    turnon_step: float = 0.0

    def __post_init__(self) -> None:
        if not self.name or any(c.isspace() for c in self.name):
            raise ValueError("experiment name must be a single non-empty token")
        if self.duration <= 0:
            raise ValueError("experiment duration must be positive")
        if self.probe_window < 0 or self.recheck_window < 0 or self.turnon_step < 0:
            raise ValueError("windows cannot be negative")


def run_experiment(matrix: DeviceMatrix, operator: Operator, client, clock: Clock,
                   settings: ExperimentSettings) -> ExperimentResult:
    """Execute every phase in order and return the assembled result."""
    failures = turn_on_sequence(
        matrix, operator, client, clock, settings.probe_window, settings.turnon_step
    )
    start_ts = clock.now()
    clock.sleep(settings.duration)
    end_ts = clock.now()
    packets, query_failures = collect(matrix, start_ts, end_ts, client)

    reports: dict[str, DeviceReport] = {}
    for entry in matrix:
        delivered, sent = compute_counts(packets[entry.device_id])
        flags: set = set()
        if entry.device_id in failures:
            flags.add(TurnOnFailed())
        if entry.device_id in query_failures:
            flags.add(query_failures[entry.device_id])
        reports[entry.device_id] = DeviceReport(entry.device_id, delivered, sent, flags)

    shutdown_log, late = turn_off_sequence(
        matrix, reports, operator, client, clock, settings.recheck_window
    )
    return ExperimentResult(
        name=settings.name,
        matrix=matrix,
        reports=reports,
        turn_on_failures=failures,
        late_responders=late,
        shutdown_log=shutdown_log,
        start_ts=start_ts,
        end_ts=end_ts,
        packets=packets,
    )
