"""Seeded discrete-event simulation of periodic LoRa uplinks.

Devices transmit once per period at an independent uniform random phase
(or a fixed one), frame counters count attempts, and packets on the
same spreading factor collide according to the configured model.
Different spreading factors never interact.  A run is deterministic for
a fixed seed, and per-device outcomes do not depend on which other
devices share the run unless they share a spreading factor.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

import numpy as np

from . import kernels
from .netserver import PacketRecord

_EUI_RE = re.compile(r"^[0-9a-fA-F]{16}$")
_U64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class AnyOverlap:
    """Both packets are lost whenever two same-SF packets overlap at all."""


@dataclass(frozen=True)
class VulnerabilityWindow:
    """A packet is lost iff another same-SF packet starts strictly inside
    the window of ``factor * airtime`` seconds ending at its own end.

    ``factor=2.0`` reproduces the any-overlap rule for equal airtimes;
    ``factor=1.0`` loses a packet only to transmissions that begin while
    it is on the air.
    """

    factor: float

    def __post_init__(self) -> None:
        if not 0.0 < self.factor <= 2.0:
            raise ValueError(f"window factor must be in (0, 2], got {self.factor}")


CollisionModel = Union[AnyOverlap, VulnerabilityWindow]


@dataclass(frozen=True)
class DeviceSpec:
    """One simulated end device."""

    device_id: str
    dev_eui: str
    sf: int
    period: float
    airtime: float
    phase: float | str = "random"
    active_from: float = 0.0
    active_until: float = math.inf

    def __post_init__(self) -> None:
        if not self.device_id:
            raise ValueError("device id must be non-empty")
        if not _EUI_RE.match(self.dev_eui):
            raise ValueError(f"device EUI must be 16 hex characters, got {self.dev_eui!r}")
        if not 7 <= self.sf <= 12:
            raise ValueError(f"spreading factor must be 7..12, got {self.sf}")
        if self.period <= 0 or self.airtime <= 0:
            raise ValueError("period and airtime must be positive")
        if self.airtime >= self.period:
            raise ValueError("airtime must be shorter than the period")
        if self.phase != "random":
            p = float(self.phase)
            if not 0.0 <= p < self.period:
                raise ValueError("fixed phase must lie in [0, period)")
        if not self.active_from < self.active_until:
            raise ValueError("device on/off window is empty")


@dataclass(frozen=True)
class TransmissionEvent:
    device_id: str
    fcnt: int
    start: float
    end: float
    sf: int
    delivered: bool


@dataclass
class SimResult:
    """Outcome of one run: the collision-resolved packet timeline.

    Events are stored as parallel arrays sorted by (start, device id)
    and materialized into :class:`TransmissionEvent` objects on demand.
    """

    devices: list[DeviceSpec]
    start: np.ndarray
    end: np.ndarray
    sf: np.ndarray
    dev: np.ndarray
    fcnt: np.ndarray
    delivered: np.ndarray
    duration: float

    def sent_counts(self) -> dict[str, int]:
        sent = np.bincount(self.dev, minlength=len(self.devices))
        return {d.device_id: int(sent[i]) for i, d in enumerate(self.devices)}

    def delivered_counts(self) -> dict[str, int]:
        good = np.bincount(self.dev[self.delivered], minlength=len(self.devices))
        return {d.device_id: int(good[i]) for i, d in enumerate(self.devices)}

    @property
    def network_pdr(self) -> float:
        if self.dev.size == 0:
            raise ValueError("no transmissions in this run")
        return float(np.count_nonzero(self.delivered)) / self.dev.size

    def events(self) -> Iterator[TransmissionEvent]:
        for i in range(self.dev.size):
            d = self.devices[self.dev[i]]
            yield TransmissionEvent(
                device_id=d.device_id,
                fcnt=int(self.fcnt[i]),
                start=float(self.start[i]),
                end=float(self.end[i]),
                sf=int(self.sf[i]),
                delivered=bool(self.delivered[i]),
            )


def device_rng(seed: int, dev_eui: str) -> np.random.Generator:
    """Per-device random stream, independent of the rest of the fleet."""
    return np.random.default_rng([seed & _U64, int(dev_eui, 16)])


def draw_phase(spec: DeviceSpec, seed: int) -> float:
    if spec.phase == "random":
        return float(device_rng(seed, spec.dev_eui).uniform(0.0, spec.period))
    return float(spec.phase)


def _attempt_times(spec: DeviceSpec, phase: float, duration: float) -> np.ndarray:
    """Start times of the attempts fitting the device's active window."""
    horizon = min(spec.active_until, duration)
    first = spec.active_from + phase
    last_allowed = horizon - spec.airtime
    if first > last_allowed:
        return np.empty(0, dtype=np.float64)
    n = int(math.floor((last_allowed - first) / spec.period)) + 1
    return first + spec.period * np.arange(n, dtype=np.float64)


def _resolve(starts: np.ndarray, ends: np.ndarray, sfs: np.ndarray,
             model: CollisionModel) -> np.ndarray:
    """Per-SF collision marking; arrays must be sorted by start."""
    lost = np.zeros(starts.shape[0], dtype=bool)
    for sf in np.unique(sfs):
        mask = sfs == sf
        if isinstance(model, AnyOverlap):
            lost[mask] = kernels.mark_any_overlap(starts[mask], ends[mask])
        else:
            lost[mask] = kernels.mark_window(starts[mask], ends[mask], model.factor)
    return lost


def run(devices: Iterable[DeviceSpec], duration: float,
        model: CollisionModel = AnyOverlap(), seed: int = 0) -> SimResult:
    """Simulate all devices for ``duration`` seconds of channel time."""
    devices = list(devices)
    if not devices:
        raise ValueError("device set must be non-empty")
    if duration <= 0:
        raise ValueError("duration must be positive")
    euis = [d.dev_eui.lower() for d in devices]
    if len(set(euis)) != len(euis):
        raise ValueError("device EUIs must be unique within a run")
    if len({d.device_id for d in devices}) != len(devices):
        raise ValueError("device ids must be unique within a run")

    chunks_start, chunks_dev, chunks_fcnt, chunks_sf, chunks_air = [], [], [], [], []
    for i, spec in enumerate(devices):
        starts = _attempt_times(spec, draw_phase(spec, seed), duration)
        chunks_start.append(starts)
        chunks_dev.append(np.full(starts.shape, i, dtype=np.int64))
        chunks_fcnt.append(np.arange(starts.shape[0], dtype=np.int64))
        chunks_sf.append(np.full(starts.shape, spec.sf, dtype=np.int16))
        chunks_air.append(np.full(starts.shape, spec.airtime, dtype=np.float64))

    start = np.concatenate(chunks_start)
    dev = np.concatenate(chunks_dev)
    fcnt = np.concatenate(chunks_fcnt)
    sf = np.concatenate(chunks_sf)
    end = start + np.concatenate(chunks_air)

    # global order (start, device id lexicographic) for determinism
    id_rank = np.argsort(np.argsort(np.array([d.device_id for d in devices])))
    order = np.lexsort((id_rank[dev], start))
    start, end, sf, dev, fcnt = start[order], end[order], sf[order], dev[order], fcnt[order]

    lost = _resolve(start, end, sf, model)
    return SimResult(
        devices=devices,
        start=start,
        end=end,
        sf=sf,
        dev=dev,
        fcnt=fcnt,
        delivered=~lost,
        duration=duration,
    )


@dataclass(frozen=True)
class SfGroup:
    """A same-configuration device group for Monte-Carlo estimation."""

    sf: int
    count: int
    airtime: float

    def __post_init__(self) -> None:
        if not 7 <= self.sf <= 12:
            raise ValueError(f"spreading factor must be 7..12, got {self.sf}")
        if self.count < 0:
            raise ValueError("group device count cannot be negative")
        if self.airtime <= 0:
            raise ValueError("airtime must be positive")


@dataclass(frozen=True)
class PdrEstimate:
    """Monte-Carlo delivery estimate with its binomial standard error."""

    delivered: int
    sent: int

    @property
    def pdr(self) -> float:
        if self.sent == 0:
            raise ValueError("no transmissions sampled")
        return self.delivered / self.sent

    @property
    def stderr(self) -> float:
        p = self.pdr
        return math.sqrt(p * (1.0 - p) / self.sent)


def _loss_rounds(count: int, period: float, airtime: float, rounds: int,
                 model: CollisionModel, rng: np.random.Generator) -> int:
    """Lost-transmission count over ``rounds`` independent periods.

    Each round places every device's start uniformly on a circle of
    circumference ``period``, so successive periods are independent
    samples and the closed-form no-collision law holds exactly.  Rounds
    are unrolled onto one well-separated timeline, with events near the
    period boundary duplicated one period later so wraparound collisions
    are seen by the ordinary linear-time kernels.
    """
    phases = rng.uniform(0.0, period, size=(rounds, count))
    stride = period + 4.0 * airtime
    starts = (stride * np.arange(rounds))[:, None] + phases
    starts = starts.ravel()
    key = np.arange(rounds * count)
    ghost = phases.ravel() < 2.0 * airtime
    all_starts = np.concatenate([starts, starts[ghost] + period])
    all_key = np.concatenate([key, key[ghost]])
    order = np.argsort(all_starts, kind="stable")
    s = all_starts[order]
    e = s + airtime
    if isinstance(model, AnyOverlap):
        lost = kernels.mark_any_overlap(s, e)
    else:
        lost = kernels.mark_window(s, e, model.factor)
    agg = np.zeros(rounds * count, dtype=bool)
    np.logical_or.at(agg, all_key[order], lost)
    return int(np.count_nonzero(agg))


def estimate_pdr(groups: Iterable[SfGroup], period: float, rounds: int,
                 model: CollisionModel = AnyOverlap(), seed: int = 0) -> PdrEstimate:
    """Network PDR over ``rounds`` independently-phased transmit periods.

    Unlike :func:`run`, every period draws fresh phases, which makes the
    sampled transmissions independent trials: the estimate converges to
    the closed-form law for the model and the binomial ``stderr`` is an
    honest uncertainty.  Groups on different spreading factors never
    interact and are simulated separately.
    """
    groups = [g for g in groups if g.count > 0]
    if not groups:
        raise ValueError("need at least one non-empty device group")
    if rounds < 1:
        raise ValueError("need at least one round")
    if len({g.sf for g in groups}) != len(groups):
        raise ValueError("one group per spreading factor")
    for g in groups:
        if g.airtime >= period:
            raise ValueError("airtime must be shorter than the period")
    rng = np.random.default_rng(seed & _U64)
    sent = rounds * sum(g.count for g in groups)
    lost = 0
    for g in sorted(groups, key=lambda g: g.sf):
        lost += _loss_rounds(g.count, period, g.airtime, rounds, model, rng)
    return PdrEstimate(delivered=sent - lost, sent=sent)


def export_packet_log(result: SimResult) -> Iterator[PacketRecord]:
    """Packet records for the delivered events, ordered by receive time.

    Lost events produce no record; the receive timestamp is the event
    end time.
    """
    good = np.flatnonzero(result.delivered)
    euis = np.array([d.dev_eui for d in result.devices])
    order = np.lexsort((result.fcnt[good], euis[result.dev[good]], result.end[good]))
    for i in good[order]:
        d = result.devices[result.dev[i]]
        yield PacketRecord(
            dev_eui=d.dev_eui,
            fcnt=int(result.fcnt[i]),
            received_ts=float(result.end[i]),
            sf=int(result.sf[i]),
        )


def format_log_line(record: PacketRecord) -> str:
    """One packet log line: ts, EUI, frame counter and SF, tab separated."""
    return f"{record.received_ts:.6f}\t{record.dev_eui}\t{record.fcnt}\t{record.sf}"


def write_packet_log(result: SimResult, path) -> int:
    """Write the delivered-packet log; returns the record count."""
    n = 0
    with open(path, "w", encoding="ascii") as fh:
        for record in export_packet_log(result):
            fh.write(format_log_line(record) + "\n")
            n += 1
    return n
