"""Channel load arithmetic and experiment scaling.

A population of periodic transmitters is summarized by a
:class:`TrafficProfile`; the dimensionless channel load ``N * t / T``
is the quantity preserved when a large deployment is replaced by a
small experiment with longer packets and a shorter period.  The module
also provides the analytic delivery-probability bounds for a load and
the exact no-collision law for random-phase periodic transmitters,
which serves as the simulator's oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class TrafficProfile:
    """Offered load of one device population.

    ``num_devices`` devices each transmit one packet of ``airtime``
    seconds every ``period`` seconds (message intensity 1/period).
    """

    num_devices: int
    period: float
    airtime: float

    def __post_init__(self) -> None:
        if self.num_devices < 1:
            raise ValueError("profile needs at least one device")
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.airtime <= 0:
            raise ValueError("airtime must be positive")
        if self.airtime >= self.period:
            raise ValueError("airtime must be shorter than the period")


@dataclass(frozen=True)
class ChannelLoad:
    """Dimensionless offered traffic N * airtime / period."""

    load: float

    def __post_init__(self) -> None:
        if self.load < 0:
            raise ValueError("channel load cannot be negative")

    def __float__(self) -> float:
        return self.load


def channel_load(profile: TrafficProfile) -> ChannelLoad:
    """Offered load of a profile: num_devices * airtime / period."""
    return ChannelLoad(profile.num_devices * profile.airtime / profile.period)


def success_bounds(load: ChannelLoad | float) -> tuple[float, float]:
    """Analytic (lower, upper) bounds on per-packet delivery probability.

    Lower bound exp(-2L) treats any overlap between two packets as fatal
    (vulnerability window twice the packet duration); upper bound
    exp(-L) loses a packet only when another one starts during it
    (window equal to the packet duration).
    """
    value = float(load)
    if value < 0:
        raise ValueError("channel load cannot be negative")
    return math.exp(-2.0 * value), math.exp(-value)


def success_exact_periodic(profile: TrafficProfile, window_factor: float = 2.0) -> float:
    """Exact per-device no-collision probability for periodic traffic.

    With ``num_devices`` transmitters at independent uniform random
    phases, equal period and equal airtime, a packet survives iff none
    of the other N-1 devices starts inside a vulnerability window of
    ``window_factor * airtime`` seconds, which each misses with
    probability 1 - w/T per period:

        (1 - window_factor * airtime / period) ** (num_devices - 1)

    Converges to exp(-window_factor * L) as N grows at fixed load L.
    """
    if window_factor <= 0:
        raise ValueError("window factor must be positive")
    window = window_factor * profile.airtime
    if window > profile.period:
        raise ValueError(
            "vulnerability window exceeds the period; the periodic model does not apply"
        )
    return (1.0 - window / profile.period) ** (profile.num_devices - 1)


def derive_equivalent(
    real: TrafficProfile, experiment_period: float, experiment_airtime: float
) -> TrafficProfile:
    """Experiment profile carrying the same channel load as ``real``.

    The experiment trades a shorter period and longer packet for a much
    smaller device count: N_exp = round(L * T_exp / t_exp).  Relative
    load mismatch after rounding is at most ~1/(2 * N_exp).
    """
    if experiment_airtime <= 0:
        raise ValueError("experiment airtime must be positive")
    if experiment_period <= experiment_airtime:
        raise ValueError("experiment period must exceed the airtime")
    load = channel_load(real).load
    exact = load * experiment_period / experiment_airtime
    n_exp = round(exact)
    if n_exp < 1:
        raise ValueError(
            f"load {load:.6g} is too small for period {experiment_period} s and "
            f"airtime {experiment_airtime} s: equivalent device count would be {exact:.3g}"
        )
    return TrafficProfile(n_exp, experiment_period, experiment_airtime)


def device_ratio_per_thousand(real: TrafficProfile, experiment: TrafficProfile) -> float:
    """Experiment devices per 1000 real devices."""
    return 1000.0 * experiment.num_devices / real.num_devices
