import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from lorascale.controller import (
    DeviceMatrix,
    DeviceReport,
    ExperimentSettings,
    NeverResponded,
    OrchestrationError,
    QueryFailed,
    RespondedAfterShutdown,
    RosterEntry,
    ScriptedOperator,
    SimulatedOperator,
    TurnOff,
    TurnOn,
    TurnOnFailed,
    VirtualClock,
    WorldClock,
    collect,
    compute_counts,
    load_roster,
    parse_report,
    run_experiment,
    turn_off_sequence,
    turn_on_sequence,
    write_output,
)
from lorascale.netserver import PacketRecord, PacketStore
from lorascale.simulator import DeviceSpec
from lorascale.world import SimWorld

EUIS = {f"d{i}": f"{0xcc00 + i:016x}" for i in range(10)}


def spread_period(base, k, n, spread=0.06):
    return base * (1.0 + spread * ((k / max(1, n - 1)) - 0.5))


def live_fixture(seed=26, n=5, period=5.0, airtime=0.25):
    fleet = [
        DeviceSpec(f"d{i}", EUIS[f"d{i}"], 7, spread_period(period, i, n), airtime)
        for i in range(n)
    ]
    world = SimWorld(fleet, seed=seed)
    matrix = DeviceMatrix([RosterEntry(d.device_id, d.dev_eui) for d in fleet])
    return world, matrix


class StoreClient:
    """Direct, connectionless client over a PacketStore."""

    def __init__(self, store: PacketStore):
        self.store = store

    def query(self, dev_eui, from_ts, to_ts):
        return self.store.query(dev_eui, from_ts, to_ts)


# --- roster -------------------------------------------------------------------

def test_load_roster_subset_in_table_order(tmp_path):
    exp = tmp_path / "exp.csv"
    mapping = tmp_path / "map.csv"
    exp.write_text("d2\nd1\n")
    mapping.write_text("d1,00000000000000a1\nd2,00000000000000a2\nd3,00000000000000a3\n")
    matrix = load_roster(exp, mapping)
    assert matrix.ids() == ["d2", "d1"]
    assert matrix.eui_for("d2") == "00000000000000a2"


def test_load_roster_unmapped_id_named_in_error(tmp_path):
    exp = tmp_path / "exp.csv"
    mapping = tmp_path / "map.csv"
    exp.write_text("d9\n")
    mapping.write_text("d1,00000000000000a1\n")
    with pytest.raises(OrchestrationError, match="unmapped id d9"):
        load_roster(exp, mapping)


def test_load_roster_rejects_duplicates(tmp_path):
    exp = tmp_path / "exp.csv"
    mapping = tmp_path / "map.csv"
    exp.write_text("d1\nd1\n")
    mapping.write_text("d1,00000000000000a1\n")
    with pytest.raises(OrchestrationError, match="duplicate"):
        load_roster(exp, mapping)
    exp.write_text("d1\nd2\n")
    mapping.write_text("d1,00000000000000a1\nd2,00000000000000A1\n")
    with pytest.raises(OrchestrationError, match="duplicate"):
        load_roster(exp, mapping)


def test_load_roster_41_entry_fixture():
    matrix = load_roster("tests/data/roster41.csv", "tests/data/mapping41.csv")
    assert len(matrix) == 41
    assert matrix.ids() == [f"d{i:02d}" for i in range(1, 42)]
    assert matrix.eui_for("d41") == f"{0xa0000000 + 41:016x}"


# --- counter arithmetic ---------------------------------------------------------

def records(fcnts):
    return [PacketRecord("00000000000000aa", f, float(i), 7) for i, f in enumerate(fcnts)]


def test_compute_counts_reference_cases():
    assert compute_counts(records([0, 1, 2, 3])) == (4, 4)
    assert compute_counts(records([5, 6, 9, 10])) == (4, 6)
    assert compute_counts(records([10, 11, 0, 1])) == (4, 4)  # counter reset
    assert compute_counts([]) == (0, 0)


def test_compute_counts_duplicates_count_once():
    assert compute_counts(records([5, 5, 6])) == (2, 2)
    assert compute_counts(records([5, 6, 5])) == (2, 3)  # decrease opens a segment


@given(fcnts=st.lists(st.integers(0, 500), max_size=60))
def test_compute_counts_delivered_never_exceeds_sent(fcnts):
    delivered, sent = compute_counts(records(fcnts))
    assert 0 <= delivered <= sent
    assert delivered == len(set(fcnts))


# --- turn-on ---------------------------------------------------------------------

def test_turn_on_all_respond_no_failures():
    world, matrix = live_fixture()
    operator = SimulatedOperator(world)
    failed = turn_on_sequence(matrix, operator, world, WorldClock(world),
                              probe_window=15.0, step=1.0)
    assert failed == set()


def test_turn_on_skipped_device_flagged():
    world, matrix = live_fixture()

    class SkipD2:
        def prompt(self, action):
            if isinstance(action, TurnOn) and action.device_id == "d2":
                return False
            world.set_active(action.device_id, isinstance(action, TurnOn))
            return True

    failed = turn_on_sequence(matrix, SkipD2(), world, WorldClock(world),
                              probe_window=15.0, step=1.0)
    assert failed == {"d2"}


def test_turn_on_muted_device_flagged():
    # operator confirms d3 but the (dead) device never transmits
    world, matrix = live_fixture()

    class MutedD3:
        def prompt(self, action):
            if not (isinstance(action, TurnOn) and action.device_id == "d3"):
                world.set_active(action.device_id, isinstance(action, TurnOn))
            return True

    failed = turn_on_sequence(matrix, MutedD3(), world, WorldClock(world),
                              probe_window=15.0, step=1.0)
    assert failed == {"d3"}


# --- collect ----------------------------------------------------------------------

def test_collect_window_closed_and_all_devices_present():
    store = PacketStore()
    eui1, eui2 = "00000000000000a1", "00000000000000a2"
    store.ingest([
        PacketRecord(eui1, 0, 10.0, 7),   # exactly at start: included
        PacketRecord(eui1, 1, 15.0, 7),
        PacketRecord(eui1, 2, 20.0, 7),   # exactly at end: included
        PacketRecord(eui1, 3, 20.5, 7),   # outside
    ])
    matrix = DeviceMatrix([RosterEntry("a", eui1), RosterEntry("b", eui2)])
    packets, failures = collect(matrix, 10.0, 20.0, StoreClient(store))
    assert [p.fcnt for p in packets["a"]] == [0, 1, 2]
    assert packets["b"] == []
    assert failures == {}


def test_collect_protocol_error_flags_device_and_continues():
    eui1, eui2 = "00000000000000a1", "00000000000000a2"

    class Flaky:
        def query(self, dev_eui, lo, hi):
            from lorascale.netserver import ProtocolError
            if dev_eui == eui1:
                raise ProtocolError("boom")
            return [PacketRecord(eui2, 0, 12.0, 7)]

    matrix = DeviceMatrix([RosterEntry("a", eui1), RosterEntry("b", eui2)])
    packets, failures = collect(matrix, 10.0, 20.0, Flaky())
    assert packets["a"] == [] and len(packets["b"]) == 1
    assert failures == {"a": QueryFailed("boom")}


# --- turn-off ----------------------------------------------------------------------

class FakeWakeClient:
    """Serves wake-up packets for otherwise silent devices."""

    def __init__(self, wake_ts_by_eui):
        self.wake = wake_ts_by_eui

    def query(self, dev_eui, from_ts, to_ts):
        return [
            PacketRecord(dev_eui, 0, ts, 7)
            for ts in self.wake.get(dev_eui, [])
            if from_ts <= ts <= to_ts
        ]


def make_reports(matrix, responded):
    return {
        e.device_id: DeviceReport(e.device_id, 5 if e.device_id in responded else 0,
                                  5 if e.device_id in responded else 0)
        for e in matrix
    }


def test_turn_off_all_responded_single_high_queue_matrix_order():
    matrix = DeviceMatrix([RosterEntry(f"d{i}", EUIS[f"d{i}"]) for i in range(4)])
    reports = make_reports(matrix, responded={"d0", "d1", "d2", "d3"})
    log, late = turn_off_sequence(matrix, reports, SimulatedOperator(),
                                  FakeWakeClient({}), VirtualClock(100.0), 10.0)
    assert [r.device_id for r in log] == ["d0", "d1", "d2", "d3"]
    assert all(r.priority == "high" for r in log)
    assert late == {}
    assert all(not reports[d].flags for d in reports)


def test_turn_off_no_device_ever_responds():
    matrix = DeviceMatrix([RosterEntry(f"d{i}", EUIS[f"d{i}"]) for i in range(4)])
    reports = make_reports(matrix, responded=set())
    log, late = turn_off_sequence(matrix, reports, SimulatedOperator(),
                                  FakeWakeClient({}), VirtualClock(100.0), 10.0)
    assert [r.device_id for r in log] == ["d0", "d1", "d2", "d3"]
    assert all(r.priority == "low" for r in log)
    assert late == {}
    assert all(NeverResponded() in reports[d].flags for d in reports)


def test_turn_off_late_responder_moves_to_middle_with_flag():
    world, matrix = live_fixture(seed=33)

    class WakeD4OnD1:
        def prompt(self, action):
            world.set_active(action.device_id, isinstance(action, TurnOn))
            if isinstance(action, TurnOff) and action.device_id == "d1":
                world.set_active("d4", True)
            return True

    operator = WakeD4OnD1()
    clock = WorldClock(world)
    # activate all but d4, run a short experiment
    for did in ("d0", "d1", "d2", "d3"):
        world.set_active(did, True)
    world.advance(50.0)
    reports = {
        did: DeviceReport(did, *compute_counts(world.query(EUIS[did], 0.0, 50.0)))
        for did in matrix.ids()
    }
    log, late = turn_off_sequence(matrix, reports, operator, world, clock, 15.0)
    ids = [r.device_id for r in log]
    assert sorted(ids) == sorted(matrix.ids())
    assert ids[:4] == ["d0", "d1", "d2", "d3"]          # high tier, matrix order
    assert ids[4] == "d4" and log[4].priority == "middle"
    assert late == {"d4": "d1"}
    assert RespondedAfterShutdown("d1") in reports["d4"].flags


def test_turn_off_skip_retries_once_then_forces():
    matrix = DeviceMatrix([RosterEntry(f"d{i}", EUIS[f"d{i}"]) for i in range(3)])
    reports = make_reports(matrix, responded={"d0", "d1", "d2"})

    class Stubborn:
        def prompt(self, action):
            return action.device_id != "d1"  # never confirms d1

    log, _ = turn_off_sequence(matrix, reports, Stubborn(),
                               FakeWakeClient({}), VirtualClock(0.0), 5.0)
    assert [r.device_id for r in log] == ["d0", "d2", "d1"]  # retried at queue end
    assert [r.confirmed for r in log] == [True, True, False]


priorities = {"high": 0, "middle": 1, "low": 2}


@given(
    n=st.integers(2, 7),
    responded_bits=st.lists(st.booleans(), min_size=7, max_size=7),
    wake_rules=st.lists(
        st.tuples(st.integers(0, 6), st.integers(0, 6), st.floats(0.1, 0.9)),
        max_size=4,
    ),
    skips=st.lists(st.integers(0, 2), min_size=7, max_size=7),
)
@settings(max_examples=120, deadline=None,
          suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_turn_off_ordering_property(n, responded_bits, wake_rules, skips):
    """Shutdown log is a roster permutation with high < middle < low, and
    every middle-tier device was detected after an earlier shutdown."""
    ids = [f"d{i}" for i in range(n)]
    matrix = DeviceMatrix([RosterEntry(d, EUIS[d]) for d in ids])
    responded = {d for d, bit in zip(ids, responded_bits) if bit}
    reports = make_reports(matrix, responded)
    recheck = 10.0

    # silent device ids[i] wakes shortly after the k-th shutdown
    wake = {}
    for i, k, frac in wake_rules:
        if i < n and ids[i] not in responded:
            wake.setdefault(EUIS[ids[i]], []).append(k * recheck + frac * recheck)

    class SkipSome:
        def __init__(self):
            self.left = {ids[i]: skips[i] for i in range(n)}

        def prompt(self, action):
            if self.left.get(action.device_id, 0) > 0:
                self.left[action.device_id] -= 1
                return False
            return True

    log, late = turn_off_sequence(matrix, reports, SkipSome(),
                                  FakeWakeClient(wake), VirtualClock(0.0), recheck)

    assert sorted(r.device_id for r in log) == sorted(ids)  # permutation
    ranks = [priorities[r.priority] for r in log]
    assert ranks == sorted(ranks)  # high before middle before low
    position = {r.device_id: i for i, r in enumerate(log)}
    for r in log:
        if r.priority == "middle":
            flags = [f for f in reports[r.device_id].flags
                     if isinstance(f, RespondedAfterShutdown)]
            assert len(flags) == 1
            assert position[flags[0].after_id] < position[r.device_id]
    # a device skipped twice is logged unconfirmed
    for i, device_id in enumerate(ids):
        rec = next(r for r in log if r.device_id == device_id)
        assert rec.confirmed == (skips[i] < 2)


# --- output files ------------------------------------------------------------------

def sample_result():
    world, matrix = live_fixture()
    operator = SimulatedOperator(world)
    settings_ = ExperimentSettings(name="live", duration=100.0, probe_window=15.0,
                                   recheck_window=15.0, turnon_step=1.0)
    return world, run_experiment(matrix, operator, world, WorldClock(world), settings_)


def test_run_experiment_matches_world_ground_truth_exactly():
    world, result = sample_result()
    truth = world.ground_truth(result.start_ts, result.end_ts)
    assert sum(s - d for d, s in truth.values()) >= 3  # real interior losses
    for device_id, (delivered, sent) in truth.items():
        report = result.reports[device_id]
        assert (report.delivered, report.sent) == (delivered, sent)
    assert result.turn_on_failures == set()
    assert [r.priority for r in result.shutdown_log] == ["high"] * 5


def test_write_output_and_parse_report_roundtrip(tmp_path):
    world, result = sample_result()
    report_path = tmp_path / "report.txt"
    ts_path = tmp_path / "ts.txt"
    write_output(result, report_path, ts_path)

    parsed = parse_report(report_path)
    assert parsed.name == "live"
    assert parsed.start_ts == result.start_ts
    assert parsed.end_ts == result.end_ts
    assert parsed.turn_on_failures == result.turn_on_failures
    assert parsed.late_responders == result.late_responders
    for device_id, report in result.reports.items():
        assert (parsed.reports[device_id].delivered,
                parsed.reports[device_id].sent) == (report.delivered, report.sent)

    body = [l for l in report_path.read_text().splitlines() if not l.startswith("#")]
    assert len(body) == len(result.matrix)  # each device exactly once
    header = report_path.read_text().splitlines()[0]
    assert header.startswith("# experiment live start ")

    ts_lines = ts_path.read_text().splitlines()
    times = [float(l.split()[2]) for l in ts_lines]
    assert times == sorted(times)
    assert len(ts_lines) == sum(r.delivered for r in result.reports.values())


def test_write_output_failed_device_gets_zero_line_and_flag(tmp_path):
    matrix = DeviceMatrix([RosterEntry("d1", EUIS["d1"])])
    from lorascale.controller import ExperimentResult
    result = ExperimentResult(
        name="x", matrix=matrix,
        reports={"d1": DeviceReport("d1", 0, 0, {TurnOnFailed()})},
        turn_on_failures={"d1"}, late_responders={}, shutdown_log=[],
        start_ts=1.0, end_ts=2.0, packets={"d1": []},
    )
    report_path = tmp_path / "r.txt"
    write_output(result, report_path, tmp_path / "t.txt")
    text = report_path.read_text()
    assert "# turn-on-failed d1\n" in text
    assert "\nd1 0 0\n" in text


def test_scripted_operator_replay_and_exhaustion():
    operator = ScriptedOperator([True, False])
    assert operator.prompt(TurnOn("a")) is True
    assert operator.prompt(TurnOff("a")) is False
    with pytest.raises(OrchestrationError, match="exhausted"):
        operator.prompt(TurnOn("b"))


def test_settings_validation():
    with pytest.raises(ValueError):
        ExperimentSettings(name="bad name", duration=1.0, probe_window=0, recheck_window=0)
    with pytest.raises(ValueError):
        ExperimentSettings(name="x", duration=0.0, probe_window=0, recheck_window=0)
