import pytest

from woin_sim import ConfigError, build_config, run
from woin_sim.config import load_overlay
from woin_sim.engine import EventKind, EventQueue, RngStreams, SchedulingError, SimEvent
from woin_sim.network import Network

SMALL = {"onu_count": 3, "link_rate_bps": 1e8, "sim_duration_s": 0.3}


def test_pop_order_follows_time():
    q = EventQueue()
    q.at(5, EventKind.TTI_TICK)
    q.at(3, EventKind.TTI_TICK)
    assert [q.pop_next().time, q.pop_next().time] == [3, 5]


def test_equal_times_pop_in_insertion_order():
    q = EventQueue()
    a = q.at(7, EventKind.DATA_ARRIVAL, payload="a")
    b = q.at(7, EventKind.DATA_ARRIVAL, payload="b")
    assert a.seq < b.seq
    assert [q.pop_next().payload, q.pop_next().payload] == ["a", "b"]


def test_equal_times_rank_traffic_before_tti_before_cycle():
    q = EventQueue()
    q.at(10, EventKind.CYCLE_START)
    q.at(10, EventKind.TTI_TICK)
    q.at(10, EventKind.PACKET_GEN)
    kinds = [q.pop_next().kind for _ in range(3)]
    assert kinds == [EventKind.PACKET_GEN, EventKind.TTI_TICK, EventKind.CYCLE_START]


def test_event_in_the_past_is_rejected():
    q = EventQueue()
    q.at(2, EventKind.TTI_TICK)
    q.pop_next()
    with pytest.raises(SchedulingError):
        q.schedule(SimEvent(1, EventKind.TTI_TICK, 0))


def test_rng_stream_depends_only_on_seed_and_name():
    a, b = RngStreams(42), RngStreams(42)
    b.get("other").random(10)  # touching another stream must not matter
    assert a.get("traffic.cell0").random(5).tolist() == b.get("traffic.cell0").random(5).tolist()
    assert a.get("x").random() != RngStreams(43).get("x").random()
    assert RngStreams(1).get("a").random() != RngStreams(1).get("b").random()


def test_zero_duration_gives_empty_report():
    rep = run(build_config(SMALL, {"sim_duration_s": 0}))
    row = rep.tables["end_to_end"][0]
    assert row["generated"] == 0 and row["forwarded"] == 0 and row["cycles"] == 0
    assert rep.ok


def test_same_seed_gives_identical_serialization():
    cfg = build_config(SMALL, {"seed": 5, "load": 0.8})
    assert run(cfg).to_json() == run(cfg).to_json()


def test_different_seeds_change_stochastic_counters():
    a = run(build_config(SMALL, {"seed": 1, "load": 0.8})).tables["end_to_end"][0]
    b = run(build_config(SMALL, {"seed": 2, "load": 0.8})).tables["end_to_end"][0]
    assert (a["generated"], a["forwarded"]) != (b["generated"], b["forwarded"])


def test_clock_is_monotone_and_tti_cadence_exact():
    cfg = build_config(SMALL, {"lte_onus": 2, "load": 0.6})
    net = Network(cfg)
    seen = []
    orig = net.q.pop_next

    def spy():
        ev = orig()
        seen.append((ev.time, ev.kind, ev.target))
        return ev

    net.q.pop_next = spy
    net.run()
    times = [t for t, _, _ in seen]
    assert times == sorted(times)
    for cell in (0, 1):
        ticks = [t for t, k, c in seen if k == EventKind.TTI_TICK and c == cell]
        assert ticks == list(range(0, 300_000, 1000))


def test_invalid_config_reports_field_paths():
    with pytest.raises(ConfigError) as err:
        build_config({"onu_count": 0, "cell": {"price_levels": [3.0, 2.0]}})
    locs = [loc for loc, _ in err.value.errors]
    assert "onu_count" in locs
    assert any(loc.startswith("cell") for loc in locs)


def test_unknown_field_rejected():
    with pytest.raises(ConfigError) as err:
        build_config({"channel": {"fadin": "none"}})
    assert err.value.errors[0][0] == "channel.fadin"


def test_cross_field_rules():
    with pytest.raises(ConfigError):
        build_config({"lte_onus": 5, "onu_count": 4})
    with pytest.raises(ConfigError):
        build_config({"propagation_delay_us": [100, 50]})
    with pytest.raises(ConfigError):
        build_config({"lte_share": 0})


def test_overlay_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_overlay(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        load_overlay(tmp_path / "missing.json")
    arr = tmp_path / "arr.json"
    arr.write_text("[1]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_overlay(arr)


def test_defaults_follow_the_parameter_tables():
    cfg = build_config({})
    assert (cfg.onu_count, cfg.link_rate_bps, cfg.guard_interval_us, cfg.max_cycle_us) == (16, 1e9, 5, 2000)
    assert cfg.onu_buffer_bytes == 10_000_000
    assert cfg.channel.rc_count == 8
    assert cfg.cell.p_bar == 6.0
