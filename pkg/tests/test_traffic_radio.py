import math
from itertools import count

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from woin_sim.config import ChannelConfig
from woin_sim.radio import (McsTable, UeLinks, bytes_per_rc, default_table, load_mcs_table, noise_dbm,
                            pathloss, refresh_links, tx_power, ue_links)
from woin_sim.traffic import BackgroundSource, VoipSource, background_step, place_ues, voip_step

from .oracles import load_fixture, mcs_by_scan


def voip(**kw):
    args = dict(ue=0, mean_on_s=1.0, mean_off_s=1.5, talkspurt_rate_bps=64_000, payload_bytes=160,
                deadline_us=100_000)
    args.update(kw)
    return VoipSource(**args)


# VoIP ------------------------------------------------------------------------

def test_off_source_emits_nothing():
    src = voip()
    src.on, src.next_switch = False, 5e6
    assert voip_step(src, np.random.default_rng(0), 1_000_000) == []


def test_on_source_emits_one_packet_per_interval():
    src = voip()
    src.on, src.next_switch, src.next_emit = True, 1e9, 0.0
    out = voip_step(src, np.random.default_rng(0), 20_000)
    assert len(out) == 1 and out[0].size == 160 and out[0].deadline == out[0].gen_time + 100_000


def test_voip_rejects_non_positive_step():
    with pytest.raises(ValueError):
        voip_step(voip(), np.random.default_rng(0), 0)


def test_voip_long_run_on_fraction():
    fx = load_fixture("voip_on_fraction")
    src = voip().start(np.random.default_rng(3))
    rng = np.random.default_rng(4)
    on = 0
    steps = 1_000_000
    # one packet interval per step: 2e4 s in total, long enough for the
    # sampling spread of the ON fraction (about 0.4 %) to sit inside 1 %
    for _ in range(steps):
        voip_step(src, rng, 20_000)
        on += src.on
    assert abs(on / steps - fx["expected"]["on_fraction"]) <= fx["expected"]["tolerance"]


def test_voip_ids_unique_and_times_non_decreasing():
    ids = count()
    src = voip().start(np.random.default_rng(1))
    rng = np.random.default_rng(2)
    pkts = [p for _ in range(20_000) for p in voip_step(src, rng, 1000, ids)]
    assert len({p.id for p in pkts}) == len(pkts)
    assert all(a.gen_time <= b.gen_time for a, b in zip(pkts, pkts[1:]))


# placement -------------------------------------------------------------------

def test_zero_intensity_places_nobody():
    assert len(place_ues(np.random.default_rng(0), 0.0, 288.7)) == 0


def test_placement_mean_count_and_support():
    fx = load_fixture("ppp_mean_count")
    inp = fx["input"]
    rng = np.random.default_rng(5)
    counts = []
    for _ in range(10_000):
        pos = place_ues(rng, inp["intensity_per_km2"], inp["radius_m"])
        counts.append(len(pos))
        if len(pos):
            assert np.all(np.hypot(pos[:, 0], pos[:, 1]) <= inp["radius_m"])
    mean = fx["expected"]["mean"]
    assert abs(np.mean(counts) - mean) <= fx["expected"]["rel_tolerance"] * mean


def test_negative_intensity_rejected():
    with pytest.raises(ValueError):
        place_ues(np.random.default_rng(0), -1.0, 100)


# background ------------------------------------------------------------------

def bg(load, **kw):
    return BackgroundSource(offered_load=load, link_rate_bps=1e8, deadline_us=300_000, **kw)


def test_zero_background_load_is_silent():
    assert background_step(bg(0.0), np.random.default_rng(0), 1000) == []


def test_background_rate_and_size_support():
    fx = load_fixture("background_rate")
    inp = fx["input"]
    src = bg(inp["offered_load"])
    rng = np.random.default_rng(9)
    total = 0
    for _ in range(inp["seconds"] * 1000):
        for p in background_step(src, rng, 1000):
            assert 64 <= p.size <= 1518 and p.cls == "data"
            total += p.size
    target = fx["expected"]["bytes_per_s"]
    assert abs(total / inp["seconds"] - target) <= fx["expected"]["rel_tolerance"] * target


@pytest.mark.parametrize("load", [0.1, 0.5, 0.9])
def test_background_load_within_two_percent(load):
    src = bg(load)
    rng = np.random.default_rng(int(load * 10))
    total = sum(p.size for _ in range(5000) for p in background_step(src, rng, 1000))
    assert abs(total / 5.0 - load * 1e8 / 8) <= 0.02 * load * 1e8 / 8


def test_background_sla_marking_respects_window():
    from woin_sim.pca import SlaTracker
    tracker = SlaTracker(sla_rate=2000, window=10)
    src = bg(0.5, sla=tracker, asla_price=2.0)
    rng = np.random.default_rng(1)
    sla_per_ms = []
    for _ in range(200):
        out = background_step(src, rng, 1000)
        sla_per_ms.append(sum(p.size for p in out if p.sla))
        for p in out:
            assert p.value_per_byte == (1.0 if p.sla else 2.0)
    # never more SLA bytes in any window than the allowance
    for k in range(len(sla_per_ms)):
        assert sum(sla_per_ms[max(0, k - 9):k + 1]) <= tracker.allowance


# radio -----------------------------------------------------------------------

def test_pathloss_examples():
    assert pathloss(1000) == pytest.approx(128.1)
    assert pathloss(400) - pathloss(200) == pytest.approx(37.6 * math.log10(2))
    with pytest.raises(ValueError):
        pathloss(0)


def test_tx_power_examples():
    assert tx_power(100, 6) == pytest.approx(1.78, abs=0.01)
    assert tx_power(140, 6) == 24.0
    assert tx_power(100, 1) == pytest.approx(-6.0)
    with pytest.raises(ValueError):
        tx_power(100, 0)


def test_tx_power_printed_max_variant():
    assert tx_power(100, 6, mode="max") == 24.0


def test_mcs_outage_and_saturation():
    t = default_table()
    assert bytes_per_rc(t.thresholds_db[0] - 0.01) == 0
    assert bytes_per_rc(100.0) == t.max_bytes


def test_mcs_default_scan_matches_fixture():
    fx = load_fixture("mcs_default_scan")
    got = default_table().lookup(np.array(fx["input"]["sinr_db"])).tolist()
    assert got == fx["expected"]["bytes"]
    assert got == sorted(got)


@given(st.floats(-30, 40), st.floats(0, 10))
def test_mcs_monotone(s, ds):
    t = default_table()
    assert t.lookup(s) <= t.lookup(s + ds)
    assert t.lookup(s) == mcs_by_scan(t.thresholds_db.tolist(), t.bytes_per_rc.tolist(), s)


def test_mcs_table_validation(tmp_path):
    with pytest.raises(ValueError):
        McsTable(np.array([1.0, 0.5]), np.array([10, 20]))
    with pytest.raises(ValueError):
        McsTable(np.array([0.0, 1.0]), np.array([20, 10]))
    f = tmp_path / "m.json"
    f.write_text('[{"threshold_db": 0, "bytes_per_rc": 50}, {"threshold_db": 3, "bytes_per_rc": 90}]')
    t = load_mcs_table(f)
    assert t.lookup(1.0) == 50 and t.max_bytes == 90
    f.write_text('[{"threshold": 0}]')
    with pytest.raises(ValueError, match="threshold_db"):
        load_mcs_table(f)


def test_refresh_with_no_ues_is_empty():
    cfg = ChannelConfig()
    links = UeLinks(np.zeros(0), np.zeros(0))
    st_ = refresh_links(links, cfg, np.random.default_rng(0))
    assert st_.q.shape == (0, 8)


def test_sinr_without_interference_is_signal_minus_noise():
    cfg = ChannelConfig(fading="none")
    links = UeLinks(np.array([110.0]), np.array([10.0]))
    st_ = refresh_links(links, cfg, np.random.default_rng(0), interference=np.zeros(8))
    assert np.allclose(st_.sinr_db, 10.0 - 110.0 - noise_dbm(cfg))


def test_without_fading_q_is_static():
    cfg = ChannelConfig(fading="none")
    links = ue_links(np.array([[100.0, 0.0], [0.0, 250.0]]), cfg, np.random.default_rng(0))
    zero = np.zeros(8)
    a = refresh_links(links, cfg, np.random.default_rng(1), interference=zero).q
    b = refresh_links(links, cfg, np.random.default_rng(2), interference=zero).q
    assert np.array_equal(a, b)


def test_q_bounded_and_deterministic():
    cfg = ChannelConfig()
    pos = place_ues(np.random.default_rng(0), 60, 288.7, 35)
    links = ue_links(pos, cfg, np.random.default_rng(1))
    a = refresh_links(links, cfg, np.random.default_rng(7))
    b = refresh_links(links, cfg, np.random.default_rng(7))
    assert np.array_equal(a.q, b.q)
    assert a.q.min() >= 0 and a.q.max() <= default_table().max_bytes


def test_farther_ue_never_gets_more_bytes():
    cfg = ChannelConfig(fading="none", shadowing_db=0.0)
    d = np.linspace(40, 280, 30)
    links = ue_links(np.column_stack([d, np.zeros_like(d)]), cfg, np.random.default_rng(0))
    q = refresh_links(links, cfg, np.random.default_rng(1), interference=np.full(8, 1e-12)).q[:, 0]
    assert all(a >= b for a, b in zip(q, q[1:]))


@settings(max_examples=50)
@given(st.floats(10, 2000), st.floats(0, 1))
def test_open_loop_power_never_exceeds_cap(d, pathloss_factor):
    cfg = ChannelConfig(pathloss_factor=pathloss_factor)
    assert tx_power(pathloss(d), 6, cfg.p_max_dbm, cfg.p0_dbm, pathloss_factor) <= 24.0
