import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from woin_sim.pca import (AssignmentProblem, SlaTracker, advance_window, buffer_state, classify,
                          estimate_drop_risk, payment_entry, payment_matrix, solve_assignment, traffic_entry)
from woin_sim.traffic import Packet

from .oracles import best_assignment, drop_risk_by_scan, load_fixture, window_by_resum


@pytest.mark.parametrize("sla_used,backlog,expected", [(1000, 500, (0, 500)), (800, 500, (200, 300)), (300, 500, (500, 0))])
def test_classify_cases(sla_used, backlog, expected):
    assert classify(sla_used, 1000, backlog) == expected


@given(st.integers(0, 5000), st.integers(0, 5000), st.integers(0, 5000), st.integers(0, 500))
def test_classify_conserves_and_is_monotone(sla_used, allowance, backlog, extra):
    sla, asla = classify(sla_used, allowance, backlog)
    assert sla + asla == backlog and sla >= 0 and asla >= 0
    assert classify(sla_used + extra, allowance, backlog)[0] <= sla


def test_classify_rejects_negative_buffer():
    with pytest.raises(ValueError):
        classify(0, 10, -1)


def test_window_ring_update():
    t = SlaTracker(sla_rate=10, window=2)
    advance_window(t, 100)
    advance_window(t, 100)
    advance_window(t, 50)
    assert list(t.entries) == [100, 50] and t.sla_used == 150
    for _ in range(2):
        t.advance(0)
    assert t.sla_used == 0
    assert t.allowance == 30


def test_window_matches_resum_oracle():
    fx = load_fixture("sla_window_resum")
    t = SlaTracker(sla_rate=1, window=fx["input"]["window"])
    got = []
    for x in fx["input"]["pushes"]:
        t.advance(x)
        got.append(t.sla_used)
    assert got == fx["expected"]["sla_used"]


@given(st.lists(st.integers(0, 10_000), max_size=300), st.integers(1, 50))
def test_window_phi_always_resums(pushes, window):
    t = SlaTracker(sla_rate=1, window=window)
    for x, want in zip(pushes, window_by_resum(pushes, window)):
        t.advance(x)
        assert t.sla_used == want


@pytest.mark.parametrize("asla,expected", [(0, 0), (250, 1), (251, 2), (1000, 4)])
def test_buffer_state(asla, expected):
    assert buffer_state(asla, 1000, 4) == expected


def test_buffer_state_validation():
    with pytest.raises(ValueError):
        buffer_state(1001, 1000, 4)
    with pytest.raises(ValueError):
        buffer_state(10, 1000, 0)


@given(st.integers(0, 20_000), st.integers(1, 8))
def test_buffer_state_zero_iff_empty(asla, n):
    s = buffer_state(asla, 20_000, n)
    assert 0 <= s <= n and (s == 0) == (asla == 0)


def test_payment_entry_cases():
    assert payment_entry(1000, 1000, 1, 3, 500) == 1500
    assert payment_entry(800, 1000, 1, 3, 500) == 1100
    assert payment_entry(300, 1000, 1, 3, 500) == 500


@given(st.integers(0, 3000), st.integers(1, 3000), st.floats(1, 2), st.floats(2, 6))
def test_payment_entry_continuous_at_boundaries(allowance, w, base_price, price):
    # sla_used == allowance: cases 1 and 2 agree; sla_used + w == allowance: cases 2 and 3 agree
    assert payment_entry(allowance, allowance, base_price, price, w) == pytest.approx(price * w)
    sla_used = allowance - w
    if sla_used >= 0:
        assert payment_entry(sla_used, allowance, base_price, price, w) == pytest.approx(base_price * w)
        assert payment_entry(sla_used - 1e-9, allowance, base_price, price, w) == pytest.approx(base_price * w)


def test_payment_matrix_matches_scalar():
    rng = np.random.default_rng(0)
    sla_used = rng.integers(0, 2000, 6).astype(float)
    allowance = rng.integers(0, 2000, 6).astype(float)
    price = rng.choice([2.0, 3.0, 4.0, 5.0], 6)
    w = rng.integers(0, 600, (6, 8)).astype(float)
    m = payment_matrix(sla_used, allowance, 1.0, price, w)
    for i in range(6):
        for j in range(8):
            assert m[i, j] == pytest.approx(payment_entry(sla_used[i], allowance[i], 1.0, price[i], w[i, j]))


def test_traffic_entry():
    assert traffic_entry(700, 500) == 500
    assert traffic_entry(0, 500) == 0
    assert traffic_entry(700, 0) == 0


def _pkts(rows):
    return [Packet(r["id"], 0, r["size"], r["gen_time"], r["deadline"], sla=r["sla"]) for r in rows]


def test_drop_risk_examples():
    assert estimate_drop_risk(_pkts([{"id": 0, "size": 100, "gen_time": 0, "deadline": 5000, "sla": False}]), 4500) == 0
    both = _pkts([{"id": 0, "size": 100, "gen_time": 0, "deadline": 500, "sla": True},
                  {"id": 1, "size": 60, "gen_time": 0, "deadline": 900, "sla": True}])
    assert estimate_drop_risk(both, 0) == 160


def test_drop_risk_matches_scan_fixture():
    fx = load_fixture("drop_risk_mixed")
    assert estimate_drop_risk(_pkts(fx["input"]["packets"]), fx["input"]["now"]) == fx["expected"]["drop_risk"]


@given(st.lists(st.tuples(st.integers(1, 500), st.integers(0, 4000), st.booleans()), max_size=30),
       st.integers(0, 4000))
def test_drop_risk_matches_scan(rows, now):
    dicts = [{"id": i, "size": s, "gen_time": 0, "deadline": d, "sla": f} for i, (s, d, f) in enumerate(rows)]
    assert estimate_drop_risk(_pkts(dicts), now) == drop_risk_by_scan(dicts, now)


def test_assignment_2x2_fixture():
    fx = load_fixture("assignment_2x2")
    cols, obj = solve_assignment(AssignmentProblem.build(np.array(fx["input"]["payoff"])))
    assert cols == fx["expected"]["cols"] == [1, 0]
    assert obj == fx["expected"]["objective"] == 7


def test_single_ue_single_rc():
    cols, obj = solve_assignment(AssignmentProblem.build(np.array([[9]]), np.array([0]), 6))
    assert cols == [0] and obj == 9


def test_dummy_penalty_fixture():
    fx = load_fixture("assignment_dummy_penalty")
    inp = fx["input"]
    cols, obj = solve_assignment(AssignmentProblem.build(np.array(inp["payoff"]), np.array(inp["drop_risk"]), inp["p_bar"]))
    assert obj == fx["expected"]["objective"]
    assert cols == fx["expected"]["cols"]


def test_non_square_rejected():
    with pytest.raises(ValueError):
        solve_assignment(AssignmentProblem(2, 2, np.zeros((2, 3))))


def test_fewer_ues_than_rcs_pads_rows():
    p = AssignmentProblem.build(np.array([[1, 5, 2]]))
    assert p.weights.shape == (3, 3)
    cols, obj = solve_assignment(p)
    assert cols == [1] and obj == 5


def test_sla_priority_by_construction():
    # UE 0 has SLA bytes at risk, UE 1 only above-SLA demand at the top price;
    # both can send the same w on the single RC
    w = 200
    payoff = np.array([[1.0 * w], [5.0 * w]])
    cols, _ = solve_assignment(AssignmentProblem.build(payoff, np.array([w, 0]), p_bar=6))
    assert cols[0] == 0 and cols[1] is None


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_solver_matches_enumeration(data):
    n = data.draw(st.integers(1, 5))
    m = data.draw(st.integers(1, 5))
    payoff = data.draw(st.lists(st.lists(st.integers(0, 10_000), min_size=m, max_size=m), min_size=n, max_size=n))
    drop_risk = data.draw(st.lists(st.integers(0, 1000), min_size=n, max_size=n))
    cols, obj = solve_assignment(AssignmentProblem.build(np.array(payoff), np.array(drop_risk), 6))
    best, _ = best_assignment(payoff, drop_risk, 6)
    assert obj == best
    used = [c for c in cols if c is not None]
    assert len(used) == len(set(used)) == min(n, m)
