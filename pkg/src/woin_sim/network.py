"""The simulation model: LTE cells feeding ONU-eNodeBs, background ONUs and
an OLT polling all of them, driven by one event queue.

LTE TTIs (1 ms) and EPON polling cycles (up to ``max_cycle_us``) are
independent event chains.  They meet only in the ONU queues: packets a UE
finishes sending in one TTI are enqueued at its ONU at the next TTI tick.
"""
from __future__ import annotations

import math
from array import array
from collections import deque
from dataclasses import dataclass, field
from itertools import count
from typing import Optional

import numpy as np

from . import auction
from .config import TTI_US, LteScheduler, RunConfig, SchedulerMode
from .engine import EventKind, EventQueue, RngStreams
from .lasa import LaState, check_probs
from .onu import BatchBook, OnuQueues, ipact_grant
from .pca import AssignmentProblem, SlaTracker, buffer_state, classify, payment_matrix, solve_assignment
from .radio import load_mcs_table, refresh_links, ue_links
from .traffic import BackgroundSource, Packet, VoipSource, background_step, place_ues, voip_step

# drop causes
LTE_DEADLINE = "lte_deadline"
ONU_DEADLINE = "onu_deadline"
OVERFLOW = "overflow"
DROP_CAUSES = (LTE_DEADLINE, ONU_DEADLINE, OVERFLOW)


@dataclass
class Ue:
    id: int
    cell: int
    source: VoipSource
    tracker: SlaTracker
    capacity: int
    base_price: float
    learner: Optional[LaState] = None
    marked: bool = False
    buffer: deque = field(default_factory=deque)
    bytes: int = 0
    # counters
    generated: int = 0
    forwarded: int = 0
    forwarded_bytes: int = 0
    dropped: int = 0
    paid: float = 0.0  # value of forwarded packets
    delay_sum_us: int = 0
    late_asla_bytes: int = 0  # above-SLA bytes forwarded in the second half
    late_asla_paid: float = 0.0
    decisions: int = 0
    resolutions: int = 0


@dataclass
class Onu:
    id: int
    prop_us: int
    queues: OnuQueues
    cell: Optional[int] = None  # LTE cell served, None for a background ONU
    background: Optional[BackgroundSource] = None
    seq: int = 0
    discounts: float = 0.0
    payments: float = 0.0
    gross: float = 0.0
    granted_bytes: int = 0
    forwarded: int = 0
    forwarded_bytes: int = 0
    drops: dict = field(default_factory=lambda: {c: 0 for c in DROP_CAUSES})


@dataclass
class Cell:
    id: int
    onu: int
    ues: list
    links: object
    in_air: list = field(default_factory=list)  # completed last TTI, not yet at the ONU


class Tally:
    """Run-wide packet counters split by final SLA mark."""

    def __init__(self):
        self.generated = 0
        self.lte_generated = 0
        self.forwarded = {True: 0, False: 0}
        self.drops = {c: {True: 0, False: 0} for c in DROP_CAUSES}
        self.delays_us = array("q")
        self.lte_delays_us = array("q")

    def dropped(self, sla: Optional[bool] = None) -> int:
        if sla is None:
            return sum(d[True] + d[False] for d in self.drops.values())
        return sum(d[sla] for d in self.drops.values())

    @property
    def forwarded_total(self) -> int:
        return self.forwarded[True] + self.forwarded[False]


class Network:
    def __init__(self, cfg: RunConfig, trace_la: bool = False, trace_auction: bool = False):
        self.cfg = cfg
        self.rng = RngStreams(cfg.seed)
        self.q = EventQueue()
        self.ids = count()
        self.tally = Tally()
        self.book = BatchBook()
        self.table = load_mcs_table(cfg.channel.mcs_table_path)
        self.mode = cfg.scheduler_mode
        self.lte_sched = cfg.effective_lte_scheduler
        self.capacity = cfg.cycle_capacity_bytes
        self.w_max = self.capacity // cfg.onu_count
        self.p_bar = cfg.cell.p_bar
        self.half_us = cfg.duration_us // 2
        self.trace_la = [] if trace_la else None
        self.trace_auction = [] if trace_auction else None
        self.cycles = 0
        self.sla_oversubscribed = 0
        self.capacity_violations = 0
        self.olt_revenue = 0.0
        self.in_transit: dict[int, list[Packet]] = {}
        self._build()

    # ------------------------------------------------------------------ setup
    def _build(self):
        cfg = self.cfg
        lo, hi = cfg.propagation_delay_us
        props = self.rng.get("propagation").integers(lo, hi + 1, cfg.onu_count).tolist()
        self.onus = [Onu(i, int(props[i]), OnuQueues(cfg.onu_buffer_bytes)) for i in range(cfg.onu_count)]
        self.cells: list[Cell] = []
        self.ues: list[Ue] = []
        for c in range(cfg.lte_onus):
            self._build_cell(c)
        bg = list(range(cfg.lte_onus, cfg.onu_count))
        weights = cfg.background.weights or [1.0] * len(bg)
        wsum = sum(weights)
        share = cfg.background_rate_bps / cfg.link_rate_bps
        for onu_id, w in zip(bg, weights):
            frac = share * w / wsum
            sla_rate = cfg.sla_fraction * frac * cfg.link_rate_bps / 8e6 * TTI_US
            self.onus[onu_id].background = BackgroundSource(
                offered_load=cfg.load * frac, link_rate_bps=cfg.link_rate_bps,
                deadline_us=cfg.deadlines.budget_us(cfg.background.packet_class),
                min_bytes=cfg.background.min_packet_bytes, max_bytes=cfg.background.max_packet_bytes,
                cls=cfg.background.packet_class, base_price=cfg.cell.base_price,
                asla_price=cfg.background.asla_price,
                sla=SlaTracker(sla_rate, cfg.cell.sla_window_ttis), _ids=self.ids)

    def _build_cell(self, c: int):
        cfg, cc = self.cfg, self.cfg.cell
        place = self.rng.get(f"placement.cell{c}")
        pos = place_ues(place, cc.ue_intensity_per_km2, cc.radius_m, cc.min_distance_m)
        links = ue_links(pos, cfg.channel, self.rng.get(f"shadowing.cell{c}"))
        n = len(pos)
        self.onus[c].cell = c
        cell = Cell(c, c, [], links)
        traffic = self.rng.get(f"traffic.cell{c}")
        per_ue_bps = cfg.lte_cell_rate_bps / n if n else 0.0
        # marked UEs are sized against the expected UE count so their offered
        # load does not swing with the Poisson draw of the cell population
        nominal = cc.ue_intensity_per_km2 * math.pi * (cc.radius_m ** 2 - cc.min_distance_m ** 2) / 1e6
        marked_bps = cfg.lte_cell_rate_bps / nominal if nominal > 0 else 0.0
        learn_all = cc.learning and cc.marked_ues == 0 and self.lte_sched is LteScheduler.PCA
        budget = cfg.deadlines.budget_us("voice")
        for k in range(n):
            marked = k < cc.marked_ues
            mean_bps = cc.marked_load * marked_bps if marked else cfg.load * per_ue_bps
            if cfg.voip.scale_with_load:
                talk = mean_bps / cfg.voip.on_fraction
            else:
                talk = cfg.voip.talkspurt_rate_bps
            sla_rate = 0.0 if (marked and cc.marked_gaa) else cfg.sla_fraction * per_ue_bps / 8e6 * TTI_US
            learner = None
            if self.lte_sched is LteScheduler.PCA and cc.learning and (learn_all or marked):
                learner = LaState(cc.buffer_states, list(cc.price_levels), self.p_bar, cfg.la.printed_penalty)
            src = VoipSource(len(self.ues), cfg.voip.mean_on_s, cfg.voip.mean_off_s, max(talk, 1e-9),
                             cfg.voip.payload_bytes, budget)
            if talk > 0:
                src.start(traffic, 0)
            else:
                src.mean_off_s = math.inf
            ue = Ue(len(self.ues), c, src, SlaTracker(sla_rate, cc.sla_window_ttis), cc.ue_buffer_bytes,
                    cc.base_price, learner, marked)
            cell.ues.append(ue)
            self.ues.append(ue)
        self.cells.append(cell)

    # ------------------------------------------------------------------- run
    def run(self):
        end = self.cfg.duration_us
        if end > 0:
            for cell in self.cells:
                self.q.at(0, EventKind.TTI_TICK, cell.id)
            for onu in self.onus:
                if onu.background is not None:
                    self.q.at(TTI_US, EventKind.PACKET_GEN, onu.id)
            self.q.at(0, EventKind.CYCLE_START, -1)
        handlers = {
            EventKind.PACKET_GEN: self._on_packet_gen,
            EventKind.TTI_TICK: self._on_tti,
            EventKind.CYCLE_START: self._on_cycle,
            EventKind.GRANT_ARRIVAL: self._on_grant,
            EventKind.DATA_ARRIVAL: self._on_data,
        }
        q = self.q
        last = 0
        while q._heap and q._heap[0][0] < end:
            ev = q.pop_next()
            if ev.time < last:
                raise RuntimeError("clock moved backwards")
            last = ev.time
            handlers[ev.kind](ev)
        return self

    # ------------------------------------------------------------ background
    def _on_packet_gen(self, ev):
        onu = self.onus[ev.target]
        src = onu.background
        rng = self.rng.get(f"background.onu{onu.id}")
        now = ev.time
        for p in background_step(src, rng, TTI_US):
            self.tally.generated += 1
            self._to_onu(onu, p)
        if now + TTI_US < self.cfg.duration_us:
            self.q.at(now + TTI_US, EventKind.PACKET_GEN, onu.id)

    def _to_onu(self, onu: Onu, p: Packet):
        p.onu_seq = onu.seq
        onu.seq += 1
        if not onu.queues.enqueue(p):
            self._drop(p, OVERFLOW, onu)

    def _drop(self, p: Packet, cause: str, onu: Optional[Onu] = None):
        self.tally.drops[cause][p.sla] += 1
        if onu is not None:
            onu.drops[cause] += 1
        if p.source >= 0:
            self.ues[p.source].dropped += 1
        if p.batch is not None:
            self._dispose(p, False)

    def _dispose(self, p: Packet, forwarded: bool):
        done = self.book.dispose(p, forwarded)
        if done is not None:
            batch, delivered = done
            self._resolve(batch.pending, delivered)

    def _resolve(self, pending, delivered: int):
        ue = self.ues[pending.ue]
        out = ue.learner.resolve(pending, delivered)
        ue.resolutions += 1
        if self.trace_la is not None:
            self.trace_la.append((self.q.now, pending.tti, ue.id, pending.state, pending.action,
                                  int(out.failed), delivered, *ue.learner.probs[pending.state].tolist()))

    # ------------------------------------------------------------------ LTE
    def _on_tti(self, ev):
        now = ev.time
        cell = self.cells[ev.target]
        onu = self.onus[cell.onu]
        # packets finished during the previous TTI reach the ONU
        for p in cell.in_air:
            self._to_onu(onu, p)
        cell.in_air = []
        if now > 0:
            self._generate(cell, now)
        active = []
        for ue in cell.ues:
            if ue.bytes:
                self._expire_ue(ue, now)
            if ue.bytes:
                active.append(ue)
            else:
                ue.tracker.advance(0)
        if active:
            self._schedule_tti(cell, active, now)
        if now + TTI_US < self.cfg.duration_us:
            self.q.at(now + TTI_US, EventKind.TTI_TICK, cell.id)

    def _generate(self, cell: Cell, now: int):
        rng = self.rng.get(f"traffic.cell{cell.id}")
        ids = self.ids
        tally = self.tally
        for ue in cell.ues:
            src = ue.source
            if src.mean_off_s == math.inf:
                src.clock = now
                continue
            for p in voip_step(src, rng, TTI_US, ids):
                tally.generated += 1
                tally.lte_generated += 1
                ue.generated += 1
                p.value_per_byte = ue.base_price
                if ue.bytes + p.size > ue.capacity:
                    p.sla = False
                    self._drop(p, OVERFLOW)
                    continue
                ue.buffer.append(p)
                ue.bytes += p.size

    def _sla_budget(self, ue: Ue) -> int:
        t = ue.tracker
        room = t.allowance - t.sla_used
        return int(math.floor(room)) if room > 0 else 0

    def _expire_ue(self, ue: Ue, now: int):
        buf = ue.buffer
        if buf[0].deadline >= now:
            return
        budget = self._sla_budget(ue)
        cum = 0
        while buf and buf[0].deadline < now:
            p = buf.popleft()
            left = p.size - p.sent
            p.sla = cum + left <= budget
            cum += left
            ue.bytes -= left
            self._drop(p, LTE_DEADLINE)

    def _schedule_tti(self, cell: Cell, active: list, now: int):
        cfg = self.cfg
        cc = cfg.cell
        tti = now // TTI_US
        n = len(active)
        horizon = now + TTI_US
        la_rng = self.rng.get(f"la.cell{cell.id}")
        backlogs = np.empty(n)
        window_used = np.empty(n)
        allowances = np.empty(n)
        prices = np.empty(n)
        drop_risk = np.zeros(n)
        rows = np.empty(n, dtype=np.int64)
        split = []
        plans = []
        for k, ue in enumerate(active):
            backlog = ue.bytes
            t = ue.tracker
            sla, asla = classify(t.sla_used, t.allowance, backlog)
            price = ue.base_price
            action = None
            if asla and ue.learner is not None:
                s = buffer_state(asla, ue.capacity, cc.buffer_states)
                action, price = ue.learner.choose(s, la_rng)
                plans.append((k, s, action))
            if sla:
                drop_risk[k] = self._drop_risk(ue, sla, horizon)
            backlogs[k] = backlog
            window_used[k] = t.sla_used
            allowances[k] = t.allowance
            prices[k] = price
            rows[k] = ue.id - cell.ues[0].id
            split.append((sla, asla))
        actions = {k: (s, a) for k, s, a in plans}
        links = refresh_links(cell.links, cfg.channel, self.rng.get(f"channel.cell{cell.id}"), self.table, cc.radius_m)
        w = np.minimum(links.q[rows], backlogs[:, None])
        if self.lte_sched is LteScheduler.PCA:
            payoff = payment_matrix(window_used, allowances, cc.base_price, prices, w)
            problem = AssignmentProblem.build(payoff, drop_risk, self.p_bar)
        else:
            problem = AssignmentProblem.build(w)
        cols, _ = solve_assignment(problem)
        for k, ue in enumerate(active):
            j = cols[k]
            sent = int(w[k, j]) if j is not None else 0
            sla, asla = split[k]
            done = self._send(ue, sent, sla, float(prices[k])) if sent else []
            sla_sent = min(sent, sla)
            ue.tracker.advance(sla_sent)
            cell.in_air.extend(done)
            if k in actions:
                s, a = actions[k]
                pending = ue.learner.decision(ue.id, tti, s, a, sla, asla)
                ue.decisions += 1
                asla_sent = sent - sla_sent
                if asla_sent == 0 or not done:
                    self._resolve(pending, sent if asla_sent == 0 else 0)
                else:
                    self.book.register((ue.id, tti), pending, done)

    def _drop_risk(self, ue: Ue, sla_budget: int, horizon: int) -> int:
        risk = 0
        cum = 0
        for p in ue.buffer:
            if p.deadline >= horizon:
                break
            left = p.size - p.sent
            cum += left
            if cum > sla_budget:
                break
            risk += left
        return risk

    def _send(self, ue: Ue, nbytes: int, sla_budget: int, price: float) -> list[Packet]:
        """Transmit ``nbytes`` from the head of the UE buffer, segmenting the
        last packet if needed; returns the packets completed."""
        buf = ue.buffer
        done = []
        rem = nbytes
        cum = 0
        while rem and buf:
            p = buf[0]
            left = p.size - p.sent
            if left > rem:
                p.sent += rem
                rem = 0
                break
            buf.popleft()
            rem -= left
            p.sent = p.size
            p.tail = left
            p.sla = cum + left <= sla_budget
            p.value_per_byte = ue.base_price if p.sla else price
            cum += left
            done.append(p)
        ue.bytes -= nbytes
        return done

    # ----------------------------------------------------------------- EPON
    def _on_cycle(self, ev):
        now = ev.time
        cfg = self.cfg
        onus = self.onus
        reports = [o.queues.make_report() for o in onus]
        n = len(onus)
        payments = [0.0] * n
        if self.mode is SchedulerMode.AUORA_LASA:
            sla_g, residual, over = auction.reserve_sla([r.r_sla for r in reports], self.capacity)
            self.sla_oversubscribed += over
            settle = auction.vcg_settle(reports, residual)
            asla_g = settle.plan.grants
            for i, o in enumerate(onus):
                if asla_g[i] or settle.discounts[i]:
                    d = float(settle.discounts[i])
                    pay = float(settle.payments[i])
                    o.discounts += d
                    o.payments += pay
                    o.gross += float(settle.gross[i])
                    payments[i] = pay
                    self.olt_revenue += pay
            if self.trace_auction is not None:
                for i, r in enumerate(reports):
                    self.trace_auction.append((self.cycles, i, r.r_sla, r.r_asla, r.v, asla_g[i],
                                               float(settle.discounts[i]), float(settle.payments[i])))
        else:
            sla_g = [0] * n
            asla_g = [ipact_grant(r.r_sla + r.r_asla, self.w_max) for r in reports]
        if sum(sla_g) + sum(asla_g) > self.capacity:
            self.capacity_violations += 1
        sched = auction.schedule_cycle(sla_g, asla_g, [o.prop_us for o in onus], now, cfg.link_rate_bps,
                                       cfg.guard_interval_us, cfg.report_bytes, cfg.max_cycle_us, payments)
        for g in sched.grants:
            o = onus[g.onu]
            o.granted_bytes += g.length
            self.q.at(g.start_us - o.prop_us, EventKind.GRANT_ARRIVAL, g.onu, g)
        self.cycles += 1
        nxt = max(sched.end_us, now + cfg.min_cycle_us)
        self.q.at(nxt, EventKind.CYCLE_START, -1)

    def _on_grant(self, ev):
        onu = self.onus[ev.target]
        g = ev.payload
        for p in onu.queues.drop_expired(ev.time):
            self._drop(p, ONU_DEADLINE, onu)
        if not g.length:
            return
        if self.mode is SchedulerMode.AUORA_LASA:
            sent = onu.queues.select_for_transmission(g.length)
        else:
            sent = onu.queues.select_fifo(g.length)
        if sent:
            key = id(sent)
            self.in_transit[key] = sent
            self.q.at(g.end_us, EventKind.DATA_ARRIVAL, onu.id, (key, sent))

    def _on_data(self, ev):
        key, sent = ev.payload
        del self.in_transit[key]
        onu = self.onus[ev.target]
        now = ev.time
        tally = self.tally
        late = now >= self.half_us
        for p in sent:
            tally.forwarded[p.sla] += 1
            d = now - p.gen_time
            tally.delays_us.append(d)
            onu.forwarded += 1
            onu.forwarded_bytes += p.size
            if p.source >= 0:
                tally.lte_delays_us.append(d)
                ue = self.ues[p.source]
                ue.forwarded += 1
                ue.forwarded_bytes += p.size
                ue.paid += p.value
                ue.delay_sum_us += d
                if late and not p.sla:
                    ue.late_asla_bytes += p.size
                    ue.late_asla_paid += p.value
                if p.batch is not None:
                    self._dispose(p, True)

    # ---------------------------------------------------------------- audits
    def in_flight(self) -> int:
        n = sum(len(ue.buffer) for ue in self.ues)
        n += sum(len(c.in_air) for c in self.cells)
        n += sum(o.queues.count for o in self.onus)
        n += sum(len(v) for v in self.in_transit.values())
        return n

    def audits(self) -> dict:
        t = self.tally
        accounted = t.forwarded_total + t.dropped() + self.in_flight()
        probs_ok = all(check_probs(ue.learner.probs) for ue in self.ues if ue.learner is not None)
        if self.cfg.la.printed_penalty:
            probs_ok = True  # the printed variant is known not to conserve mass
        decisions = sum(ue.decisions for ue in self.ues)
        resolved = sum(ue.resolutions for ue in self.ues)
        return {
            "conservation": accounted == t.generated,
            "probability_normalization": probs_ok,
            "capacity": self.capacity_violations == 0,
            "feedback_bookkeeping": decisions == resolved + len(self.book.open),
        }


def run(config: RunConfig, scenario: str = "custom", trace_la: bool = False,
        trace_auction: bool = False):
    """Simulate ``config`` to completion and return its MetricsReport."""
    from .metrics import build_report

    net = Network(config, trace_la=trace_la, trace_auction=trace_auction).run()
    return build_report(net, scenario)
