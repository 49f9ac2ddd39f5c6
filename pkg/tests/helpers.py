"""Independent oracles and shared checkers for the test suite."""

from __future__ import annotations

import math
from fractions import Fraction

from qosim.model import Packet, TrafficClass, TrafficKind
from qosim.pwfq import PrioritizedWfqRR, PwfqConfig
from qosim.schedulers import (DeficitRoundRobin, Fifo, LowLatencyQueue, PriorityQueuing,
                              classify_by_precedence, cq, pq, wfq, with_llq)

SIZES = (64, 200, 500, 1000, 1500)
MAX_PACKET = max(SIZES)
LLQ_PRECEDENCE = 5


def packet(size_bytes=1000, precedence=0, flow_id=""):
    return Packet(size_bits=size_bytes * 8, cls=TrafficClass(TrafficKind.DATA, precedence), flow_id=flow_id)


def fluid_shares(weights, demands=None, capacity=1.0):
    """Water-filling fluid allocation; ``None`` demand means always backlogged."""
    n = len(weights)
    demands = [math.inf if d is None else d for d in (demands or [None] * n)]
    rate = [0.0] * n
    open_ = set(range(n))
    left = capacity
    while open_ and left > 1e-15:
        total = sum(weights[i] for i in open_)
        capped = {i for i in open_ if demands[i] - rate[i] <= left * weights[i] / total}
        if not capped:
            for i in open_:
                rate[i] += left * weights[i] / total
            left = 0
            break
        for i in capped:
            left -= demands[i] - rate[i]
            rate[i] = demands[i]
        open_ -= capped
    return [r / capacity for r in rate]


def bucket_oracle(rate_bps, depth_bits, arrivals):
    """Exact token-bucket verdicts over ``(time, bits)`` arrivals using rationals."""
    rate = Fraction(rate_bps)
    depth = Fraction(depth_bits)
    tokens, last = depth, Fraction(0)
    out = []
    for t, bits in arrivals:
        t = Fraction(t)
        tokens = min(depth, tokens + (t - last) * rate)
        last = t
        if bits <= tokens:
            tokens -= bits
            out.append(True)
        else:
            out.append(False)
    return out


def backlogged_shares(sched, keys, make, departures):
    """Keep every key continuously backlogged; return byte shares per key."""
    served = {k: 0.0 for k in keys}
    for k in keys:
        for _ in range(4):
            assert sched.enqueue(make(k)) is None
    for _ in range(departures):
        p = sched.dequeue()
        served[p.flow_id] += p.size_bytes
        assert sched.enqueue(make(p.flow_id)) is None
    total = sum(served.values())
    return {k: v / total for k, v in served.items()}


# randomized scheduler harness ---------------------------------------------

GROUPS = [[7, 6, 5], [4], [3, 2, 1, 0]]


def _llq_select(p):
    return p.precedence == LLQ_PRECEDENCE


def _pwfq():
    table = {7: (0, 0), 6: (0, 0), 5: (0, 1), 4: (1, 0), 3: (1, 0), 2: (2, 0), 1: (2, 0), 0: (2, 0)}
    cfg = PwfqConfig([3, 2, 1], [[2, 1], [1], [1]], table, capacity=8)
    return PrioritizedWfqRR(cfg, 1_000_000)


DISCIPLINES = {
    "fifo": lambda: Fifo(8),
    "pq": lambda: pq(capacity=8),
    "cq": lambda: cq([1500, 1000, 500], classify_by_precedence(GROUPS), capacity=8, record_visits=True),
    "wfq": lambda: wfq([4, 2, 1], classify_by_precedence(GROUPS), base_quantum=500, capacity=8,
                       record_visits=True),
    "cq_llq": lambda: with_llq(cq([1500, 1000, 500], classify_by_precedence(GROUPS), capacity=8,
                                  record_visits=True), _llq_select, 8),
    "wfq_llq": lambda: with_llq(wfq([4, 2, 1], classify_by_precedence(GROUPS), base_quantum=500,
                                    capacity=8, record_visits=True), _llq_select, 8),
    "pwfq_rr": _pwfq,
}


def _drr_of(sched):
    if isinstance(sched, LowLatencyQueue):
        sched = sched.inner
    return sched if isinstance(sched, DeficitRoundRobin) else None


def check_operations(sched, ops):
    """Replay ``ops`` (``("enq", prec, size)`` or ``("deq",)``), then drain,
    asserting every scheduler invariant along the way."""
    backlog = []  # accepted, not yet departed, in acceptance order
    accepted = departed = 0
    dropped_ids = set()

    def take():
        nonlocal departed
        p = sched.dequeue()
        if not backlog:
            assert p is None, "dequeue produced a packet from an empty scheduler"
            return None
        assert p is not None, "work conservation: backlog but no departure"
        assert p.id not in dropped_ids, "dropped packet departed"
        ids = [q.id for q in backlog]
        assert p.id in ids, "departed packet was never accepted or left twice"
        # FIFO order within one precedence
        same = [q for q in backlog if q.precedence == p.precedence]
        assert same[0] is p, "order broken within a precedence"
        if isinstance(sched, Fifo):
            assert backlog[0] is p, "FIFO order broken"
        if isinstance(sched, PriorityQueuing):
            assert p.precedence == max(q.precedence for q in backlog), "PQ not maximal"
        if isinstance(sched, LowLatencyQueue) and any(_llq_select(q) for q in backlog):
            assert _llq_select(p), "non-LLQ packet left while the LLQ was backlogged"
        backlog.remove(p)
        departed += 1
        return p

    for op in ops:
        if op[0] == "enq":
            p = packet(op[2], op[1])
            verdict = sched.enqueue(p)
            if verdict is None:
                backlog.append(p)
                accepted += 1
            else:
                dropped_ids.add(p.id)
        else:
            take()
        assert accepted == departed + len(backlog) == departed + len(sched)
        assert sum(n for n, _ in sched.backlog().values()) == len(backlog)
    while backlog:
        take()
    assert sched.dequeue() is None
    drr = _drr_of(sched)
    if drr is not None:
        for index, served in drr.visits:
            assert served <= drr.quanta[index] + MAX_PACKET, "DRR per-visit byte bound exceeded"
    return accepted, departed


def random_operations(rng, max_len=80):
    n = int(rng.integers(0, max_len + 1))
    ops = []
    for _ in range(n):
        if rng.random() < 0.6:
            ops.append(("enq", int(rng.integers(0, 8)), int(rng.choice(SIZES))))
        else:
            ops.append(("deq",))
    return ops
