"""Prioritized WFQ with round robin.

Top-level queues carry weights ``w_i`` (highest first) and are visited in a
fixed rotation starting from the heaviest one. A visit to queue ``i`` is
worth a time slice ``t_i = base_slice * w_i / sum(w)``, converted into a
byte budget at the egress link rate. Each top-level queue holds priority
sub-queues; the visit budget is split among the backlogged sub-queues in
proportion to their priorities ``p_ij``, FIFO inside each sub-queue, with
deficit counters carrying unused credit across rotations.

Indices are zero-based throughout: queue ``0`` is the highest-weight queue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .model import ConfigError, Packet
from .schedulers import DEFAULT_CAPACITY, PacketQueue, Scheduler

DEFAULT_BASE_SLICE = 0.020

PwfqClassifier = Callable[[Packet], Tuple[int, int]]


@dataclass
class PwfqConfig:
    weights: Sequence[float]
    priorities: Sequence[Sequence[float]]
    classifier: Union[PwfqClassifier, Mapping[int, Tuple[int, int]], None] = None
    base_slice: float = DEFAULT_BASE_SLICE
    capacity: int = DEFAULT_CAPACITY
    _classify: PwfqClassifier = field(init=False, repr=False)

    def __post_init__(self):
        self.weights = [float(w) for w in self.weights]
        self.priorities = [[float(p) for p in row] for row in self.priorities]
        if not self.weights:
            raise ConfigError("need at least one top-level queue")
        if any(not w > 0 for w in self.weights):
            raise ConfigError(f"weights must be positive, got {self.weights}")
        if any(a < b for a, b in zip(self.weights, self.weights[1:])):
            raise ConfigError(f"weights must be sorted highest first, got {self.weights}")
        if len(self.priorities) != len(self.weights):
            raise ConfigError("need one priority list per top-level queue")
        for row in self.priorities:
            if not row or any(not p > 0 for p in row):
                raise ConfigError(f"priorities must be non-empty and positive, got {row}")
        if not self.base_slice > 0:
            raise ConfigError("base_slice must be positive")
        if self.capacity <= 0:
            raise ConfigError("capacity must be positive")
        self._classify = self._build_classifier(self.classifier)

    def _valid(self, i: int, j: int) -> bool:
        return 0 <= i < len(self.weights) and 0 <= j < len(self.priorities[i])

    def _build_classifier(self, classifier) -> PwfqClassifier:
        if classifier is None:
            # highest precedence -> (0, 0), everything else to the lowest queue
            last = len(self.weights) - 1
            table = {p: (0, 0) for p in range(5, 8)}
            table.update({p: (min(1, last), 0) for p in range(1, 5)})
            table[0] = (last, 0)
            classifier = table
        if callable(classifier):
            return classifier
        table = {int(k): (int(v[0]), int(v[1])) for k, v in classifier.items()}
        missing = sorted(set(range(8)) - set(table))
        if missing:
            raise ConfigError(f"precedences {missing} have no (queue, sub-queue) mapping")
        for prec, (i, j) in table.items():
            if not self._valid(i, j):
                raise ConfigError(f"precedence {prec} maps to unknown sub-queue ({i}, {j})")
        return lambda packet: table[packet.precedence]

    def slice_of(self, i: int) -> float:
        return self.base_slice * self.weights[i] / sum(self.weights)


def top_level_share(cfg: PwfqConfig, i: int) -> float:
    return cfg.weights[i] / sum(cfg.weights)


def sub_queue_share(cfg: PwfqConfig, i: int, j: int) -> float:
    row = cfg.priorities[i]
    return row[j] / sum(row) * top_level_share(cfg, i)


class PrioritizedWfqRR(Scheduler):
    """Nested deficit round robin realizing :class:`PwfqConfig`.

    ``rotation`` counts completed outer rotations. With ``record=True`` each
    departure appends ``(rotation, i, j)`` to ``self.departures``.
    """

    name = "pwfq_rr"

    def __init__(self, cfg: PwfqConfig, link_rate_bps: float, record: bool = False):
        if not link_rate_bps > 0:
            raise ConfigError("link rate must be positive")
        self.cfg = cfg
        self.link_rate_bps = link_rate_bps
        # rounded so that rescaling all weights cannot flip a comparison by one ulp
        self.quanta = [round(cfg.slice_of(i) * link_rate_bps / 8, 6) for i in range(len(cfg.weights))]
        self.queues: List[List[PacketQueue]] = [
            [PacketQueue(cfg.capacity, name=f"pq{i + 1}{j + 1}") for j in range(len(row))]
            for i, row in enumerate(cfg.priorities)
        ]
        self.deficit = [[0.0] * len(row) for row in cfg.priorities]
        self._count = 0
        self._top = 0
        self._sub = 0
        self._in_visit = False
        self._idle_visits = 0
        self._visit_served = False
        self.rotation = 0
        self.departures: Optional[List[Tuple[int, int, int]]] = [] if record else None

    def classify(self, packet: Packet) -> Tuple[int, int]:
        i, j = self.cfg._classify(packet)
        if not self.cfg._valid(i, j):
            raise ConfigError(f"classifier sent {packet!r} to unknown sub-queue ({i}, {j})")
        return i, j

    def enqueue(self, packet, now=0.0):
        i, j = self.classify(packet)
        verdict = self.queues[i][j].offer(packet)
        if verdict is None:
            self._count += 1
        return verdict

    def _advance(self) -> None:
        self._in_visit = False
        self._top += 1
        if self._top == len(self.queues):
            self._top = 0
            self.rotation += 1

    def _start_visit(self, i: int) -> bool:
        subs = self.queues[i]
        prios = self.cfg.priorities[i]
        total = sum(p for q, p in zip(subs, prios) if q)
        if total == 0:
            return False
        for j, q in enumerate(subs):
            if q:
                self.deficit[i][j] += self.quanta[i] * prios[j] / total
        self._in_visit = True
        self._visit_served = False
        self._sub = 0
        return True

    def _credits(self) -> Dict[Tuple[int, int], float]:
        out = {}
        for i, subs in enumerate(self.queues):
            prios = self.cfg.priorities[i]
            total = sum(p for q, p in zip(subs, prios) if q)
            for j, q in enumerate(subs):
                if q:
                    out[i, j] = self.quanta[i] * prios[j] / total
        return out

    def _fast_forward(self) -> None:
        # a whole rotation passed without a departure: jump over the empty ones
        credits = self._credits()
        rounds = min(
            math.ceil((self.queues[i][j].peek().size_bytes - self.deficit[i][j]) / c)
            for (i, j), c in credits.items()
        )
        if rounds <= 1:
            return
        for (i, j), c in credits.items():
            self.deficit[i][j] += (rounds - 1) * c
        self.rotation += rounds - 1

    def dequeue(self, now=0.0):
        if not self._count:
            return None
        busy_tops = sum(1 for subs in self.queues if any(subs))
        while True:
            i = self._top
            if not self._in_visit:
                if not self._start_visit(i):
                    self._advance()
                    continue
            subs = self.queues[i]
            while self._sub < len(subs):
                j = self._sub
                q = subs[j]
                if q and q.peek().size_bytes <= self.deficit[i][j]:
                    packet = q.pop()
                    self.deficit[i][j] -= packet.size_bytes
                    if not q:
                        self.deficit[i][j] = 0.0
                    self._count -= 1
                    self._idle_visits = 0
                    self._visit_served = True
                    if self.departures is not None:
                        self.departures.append((self.rotation, i, j))
                    return packet
                self._sub += 1
            if not self._visit_served:
                self._idle_visits += 1
            self._advance()
            if self._idle_visits >= busy_tops:
                # every backlogged top-level queue was credited once with nothing sent
                self._fast_forward()
                self._idle_visits = 0

    def backlog(self) -> Dict[str, Tuple[int, float]]:
        return {q.name: (len(q), q.bytes) for subs in self.queues for q in subs}

    def __len__(self):
        return self._count


def pwfq_rr(cfg: PwfqConfig, link_rate_bps: float, record: bool = False) -> PrioritizedWfqRR:
    return PrioritizedWfqRR(cfg, link_rate_bps, record)
