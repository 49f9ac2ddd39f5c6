"""Baseline egress queuing disciplines behind one enqueue/dequeue contract.

Every scheduler exposes

* ``enqueue(packet, now)`` returning ``None`` when the packet is accepted or
  a :class:`DropReason` when it is discarded,
* ``dequeue(now)`` returning the next packet to transmit or ``None``,
* ``backlog()`` mapping each internal queue name to ``(packets, bytes)``.

All disciplines are work conserving: ``dequeue`` only returns ``None`` when
nothing is backlogged.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .model import ConfigError, Packet, TrafficKind

DEFAULT_CAPACITY = 64
DEFAULT_QUANTUM = 1500

Classifier = Callable[[Packet], int]


class DropReason(enum.Enum):
    TAIL_DROP = "tail_drop"
    NO_ROUTE = "no_route"


class PacketQueue:
    """Bounded FIFO with packet and byte accounting."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY, name: str = ""):
        if capacity <= 0:
            raise ConfigError(f"queue capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.name = name
        self._items: deque = deque()
        self.bytes = 0.0

    def offer(self, packet: Packet) -> Optional[DropReason]:
        if len(self._items) >= self.capacity:
            return DropReason.TAIL_DROP
        self._items.append(packet)
        self.bytes += packet.size_bytes
        return None

    def peek(self) -> Packet:
        return self._items[0]

    def pop(self) -> Packet:
        packet = self._items.popleft()
        self.bytes -= packet.size_bytes
        if not self._items:
            self.bytes = 0.0
        return packet

    def __len__(self):
        return len(self._items)

    def __bool__(self):
        return bool(self._items)

    def __iter__(self):
        return iter(self._items)


class Scheduler:
    name = "scheduler"

    def enqueue(self, packet: Packet, now: float = 0.0) -> Optional[DropReason]:
        raise NotImplementedError

    def dequeue(self, now: float = 0.0) -> Optional[Packet]:
        raise NotImplementedError

    def backlog(self) -> Dict[str, Tuple[int, float]]:
        raise NotImplementedError

    def __len__(self):
        return sum(n for n, _ in self.backlog().values())


def classify_by_precedence(groups: Sequence[Iterable[int]]) -> Classifier:
    """Build a classifier from precedence groups; group index is queue index.

    Every precedence 0..7 must land in exactly one group.
    """
    table: Dict[int, int] = {}
    for index, group in enumerate(groups):
        for prec in group:
            if prec in table:
                raise ConfigError(f"precedence {prec} mapped to two queues")
            table[prec] = index
    missing = sorted(set(range(8)) - set(table))
    if missing:
        raise ConfigError(f"precedences {missing} are not mapped to any queue")

    def classify(packet: Packet) -> int:
        return table[packet.precedence]

    classify.table = table
    return classify


def _by_precedence_desc(packet: Packet) -> int:
    return 7 - packet.precedence


def _by_precedence(packet: Packet) -> int:
    return packet.precedence


class MultiQueue(Scheduler):
    """Shared plumbing for disciplines with several classified FIFO queues."""

    def __init__(self, nqueues: int, classifier: Classifier, capacity: int = DEFAULT_CAPACITY):
        if nqueues <= 0:
            raise ConfigError("need at least one queue")
        self.queues = [PacketQueue(capacity, name=f"q{i}") for i in range(nqueues)]
        self.classifier = classifier

    def _classify(self, packet: Packet) -> int:
        index = self.classifier(packet)
        if not 0 <= index < len(self.queues):
            raise ConfigError(f"classifier sent {packet!r} to missing queue {index}")
        return index

    def backlog(self):
        return {q.name: (len(q), q.bytes) for q in self.queues}

    def __len__(self):
        return sum(len(q) for q in self.queues)


class Fifo(MultiQueue):
    name = "fifo"

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        super().__init__(1, lambda p: 0, capacity)

    def enqueue(self, packet, now=0.0):
        return self.queues[0].offer(packet)

    def dequeue(self, now=0.0):
        q = self.queues[0]
        return q.pop() if q else None


class PriorityQueuing(MultiQueue):
    """Strict priority; queue 0 is the most important."""

    name = "pq"

    def __init__(self, nqueues: int = 8, classifier: Classifier = _by_precedence_desc,
                 capacity: int = DEFAULT_CAPACITY):
        super().__init__(nqueues, classifier, capacity)

    def enqueue(self, packet, now=0.0):
        return self.queues[self._classify(packet)].offer(packet)

    def dequeue(self, now=0.0):
        for q in self.queues:
            if q:
                return q.pop()
        return None


class DeficitRoundRobin(MultiQueue):
    """Deficit round robin over classified queues with per-queue byte quanta.

    Each visit credits the queue's quantum to its deficit counter; packets
    leave while the counter covers the head packet. An emptied queue loses
    its remaining deficit. If ``record_visits`` is set, every finished visit
    that served something appends ``(queue_index, bytes_served)`` to
    ``self.visits``.
    """

    name = "drr"

    def __init__(self, quanta: Sequence[float], classifier: Classifier,
                 capacity: int = DEFAULT_CAPACITY, record_visits: bool = False):
        quanta = [float(q) for q in quanta]
        if any(not q > 0 for q in quanta):
            raise ConfigError(f"quanta must be positive, got {quanta}")
        super().__init__(len(quanta), classifier, capacity)
        self.quanta = quanta
        self.deficit = [0.0] * len(quanta)
        self._active: deque = deque()
        self._in_visit = False
        self._visit_bytes = 0.0
        self._idle_visits = 0
        self.visits: Optional[List[Tuple[int, float]]] = [] if record_visits else None

    def enqueue(self, packet, now=0.0):
        index = self._classify(packet)
        q = self.queues[index]
        was_empty = not q
        verdict = q.offer(packet)
        if verdict is None and was_empty:
            self._active.append(index)
        return verdict

    def _end_visit(self, index: int) -> None:
        if self.visits is not None and self._visit_bytes > 0:
            self.visits.append((index, self._visit_bytes))
        self._in_visit = False
        self._visit_bytes = 0.0

    def _fast_forward(self) -> None:
        # every active queue just failed a visit: skip the rounds where nobody can send
        rounds = min(
            math.ceil((self.queues[i].peek().size_bytes - self.deficit[i]) / self.quanta[i])
            for i in self._active
        )
        if rounds > 1:
            for i in self._active:
                self.deficit[i] += (rounds - 1) * self.quanta[i]

    def dequeue(self, now=0.0):
        active = self._active
        while active:
            index = active[0]
            q = self.queues[index]
            if not self._in_visit:
                self.deficit[index] += self.quanta[index]
                self._in_visit = True
            size = q.peek().size_bytes
            if size <= self.deficit[index]:
                packet = q.pop()
                self.deficit[index] -= size
                self._visit_bytes += size
                self._idle_visits = 0
                if not q:
                    self.deficit[index] = 0.0
                    self._end_visit(index)
                    active.popleft()
                return packet
            served = self._visit_bytes > 0
            self._end_visit(index)
            active.rotate(-1)
            self._idle_visits = 0 if served else self._idle_visits + 1
            if self._idle_visits >= len(active):
                self._fast_forward()
                self._idle_visits = 0
        return None


class CustomQueuing(DeficitRoundRobin):
    name = "cq"


class WeightedFairQueuing(DeficitRoundRobin):
    """Weighted DRR: queue quantum is ``base_quantum * w / min(w)``.

    Long-run byte shares of continuously backlogged queues approach
    ``w_i / sum(w)``.
    """

    name = "wfq"

    def __init__(self, weights: Sequence[float], classifier: Classifier,
                 base_quantum: float = DEFAULT_QUANTUM, capacity: int = DEFAULT_CAPACITY,
                 record_visits: bool = False):
        weights = [float(w) for w in weights]
        if not weights or any(not w > 0 for w in weights):
            raise ConfigError(f"WFQ weights must be positive, got {weights}")
        self.weights = weights
        smallest = min(weights)
        quanta = [base_quantum * w / smallest for w in weights]
        super().__init__(quanta, classifier, capacity, record_visits)


def is_voice(packet: Packet) -> bool:
    return packet.cls.kind is TrafficKind.VOICE


class LowLatencyQueue(Scheduler):
    """Exhaustive strict-priority FIFO placed in front of another scheduler."""

    def __init__(self, inner: Scheduler, select: Callable[[Packet], bool] = is_voice,
                 capacity: int = DEFAULT_CAPACITY):
        self.inner = inner
        self.select = select
        self.llq = PacketQueue(capacity, name="llq")
        self.name = f"{inner.name}_llq"

    def enqueue(self, packet, now=0.0):
        if self.select(packet):
            return self.llq.offer(packet)
        return self.inner.enqueue(packet, now)

    def dequeue(self, now=0.0):
        if self.llq:
            return self.llq.pop()
        return self.inner.dequeue(now)

    def backlog(self):
        out = {"llq": (len(self.llq), self.llq.bytes)}
        out.update(self.inner.backlog())
        return out

    def __len__(self):
        return len(self.llq) + len(self.inner)


def fifo(capacity: int = DEFAULT_CAPACITY) -> Fifo:
    return Fifo(capacity)


def pq(classifier: Optional[Classifier] = None, nqueues: int = 8,
       capacity: int = DEFAULT_CAPACITY) -> PriorityQueuing:
    """Strict priority; by default one queue per precedence, highest first."""
    if classifier is None:
        classifier, nqueues = _by_precedence_desc, 8
    return PriorityQueuing(nqueues, classifier, capacity)


def cq(quanta: Optional[Sequence[float]] = None, classifier: Optional[Classifier] = None,
       capacity: int = DEFAULT_CAPACITY, record_visits: bool = False) -> CustomQueuing:
    if classifier is None:
        classifier = _by_precedence
        quanta = quanta if quanta is not None else [DEFAULT_QUANTUM] * 8
    if quanta is None:
        raise ConfigError("cq needs quanta when a classifier is supplied")
    return CustomQueuing(quanta, classifier, capacity, record_visits)


def wfq(weights: Optional[Sequence[float]] = None, classifier: Optional[Classifier] = None,
        base_quantum: float = DEFAULT_QUANTUM, capacity: int = DEFAULT_CAPACITY,
        record_visits: bool = False) -> WeightedFairQueuing:
    """Weighted fair queuing; default is one queue per precedence, weight ``prec + 1``."""
    if classifier is None:
        classifier = _by_precedence
        weights = weights if weights is not None else [p + 1 for p in range(8)]
    if weights is None:
        raise ConfigError("wfq needs weights when a classifier is supplied")
    return WeightedFairQueuing(weights, classifier, base_quantum, capacity, record_visits)


def with_llq(inner: Scheduler, select: Callable[[Packet], bool] = is_voice,
             capacity: int = DEFAULT_CAPACITY) -> LowLatencyQueue:
    return LowLatencyQueue(inner, select, capacity)
