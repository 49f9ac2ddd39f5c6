"""Simplified PATH/RESV signaling, per-router admission control and reserved service.

Signaling is modeled as control-plane walks over the static route: a PATH
travels sender to receiver installing path state at each router, the RESV
retraces the hop list backwards and every router admits or rejects the
requested rate against its egress link. State is soft: entries expire when
not refreshed within ``timeout_periods`` refresh periods.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .model import ConfigError, Packet
from .schedulers import DEFAULT_CAPACITY, PacketQueue, Scheduler

log = logging.getLogger(__name__)

DEFAULT_RESERVABLE_FRACTION = 0.75
DEFAULT_REFRESH_PERIOD = 30.0
DEFAULT_TIMEOUT_PERIODS = 3
DEFAULT_BUCKET_DEPTH_PKTS = 4


@dataclass
class PathMsg:
    flow_id: str
    rate_bps: float
    burst_bytes: float
    sender: str
    receiver: str
    hops: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.rate_bps > 0:
            raise ConfigError("PATH rate must be positive")


@dataclass
class ResvMsg:
    flow_id: str
    rate_bps: float
    burst_bytes: float
    hops: List[str]

    @classmethod
    def answering(cls, path: PathMsg) -> "ResvMsg":
        return cls(path.flow_id, path.rate_bps, path.burst_bytes, list(reversed(path.hops)))


class ResvOutcome(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


class RejectReason(enum.Enum):
    INSUFFICIENT_BANDWIDTH = "insufficient_bandwidth"
    NO_PATH_STATE = "no_path_state"


@dataclass
class Reservation:
    rate_bps: float
    burst_bytes: float
    buffer_bytes: float
    deadline: float


class ReservationTable:
    """Reservations on one egress link; never exceeds ``capacity * fraction``."""

    def __init__(self, capacity_bps: float, reservable_fraction: float = DEFAULT_RESERVABLE_FRACTION):
        if not capacity_bps > 0:
            raise ConfigError("link capacity must be positive")
        if not 0 < reservable_fraction <= 1:
            raise ConfigError("reservable fraction must be in (0, 1]")
        self.capacity_bps = capacity_bps
        self.reservable_fraction = reservable_fraction
        self.entries: Dict[str, Reservation] = {}

    @property
    def limit_bps(self) -> float:
        return self.capacity_bps * self.reservable_fraction

    @property
    def reserved_bps(self) -> float:
        return sum(r.rate_bps for r in self.entries.values())

    def admit(self, flow_id: str, rate_bps: float, burst_bytes: float, deadline: float) -> bool:
        if flow_id in self.entries:
            self.entries[flow_id].deadline = deadline
            return True
        if self.reserved_bps + rate_bps > self.limit_bps:
            return False
        self.entries[flow_id] = Reservation(rate_bps, burst_bytes, burst_bytes, deadline)
        return True

    def release(self, flow_id: str) -> bool:
        return self.entries.pop(flow_id, None) is not None

    def expire(self, now: float) -> List[str]:
        gone = [f for f, r in self.entries.items() if r.deadline <= now]
        for f in gone:
            del self.entries[f]
        return gone

    def __contains__(self, flow_id):
        return flow_id in self.entries


@dataclass
class PathState:
    prev_hop: str
    next_hop: str
    deadline: float
    msg: PathMsg


class RsvpRouter:
    def __init__(self, name: str, egress_capacity: Dict[str, float],
                 reservable_fraction: float = DEFAULT_RESERVABLE_FRACTION):
        self.name = name
        self.tables = {nh: ReservationTable(cap, reservable_fraction)
                       for nh, cap in egress_capacity.items()}
        self.path_state: Dict[str, PathState] = {}

    def holds(self, flow_id: str) -> bool:
        ps = self.path_state.get(flow_id)
        return ps is not None and flow_id in self.tables[ps.next_hop]

    def reservation(self, flow_id: str) -> Optional[Reservation]:
        ps = self.path_state.get(flow_id)
        if ps is None:
            return None
        return self.tables[ps.next_hop].entries.get(flow_id)


@dataclass
class SignalingRecord:
    time: float
    kind: str
    flow_id: str
    node: str
    detail: str = ""


class RsvpDomain:
    """Routers plus the signaling procedures between them.

    ``route(sender, receiver)`` returns the full node path or ``None``;
    ``routers`` maps router names to :class:`RsvpRouter`.
    """

    def __init__(self, routers: Dict[str, RsvpRouter],
                 route: Callable[[str, str], Optional[Sequence[str]]],
                 refresh_period: float = DEFAULT_REFRESH_PERIOD,
                 timeout_periods: int = DEFAULT_TIMEOUT_PERIODS):
        if not refresh_period > 0 or timeout_periods < 1:
            raise ConfigError("refresh period must be positive and timeout at least one period")
        self.routers = routers
        self.route = route
        self.refresh_period = refresh_period
        self.timeout_periods = timeout_periods
        self.log: List[SignalingRecord] = []
        self.errors: Dict[str, List[Tuple[float, str, RejectReason]]] = {}
        self._paths: Dict[str, Tuple[str, ...]] = {}

    @property
    def lifetime(self) -> float:
        return self.refresh_period * self.timeout_periods

    def _note(self, now, kind, flow_id, node, detail=""):
        self.log.append(SignalingRecord(now, kind, flow_id, node, detail))

    def propagate_path(self, msg: PathMsg, now: float) -> Optional[PathMsg]:
        """Walk a PATH to the receiver, installing or refreshing path state.

        Returns the message as the receiver sees it, or ``None`` if there is
        no route.
        """
        nodes = self.route(msg.sender, msg.receiver)
        if not nodes:
            self._note(now, "path_dropped", msg.flow_id, msg.sender, "no route")
            log.warning("PATH for %s dropped: no route %s -> %s", msg.flow_id, msg.sender, msg.receiver)
            return None
        msg.hops = []
        for k, node in enumerate(nodes):
            router = self.routers.get(node)
            if router is None:
                continue
            ps = router.path_state.get(msg.flow_id)
            if ps is None:
                router.path_state[msg.flow_id] = PathState(nodes[k - 1], nodes[k + 1], now + self.lifetime, msg)
            else:
                ps.deadline = now + self.lifetime
            msg.hops.append(node)
        self._paths[msg.flow_id] = tuple(msg.hops)
        self._note(now, "path", msg.flow_id, msg.receiver, ",".join(msg.hops))
        return msg

    def process_resv(self, msg: ResvMsg, router: RsvpRouter, now: float) -> Tuple[ResvOutcome, Optional[RejectReason]]:
        ps = router.path_state.get(msg.flow_id)
        if ps is None:
            return ResvOutcome.REJECTED, RejectReason.NO_PATH_STATE
        table = router.tables[ps.next_hop]
        if table.admit(msg.flow_id, msg.rate_bps, msg.burst_bytes, now + self.lifetime):
            return ResvOutcome.ACCEPTED, None
        return ResvOutcome.REJECTED, RejectReason.INSUFFICIENT_BANDWIDTH

    def send_resv(self, msg: ResvMsg, receiver: str, now: float) -> bool:
        """Carry a RESV hop by hop toward the sender.

        On rejection the error goes to ``receiver`` and reservations this
        message installed upstream of the rejecting router are rolled back.
        """
        installed: List[RsvpRouter] = []
        for name in msg.hops:
            router = self.routers[name]
            fresh = not router.holds(msg.flow_id)
            outcome, reason = self.process_resv(msg, router, now)
            if outcome is ResvOutcome.REJECTED:
                for r in installed:
                    r.tables[r.path_state[msg.flow_id].next_hop].release(msg.flow_id)
                self.errors.setdefault(receiver, []).append((now, msg.flow_id, reason))
                self._note(now, "resv_err", msg.flow_id, name, reason.value)
                return False
            if fresh:
                installed.append(router)
        self._note(now, "resv", msg.flow_id, receiver)
        return True

    def signal(self, msg: PathMsg, now: float) -> bool:
        """One PATH/RESV exchange; also serves as the periodic refresh."""
        delivered = self.propagate_path(msg, now)
        if delivered is None:
            return False
        return self.send_resv(ResvMsg.answering(delivered), msg.receiver, now)

    def expire(self, now: float) -> List[Tuple[str, str]]:
        removed = []
        for router in self.routers.values():
            for table in router.tables.values():
                for flow_id in table.expire(now):
                    removed.append((router.name, flow_id))
            for flow_id in [f for f, ps in router.path_state.items() if ps.deadline <= now]:
                ps = router.path_state.pop(flow_id)
                router.tables[ps.next_hop].release(flow_id)
                removed.append((router.name, flow_id))
        for name, flow_id in removed:
            self._note(now, "expired", flow_id, name)
        return removed

    def is_reserved(self, flow_id: str) -> bool:
        hops = self._paths.get(flow_id)
        return bool(hops) and all(self.routers[h].holds(flow_id) for h in hops)

    def holds_any(self, flow_id: str) -> bool:
        return any(flow_id in r.path_state or r.holds(flow_id) for r in self.routers.values())


class TokenBucket:
    """Policer in bits; starts full."""

    def __init__(self, rate_bps: float, depth_bits: float, now: float = 0.0):
        if not rate_bps > 0 or not depth_bits > 0:
            raise ConfigError("token bucket needs positive rate and depth")
        self.rate_bps = rate_bps
        self.depth_bits = depth_bits
        self.tokens = depth_bits
        self.last = now

    def conforms(self, size_bits: float, now: float) -> bool:
        self.tokens = min(self.depth_bits, self.tokens + (now - self.last) * self.rate_bps)
        self.last = now
        # slack absorbs float drift at exactly-conforming instants
        if size_bits <= self.tokens + 1e-6:
            self.tokens = max(0.0, self.tokens - size_bits)
            return True
        return False


class ReservedService(Scheduler):
    """Guaranteed strict-priority queue for reserved flows ahead of best effort.

    ``lookup(flow_id)`` returns ``(rate_bps, depth_bits)`` for flows reserved
    end to end, else ``None``. Packets beyond the token bucket are demoted to
    ``inner`` rather than dropped.
    """

    def __init__(self, inner: Scheduler, lookup: Callable[[str], Optional[Tuple[float, float]]],
                 capacity: int = DEFAULT_CAPACITY):
        self.inner = inner
        self.lookup = lookup
        self.guaranteed = PacketQueue(capacity, name="guaranteed")
        self.buckets: Dict[str, TokenBucket] = {}
        self.demoted = 0
        self.name = f"rsvp_{inner.name}"

    def enqueue(self, packet, now=0.0):
        params = self.lookup(packet.flow_id)
        if params is None:
            self.buckets.pop(packet.flow_id, None)
            return self.inner.enqueue(packet, now)
        bucket = self.buckets.get(packet.flow_id)
        if bucket is None or (bucket.rate_bps, bucket.depth_bits) != params:
            bucket = self.buckets[packet.flow_id] = TokenBucket(*params, now=now)
        if bucket.conforms(packet.size_bits, now):
            return self.guaranteed.offer(packet)
        self.demoted += 1
        return self.inner.enqueue(packet, now)

    def dequeue(self, now=0.0):
        if self.guaranteed:
            return self.guaranteed.pop()
        return self.inner.dequeue(now)

    def backlog(self):
        out = {"guaranteed": (len(self.guaranteed), self.guaranteed.bytes)}
        out.update(self.inner.backlog())
        return out

    def __len__(self):
        return len(self.guaranteed) + len(self.inner)
