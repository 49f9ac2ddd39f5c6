"""Hosts, switches and routers joined by serializing links, with static routing."""

from __future__ import annotations

import enum
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .engine import EventKind, RandomStream, Simulator
from .metrics import Recorder
from .model import ConfigError, Packet, transmission_time
from .rsvp import PathMsg, ReservedService, RsvpDomain, RsvpRouter
from .schedulers import DEFAULT_CAPACITY, DropReason, Fifo, Scheduler
from .traffic import Source, SourceSpec

log = logging.getLogger(__name__)


class NodeKind(enum.Enum):
    HOST = "host"
    SWITCH = "switch"
    ROUTER = "router"


@dataclass
class Node:
    name: str
    kind: NodeKind
    routes: Dict[str, str] = field(default_factory=dict)


class Channel:
    """One direction of a link: an egress scheduler feeding a serial line."""

    def __init__(self, src: str, dst: str, rate_bps: float, propagation_delay: float,
                 scheduler: Scheduler):
        self.src = src
        self.dst = dst
        self.rate_bps = rate_bps
        self.propagation_delay = propagation_delay
        self.scheduler = scheduler
        self.busy = False
        self.sent = 0

    @property
    def site(self) -> str:
        return f"{self.src}->{self.dst}"


@dataclass
class Link:
    a: str
    b: str
    rate_bps: float
    propagation_delay: float = 0.001

    def __post_init__(self):
        if not self.rate_bps > 0:
            raise ConfigError(f"link {self.a}-{self.b}: rate must be positive")
        if self.propagation_delay < 0:
            raise ConfigError(f"link {self.a}-{self.b}: negative propagation delay")


class Network:
    def __init__(self):
        self.nodes: Dict[str, Node] = {}
        self.links: List[Link] = []
        self.channels: Dict[Tuple[str, str], Channel] = {}

    def add_node(self, name: str, kind: NodeKind) -> Node:
        if name in self.nodes:
            raise ConfigError(f"duplicate node {name}")
        node = self.nodes[name] = Node(name, kind)
        return node

    def add_link(self, a: str, b: str, rate_bps: float, propagation_delay: float = 0.001,
                 forward: Optional[Scheduler] = None, backward: Optional[Scheduler] = None) -> Link:
        for n in (a, b):
            if n not in self.nodes:
                raise ConfigError(f"unknown node {n}")
        link = Link(a, b, rate_bps, propagation_delay)
        self.links.append(link)
        self.channels[a, b] = Channel(a, b, rate_bps, propagation_delay, forward if forward is not None else Fifo(DEFAULT_CAPACITY))
        self.channels[b, a] = Channel(b, a, rate_bps, propagation_delay, backward if backward is not None else Fifo(DEFAULT_CAPACITY))
        return link

    def neighbors(self, name: str) -> List[str]:
        return [dst for (src, dst) in self.channels if src == name]

    def compute_routes(self) -> None:
        """Shortest-hop static tables toward every host, ties broken by name."""
        hosts = sorted(n for n, node in self.nodes.items() if node.kind is NodeKind.HOST)
        for node in self.nodes.values():
            node.routes.clear()
        for dest in hosts:
            dist = {dest: 0}
            frontier = deque([dest])
            while frontier:
                u = frontier.popleft()
                for v in sorted(self.neighbors(u)):
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        frontier.append(v)
            for name in self.nodes:
                if name == dest or name not in dist:
                    continue
                hop = min((v for v in self.neighbors(name) if dist.get(v) == dist[name] - 1))
                self.nodes[name].routes[dest] = hop
        self.check_loop_free()

    def check_loop_free(self) -> None:
        for name, node in self.nodes.items():
            for dest in node.routes:
                if self.path(name, dest) is None:
                    raise ConfigError(f"forwarding loop from {name} toward {dest}")

    def path(self, src: str, dst: str) -> Optional[List[str]]:
        nodes = [src]
        seen = {src}
        while nodes[-1] != dst:
            hop = self.nodes[nodes[-1]].routes.get(dst)
            if hop is None or hop in seen:
                return None
            nodes.append(hop)
            seen.add(hop)
        return nodes

    def min_delay(self, src: str, dst: str, size_bits: int) -> float:
        """Unloaded end-to-end delay of a packet along the static route."""
        nodes = self.path(src, dst)
        return sum(transmission_time(size_bits, self.channels[u, v].rate_bps) + self.channels[u, v].propagation_delay
                   for u, v in zip(nodes, nodes[1:]))


class Simulation:
    """Drives sources through a :class:`Network` on one event loop."""

    def __init__(self, network: Network, sources: Sequence[SourceSpec], seed: int = 0,
                 rsvp: Optional[RsvpDomain] = None, bucket_depth_pkts: int = 4,
                 trace: bool = False):
        self.net = network
        self.sim = Simulator(trace=trace)
        self.recorder = Recorder()
        self.streams = RandomStream(seed)
        self.rsvp = rsvp
        self.bucket_depth_pkts = bucket_depth_pkts
        self.max_in_service = 0
        ids = itertools.count()
        self.sources: List[Source] = []
        for spec in sources:
            for end in (spec.origin, spec.destination):
                if end not in network.nodes:
                    raise ConfigError(f"source {spec.name}: unknown node {end}")
            if network.path(spec.origin, spec.destination) is None:
                raise ConfigError(f"source {spec.name}: {spec.destination} unreachable")
            self.sources.append(Source(spec, self.streams.substream(spec.name), ids))
        if rsvp is not None:
            self._wrap_reserved_egress()

    # forwarding ----------------------------------------------------------

    def forward(self, packet: Packet, node: str) -> None:
        now = self.sim.now
        if node == packet.dst:
            packet.deliver(now)
            self.recorder.delivered(packet, now)
            return
        hop = self.net.nodes[node].routes.get(packet.dst)
        if hop is None:
            self.recorder.dropped(packet, now, node, DropReason.NO_ROUTE.value)
            return
        ch = self.net.channels[node, hop]
        verdict = ch.scheduler.enqueue(packet, now)
        if verdict is not None:
            self.recorder.dropped(packet, now, ch.site, verdict.value)
            return
        if not ch.busy:
            self._start(ch)

    def _start(self, ch: Channel) -> None:
        packet = ch.scheduler.dequeue(self.sim.now)
        if packet is None:
            return
        ch.busy = True
        done = transmission_time(packet.size_bits, ch.rate_bps)
        self.sim.schedule_in(done, EventKind.TRANSMISSION_COMPLETE, self._complete, (ch, packet))

    def _complete(self, item) -> None:
        ch, packet = item
        ch.busy = False
        ch.sent += 1
        self.sim.schedule_in(ch.propagation_delay, EventKind.PACKET_ARRIVAL, self._arrive, (ch.dst, packet))
        self._start(ch)

    def _arrive(self, item) -> None:
        node, packet = item
        self.forward(packet, node)

    # sources ---------------------------------------------------------------

    def _emit(self, source: Source) -> None:
        packet, nxt = source.next_emission(self.sim.now)
        self.recorder.emitted(packet)
        self.forward(packet, source.spec.origin)
        if nxt is not None:
            self.sim.schedule(nxt, EventKind.SOURCE_EMIT, self._emit, source)

    # reservations ------------------------------------------------------------

    def _wrap_reserved_egress(self) -> None:
        for (src, dst), ch in self.net.channels.items():
            router = self.rsvp.routers.get(src)
            if router is None:
                continue
            ch.scheduler = ReservedService(ch.scheduler, self._lookup(router, dst))

    def _lookup(self, router: RsvpRouter, egress: str) -> Callable[[str], Optional[Tuple[float, float]]]:
        domain = self.rsvp

        def lookup(flow_id: str):
            ps = router.path_state.get(flow_id)
            if ps is None or ps.next_hop != egress or not domain.is_reserved(flow_id):
                return None
            res = router.tables[egress].entries[flow_id]
            return res.rate_bps, res.burst_bytes * 8

        return lookup

    def _signal(self, spec: SourceSpec) -> None:
        now = self.sim.now
        burst = self.bucket_depth_pkts * spec.packet_bytes
        msg = PathMsg(spec.name, spec.mean_rate_bps, burst, spec.origin, spec.destination)
        self.rsvp.signal(msg, now)
        nxt = now + self.rsvp.refresh_period
        if nxt < spec.stop:
            self.sim.schedule(nxt, EventKind.SIGNALING_TIMER, self._signal, spec)

    def _sweep(self) -> None:
        self.rsvp.expire(self.sim.now)
        self.sim.schedule_in(self.rsvp.refresh_period, EventKind.SIGNALING_TIMER, self._sweep)

    # running -----------------------------------------------------------------

    def run(self, duration: float):
        if self.rsvp is not None:
            for src in self.sources:
                if src.spec.reserve:
                    self.sim.schedule(src.spec.start, EventKind.SIGNALING_TIMER, self._signal, src.spec)
            self.sim.schedule(self.rsvp.refresh_period, EventKind.SIGNALING_TIMER, self._sweep)
        for src in self.sources:
            t = src.first_time()
            if t is not None:
                self.sim.schedule(t, EventKind.SOURCE_EMIT, self._emit, src)
        self.sim.schedule(duration, EventKind.SIM_END)
        return self.sim.run_until(duration)

    def in_flight(self) -> int:
        return sum(1 for r in self.recorder.records.values() if not r.delivered and not r.dropped)


def rsvp_domain_for(net: Network, reservable_fraction: float, refresh_period: float,
                    timeout_periods: int = 3) -> RsvpDomain:
    routers = {}
    for name, node in net.nodes.items():
        if node.kind is NodeKind.ROUTER:
            caps = {dst: ch.rate_bps for (src, dst), ch in net.channels.items() if src == name}
            routers[name] = RsvpRouter(name, caps, reservable_fraction)
    return RsvpDomain(routers, net.path, refresh_period, timeout_periods)
