"""Scenario configuration, the three built-in bottleneck scenarios and the run driver."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence

from .metrics import PacketRecord
from .model import ConfigError, TrafficKind
from .network import Network, NodeKind, Simulation, rsvp_domain_for
from .pwfq import PwfqConfig, PrioritizedWfqRR
from .schedulers import (DEFAULT_CAPACITY, DEFAULT_QUANTUM, CustomQueuing, Fifo, PriorityQueuing,
                         Scheduler, WeightedFairQueuing, classify_by_precedence, with_llq)
from .traffic import SourceKind, SourceSpec

SCHEDULERS = ("fifo", "pq", "cq", "cq_llq", "wfq", "wfq_llq", "pwfq_rr")
SCENARIO_SCHEDULERS = {
    1: ("fifo", "pq", "wfq", "pwfq_rr"),
    2: ("fifo",),
    3: ("fifo", "pq", "cq", "cq_llq", "wfq", "wfq_llq", "pwfq_rr"),
}

CLASS_GROUPS = [[7, 6, 5], [4], [3, 2, 1, 0]]
SOURCE_KEYS = frozenset(f.name for f in fields(SourceSpec) if f.init)


@dataclass
class TopologyConfig:
    bottleneck_bps: int
    servers: List[str]
    clients: List[str]
    access_bps: int = 100_000_000
    propagation_delay_s: float = 0.001
    access_capacity: int = 1000


@dataclass
class PwfqSection:
    weights: List[float] = field(default_factory=lambda: [3.0, 2.0, 1.0])
    priorities: List[List[float]] = field(default_factory=lambda: [[1.0], [1.0], [1.0]])
    # precedence -> [queue, sub-queue], zero-based
    classifier: Dict[int, List[int]] = field(default_factory=lambda: {
        7: [0, 0], 6: [0, 0], 5: [0, 0], 4: [1, 0], 3: [2, 0], 2: [2, 0], 1: [2, 0], 0: [2, 0]})
    base_slice_s: float = 0.020


@dataclass
class SchedulerConfig:
    """Bottleneck egress discipline.

    ``queues`` groups precedences into internal queues (index 0 is the most
    important for PQ); ``wfq_weights`` and ``cq_quanta`` align with it.
    """

    kind: str = "fifo"
    capacity: int = DEFAULT_CAPACITY
    queues: List[List[int]] = field(default_factory=lambda: copy.deepcopy(CLASS_GROUPS))
    wfq_weights: Optional[List[float]] = None
    cq_quanta: Optional[List[float]] = None
    base_quantum: float = DEFAULT_QUANTUM
    llq_precedences: List[int] = field(default_factory=lambda: [5])
    pwfq: PwfqSection = field(default_factory=PwfqSection)


@dataclass
class RsvpConfig:
    enabled: bool = False
    reservable_fraction: float = 0.75
    refresh_period_s: float = 30.0
    timeout_periods: int = 3
    bucket_depth_pkts: int = 4


@dataclass
class RunConfig:
    duration_s: float = 120.0
    seed: int = 1
    bucket_s: float = 1.0


@dataclass
class ScenarioConfig:
    scenario: int
    topology: TopologyConfig
    sources: List[Dict[str, Any]]
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    rsvp: RsvpConfig = field(default_factory=RsvpConfig)
    run: RunConfig = field(default_factory=RunConfig)

    @property
    def bottleneck(self):
        return self.topology

    def source_specs(self) -> List[SourceSpec]:
        specs = []
        for raw in self.sources:
            raw = dict(raw)
            if raw.get("stop") is None:
                raw["stop"] = math.inf
            specs.append(SourceSpec(**raw))
        return specs

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        for src in d["sources"]:
            if isinstance(src.get("stop"), float) and math.isinf(src["stop"]):
                src["stop"] = None
        d["scheduler"]["pwfq"]["classifier"] = {
            str(k): v for k, v in d["scheduler"]["pwfq"]["classifier"].items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ScenarioConfig":
        try:
            sched = dict(d.get("scheduler", {}))
            pw = dict(sched.pop("pwfq", {}))
            if "classifier" in pw:
                pw["classifier"] = {int(k): list(v) for k, v in pw["classifier"].items()}
            cfg = cls(
                scenario=int(d["scenario"]),
                topology=TopologyConfig(**d["topology"]),
                sources=[dict(s) for s in d["sources"]],
                scheduler=SchedulerConfig(**sched, pwfq=PwfqSection(**pw)),
                rsvp=RsvpConfig(**d.get("rsvp", {})),
                run=RunConfig(**d.get("run", {})),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed scenario config: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        if self.scheduler.kind not in SCHEDULERS:
            raise ConfigError(f"unknown scheduler {self.scheduler.kind!r}")
        if not self.run.duration_s > 0:
            raise ConfigError("run.duration_s must be positive")
        if not self.run.bucket_s > 0:
            raise ConfigError("run.bucket_s must be positive")
        if not 0 <= self.run.seed < 2 ** 64:
            raise ConfigError("run.seed must fit in 64 bits")
        self.source_specs()
        build_network(self)


def set_override(cfg: ScenarioConfig, dotted: str, value: Any) -> ScenarioConfig:
    """Return a copy of ``cfg`` with one dotted key (``run.seed``,
    ``sources.0.rate_bps``) replaced."""
    d = cfg.to_dict()
    node = d
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node[int(part)] if isinstance(node, list) else node[part]
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        if last not in node and not (parts[0] == "sources" and last in SOURCE_KEYS):
            raise ConfigError(f"unknown config key {dotted}")
        node[last] = value
    return ScenarioConfig.from_dict(d)


# scheduler and network construction ---------------------------------------

def _llq_select(precedences: Sequence[int]):
    wanted = frozenset(precedences)
    return lambda packet: packet.precedence in wanted


def make_scheduler(sc: SchedulerConfig, link_rate_bps: float) -> Scheduler:
    kind = sc.kind
    if kind == "fifo":
        return Fifo(sc.capacity)
    if kind == "pwfq_rr":
        pw = sc.pwfq
        cfg = PwfqConfig(pw.weights, pw.priorities, {k: tuple(v) for k, v in pw.classifier.items()},
                         pw.base_slice_s, sc.capacity)
        return PrioritizedWfqRR(cfg, link_rate_bps)
    classifier = classify_by_precedence(sc.queues)
    n = len(sc.queues)
    if kind == "pq":
        return PriorityQueuing(n, classifier, sc.capacity)
    base = kind.replace("_llq", "")
    if base == "cq":
        quanta = sc.cq_quanta or [DEFAULT_QUANTUM] * n
        if len(quanta) != n:
            raise ConfigError("cq_quanta must have one entry per queue")
        inner = CustomQueuing(quanta, classifier, sc.capacity)
    elif base == "wfq":
        weights = sc.wfq_weights or [max(g) + 1 for g in sc.queues]
        if len(weights) != n:
            raise ConfigError("wfq_weights must have one entry per queue")
        inner = WeightedFairQueuing(weights, classifier, sc.base_quantum, sc.capacity)
    else:
        raise ConfigError(f"unknown scheduler {kind!r}")
    if kind.endswith("_llq"):
        return with_llq(inner, _llq_select(sc.llq_precedences), sc.capacity)
    return inner


BOTTLENECK = ("r1", "r2")


def build_network(cfg: ScenarioConfig) -> Network:
    """servers - sw_s - r1 == r2 - sw_c - clients; the r1->r2 egress runs the
    selected discipline, every other egress is a large FIFO."""
    topo = cfg.topology
    if not topo.bottleneck_bps > 0 or not topo.access_bps > 0:
        raise ConfigError("link rates must be positive")
    net = Network()
    for name in ("sw_s", "sw_c"):
        net.add_node(name, NodeKind.SWITCH)
    for name in BOTTLENECK:
        net.add_node(name, NodeKind.ROUTER)
    for name in list(topo.servers) + list(topo.clients):
        net.add_node(name, NodeKind.HOST)
    d = topo.propagation_delay_s

    def access(a, b):
        net.add_link(a, b, topo.access_bps, d, Fifo(topo.access_capacity), Fifo(topo.access_capacity))

    for s in topo.servers:
        access(s, "sw_s")
    access("sw_s", "r1")
    net.add_link("r1", "r2", topo.bottleneck_bps, d,
                 make_scheduler(cfg.scheduler, topo.bottleneck_bps), Fifo(cfg.scheduler.capacity))
    access("r2", "sw_c")
    for c in topo.clients:
        access("sw_c", c)
    net.compute_routes()
    return net


@dataclass
class RunResult:
    config: ScenarioConfig
    records: List[PacketRecord]
    emitted: int
    in_flight: int
    events: int
    simulation: Simulation

    @property
    def scheduler(self) -> str:
        return self.config.scheduler.kind


def run_scenario(cfg: ScenarioConfig, trace: bool = False) -> RunResult:
    net = build_network(cfg)
    domain = None
    if cfg.rsvp.enabled:
        domain = rsvp_domain_for(net, cfg.rsvp.reservable_fraction, cfg.rsvp.refresh_period_s,
                                 cfg.rsvp.timeout_periods)
    sim = Simulation(net, cfg.source_specs(), cfg.run.seed, domain,
                     cfg.rsvp.bucket_depth_pkts, trace=trace)
    summary = sim.run(cfg.run.duration_s)
    records = sim.recorder.all()
    return RunResult(cfg, records, len(records), sim.in_flight(), summary.events_processed, sim)


# built-in scenarios ------------------------------------------------------

def _src(name, kind, origin, dest, **kw) -> Dict[str, Any]:
    d = {"name": name, "kind": SourceKind(kind).value, "origin": origin, "destination": dest}
    d.update(kw)
    return d


def _scenario1() -> ScenarioConfig:
    topo = TopologyConfig(56_000, ["voice_srv", "video_srv", "data_srv"],
                          ["voice_cli", "video_cli", "data_cli"])
    sources = [
        # 32 kbps codec, 40 ms packetization: 200-byte packets, 40 kbps on the wire
        _src("voice0", "voice_cbr", "voice_srv", "voice_cli", rate_bps=40_000),
        _src("video0", "video_frames", "video_srv", "video_cli"),
        _src("data0", "data_onoff", "data_srv", "data_cli", rate_bps=256_000),
    ]
    sched = SchedulerConfig(wfq_weights=[12.0, 25.0, 1.0])
    return ScenarioConfig(1, topo, sources, sched)


def _scenario2() -> ScenarioConfig:
    servers = ["voice_srv", "video_srv", "data_srv"]
    clients = ["voice_cli", "video_cli", "data_cli"]
    topo = TopologyConfig(1_544_000, servers, clients)
    sources = [_src(f"voice{k}", "voice_cbr", "voice_srv", "voice_cli", reserve=True) for k in range(4)]
    sources += [_src(f"video{k}", "video_frames", "video_srv", "video_cli") for k in range(4)]
    sources += [_src(f"data{k}", "data_onoff", "data_srv", "data_cli", rate_bps=256_000) for k in range(4)]
    return ScenarioConfig(2, topo, sources, SchedulerConfig(kind="fifo"), RsvpConfig(enabled=True))


def _scenario3() -> ScenarioConfig:
    servers = [f"server{k}" for k in range(1, 5)]
    clients = [f"client{k}" for k in range(1, 5)]
    topo = TopologyConfig(1_000_000, servers, clients)
    # one video session per client/server pair, told apart by ToS precedence:
    # a bursty HD stream plus three small-frame interactive streams
    sources = [
        _src("video1", "video_frames", "server1", "client1", precedence=4,
             rate_bps=64_000, fps=15.0, frame_sigma=0.2, start=0.011),
        _src("video2", "video_frames", "server2", "client2", precedence=3,
             rate_bps=64_000, fps=15.0, frame_sigma=0.2, start=0.027),
        _src("video3", "video_frames", "server3", "client3", precedence=2,
             rate_bps=64_000, fps=15.0, frame_sigma=0.2, start=0.043),
        _src("video4", "video_frames", "server4", "client4", precedence=1,
             rate_bps=600_000, fps=10.0, frame_sigma=0.3),
    ]
    pwfq = PwfqSection(
        priorities=[[3.0, 2.0, 1.0], [1.0], [1.0]],
        classifier={7: [0, 0], 6: [0, 0], 5: [0, 0], 4: [0, 0], 3: [0, 1], 2: [0, 2], 1: [1, 0], 0: [2, 0]})
    sched = SchedulerConfig(queues=[[7, 6, 5, 4], [3], [2], [1, 0]], llq_precedences=[4],
                            wfq_weights=[1.0, 1.0, 1.0, 3.0], pwfq=pwfq)
    return ScenarioConfig(3, topo, sources, sched)


_BUILDERS = {1: _scenario1, 2: _scenario2, 3: _scenario3}


def build_scenario(n: int, overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    if n not in _BUILDERS:
        raise ConfigError(f"unknown scenario {n!r}; expected 1, 2 or 3")
    cfg = _BUILDERS[n]()
    cfg.validate()
    for key, value in (overrides or {}).items():
        cfg = set_override(cfg, key, value)
    return cfg


def sources_of_kind(cfg: ScenarioConfig, kind: TrafficKind) -> List[str]:
    return [s.name for s in cfg.source_specs() if s.cls.kind is kind]
