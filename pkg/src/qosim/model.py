"""Packets, IPv6-style QoS markings and the header classification tables."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Optional, Union

SimTime = float


class ConfigError(ValueError):
    """Raised for invalid scheduler, scenario or source configuration."""


def check_time(t: float) -> SimTime:
    t = float(t)
    if not t >= 0.0:
        raise ValueError(f"simulation time must be >= 0, got {t!r}")
    return t


def transmission_time(size_bits: int, link_rate_bps: int) -> SimTime:
    """Seconds needed to clock ``size_bits`` onto a link of ``link_rate_bps``."""
    if size_bits <= 0:
        raise ValueError(f"size_bits must be positive, got {size_bits}")
    if link_rate_bps <= 0:
        raise ValueError(f"link rate must be positive, got {link_rate_bps}")
    return size_bits / link_rate_bps


FLOW_LABEL_MAX = 0xFFFFF
DSCP_MAX = 63
LEGACY_PRIORITY_MAX = 15


class FlowLabelStatus(enum.Enum):
    NO_FLOW = "no_flow"
    VALID_FLOW = "valid_flow"
    OUT_OF_RANGE = "out_of_range"


def flow_label_status(label: int) -> FlowLabelStatus:
    if label == 0:
        return FlowLabelStatus.NO_FLOW
    if 1 <= label <= FLOW_LABEL_MAX:
        return FlowLabelStatus.VALID_FLOW
    return FlowLabelStatus.OUT_OF_RANGE


class DscpPool(enum.Enum):
    STANDARD = 1  # xxxxx0, 32 codepoints
    EXP_LOCAL = 2  # xxxx11, 16 codepoints
    EXP_LOCAL_OVERFLOW = 3  # xxxx01, 16 codepoints


def dscp_pool(dscp: int) -> DscpPool:
    if not 0 <= dscp <= DSCP_MAX:
        raise ValueError(f"DSCP must be in 0..63, got {dscp}")
    if dscp & 0b1 == 0:
        return DscpPool.STANDARD
    if dscp & 0b11 == 0b11:
        return DscpPool.EXP_LOCAL
    return DscpPool.EXP_LOCAL_OVERFLOW


class PrioritySemantics(enum.Enum):
    CONGESTION_CONTROLLED = "congestion_controlled"
    REAL_TIME_DROP_PRIORITY = "real_time_drop_priority"


def legacy_priority_semantics(p: int) -> PrioritySemantics:
    """Interpret the old 4-bit Priority field: 0-7 back off, 8-15 do not."""
    if not 0 <= p <= LEGACY_PRIORITY_MAX:
        raise ValueError(f"legacy priority must be in 0..15, got {p}")
    if p <= 7:
        return PrioritySemantics.CONGESTION_CONTROLLED
    return PrioritySemantics.REAL_TIME_DROP_PRIORITY


class RouterAlert(enum.IntEnum):
    MULTICAST_LISTENER_DISCOVERY = 0
    RSVP = 1
    ACTIVE_NETWORK = 2


@dataclass(frozen=True)
class ReservedAlert:
    """Router-alert values 3..65535, reserved for future use."""

    value: int


def router_alert_kind(value: int) -> Union[RouterAlert, ReservedAlert]:
    if not 0 <= value <= 0xFFFF:
        raise ValueError(f"router alert value must fit in 16 bits, got {value}")
    if value <= 2:
        return RouterAlert(value)
    return ReservedAlert(value)


@dataclass(frozen=True)
class Ipv6Marking:
    dscp: int = 0
    flow_label: int = 0
    legacy_priority: int = 0

    def __post_init__(self):
        if not 0 <= self.dscp <= DSCP_MAX:
            raise ValueError(f"dscp {self.dscp} does not fit in 6 bits")
        if not 0 <= self.flow_label <= FLOW_LABEL_MAX:
            raise ValueError(f"flow label {self.flow_label:#x} does not fit in 20 bits")
        if not 0 <= self.legacy_priority <= LEGACY_PRIORITY_MAX:
            raise ValueError(f"legacy priority {self.legacy_priority} does not fit in 4 bits")


class TrafficKind(enum.Enum):
    VOICE = "voice"
    VIDEO = "video"
    DATA = "data"


DEFAULT_PRECEDENCE = {
    TrafficKind.VOICE: 5,
    TrafficKind.VIDEO: 4,
    TrafficKind.DATA: 0,
}


@dataclass(frozen=True)
class TrafficClass:
    kind: TrafficKind
    precedence: int

    def __post_init__(self):
        if not 0 <= self.precedence <= 7:
            raise ValueError(f"precedence must be in 0..7, got {self.precedence}")

    @classmethod
    def of(cls, kind: Union[TrafficKind, str], precedence: Optional[int] = None) -> "TrafficClass":
        kind = TrafficKind(kind)
        if precedence is None:
            precedence = DEFAULT_PRECEDENCE[kind]
        return cls(kind, precedence)


VOICE = TrafficClass.of(TrafficKind.VOICE)
VIDEO = TrafficClass.of(TrafficKind.VIDEO)
DATA = TrafficClass.of(TrafficKind.DATA)

_packet_ids = itertools.count()


@dataclass(eq=False)
class Packet:
    size_bits: int
    cls: TrafficClass
    flow_id: str = ""
    created_at: SimTime = 0.0
    marking: Ipv6Marking = field(default_factory=Ipv6Marking)
    src: str = ""
    dst: str = ""
    id: int = field(default_factory=lambda: next(_packet_ids))
    delivered_at: Optional[SimTime] = None

    def __post_init__(self):
        if self.size_bits <= 0:
            raise ValueError(f"packet size must be positive, got {self.size_bits}")

    @property
    def size_bytes(self) -> float:
        return self.size_bits / 8

    @property
    def precedence(self) -> int:
        return self.cls.precedence

    def deliver(self, now: SimTime) -> None:
        if now < self.created_at:
            raise ValueError("delivery precedes creation")
        self.delivered_at = now

    def __repr__(self):
        return f"<Packet {self.id} {self.flow_id} {self.cls.kind.value} {self.size_bits}b>"
