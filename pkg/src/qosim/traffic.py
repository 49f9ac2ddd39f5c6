"""Seeded voice, video and data sources."""

from __future__ import annotations

import enum
import itertools
import math
import zlib
from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple

import numpy as np

from .model import ConfigError, Ipv6Marking, Packet, SimTime, TrafficClass, TrafficKind

ACCESS_RATE_BPS = 100_000_000


class SourceKind(enum.Enum):
    VOICE_CBR = "voice_cbr"
    VIDEO_FRAMES = "video_frames"
    DATA_ONOFF = "data_onoff"


_KIND_TRAFFIC = {
    SourceKind.VOICE_CBR: TrafficKind.VOICE,
    SourceKind.VIDEO_FRAMES: TrafficKind.VIDEO,
    SourceKind.DATA_ONOFF: TrafficKind.DATA,
}

# (rate_bps, packet_bytes) defaults per kind; packet_bytes is the MTU for video
_DEFAULTS = {
    SourceKind.VOICE_CBR: (64_000, 200),
    SourceKind.VIDEO_FRAMES: (300_000, 1500),
    SourceKind.DATA_ONOFF: (64_000, 500),
}


@dataclass
class SourceSpec:
    """One open-loop traffic source.

    ``rate_bps`` is the CBR rate for voice, the mean bitrate for video and
    the peak (while-on) Poisson rate for on/off data. For video,
    ``packet_bytes`` is the fragmentation MTU.
    """

    name: str
    kind: SourceKind
    origin: str
    destination: str
    rate_bps: Optional[float] = None
    packet_bytes: Optional[int] = None
    start: SimTime = 0.0
    stop: SimTime = math.inf
    fps: float = 10.0
    frame_sigma: float = 0.0
    on_mean: float = 1.0
    off_mean: float = 2.0
    precedence: Optional[int] = None
    flow_label: Optional[int] = None
    reserve: bool = False
    cls: TrafficClass = field(init=False)

    def __post_init__(self):
        self.kind = SourceKind(self.kind)
        rate, size = _DEFAULTS[self.kind]
        if self.rate_bps is None:
            self.rate_bps = rate
        if self.packet_bytes is None:
            self.packet_bytes = size
        if not self.rate_bps > 0 or not self.packet_bytes > 0:
            raise ConfigError(f"{self.name}: rate and packet size must be positive")
        if not self.stop > self.start or self.start < 0:
            raise ConfigError(f"{self.name}: need 0 <= start < stop")
        if not self.fps > 0 or not self.on_mean > 0 or not self.off_mean > 0:
            raise ConfigError(f"{self.name}: fps and on/off means must be positive")
        if self.frame_sigma < 0:
            raise ConfigError(f"{self.name}: frame_sigma must be >= 0")
        self.cls = TrafficClass.of(_KIND_TRAFFIC[self.kind], self.precedence)
        if self.flow_label is None:
            self.flow_label = (zlib.crc32(self.name.encode()) & 0xFFFFF) or 1

    @property
    def frame_bytes(self) -> float:
        return self.rate_bps / 8 / self.fps

    @property
    def mean_rate_bps(self) -> float:
        if self.kind is SourceKind.DATA_ONOFF:
            return self.rate_bps * self.on_mean / (self.on_mean + self.off_mean)
        return self.rate_bps

    def marking(self) -> Ipv6Marking:
        # class-selector codepoint carrying the precedence
        return Ipv6Marking(dscp=self.cls.precedence << 3, flow_label=self.flow_label)


class Source:
    """Stateful emitter for one :class:`SourceSpec`.

    ``first_time()`` gives the first emission instant; each
    ``next_emission(now)`` builds the packet due at ``now`` and returns it
    with the next emission instant, or ``None`` once past ``stop``.
    """

    def __init__(self, spec: SourceSpec, rng: np.random.Generator,
                 ids: Optional[Iterator[int]] = None, access_rate_bps: float = ACCESS_RATE_BPS):
        self.spec = spec
        self.rng = rng
        self.ids = ids if ids is not None else itertools.count()
        self.access_rate_bps = access_rate_bps
        self._marking = spec.marking()
        self._k = 0
        self._fragments: list = []
        self._on_until = 0.0
        self._first: Optional[SimTime] = None
        self.emitted = 0

    def _packet(self, size_bytes: int, now: SimTime) -> Packet:
        self.emitted += 1
        return Packet(
            size_bits=int(size_bytes) * 8,
            cls=self.spec.cls,
            flow_id=self.spec.name,
            created_at=now,
            marking=self._marking,
            src=self.spec.origin,
            dst=self.spec.destination,
            id=next(self.ids),
        )

    def _clip(self, t: SimTime) -> Optional[SimTime]:
        return t if t < self.spec.stop else None

    # video
    def _frame_time(self, k: int) -> SimTime:
        return self.spec.start + k / self.spec.fps

    def _frame_sizes(self) -> list:
        spec = self.spec
        frame = spec.frame_bytes
        if spec.frame_sigma > 0:
            # lognormal with the configured mean
            mu = math.log(frame) - spec.frame_sigma ** 2 / 2
            frame = self.rng.lognormal(mu, spec.frame_sigma)
        frame = max(1, int(round(frame)))
        full, rest = divmod(frame, spec.packet_bytes)
        return [spec.packet_bytes] * full + ([rest] if rest else [])

    # data
    def _next_data_time(self, now: SimTime) -> SimTime:
        spec = self.spec
        lam = spec.rate_bps / (spec.packet_bytes * 8)
        t = now + self.rng.exponential(1 / lam)
        while t > self._on_until:
            on_start = self._on_until + self.rng.exponential(spec.off_mean)
            self._on_until = on_start + self.rng.exponential(spec.on_mean)
            t = on_start + self.rng.exponential(1 / lam)
        return t

    def first_time(self) -> Optional[SimTime]:
        if self._first is None:
            spec = self.spec
            if spec.kind is SourceKind.DATA_ONOFF:
                self._on_until = spec.start + self.rng.exponential(spec.on_mean)
                self._first = self._next_data_time(spec.start)
            else:
                self._first = spec.start
        return self._clip(self._first)

    def next_emission(self, now: SimTime) -> Tuple[Packet, Optional[SimTime]]:
        spec = self.spec
        if spec.kind is SourceKind.VOICE_CBR:
            packet = self._packet(spec.packet_bytes, now)
            self._k += 1
            interval = spec.packet_bytes * 8 / spec.rate_bps
            return packet, self._clip(spec.start + self._k * interval)
        if spec.kind is SourceKind.VIDEO_FRAMES:
            if not self._fragments:
                self._fragments = self._frame_sizes()
            size = self._fragments.pop(0)
            packet = self._packet(size, now)
            if self._fragments:
                # back-to-back at the access rate
                return packet, self._clip(now + size * 8 / self.access_rate_bps)
            self._k += 1
            return packet, self._clip(max(self._frame_time(self._k), now + size * 8 / self.access_rate_bps))
        packet = self._packet(spec.packet_bytes, now)
        return packet, self._clip(self._next_data_time(now))

    def emissions(self, until: SimTime = math.inf):
        """Yield ``(time, packet)`` pairs up to ``until``, no simulator needed."""
        t = self.first_time()
        while t is not None and t < until:
            packet, nxt = self.next_emission(t)
            yield t, packet
            t = nxt
