"""Per-packet fate records, derived time series and CSV export."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .model import Packet, TrafficKind

DEFAULT_BUCKET = 1.0


def fmt(x: float) -> str:
    """Nine significant digits, the fixed on-disk number format."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.9g}"


@dataclass
class PacketRecord:
    id: int
    flow_id: str
    cls: str
    size_bits: int
    created_at: float
    delivered_at: Optional[float] = None
    dropped_at: Optional[float] = None
    drop_site: str = ""
    drop_reason: str = ""

    @property
    def delivered(self) -> bool:
        return self.delivered_at is not None

    @property
    def dropped(self) -> bool:
        return self.dropped_at is not None

    @property
    def delay(self) -> float:
        return self.delivered_at - self.created_at


class Recorder:
    """Collects exactly one fate per emitted packet."""

    def __init__(self):
        self.records: Dict[int, PacketRecord] = {}

    def emitted(self, packet: Packet) -> None:
        if packet.id in self.records:
            raise RuntimeError(f"packet id {packet.id} emitted twice")
        self.records[packet.id] = PacketRecord(
            packet.id, packet.flow_id, packet.cls.kind.value, packet.size_bits, packet.created_at)

    def _settle(self, packet: Packet) -> PacketRecord:
        rec = self.records[packet.id]
        if rec.delivered or rec.dropped:
            raise RuntimeError(f"packet {packet.id} already has a fate")
        return rec

    def delivered(self, packet: Packet, now: float) -> None:
        self._settle(packet).delivered_at = now

    def dropped(self, packet: Packet, now: float, site: str, reason: str) -> None:
        rec = self._settle(packet)
        rec.dropped_at = now
        rec.drop_site = site
        rec.drop_reason = reason

    def all(self) -> List[PacketRecord]:
        return list(self.records.values())


@dataclass
class TimeSeries:
    """Contiguous buckets ``[k * bucket_s, (k + 1) * bucket_s)`` per key."""

    bucket_s: float
    n_buckets: int
    series: Dict[Tuple, List[float]] = field(default_factory=dict)

    def starts(self) -> List[float]:
        return [k * self.bucket_s for k in range(self.n_buckets)]

    def add(self, key: Tuple, t: float, amount: float = 1) -> None:
        row = self.series.setdefault(key, [0] * self.n_buckets)
        row[self._index(t)] += amount

    def _index(self, t: float) -> int:
        return min(int(t // self.bucket_s), self.n_buckets - 1)

    def totals(self) -> List[float]:
        out = [0] * self.n_buckets
        for row in self.series.values():
            for k, v in enumerate(row):
                out[k] += v
        return out

    def total(self) -> float:
        return sum(self.totals())


def _n_buckets(bucket_s: float, times: Iterable[float], duration: Optional[float]) -> int:
    if not bucket_s > 0:
        raise ValueError("bucket width must be positive")
    if duration is not None:
        return max(1, math.ceil(duration / bucket_s))
    return int(max(times, default=0.0) // bucket_s) + 1


def drops_over_time(records: Sequence[PacketRecord], bucket_s: float = DEFAULT_BUCKET,
                    duration: Optional[float] = None) -> TimeSeries:
    dropped = [r for r in records if r.dropped]
    ts = TimeSeries(bucket_s, _n_buckets(bucket_s, (r.dropped_at for r in dropped), duration))
    for r in dropped:
        ts.add((r.drop_site, r.drop_reason), r.dropped_at)
    return ts


def received_per_class(records: Sequence[PacketRecord], cls, bucket_s: float = DEFAULT_BUCKET,
                       duration: Optional[float] = None) -> TimeSeries:
    """Delivered ``("packets",)`` and ``("bits",)`` per bucket for one class."""
    kind = TrafficKind(cls).value
    got = [r for r in records if r.delivered and r.cls == kind]
    ts = TimeSeries(bucket_s, _n_buckets(bucket_s, (r.delivered_at for r in got), duration))
    ts.series[("packets",)] = [0] * ts.n_buckets
    ts.series[("bits",)] = [0] * ts.n_buckets
    for r in got:
        ts.add(("packets",), r.delivered_at)
        ts.add(("bits",), r.delivered_at, r.size_bits)
    return ts


@dataclass
class RunningMean:
    times: List[float]
    delays: List[float]
    means: List[float]

    def __len__(self):
        return len(self.means)

    @property
    def final(self) -> float:
        return self.means[-1] if self.means else math.nan


def running_mean(delays: Sequence[float]) -> List[float]:
    if not len(delays):
        return []
    return [float(x) for x in np.cumsum(delays) / np.arange(1, len(delays) + 1)]


def time_average_delay(records: Sequence[PacketRecord], cls=None) -> RunningMean:
    """Running mean of end-to-end delay in delivery order."""
    got = [r for r in records if r.delivered and (cls is None or r.cls == TrafficKind(cls).value)]
    got.sort(key=lambda r: (r.delivered_at, r.id))
    delays = [r.delay for r in got]
    return RunningMean([r.delivered_at for r in got], delays, running_mean(delays))


@dataclass
class ClassSummary:
    cls: str
    offered: int
    delivered: int
    dropped: int
    mean_delay: float
    p99_delay: float


def summarize(records: Sequence[PacketRecord], classes: Iterable[str] = ("voice", "video", "data")) -> List[ClassSummary]:
    out = []
    for cls in classes:
        mine = [r for r in records if r.cls == cls]
        delays = np.array([r.delay for r in mine if r.delivered])
        out.append(ClassSummary(
            cls,
            len(mine),
            len(delays),
            sum(1 for r in mine if r.dropped),
            float(delays.mean()) if len(delays) else math.nan,
            float(np.percentile(delays, 99)) if len(delays) else math.nan,
        ))
    return out


# CSV ---------------------------------------------------------------------

DROPS_HEADER = ["time_bucket_start_s", "site", "reason", "count"]
DELIVERED_HEADER = ["time_bucket_start_s", "class", "packets", "bits"]
DELAY_HEADER = ["delivery_time_s", "class", "packet_delay_s", "running_mean_s"]
SUMMARY_HEADER = ["scheduler", "class", "offered_pkts", "delivered_pkts", "dropped_pkts",
                  "mean_delay_s", "p99_delay_s"]


def _write(rows: Iterable[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (int, float, np.integer, np.floating)) else v for v in row])
    return buf.getvalue()


def drops_csv(ts: TimeSeries) -> str:
    rows = []
    for k, start in enumerate(ts.starts()):
        for (site, reason) in sorted(ts.series):
            rows.append((start, site, reason, ts.series[site, reason][k]))
    return _write(rows, DROPS_HEADER)


def delivered_csv(per_class: Dict[str, TimeSeries]) -> str:
    rows = []
    for cls in per_class:
        ts = per_class[cls]
        for k, start in enumerate(ts.starts()):
            rows.append((start, cls, ts.series[("packets",)][k], ts.series[("bits",)][k]))
    rows.sort(key=lambda r: r[0])
    return _write(rows, DELIVERED_HEADER)


def delay_csv(per_class: Dict[str, RunningMean]) -> str:
    rows = []
    for cls, rm in per_class.items():
        rows.extend(zip(rm.times, [cls] * len(rm), rm.delays, rm.means))
    rows.sort(key=lambda r: r[0])
    return _write(rows, DELAY_HEADER)


def summary_csv(scheduler: str, summary: Sequence[ClassSummary]) -> str:
    rows = [(scheduler, s.cls, s.offered, s.delivered, s.dropped, s.mean_delay, s.p99_delay)
            for s in summary]
    return _write(rows, SUMMARY_HEADER)


def read_csv(text: str) -> List[Dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))
