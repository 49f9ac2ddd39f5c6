import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qosim.metrics import (DELAY_HEADER, DELIVERED_HEADER, DROPS_HEADER, SUMMARY_HEADER, PacketRecord,
                           Recorder, delay_csv, delivered_csv, drops_csv, drops_over_time, fmt, read_csv,
                           received_per_class, running_mean, summarize, summary_csv, time_average_delay)
from qosim.model import Packet, TrafficClass


def dropped(t, site="r1->r2", reason="tail_drop", cls="data"):
    return PacketRecord(0, "f", cls, 8000, max(0.0, t - 0.1), dropped_at=t, drop_site=site, drop_reason=reason)


def delivered(created, at, cls="voice", bits=1600, flow="f"):
    return PacketRecord(0, flow, cls, bits, created, delivered_at=at)


def test_no_drops_all_zero():
    ts = drops_over_time([delivered(0, 1)], 1.0, duration=5)
    assert ts.totals() == [0] * 5


def test_drop_counting_example():
    ts = drops_over_time([dropped(0.5), dropped(1.5), dropped(1.6)], 1.0)
    assert ts.totals() == [1, 2]


def test_drops_split_by_site_and_reason():
    ts = drops_over_time([dropped(0.5), dropped(0.7, "a", "no_route")], 1.0)
    assert ts.series == {("r1->r2", "tail_drop"): [1], ("a", "no_route"): [1]}


def test_bucket_width_must_be_positive():
    with pytest.raises(ValueError):
        drops_over_time([], 0)


def test_received_per_class_counts_packets_and_bits():
    recs = [delivered(0, 0.2), delivered(0, 1.2, bits=800), delivered(0, 1.3, cls="video")]
    ts = received_per_class(recs, "voice", 1.0, duration=3)
    assert ts.series[("packets",)] == [1, 1, 0]
    assert ts.series[("bits",)] == [1600, 800, 0]
    assert received_per_class(recs, "data", 1.0, duration=3).total() == 0


def test_running_mean_example():
    assert running_mean([0.1, 0.2, 0.3]) == pytest.approx([0.1, 0.15, 0.2])
    assert running_mean([]) == []
    empty = time_average_delay([], "voice")
    assert len(empty) == 0 and math.isnan(empty.final)


def test_time_average_in_delivery_order():
    recs = [delivered(0, 3.0), delivered(0.5, 1.0), delivered(1.0, 2.0)]
    rm = time_average_delay(recs, "voice")
    assert rm.times == [1.0, 2.0, 3.0]
    assert rm.delays == pytest.approx([0.5, 1.0, 3.0])
    assert rm.final == pytest.approx(1.5)


def test_recorder_allows_exactly_one_fate():
    rec = Recorder()
    p = Packet(800, TrafficClass.of("data"))
    rec.emitted(p)
    rec.delivered(p, 1.0)
    with pytest.raises(RuntimeError):
        rec.dropped(p, 1.0, "x", "tail_drop")
    with pytest.raises(RuntimeError):
        rec.emitted(p)


records = st.lists(
    st.tuples(st.booleans(), st.floats(0, 50), st.floats(0, 5), st.sampled_from(["voice", "video", "data"])),
    max_size=200,
).map(lambda rows: [
    delivered(t, t + d, cls) if ok else dropped(t + d, cls=cls) for ok, t, d, cls in rows])


@given(recs=records, bucket=st.sampled_from([0.1, 0.5, 1.0, 3.0]))
@settings(max_examples=200, deadline=None)
def test_bucket_sums_match_totals(recs, bucket):
    assert drops_over_time(recs, bucket).total() == sum(r.dropped for r in recs)
    for cls in ("voice", "video", "data"):
        ts = received_per_class(recs, cls, bucket)
        assert sum(ts.series[("packets",)]) == sum(r.delivered and r.cls == cls for r in recs)


def test_fmt_nine_significant_digits():
    assert fmt(0.1 + 0.2) == "0.3"
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(123456789012.0) == "1.23456789e+11"
    assert fmt(7) == "7"
    assert fmt(math.nan) == "nan"


def test_csv_headers_and_line_endings():
    recs = [delivered(0, 0.5), dropped(0.5)]
    files = [
        drops_csv(drops_over_time(recs, 1.0, 2)),
        delivered_csv({"voice": received_per_class(recs, "voice", 1.0, 2)}),
        delay_csv({"voice": time_average_delay(recs, "voice")}),
        summary_csv("fifo", summarize(recs)),
    ]
    headers = [DROPS_HEADER, DELIVERED_HEADER, DELAY_HEADER, SUMMARY_HEADER]
    for text, header in zip(files, headers):
        assert "\r" not in text and text.endswith("\n")
        assert text.splitlines()[0] == ",".join(header)


@given(recs=records, bucket=st.sampled_from([0.25, 1.0]))
@settings(max_examples=100, deadline=None)
def test_csv_round_trip(recs, bucket):
    drops = drops_over_time(recs, bucket, 60)
    rows = read_csv(drops_csv(drops))
    back = {}
    for row in rows:
        back.setdefault((row["site"], row["reason"]), []).append(int(row["count"]))
    assert back == drops.series
    starts = sorted({float(r["time_bucket_start_s"]) for r in rows})
    assert starts == ([float(fmt(t)) for t in drops.starts()] if drops.series else [])

    per = {c: received_per_class(recs, c, bucket, 60) for c in ("voice", "video", "data")}
    rows = read_csv(delivered_csv(per))
    for c, ts in per.items():
        mine = [r for r in rows if r["class"] == c]
        assert [int(r["packets"]) for r in mine] == ts.series[("packets",)]
        assert [int(r["bits"]) for r in mine] == ts.series[("bits",)]

    means = {c: time_average_delay(recs, c) for c in ("voice", "video", "data")}
    rows = read_csv(delay_csv(means))
    for c, rm in means.items():
        mine = [r for r in rows if r["class"] == c]
        # nine significant digits: exact as text, within 5e-9 relative as numbers
        assert [r["packet_delay_s"] for r in mine] == [fmt(x) for x in rm.delays]
        assert [float(r["running_mean_s"]) for r in mine] == pytest.approx(rm.means, rel=5e-9, abs=1e-300)
        assert [float(fmt(x)) for x in rm.means] == [float(r["running_mean_s"]) for r in mine]


def test_summary_statistics():
    recs = [delivered(0, d) for d in (0.1, 0.2, 0.3, 0.4)] + [dropped(1.0, cls="voice")]
    s = {c.cls: c for c in summarize(recs)}
    assert (s["voice"].offered, s["voice"].delivered, s["voice"].dropped) == (5, 4, 1)
    assert s["voice"].mean_delay == pytest.approx(0.25)
    assert s["voice"].p99_delay == pytest.approx(0.397)
    assert math.isnan(s["data"].mean_delay)
