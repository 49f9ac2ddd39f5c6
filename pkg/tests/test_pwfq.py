from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qosim.model import ConfigError
from qosim.pwfq import PrioritizedWfqRR, PwfqConfig, pwfq_rr, sub_queue_share, top_level_share
from qosim.schedulers import wfq

from helpers import backlogged_shares, fluid_shares, packet

EPS = 1e-12


def by_key(p):
    i, j = p.flow_id.split(",")
    return int(i), int(j)


def keys_of(priorities):
    return [f"{i},{j}" for i, row in enumerate(priorities) for j in range(len(row))]


def nested_oracle(weights, priorities):
    """Fluid shares by exact rationals: top level by weight, then by priority."""
    out = {}
    for i, row in enumerate(priorities):
        top = Fraction(weights[i]) / sum(Fraction(w) for w in weights)
        for j, p in enumerate(row):
            out[f"{i},{j}"] = top * Fraction(p) / sum(Fraction(x) for x in row)
    return out


def test_equal_weights_share_a_third():
    cfg = PwfqConfig([1, 1, 1], [[1], [1], [1]])
    for i in range(3):
        assert abs(top_level_share(cfg, i) - 1 / 3) <= EPS


def test_top_share_formula():
    cfg = PwfqConfig([3, 2, 1], [[4, 3, 2, 1], [1], [1]])
    shares = [top_level_share(cfg, i) for i in range(3)]
    assert abs(shares[0] - 0.5) <= EPS
    assert abs(shares[1] - 1 / 3) <= EPS
    assert abs(shares[2] - 1 / 6) <= EPS
    assert abs(sum(shares) - 1.0) <= EPS


def test_sub_share_formula():
    cfg = PwfqConfig([3, 2, 1], [[4, 3, 2, 1], [1], [1]])
    subs = [sub_queue_share(cfg, 0, j) for j in range(4)]
    for got, want in zip(subs, (0.2, 0.15, 0.1, 0.05)):
        assert abs(got - want) <= EPS
    assert abs(sum(subs) - top_level_share(cfg, 0)) <= EPS


def test_single_sub_queue_equals_top_share():
    cfg = PwfqConfig([5, 2], [[7], [3]])
    for i in range(2):
        assert sub_queue_share(cfg, i, 0) == top_level_share(cfg, i)


@given(
    weights=st.lists(st.integers(1, 1000), min_size=1, max_size=6).map(lambda w: sorted(w, reverse=True)),
    data=st.data(),
)
@settings(max_examples=300)
def test_shares_sum_exactly(weights, data):
    priorities = [data.draw(st.lists(st.integers(1, 100), min_size=1, max_size=5)) for _ in weights]
    cfg = PwfqConfig(weights, priorities)
    tops = [top_level_share(cfg, i) for i in range(len(weights))]
    assert abs(sum(tops) - 1) <= EPS
    for i, row in enumerate(priorities):
        assert abs(sum(sub_queue_share(cfg, i, j) for j in range(len(row))) - tops[i]) <= EPS


@pytest.mark.parametrize("weights,priorities", [
    ([3, 2, 1], [[1], [1], [1]]),
    ([3, 2, 1], [[4, 3, 2, 1], [1], [1]]),
    ([5, 3, 2], [[2, 1], [3, 1], [1]]),
])
def test_backlogged_shares_follow_the_formulas(weights, priorities):
    cfg = PwfqConfig(weights, priorities, by_key)
    s = PrioritizedWfqRR(cfg, 10_000_000)
    keys = keys_of(priorities)
    measured = backlogged_shares(s, keys, lambda k: packet(1000, flow_id=k), 12_000)
    oracle = nested_oracle(weights, priorities)
    for k in keys:
        assert measured[k] == pytest.approx(float(oracle[k]), rel=0.05), k
        i, j = map(int, k.split(","))
        assert abs(float(oracle[k]) - sub_queue_share(cfg, i, j)) <= EPS


def test_top_level_matches_flat_fluid_oracle():
    cfg = PwfqConfig([3, 2, 1], [[1], [1], [1]], by_key)
    measured = backlogged_shares(PrioritizedWfqRR(cfg, 1_000_000), keys_of(cfg.priorities),
                                 lambda k: packet(1000, flow_id=k), 10_000)
    for (k, got), want in zip(sorted(measured.items()), fluid_shares([3, 2, 1])):
        assert got == pytest.approx(want, rel=0.05)


def test_sole_backlogged_lowest_queue_gets_whole_link():
    cfg = PwfqConfig([3, 2, 1], [[1], [1], [1]], by_key)
    s = PrioritizedWfqRR(cfg, 1_000_000)
    assert backlogged_shares(s, ["2,0"], lambda k: packet(1000, flow_id=k), 1000) == {"2,0": 1.0}


def test_every_sub_queue_departs_in_every_rotation():
    # 10 Mbps and 1000-byte packets: every sub-queue credit covers a packet
    cfg = PwfqConfig([3, 2, 1], [[4, 3, 2, 1], [2, 1], [1]], by_key)
    s = PrioritizedWfqRR(cfg, 10_000_000, record=True)
    keys = keys_of(cfg.priorities)
    backlogged_shares(s, keys, lambda k: packet(1000, flow_id=k), 10_000)
    seen = {}
    for rotation, i, j in s.departures:
        seen.setdefault(rotation, set()).add((i, j))
    complete = sorted(seen)[:-1]
    assert len(complete) > 50
    wanted = {tuple(map(int, k.split(","))) for k in keys}
    for r in complete:
        assert seen[r] == wanted, f"rotation {r} missed {wanted - seen[r]}"


def test_fifo_inside_sub_queue():
    cfg = PwfqConfig([2, 1], [[1, 1], [1]], by_key)
    s = PrioritizedWfqRR(cfg, 1_000_000)
    sent = [packet(500 + 100 * (n % 5), flow_id=f"{n % 2},0" if n % 3 else "0,1") for n in range(60)]
    for p in sent:
        s.enqueue(p)
    out = [s.dequeue() for _ in sent]
    for key in {p.flow_id for p in sent}:
        assert [p for p in out if p.flow_id == key] == [p for p in sent if p.flow_id == key]


@given(scale=st.sampled_from([0.001, 0.1, 0.3, 2.0, 7.0, 1e6]), seed=st.integers(0, 2 ** 32 - 1))
@settings(max_examples=60, deadline=None)
def test_rescaling_weights_changes_nothing(scale, seed):
    import numpy as np
    rng = np.random.default_rng(seed)
    base = [3, 2, 1]
    prios = [[2, 1], [1], [1]]
    a = PrioritizedWfqRR(PwfqConfig(base, prios, by_key), 1_000_000)
    b = PrioritizedWfqRR(PwfqConfig([w * scale for w in base], prios, by_key), 1_000_000)
    keys = keys_of(prios)
    pkts = [packet(int(rng.choice([64, 500, 1500])), flow_id=keys[int(rng.integers(len(keys)))])
            for _ in range(200)]
    for p in pkts:
        a.enqueue(p)
        b.enqueue(p)
    assert [a.dequeue() for _ in pkts] == [b.dequeue() for _ in pkts]


def test_one_sub_queue_each_degenerates_to_wfq():
    weights = [3, 1]
    cfg = PwfqConfig(weights, [[1], [1]], by_key)
    ours = backlogged_shares(PrioritizedWfqRR(cfg, 1_000_000), ["0,0", "1,0"],
                             lambda k: packet(1000, flow_id=k), 10_000)
    flat = backlogged_shares(wfq(weights, lambda p: int(p.flow_id[0])), ["0,0", "1,0"],
                             lambda k: packet(1000, flow_id=k), 10_000)
    for k in ours:
        assert ours[k] == pytest.approx(flat[k], rel=0.01)


def test_quanta_follow_time_slices():
    cfg = PwfqConfig([3, 2, 1], [[1], [1], [1]], base_slice=0.020)
    s = pwfq_rr(cfg, 1_000_000)
    assert s.quanta == pytest.approx([1250.0, 2500.0 / 3, 1250.0 / 3])
    assert cfg.slice_of(0) == pytest.approx(0.010)


def test_default_classifier_maps_voice_video_data():
    from qosim.model import Packet, TrafficClass
    cfg = PwfqConfig([3, 2, 1], [[1], [1], [1]])
    s = PrioritizedWfqRR(cfg, 1_000_000)
    assert s.classify(Packet(8, TrafficClass.of("voice"))) == (0, 0)
    assert s.classify(Packet(8, TrafficClass.of("video"))) == (1, 0)
    assert s.classify(Packet(8, TrafficClass.of("data"))) == (2, 0)


@pytest.mark.parametrize("weights,priorities", [
    ([1, 2], [[1], [1]]),
    ([0, 0], [[1], [1]]),
    ([2, 1], [[1], []]),
    ([2, 1], [[1], [0]]),
    ([2, 1], [[1]]),
    ([], []),
])
def test_invalid_configs_rejected(weights, priorities):
    with pytest.raises(ConfigError):
        PwfqConfig(weights, priorities)


def test_classifier_table_must_be_complete_and_in_range():
    with pytest.raises(ConfigError):
        PwfqConfig([2, 1], [[1], [1]], {0: (0, 0)})
    with pytest.raises(ConfigError):
        PwfqConfig([2, 1], [[1], [1]], {p: (5, 0) for p in range(8)})
