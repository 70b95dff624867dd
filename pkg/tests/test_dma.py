from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from isaxcc.dma import (
    STORE,
    DmaError,
    LatencyModel,
    Partition,
    TransferSpec,
    brute_force,
    burst_sizes,
    latency,
    optimize,
    plan,
    rank,
)

DEFAULT = LatencyModel()


def test_default_latency_parameters():
    m = LatencyModel()
    assert (m.t_ss, m.burst_init_load, m.burst_init_store, m.per_word) == (3, 15, 5, 1)
    assert burst_sizes(m) == [8, 16, 32, 64]


def test_latency_spot_values():
    assert latency(Partition({64: 1}), DEFAULT) == 23
    assert latency(Partition(), DEFAULT) == 0
    assert latency(Partition({}, 8), DEFAULT) == 24
    assert latency(Partition({64: 1}), LatencyModel(direction=STORE)) == 13


def test_latency_rejects_bad_partitions():
    with pytest.raises(DmaError):
        latency(Partition({24: 1}), DEFAULT)
    with pytest.raises(DmaError):
        latency(Partition({8: -1}), DEFAULT)
    with pytest.raises(DmaError):
        latency(Partition({}, -2), DEFAULT)


@pytest.mark.parametrize(
    "kw",
    [{"t_ss": 0}, {"bus_width_bytes": 12}, {"bus_width_bytes": 128}, {"cacheline_bytes": 48}, {"direction": "both"}],
)
def test_model_validation(kw):
    with pytest.raises(DmaError):
        LatencyModel(**kw)


def test_transfer_spec_validation():
    with pytest.raises(DmaError):
        TransferSpec(-1)
    with pytest.raises(DmaError):
        TransferSpec(8, d_ss=0)


def test_small_cases():
    assert optimize(TransferSpec(0), DEFAULT).transfers == 0
    p64 = optimize(TransferSpec(64), DEFAULT)
    assert p64.x_bur == {64: 1} and p64.x_ss == 0 and p64.total_cycles == 23
    p8 = optimize(TransferSpec(8), DEFAULT)
    assert p8.x_bur == {} and p8.x_ss == 1 and p8.total_cycles == 3
    p1 = optimize(TransferSpec(1), DEFAULT)
    assert p1.x_ss == 1 and p1.transfers == 1
    store = optimize(TransferSpec(64), LatencyModel(direction=STORE))
    assert store.x_bur == {64: 1} and store.total_cycles == 13


def _naive(s: TransferSpec, m: LatencyModel) -> int:
    """Unpruned enumeration of every count vector up to ceil(D/size)."""
    d_ss = s.single_shot(m)
    sizes = burst_sizes(m) + [d_ss]
    costs = [m.t_bur(b) for b in burst_sizes(m)] + [m.t_ss]
    best = None
    for counts in itertools.product(*[range(-(-s.D // b) + 1) for b in sizes]):
        if sum(n * b for n, b in zip(counts, sizes)) >= s.D:
            c = sum(n * t for n, t in zip(counts, costs))
            best = c if best is None else min(best, c)
    return best


@pytest.mark.parametrize("D", [0, 1, 7, 8, 9, 24, 40, 56, 63, 64, 72, 100, 128])
@pytest.mark.parametrize("m", [DEFAULT, LatencyModel(t_ss=2), LatencyModel(direction=STORE)], ids=["def", "ss2", "store"])
def test_brute_force_matches_naive(D, m):
    assert brute_force(TransferSpec(D), m).total_cycles == _naive(TransferSpec(D), m)


def test_optimize_equals_brute_force_default_sweep():
    for D in range(0, 4097, 8):
        s = TransferSpec(D)
        a, b = optimize(s, DEFAULT), brute_force(s, DEFAULT)
        assert a.total_cycles == b.total_cycles, D
        assert rank(a, DEFAULT) == rank(b, DEFAULT), D


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 600),
    st.integers(1, 4),
    st.integers(1, 20),
    st.sampled_from([1, 2]),
    st.sampled_from([(4, 32), (8, 64), (8, 8), (16, 128)]),
    st.sampled_from([None, 2, 4, 12]),
    st.sampled_from(["load", "store"]),
)
def test_optimize_equals_brute_force_random(D, t_ss, init, per_word, geom, d_ss, direction):
    bus, line = geom
    m = LatencyModel(t_ss, init, init, per_word, bus, line, direction)
    s = TransferSpec(D, d_ss)
    a, b = optimize(s, m), brute_force(s, m)
    assert a.total_cycles == b.total_cycles
    assert rank(a, m) == rank(b, m)
    assert a.covered(s.single_shot(m)) >= D


def test_coverage_and_monotonicity():
    for m in (DEFAULT, LatencyModel(t_ss=2), LatencyModel(direction=STORE)):
        prev = 0
        for D in range(0, 1025):
            p = optimize(TransferSpec(D), m)
            assert p.covered(m.bus_width_bytes) >= D
            assert p.total_cycles == latency(p, m)
            assert p.total_cycles >= prev
            prev = p.total_cycles


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.sampled_from([8, 16, 32, 64]), st.integers(0, 50)), st.integers(0, 50), st.integers(1, 5))
def test_scale_freeness(x_bur, x_ss, k):
    p = Partition(x_bur, x_ss)
    scaled = Partition({b: n * k for b, n in x_bur.items()}, x_ss * k)
    assert latency(scaled, DEFAULT) == k * latency(p, DEFAULT)


def test_tie_break_prefers_bursts():
    m = LatencyModel(t_ss=4, burst_init_load=3, per_word=1, bus_width_bytes=4, cacheline_bytes=8)
    # 8 bytes: one 8 B burst = 3 + 2 = 5 cycles; two single-shots = 8; 4 B burst + ss = 3+1+4 = 8
    p = optimize(TransferSpec(8), m)
    assert p.x_bur == {8: 1}
    # 4 bytes: 4 B burst = 4 cycles, single-shot = 4 cycles; both one transfer, larger bursts win
    q = optimize(TransferSpec(4), m)
    assert q.x_bur == {4: 1} and q.x_ss == 0


def test_cap():
    with pytest.raises(DmaError, match="cap"):
        brute_force(TransferSpec(5000), DEFAULT)
    assert brute_force(TransferSpec(100), DEFAULT, cap=100).total_cycles == optimize(TransferSpec(100), DEFAULT).total_cycles


def test_plan_json_shape():
    out = plan(72)
    assert out["bytes"] == 72 and out["direction"] == "load"
    assert out["total_cycles"] == latency(Partition({int(b): n for b, n in out["x_bur"].items()}, out["x_ss"]), DEFAULT)
    assert out["transfers"] == sum(out["x_bur"].values()) + out["x_ss"]


def test_deterministic():
    assert [optimize(TransferSpec(D), DEFAULT) for D in range(0, 300, 5)] == [
        optimize(TransferSpec(D), DEFAULT) for D in range(0, 300, 5)
    ]
