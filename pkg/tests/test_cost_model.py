import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import tile_walk_ema

from waferdse.cost_model import (DataflowKind, PerfTable, PerfTableMiss, allgather_time,
                                 allreduce_time, build_perf_table, choose_tiles, content_hash,
                                 ema_for_dataflow, ema_for_tiles, hw_key, op_latency,
                                 select_dataflow)
from waferdse.hw_model import CoreSpec, DieSpec
from waferdse.workload import ModelConfig, OperatorNode, build_operator_graph

DIE = DieSpec(20, 20, 16, 16, CoreSpec(2.04e12, 1310720), name="d16")
OS, WS, IS = DataflowKind.OS, DataflowKind.WS, DataflowKind.IS
NAMES = {OS: "OS", WS: "WS", IS: "IS"}


def gemm(m, k, n):
    f = 2.0 * m * k * n
    return OperatorNode("g", "QKV-GEMM", (m, k, n), f, 2 * f, 0)


def test_4096_cube_against_tile_walk():
    tiles = (1024, 1024, 1024)
    for df in (OS, WS, IS):
        assert ema_for_tiles(4096, 4096, 4096, tiles, df) == \
            tile_walk_ema(4096, 4096, 4096, tiles, NAMES[df])
    # square problem: WS and IS coincide, OS differs (it never spills C)
    assert ema_for_tiles(4096, 4096, 4096, tiles, OS) != ema_for_tiles(4096, 4096, 4096, tiles, WS)


def test_ws_and_os_differ_on_rectangular():
    tiles = (256, 256, 256)
    a = ema_for_tiles(2048, 512, 256, tiles, OS)
    b = ema_for_tiles(2048, 512, 256, tiles, WS)
    assert a != b
    assert a == tile_walk_ema(2048, 512, 256, tiles, "OS")


def test_sram_resident_one_touch():
    for df in (OS, WS, IS):
        assert ema_for_dataflow(64, 32, 16, df, (16, 16), 1 << 20) == 2 * (64 * 32 + 32 * 16 + 64 * 16)
    assert select_dataflow(gemm(64, 64, 64), DIE) is OS


def test_rs_only_for_convolutions():
    with pytest.raises(ValueError):
        ema_for_tiles(8, 8, 8, (4, 4, 4), DataflowKind.RS)


def test_tall_skinny_picks_oracle_minimum():
    m, k, n = 65536, 256, 256
    tiles = choose_tiles(m, k, n, (16, 16), DIE.sram_bytes)
    emas = {df: tile_walk_ema(m, k, n, tiles, NAMES[df]) for df in (OS, WS, IS)}
    best = min((OS, WS, IS), key=lambda d: (emas[d], (OS, WS, IS).index(d)))
    assert select_dataflow(gemm(m, k, n), DIE) is best


def test_layernorm_streams():
    ln = build_operator_graph(ModelConfig("x", 1, 256, 4, 128, 10), 2)[0]
    assert select_dataflow(ln, DIE) is OS
    cost = op_latency(ln, DIE, 1e12)
    assert cost.ema_bytes == 2 * 2 * 128 * 256 * 2


def test_roofline_examples():
    copy = OperatorNode("c", "Activation-Fn", (1000,), 0.0, 0.0, 0)
    assert op_latency(copy, DIE, 1e9).latency == pytest.approx(4000 / 1e9, rel=1e-12)
    big = gemm(512, 512, 512)
    c = op_latency(big, DIE, 1e15)
    assert c.latency == pytest.approx(big.fwd_flops / (DIE.compute_flops * 0.5), rel=1e-12)
    slow = gemm(4096, 16, 4096)
    t1 = op_latency(slow, DIE, 1e9, dataflow=OS).latency
    t2 = op_latency(slow, DIE, 2e9, dataflow=OS).latency
    assert t2 == pytest.approx(t1 / 2, rel=1e-12)


def test_allreduce_examples():
    assert allreduce_time(1, 1e9, 1e12, 1e-6) == 0.0
    t = allreduce_time(4, 32 * 2 ** 20, 4e12, 1e-6)
    assert t == pytest.approx(1e-6 + 48 * 2 ** 20 / 4e12, rel=1e-12)
    assert t == pytest.approx(13.58e-6, rel=1e-3)
    assert (allreduce_time(10 ** 9, 1.0, 1.0, 0.0)) == pytest.approx(2.0, rel=1e-8)
    with pytest.raises(ValueError):
        allreduce_time(0, 1, 1, 0)
    assert allgather_time(1, 10, 1, 1) == 0.0


@given(st.integers(2, 64), st.floats(1, 1e10), st.floats(1, 1e10))
def test_allreduce_monotone(tp, x, dx):
    assert allreduce_time(tp, x + dx, 1e12, 1e-6) > allreduce_time(tp, x, 1e12, 1e-6)
    assert allreduce_time(tp + 1, x, 1e12, 0.0) > allreduce_time(tp, x, 1e12, 0.0)


shapes = st.tuples(st.integers(1, 3000), st.integers(1, 3000), st.integers(1, 3000))


@given(shapes, st.sampled_from([OS, WS, IS]))
def test_ema_lower_bound(d, df):
    m, k, n = d
    assert ema_for_dataflow(m, k, n, df, (16, 16), 65536) >= 2 * (m * k + k * n + m * n)


@given(shapes, st.floats(1e9, 1e13))
def test_roofline_dominance_and_argmin(d, bw):
    op = gemm(*d)
    best = select_dataflow(op, DIE, bw)
    costs = {df: op_latency(op, DIE, bw, dataflow=df) for df in (OS, WS, IS)}
    assert costs[best].latency == min(c.latency for c in costs.values())
    c = costs[best]
    comp, mem = op.fwd_flops / (DIE.compute_flops * 0.5), c.ema_bytes / bw
    assert c.latency >= comp and c.latency >= mem
    assert c.latency in (comp, mem)


def test_perf_table_lookup_and_roundtrip():
    ops = build_operator_graph(ModelConfig("x", 1, 256, 4, 128, 10), 2)
    t1 = build_perf_table(ops, [(DIE, 1e12)])
    t2 = build_perf_table(ops, [(DIE, 1e12)])
    assert t1.to_json() == t2.to_json()
    hw = hw_key(DIE, 1e12)
    for op in ops:
        assert t1.lookup(op, hw, "bwd") == op_latency(op, DIE, 1e12, direction="bwd")
    again = PerfTable.from_json(t1.to_json())
    assert again.to_json() == t1.to_json()
    assert content_hash({"a": 1}) == content_hash({"a": 1})


def test_empty_table_misses():
    table = build_perf_table([], [(DIE, 1e12)])
    assert len(table) == 0
    with pytest.raises(PerfTableMiss):
        table.lookup(gemm(2, 2, 2), hw_key(DIE, 1e12))


def test_fifty_case_grid_matches_oracle():
    sizes = [(m, k, n) for m, k, n in itertools.product([1, 7, 64, 300], [5, 96, 513], [3, 128, 1000])]
    cases = sizes[:50] if len(sizes) >= 50 else sizes
    for m, k, n in cases:
        tiles = choose_tiles(m, k, n, (16, 16), 4096)
        for df in (OS, WS, IS):
            assert ema_for_dataflow(m, k, n, df, (16, 16), 4096) == \
                tile_walk_ema(m, k, n, tiles, NAMES[df])
