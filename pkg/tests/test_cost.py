import math

import pytest
from hypothesis import given, settings, strategies as st

from conv3d_dse.arch import ArchSpec, BufferLevel
from conv3d_dse.cost import (AccessTable, CostReport, EnergyTable, MissingEntry, cycles,
                             energy, energy_breakdown, energy_table_from_dict, evaluate,
                             perf_per_watt)
from conv3d_dse.netmodel import ConfigError, LayerShape, data_path, load_arch, load_energy
from conv3d_dse.schedule import (DIMS, Config, LoopOrder, TileSpec, Traffic, TrafficCounts,
                                 traffic_model)

from strategies import layer_configs

FLAT = EnergyTable({"default": AccessTable((1 << 30,), (1.0,))}, dram_pj_per_bit=20,
                   macc_pj=0.5, noc_pj_per_byte=0.25, noc_static_pj_per_cycle=0.0)


def _one_level(size=1 << 16, banks=1, word_bits=8):
    return ArchSpec(1, 1, 8, (BufferLevel("L0", size, banks=banks, word_bits=word_bits),))


def test_dram_energy_per_byte():
    counts = TrafficCounts(("DRAM->L0", "L0->PE"), {("DRAM->L0", "inputs"): Traffic(1, 1000)})
    parts = energy_breakdown(counts, 0, FLAT, None, _one_level())
    assert parts["DRAM"] == 160_000.0
    # the receiving buffer pays one 8-bit write per byte at 1 pJ
    assert parts["L0"] == 1000.0
    assert parts["NoC"] == 0.0 and parts["compute"] == 0.0


def test_on_chip_boundary_costs_both_ends_and_noc():
    arch = ArchSpec(1, 1, 8, (BufferLevel("L1", 4096, banks=1, word_bits=64, bus_bits=64, instances=2),
                              BufferLevel("L0", 1024, banks=1, word_bits=64)))
    table = EnergyTable({"L1": AccessTable((4096,), (4.0,)), "L0": AccessTable((1024,), (1.0,))},
                        noc_pj_per_byte=0.5, noc_static_pj_per_cycle=2.0)
    counts = TrafficCounts(("DRAM->L1", "L1->L0", "L0->PE"),
                           {("L1->L0", "filters"): Traffic(2, 64)})
    parts = energy_breakdown(counts, 10, table, None, arch, cycles=100)
    # 64 bytes = 8 words at each end
    assert parts["L1"] == 8 * 4.0 and parts["L0"] == 8 * 1.0
    assert parts["NoC"] == 64 * 0.5 + 100 * 2 * 2.0
    assert parts["compute"] == 10 * table.macc_pj


def test_wide_psums_take_whole_words():
    arch = _one_level(word_bits=16)
    counts = TrafficCounts(("DRAM->L0", "L0->PE"), {("L0->PE", "psums"): Traffic(0, 0, 4, 12)})
    parts = energy_breakdown(counts, 0, FLAT, None, arch, {"inputs": 1, "filters": 1, "psums": 3})
    # four 24-bit values need two 16-bit words each
    assert parts["L0"] == 8.0


def test_access_table_lookup():
    t = AccessTable((1024, 4096, 65536), (1.0, 2.0, 5.0))
    assert t.lookup(1) == 1.0 and t.lookup(1024) == 1.0 and t.lookup(1025) == 2.0
    assert t.lookup(65536) == 5.0
    with pytest.raises(MissingEntry, match="65537"):
        t.lookup(65537)
    assert t.scaled(2).pj == (2.0, 4.0, 10.0)


@pytest.mark.parametrize("sizes, pj", [((), ()), ((2, 1), (1, 2)), ((1, 2), (2, 1)), ((1,), (-1,))])
def test_access_table_rejects_bad_rows(sizes, pj):
    with pytest.raises(ValueError):
        AccessTable(sizes, pj)


def test_level_without_table_falls_back_or_fails():
    t = EnergyTable({"L2": AccessTable((8,), (1.0,))})
    with pytest.raises(MissingEntry, match="L1"):
        t.access_pj("L1", 8)


def test_energy_file_errors(tmp_path):
    p = tmp_path / "e.energy"
    p.write_text("dram_pj_per_bit = 20\n")
    with pytest.raises(ConfigError, match="no \\[buffer"):
        load_energy(p)
    with pytest.raises(ConfigError, match="buffer.L0"):
        energy_table_from_dict({"buffer": {"L0": {"table": [[2, 1.0], [1, 2.0]]}}})


def test_perf_per_watt():
    rep = CostReport({"compute": 1e12}, cycles=10, macc_total=2_000_000)
    # 2e6 MACCs for 1 J
    assert perf_per_watt(rep) == pytest.approx(2e6)
    assert perf_per_watt(rep, clock_hz=5) == pytest.approx(2e6)
    assert perf_per_watt(CostReport({"compute": 0.0}, 10, 0, 5)) == math.inf
    with pytest.raises(ValueError):
        perf_per_watt(CostReport({"compute": 1.0}, 0, 0, 5))


def test_shipped_energy_table_is_monotone():
    table = load_energy(data_path("default.energy"))
    for t in table.buffers.values():
        assert list(t.pj) == sorted(t.pj)
    assert table.access_pj("L0", 1024) < table.access_pj("L2", 65536)


ARCH = load_arch(data_path("morph.arch"))


@settings(max_examples=60, deadline=None)
@given(layer_configs(max_levels=3, vector_width=8), st.integers(2, 5))
def test_dynamic_energy_scales_linearly(lc, k):
    layer, cfg = lc
    counts = traffic_model(layer, cfg)
    arch = ArchSpec(1, 4, 8, tuple(BufferLevel(f"X{i}", 1 << 20, banks=1, bus_bits=64)
                                   for i in range(cfg.n_levels)))
    table = load_energy(data_path("default.energy"))
    one = energy_breakdown(counts, layer.maccs, table, None, arch)
    many = energy_breakdown(counts.scaled(k), layer.maccs * k, table, None, arch)
    for key in one:
        assert many[key] == pytest.approx(k * one[key], rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(layer_configs(max_levels=3, vector_width=8))
def test_cycles_bounds(lc):
    layer, cfg = lc
    arch = ArchSpec(1, 4, 8, tuple(BufferLevel(f"X{i}", 1 << 20, banks=1, bus_bits=64)
                                   for i in range(cfg.n_levels)))
    cyc, util = cycles(layer, cfg, arch)
    par = math.prod(cfg.parallelism)
    # never faster than perfect use of the PEs actually assigned, never slower than serial
    assert cyc >= math.ceil(layer.maccs / (par * 8))
    assert 0 < util <= 1
    serial = Config(cfg.outer, cfg.inner, cfg.tiles, (1, 1, 1, 1), 8)
    assert cyc <= cycles(layer, serial, arch)[0]


def test_cycles_partial_round():
    # W_out = 7 over Wp = 4: two rounds, each one output position wide
    layer = LayerShape(W=9, H=3, C=1, F=1, K=8, R=3, S=3, T=1)
    arch = ArchSpec(1, 4, 8, (BufferLevel("L0", 1 << 16),))
    cfg = Config(LoopOrder(DIMS), LoopOrder(DIMS), TileSpec(((1, 1, 1, 8, 1),)), (1, 4, 1, 1))
    cyc, util = cycles(layer, cfg, arch)
    assert cyc == 2 * 9
    assert util == pytest.approx(layer.maccs / (cyc * 4 * 8))


def test_slow_bus_dominates():
    layer = LayerShape(W=9, H=3, C=1, F=1, K=8, R=3, S=3, T=1)
    arch = ArchSpec(1, 4, 8, (BufferLevel("L0", 1 << 16),))
    cfg = Config(LoopOrder(DIMS), LoopOrder(DIMS), TileSpec(((1, 1, 1, 8, 1),)), (1, 4, 1, 1))
    assert cycles(layer, cfg, arch, bus_cycles=1000)[0] == 2 * 500


def test_evaluate_on_shipped_arch():
    layer = LayerShape(W=16, H=16, C=8, F=8, K=16, R=3, S=3, T=3)
    cfg = Config(LoopOrder.parse("WHCKF"), LoopOrder.parse("CFWHK"),
                 TileSpec(((14, 14, 8, 16, 6), (7, 14, 8, 8, 6), (7, 2, 1, 8, 1))), (2, 6, 2, 1))
    rep = evaluate(layer, cfg, ARCH, load_energy(data_path("default.energy")))
    assert set(rep.energy) == {"DRAM", "L2", "L1", "L0", "NoC", "compute"}
    assert all(v >= 0 for v in rep.energy.values())
    assert rep.total_energy == math.fsum(rep.energy.values())
    assert rep.macc_total == layer.maccs and 0 < rep.utilization <= 1
    assert energy(traffic_model(layer, cfg), layer.maccs, FLAT, None, ARCH).total_energy > 0
