import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conv3d_dse.arch import ArchSpec, BufferLevel
from conv3d_dse.cost import AccessTable, EnergyTable, evaluate, level_banks
from conv3d_dse.netmodel import LayerShape, Network
from conv3d_dse.optimizer import (AllocationError, EmptySearchSpace, SearchOptions, SearchStats,
                                  allocate, corner_candidates, default_partitions,
                                  effective_order, f_reuse, fits, fits_partition,
                                  generate_configs, load_configs, optimize_layer,
                                  optimize_network, outer_classes, parallelism_options,
                                  save_configs, search_layer, search_network, tile_points)
from conv3d_dse.schedule import (DIMS, LoopOrder, enumerate_loop_orders, tile_bytes,
                                 traffic_model)

DESK = ArchSpec(2, 2, 4, (BufferLevel("L1", 8192, banks=8, bus_bits=32, instances=1),
                          BufferLevel("L0", 1024, banks=4, instances=4)), name="desk")
TABLE = EnergyTable({"L1": AccessTable((1024, 4096), (2.0, 3.0)),
                     "L0": AccessTable((64, 256), (0.5, 0.8))})
LAYER = LayerShape(W=6, H=5, C=4, F=4, K=8, R=3, S=3, T=2, name="desk")


def test_tile_points():
    assert tile_points(12, 8) == [1, 2, 3, 4, 6, 12]
    assert tile_points(112, 3) == [1, 8, 112]
    assert tile_points(1, 3) == [1]
    assert tile_points(7, 1) == [7]


def test_partitions():
    parts = default_partitions()
    assert len(parts) == 22
    for p in parts:
        for share in p:
            assert sum(share) == pytest.approx(1.0)


def test_parallelism_options_fill_all_pes():
    layer = LayerShape(W=8, H=8, C=1, F=3, K=20, R=3, S=3, T=3)
    opts = parallelism_options(layer, DESK)
    assert opts and all(math.prod(p) == 4 and p[2] <= 5 and p[3] == 1 for p in opts)
    assert (1, 1, 4, 1) in opts


def test_corner_candidates():
    parent = dict(W=6, H=4, C=8, K=32, F=3)
    cands = corner_candidates(parent, 8)
    assert len(cands) == 32
    assert dict(W=1, H=1, C=1, K=8, F=1) in cands and parent in cands
    # K never drops below one vector unless the parent is smaller
    assert corner_candidates(dict(W=2, H=2, C=2, K=3, F=2), 8)[-1]["K"] == 3
    assert len(corner_candidates(dict(W=1, H=1, C=1, K=1, F=1))) == 1


def test_f_reuse_fully_resident():
    parent = dict(W=4, H=3, C=2, K=4, F=2)
    r = f_reuse(LAYER, parent, parent, LoopOrder(DIMS), 4)
    # one fill of each tile
    filters = 4 * 2 * 18
    assert r.per_datatype["filters"] == pytest.approx(4 * 3 * 2 * 2 * 18 * 4 / filters)
    assert r.per_datatype["psums"] == 1.0


def test_f_reuse_minimum_filter_tile_without_reuse():
    # one output position, so every filter element fetched is used exactly once
    parent = dict(W=1, H=1, C=4, K=8, F=1)
    tile = dict(W=1, H=1, C=1, K=4, F=1)
    r = f_reuse(LAYER, parent, tile, LoopOrder.parse("WHFCK"), 4)
    assert r.per_datatype["filters"] == 1.0


def test_allocate_is_best_feasible_corner():
    parent = dict(W=4, H=3, C=4, K=8, F=3)
    buf = DESK.levels[1]
    for inner in (LoopOrder.parse("CFWHK"), LoopOrder.parse("KFWHC"), LoopOrder.parse("WHKFC")):
        got = allocate(LAYER, parent, inner, buf, 4)
        feasible = [c for c in corner_candidates(parent, 4) if fits(LAYER, c, buf)]
        assert got in feasible
        score = lambda c: f_reuse(LAYER, parent, c, inner, 4).ratio
        assert score(got) == max(score(c) for c in feasible)


def test_allocate_fails_when_nothing_fits():
    tiny = BufferLevel("L0", 64, banks=1)
    with pytest.raises(AllocationError, match="L0"):
        allocate(LAYER, dict(W=4, H=3, C=4, K=8, F=3), LoopOrder(DIMS), tiny, 4)


def test_outer_classes_group_equivalent_orders():
    top = dict(W=1, H=3, C=4, K=8, F=3)
    ext = {d: LAYER.extent(d) for d in DIMS}
    classes = outer_classes(enumerate_loop_orders(), top, ext)
    # only W iterates, so every order is equivalent
    assert [(e, str(o)) for e, o in classes] == [("W", "CFHKW")]
    assert effective_order(LoopOrder.parse("KWFHC"), dict(W=2, H=3, C=2, K=8, F=3), ext) == "WC"


SMALL = SearchOptions(outer_orders=tuple(LoopOrder.parse(s) for s in ("WHCKF", "KWHCF", "CFWHK", "FKCHW")),
                      inner_orders=tuple(LoopOrder.parse(s) for s in ("cfwhk", "kfwhc", "whkfc")),
                      max_points=8)


def test_brute_force_matches_optimizer():
    stats = SearchStats()
    best = None
    for cfg in generate_configs(LAYER, DESK, SMALL, stats):
        rep = evaluate(LAYER, cfg, DESK, TABLE)
        key = (rep.total_energy, cfg.sort_key())
        if best is None or key < best[0]:
            best = (key, cfg, rep)
    cfg, rep = optimize_layer(LAYER, DESK, TABLE, "energy", SMALL)
    assert rep.total_energy == best[2].total_energy
    assert evaluate(LAYER, cfg, DESK, TABLE).total_energy == rep.total_energy
    # same schedule up to loops that iterate once
    ext = {d: LAYER.extent(d) for d in DIMS}
    assert cfg.tiles == best[1].tiles and cfg.inner == best[1].inner
    assert effective_order(cfg.outer, cfg.tiles.at(0), ext) == \
        effective_order(best[1].outer, best[1].tiles.at(0), ext)


@pytest.mark.parametrize("objective", ["perf", "perf_per_watt"])
def test_other_objectives_match_brute_force(objective):
    reps = [(cfg, evaluate(LAYER, cfg, DESK, TABLE)) for cfg in generate_configs(LAYER, DESK, SMALL)]
    cfg, rep = optimize_layer(LAYER, DESK, TABLE, objective, SMALL)
    if objective == "perf":
        assert rep.cycles == min(r.cycles for _, r in reps)
    else:
        assert rep.perf_per_watt == pytest.approx(max(r.perf_per_watt for _, r in reps), rel=1e-12)


def test_winner_beats_every_fixed_outer_order():
    search = search_layer(LAYER, DESK, SMALL)
    _, best = search.best(TABLE)
    for outer in SMALL.outers():
        only = SearchOptions(outer_orders=(outer,), inner_orders=SMALL.inner_orders, max_points=8)
        _, rep = optimize_layer(LAYER, DESK, TABLE, "energy", only)
        assert best.total_energy <= rep.total_energy


def test_unknown_objective():
    with pytest.raises(ValueError, match="objective"):
        optimize_layer(LAYER, DESK, TABLE, "speed", SMALL)


def test_empty_search_space():
    cramped = ArchSpec(1, 1, 4, (BufferLevel("L0", 32, banks=1),))
    with pytest.raises(EmptySearchSpace):
        optimize_layer(LAYER, cramped, TABLE, "energy", SMALL)


NET = Network("desk", (LAYER, LayerShape(W=5, H=5, C=8, F=3, K=4, R=3, S=3, T=3, name="b"),
                       LayerShape(W=8, H=4, C=2, F=6, K=12, R=2, S=3, T=3, name="c")))
OPTS = SearchOptions(inner_orders=SMALL.inner_orders, max_points=3)


@pytest.fixture(scope="module")
def net_result():
    return search_network(NET, DESK, OPTS)


def test_returned_configs_are_valid(net_result):
    for layer, (cfg, _) in zip(NET, net_result.per_layer(TABLE)):
        traffic_model(layer, cfg, arch=DESK)
        level_banks(layer, cfg, DESK)


def test_baseline_rows_respect_partition(net_result):
    (outer, inner, pi), rows = net_result.baseline(TABLE)
    part = OPTS.partitions[pi]
    for layer, (cfg, rep) in zip(NET, rows):
        assert str(cfg.outer) == outer and str(cfg.inner) == inner
        sizes = [tile_bytes(layer, cfg.tiles.at(i)) for i in range(cfg.n_levels)]
        assert fits_partition(sizes, part, DESK)
        assert rep.total_energy == evaluate(layer, cfg, DESK, TABLE).total_energy


@settings(max_examples=5, deadline=None)
@given(st.lists(st.floats(0.1, 20), min_size=4, max_size=4), st.floats(0, 50), st.floats(0, 2))
def test_opt_dominates_every_uniform_choice(net_result, pj, dram, macc):
    table = EnergyTable({"L1": AccessTable((1024, 4096), sorted(pj[:2])),
                         "L0": AccessTable((64, 256), sorted(pj[2:]))},
                        dram_pj_per_bit=dram, macc_pj=macc)
    res = net_result
    opt = res.total_energy(table)
    totals = res.uniform_table(table).totals
    assert np.isfinite(totals).any()
    assert opt <= totals[np.isfinite(totals)].min()
    assert opt <= res.baseline_energy(table)


def test_network_search_is_deterministic_across_workers(net_result):
    again = search_network(NET, DESK, OPTS, threads=2)
    assert [c.sort_key() for c, _ in again.per_layer(TABLE)] == \
        [c.sort_key() for c, _ in net_result.per_layer(TABLE)]
    assert again.baseline(TABLE)[0] == net_result.baseline(TABLE)[0]


def test_optimize_network_returns_per_layer(net_result):
    per_layer, res = optimize_network(NET, DESK, TABLE, opts=OPTS)
    assert len(per_layer) == 3
    assert math.fsum(r.total_energy for _, r in per_layer) == net_result.total_energy(TABLE)


def test_saved_configs_round_trip(tmp_path, net_result):
    configs = {l.name: c for l, (c, _) in zip(NET, net_result.per_layer(TABLE))}
    path = tmp_path / "cfg.json"
    save_configs(path, configs)
    back = load_configs(path)
    assert {k: v.sort_key() for k, v in back.items()} == {k: v.sort_key() for k, v in configs.items()}
