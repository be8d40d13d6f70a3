import math

import pytest

from conv3d_dse.netmodel import LayerShape, data_path, load_arch, load_energy
from conv3d_dse.optimizer import SearchOptions, search_layer
from conv3d_dse.schedule import LoopOrder, tile_bytes
from conv3d_dse.sweeps import (best_per_inner, best_per_input_share, best_per_outer,
                               hierarchy_sweep)

ARCH = load_arch(data_path("morph.arch"))
TABLE = load_energy(data_path("default.energy"))
LAYER = LayerShape(W=16, H=16, C=16, F=8, K=32, R=3, S=3, T=3, name="mid")
INNER = tuple(LoopOrder.parse(s) for s in ("cfwhk", "kfwhc"))


@pytest.fixture(scope="module")
def search():
    return search_layer(LAYER, ARCH, SearchOptions(inner_orders=INNER, max_points=3))


def test_fixed_order_minima_bound_the_optimum(search):
    _, best = search.best(TABLE)
    outers = best_per_outer(search, TABLE, search.opts.outers())
    assert len(outers) == 120
    assert min(outers.values()) == best.total_energy
    inners = best_per_inner(search, TABLE)
    assert set(inners) == {"cfwhk", "kfwhc"}
    assert min(inners.values()) == best.total_energy
    shares = best_per_input_share(search, TABLE)
    assert min(shares.values()) == best.total_energy
    assert all(0 <= k <= 100 and k % 10 == 0 for k in shares)


def test_hierarchy_sweep_small_layer():
    small = LayerShape(W=12, H=12, C=3, F=6, K=16, R=3, S=3, T=3, name="s")
    res = hierarchy_sweep(small, ARCH, TABLE, depths=(1, 2, 3), max_points=2, beam=2)
    assert [r.depth for r in res] == [1, 2, 3]
    for r in res:
        assert r.config.n_levels == r.depth == len(r.level_bytes)
        # each buffer is exactly as large as the tiles it holds
        for i, size in enumerate(r.level_bytes):
            assert size == sum(tile_bytes(small, r.config.tiles.at(i)).values())
        assert r.energy == math.fsum(r.breakdown.values())
    assert res[2].energy < res[0].energy
