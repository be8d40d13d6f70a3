"""Command-line entry point: ``conv3d-dse optimize | validate | sweep``.

Exit codes: 0 on success, 1 when a validation check fails, 2 for bad input.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from pathlib import Path

import click

from .cost import CostReport
from .funcsim import cross_check
from .netmodel import ConfigError, load_arch, load_energy, load_network
from .optimizer import (NAMED_INNER, OBJECTIVES, EmptySearchSpace, SearchOptions,
                        config_to_dict, save_configs, search_network)
from .schedule import LoopOrder
from .sweeps import best_per_inner, best_per_input_share, best_per_outer, hierarchy_sweep

SCHEMA = "conv3d-dse-report/1"
SWEEP_SCHEMA = "conv3d-dse-sweep/1"


class InputError(click.ClickException):
    exit_code = 2


def _fmt(x) -> str:
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.9e}"
    return str(x)


def _load(network_path, arch_path=None, energy_path=None, layers=None):
    try:
        net = load_network(network_path)
        if layers is not None:
            names = [s for s in layers.split(",") if s.strip()]
            if not names:
                raise ConfigError("empty layer selection")
            net = net.select(s.strip() for s in names)
        arch = load_arch(arch_path) if arch_path else None
        table = load_energy(energy_path) if energy_path else None
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    return net, arch, table


def _orders(text: str, named):
    if text == "all":
        return None
    if text == "named":
        return tuple(named)
    try:
        return tuple(LoopOrder.parse(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _options(outer, inner, max_points):
    if max_points < 1:
        raise InputError("--max-points must be >= 1")
    return SearchOptions(outer_orders=_orders(outer, ()), inner_orders=_orders(inner, NAMED_INNER),
                         max_points=max_points)


def _combine(reports) -> CostReport:
    keys = list(reports[0].energy)
    energy = {k: math.fsum(r.energy[k] for r in reports) for k in keys}
    cyc = sum(r.cycles for r in reports)
    maccs = sum(r.macc_total for r in reports)
    util = math.fsum(r.utilization * r.cycles for r in reports) / cyc if cyc else 0.0
    return CostReport(energy, cyc, util, maccs)


def _row(kind, name, cfg, rep: CostReport, energy_keys):
    row = [SCHEMA, kind, name]
    if cfg is None:
        row += ["", "", "", ""]
    else:
        d = config_to_dict(cfg)
        row += [d["outer"], d["inner"],
                "|".join(",".join(f"{k}{v}" for k, v in lvl.items()) for lvl in d["tiles"]),
                ",".join(f"{k}{v}" for k, v in d["parallelism"].items())]
    row += [_fmt(float(rep.energy[k])) for k in energy_keys]
    row += [_fmt(float(rep.total_energy)), str(rep.cycles), _fmt(float(rep.utilization)),
            _fmt(float(rep.perf_per_watt))]
    return row


def _report_doc(cfg, rep):
    return {"config": config_to_dict(cfg) if cfg is not None else None,
            "energy_pJ": dict(rep.energy), "total_pJ": rep.total_energy,
            "cycles": rep.cycles, "utilization": rep.utilization,
            "maccs": rep.macc_total, "perf_per_watt": rep.perf_per_watt}


@click.group()
def main():
    """Design-space exploration for 3D convolution accelerators."""


@main.command()
@click.argument("network", type=click.Path(exists=True, dir_okay=False))
@click.argument("arch", type=click.Path(exists=True, dir_okay=False))
@click.argument("energy", type=click.Path(exists=True, dir_okay=False))
@click.option("--objective", type=click.Choice(OBJECTIVES), default="energy", show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="dse-out", show_default=True,
              help="Directory for configs.json, report.csv and report.json.")
@click.option("--threads", type=int, default=1, show_default=True, help="Worker processes.")
@click.option("--max-points", type=int, default=3, show_default=True,
              help="Top-level tile sizes tried per dimension.")
@click.option("--outer", default="all", show_default=True, help="'all' or comma-separated orders.")
@click.option("--inner", default="named", show_default=True,
              help="'named' (cfwhk,kfwhc,whkfc), 'all', or comma-separated orders.")
@click.option("--layers", default=None, help="Comma-separated layer names (default: all).")
def optimize(network, arch, energy, objective, out_dir, threads, max_points, outer, inner, layers):
    """Pick the best configuration for every layer and compare with one uniform configuration."""
    net, hw, table = _load(network, arch, energy, layers)
    opts = _options(outer, inner, max_points)
    try:
        result = search_network(net, hw, opts, threads=max(1, threads))
        per_layer = result.per_layer(table, objective)
        (b_outer, b_inner, b_part), base_rows = result.baseline(table)
    except (EmptySearchSpace, ValueError) as exc:
        raise InputError(str(exc)) from exc

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_configs(out / "configs.json", {l.name: cfg for l, (cfg, _) in zip(net, per_layer)})

    keys = list(per_layer[0][1].energy)
    opt_total = _combine([rep for _, rep in per_layer])
    base_total = _combine([rep for _, rep in base_rows])
    ratio = base_total.total_energy / opt_total.total_energy
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["schema", "kind", "layer", "outer", "inner", "tiles", "parallelism"]
                   + [f"{k}_pJ" for k in keys]
                   + ["total_pJ", "cycles", "utilization", "maccs_per_joule"])
        for layer, (cfg, rep) in zip(net, per_layer):
            w.writerow(_row("layer", layer.name, cfg, rep, keys))
        w.writerow(_row("total", "", None, opt_total, keys))
        row = _row("baseline", "", None, base_total, keys)
        row[3:5] = [b_outer, b_inner.lower()]
        w.writerow(row)

    doc = {
        "schema": SCHEMA,
        "network": net.name,
        "arch": hw.name,
        "energy_table": table.name,
        "objective": objective,
        "search": {"max_points": opts.max_points,
                   "outer_orders": len(opts.outers()), "inner_orders": [str(i).lower() for i in opts.inners()],
                   "evaluated": sum(s.stats.evaluated for s in result.searches),
                   "shared": sum(s.stats.shared for s in result.searches),
                   "discarded": sum(s.stats.discarded for s in result.searches)},
        "layers": {l.name: _report_doc(cfg, rep) for l, (cfg, rep) in zip(net, per_layer)},
        "total": _report_doc(None, opt_total),
        "baseline": {"outer": b_outer, "inner": b_inner.lower(), "partition": list(opts.partitions[b_part]),
                     "total": _report_doc(None, base_total),
                     "layers": {l.name: _report_doc(cfg, rep) for l, (cfg, rep) in zip(net, base_rows)}},
        "baseline_over_optimized": ratio,
    }
    with open(out / "report.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for layer, (cfg, rep) in zip(net, per_layer):
        click.echo(f"{layer.name:10s} {rep.total_energy:.4e} pJ  {cfg.describe()}")
    click.echo(f"optimized total  {opt_total.total_energy:.4e} pJ")
    click.echo(f"uniform baseline {base_total.total_energy:.4e} pJ  [{b_outer}] [{b_inner.lower()}] "
               f"partition {b_part}")
    click.echo(f"baseline / optimized = {ratio:.3f}")


@main.command()
@click.argument("network", type=click.Path(exists=True, dir_okay=False))
@click.argument("arch", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trials", type=int, default=200, show_default=True)
@click.option("--mutate", type=click.Choice(["none", "halo"]), default="none", show_default=True,
              help="Inject a deliberate halo off-by-one to confirm the checks catch it.")
def validate(network, arch, seed, trials, mutate):
    """Cross-check simulator, direct convolution and traffic model on random configs."""
    net, hw, _ = _load(network, arch)
    if trials < 0:
        raise InputError("--trials must be >= 0")
    if trials == 0:
        click.echo("warning: 0 trials requested; nothing was checked", err=True)
        click.echo("PASS (vacuous)")
        return
    try:
        res = cross_check(net.layers, hw, trials, seed, halo_bias=1 if mutate == "halo" else 0)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    for name in ("output", "traffic", "maccs"):
        click.echo(f"{name:8s} {getattr(res, name)}/{res.trials}")
    for t, layer, msg in res.failures[:10]:
        click.echo(f"  trial {t} ({layer}): {msg}", err=True)
    if not res.ok or res.trials < trials:
        click.echo("FAIL")
        sys.exit(1)
    click.echo("PASS")


@main.command()
@click.argument("network", type=click.Path(exists=True, dir_okay=False))
@click.argument("arch", type=click.Path(exists=True, dir_okay=False))
@click.argument("energy", type=click.Path(exists=True, dir_okay=False))
@click.option("--vary", type=click.Choice(["outer", "inner", "tiles", "hierarchy-depth"]), required=True)
@click.option("--layers", default=None, help="Comma-separated layer names (default: all).")
@click.option("--out", "out_csv", type=click.Path(dir_okay=False), default="-", show_default=True)
@click.option("--max-points", type=int, default=3, show_default=True)
@click.option("--inner", default="named", show_default=True)
def sweep(network, arch, energy, vary, layers, out_csv, max_points, inner):
    """Energy for fixed orders, input buffer shares or hierarchy depths against the optimum."""
    net, hw, table = _load(network, arch, energy, layers)
    rows = []
    try:
        if vary == "hierarchy-depth":
            header = ["layer", "depth", "energy_pJ", "relative_to_1_level", "config", "level_bytes"]
            for layer in net:
                res = hierarchy_sweep(layer, hw, table, max_points=max_points)
                one = res[0].energy
                for r in res:
                    rows.append([layer.name, r.depth, _fmt(r.energy), _fmt(r.energy / one),
                                 r.config.describe(), "|".join(map(str, r.level_bytes))])
        else:
            opts = _options("all", inner, max_points)
            result = search_network(net, hw, opts)
            header = ["layer", vary, "energy_pJ", "relative_to_opt"]
            for s in result.searches:
                _, best = s.best(table)
                opt = best.total_energy
                if vary == "outer":
                    data = best_per_outer(s, table, opts.outers())
                elif vary == "inner":
                    data = best_per_inner(s, table)
                else:
                    data = best_per_input_share(s, table)
                for key, e in data.items():
                    rows.append([s.layer.name, key, _fmt(e), _fmt(e / opt)])
                rows.append([s.layer.name, "Opt", _fmt(opt), _fmt(1.0)])
    except (EmptySearchSpace, ValueError) as exc:
        raise InputError(str(exc)) from exc

    fh = sys.stdout if out_csv == "-" else open(out_csv, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["schema"] + header)
        for r in rows:
            w.writerow([SWEEP_SCHEMA] + [str(x) for x in r])
    finally:
        if fh is not sys.stdout:
            fh.close()


if __name__ == "__main__":
    main()
