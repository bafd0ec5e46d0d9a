"""Command-line driver: individual stage subcommands plus the end-to-end
`run` and `sweep` pipelines.

Exit codes: 0 success, 1 validation problem, 2 timing or routing failure,
3 I/O or file-format problem. All state flows through flags and files; a
fixed seed makes rerun output bundles byte-identical.
"""

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import axmul, fabric as fabric_mod, importance as imp_mod, mapper, ppa, qnn
from .errors import (
    FormatError,
    RoutingFailedError,
    TimingViolationError,
    ValidationError,
)
from .fixture import build_fixture_batch, build_fixture_model

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_TIMING_ROUTING = 2
EXIT_IO = 3


@dataclass
class RunConfig:
    model_dir: str
    data_file: str
    drum_k: int
    quantile: float
    preset: str | None = None
    fabric_file: str | None = None
    costs_file: str | None = None
    out_dir: str = "out"
    seed: int = 0
    mode: str = imp_mod.MODE_LAYER_LOCAL

    def __post_init__(self):
        if not 0.0 <= self.quantile <= 1.0:
            raise ValidationError(f"quantile {self.quantile} outside [0,1]")
        if not 4 <= self.drum_k <= 8:
            raise ValidationError(f"k {self.drum_k} outside [4,8]")
        if (self.preset is None) == (self.fabric_file is None):
            raise ValidationError("give exactly one of --preset / --fabric")


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON ({e})") from e


def _drum_config(k, width=8, sign="signed"):
    mode = axmul.SIGN_MAGNITUDE if sign == "signed" else axmul.SIGN_UNSIGNED
    return axmul.DrumConfig(k=k, input_width=width, sign_mode=mode)


def _load_fabric(args):
    if getattr(args, "fabric", None):
        return fabric_mod.FabricConfig.load(args.fabric)
    return fabric_mod.build_preset(args.preset, drum_k=args.k)


def _load_data(model, path):
    return qnn.load_tensor(path, scale=model.input_scale)


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def cmd_drum_stats(args):
    cfg = _drum_config(args.k, args.width, args.sign)
    stats = axmul.exhaustive_error_stats(cfg)
    print(f"DRUM{args.k} {args.width}x{args.width} ({args.sign} domain)")
    print(f"{'metric':<16}{'value':>16}")
    for name, value in stats.to_dict().items():
        print(f"{name:<16}{value:>16.6g}")
    payload = {"config": cfg.to_dict(), "stats": stats.to_dict()}
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.json:
        _dump_json(args.json, payload)
    return EXIT_OK


def cmd_drum_lut(args):
    cfg = _drum_config(args.k, args.width, args.sign)
    lut = axmul.build_lut(cfg)
    if args.format == "bin":
        if not args.output:
            raise ValidationError("binary LUT output needs -o")
        Path(args.output).write_bytes(
            np.ascontiguousarray(lut, dtype="<i4").tobytes()
        )
        print(f"wrote {lut.shape[0]}x{lut.shape[1]} int32-le table to {args.output}")
    else:
        out = sys.stdout if not args.output else open(args.output, "w")
        try:
            w = csv.writer(out, lineterminator="\n")
            for row in lut:
                w.writerow([int(v) for v in row])
        finally:
            if out is not sys.stdout:
                out.close()
    return EXIT_OK


def cmd_qnn_run(args):
    model = qnn.load_model(args.model)
    data = _load_data(model, args.input)
    plan = qnn.MappingPlan.from_dict(_load_json(args.plan))
    result = qnn.forward(model, data, plan)
    accurate = qnn.forward(model, data)
    rmse = float(np.sqrt(np.mean((result.logits - accurate.logits) ** 2)))
    payload = {
        "logits_shape": list(result.logits.shape),
        "logits": [float(v) for v in result.logits.ravel()],
        "final_rmse_vs_accurate": rmse,
    }
    if args.output:
        _dump_json(args.output, payload)
        print(f"wrote logits to {args.output} (rmse vs accurate: {rmse:.6g})")
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_importance(args):
    model = qnn.load_model(args.model)
    data = _load_data(model, args.data)
    cfg = _drum_config(args.k)
    mode = args.mode.replace("-", "_")
    table = imp_mod.compute_all(model, data, cfg, mode)
    if args.csv:
        Path(args.csv).write_text(table.to_csv())
    if args.json:
        _dump_json(args.json, table.to_dict())
    if not args.csv and not args.json:
        sys.stdout.write(table.to_csv())
    return EXIT_OK


def cmd_plan(args):
    table = imp_mod.ImportanceTable.from_dict(_load_json(args.importance))
    plan = imp_mod.quantile_assign(table, args.quantile)
    _dump_json(args.output, plan.to_dict())
    acc = sum(len(s) for s in plan.approx_channels)
    print(f"wrote plan (quantile {args.quantile}, {acc} approximate channels) "
          f"to {args.output}")
    return EXIT_OK


def cmd_fabric_build(args):
    fab = fabric_mod.build_preset(args.preset, drum_k=args.k)
    fab.save(args.output)
    n_fu = len(fab.functional_tiles())
    n_sb = len(fab.switchboxes())
    print(f"{args.preset}: {fab.rows}x{fab.cols} grid, {n_fu} functional tiles, "
          f"{n_sb} switchboxes, {fab.track_count} tracks -> {args.output}")
    return EXIT_OK


def _pnr_pipeline(model, plan, fab, seed):
    """schedule -> prune -> place -> route; returns everything a report needs."""
    schedule = mapper.schedule_workload(model, plan, fab)
    arch = mapper.VirtualArch.from_fabric(fab)
    pruned = mapper.prune(arch, schedule.trace, base_cycles=schedule.cycles)
    trace = mapper.apply_relays(schedule.trace, pruned.relay_map)
    placement = mapper.place(pruned.arch, fab, seed=seed)
    routing = mapper.route(placement, trace, fab)
    return schedule, pruned, placement, routing


def _mapped_payload(fab, schedule, pruned, placement, routing, seed):
    return {
        "format": "axcgra-mapped-v1",
        "preset": fab.preset_name,
        "seed": seed,
        "cycles": schedule.cycles,
        "per_layer_cycles": schedule.per_layer_cycles,
        "total_macs": schedule.total_macs,
        "utilization": {
            k: schedule.utilization[k] for k in sorted(schedule.utilization)
        },
        "prune": {
            "initial_connections": pruned.initial_count,
            "kept_connections": pruned.kept_count,
            "removed_connections": len(pruned.removed),
            "removed_fraction": pruned.removed_fraction,
            "relay_count": len(pruned.relay_map),
            "relay_cost_cycles": pruned.relay_cost,
        },
        "placement": {
            "cells": placement.to_dict(),
            "cost": placement.cost,
            "greedy_cost": placement.greedy_cost,
        },
        "routing": routing.to_dict(),
    }


def cmd_pnr(args):
    fab = _load_fabric(args)
    model = qnn.load_model(args.model)
    plan = qnn.MappingPlan.from_dict(_load_json(args.plan))
    schedule, pruned, placement, routing = _pnr_pipeline(
        model, plan, fab, args.seed
    )
    payload = _mapped_payload(fab, schedule, pruned, placement, routing, args.seed)
    _dump_json(args.output, payload)
    if args.dot:
        mapper.export_dot(pruned.arch, placement, args.dot)
    print(
        f"{fab.preset_name}: {schedule.cycles} cycles, pruned "
        f"{pruned.removed_fraction:.1%} of connections, routing {routing.status} "
        f"(max congestion {routing.max_congestion:.2f})"
    )
    if routing.status != "routed":
        raise RoutingFailedError(routing.overused, routing.iterations)
    return EXIT_OK


def _ppa_report(fab, costs, scaling, mapped=None):
    domains = ppa.assign_islands(fab, costs, m=scaling)
    cycles = mapped["cycles"] if mapped else None
    macs = mapped["total_macs"] if mapped else None
    activity = mapped["utilization"] if mapped else None
    report = ppa.power_report(
        fab, domains, costs, scaling,
        cycles=cycles, activity=activity, total_macs=macs,
    )
    baseline = ppa.power_report(
        fab, ppa.nominal_domains(fab, scaling), costs, scaling,
        cycles=cycles, activity=activity, total_macs=macs,
    )
    reduction = 1.0 - report.total_power_mw / baseline.total_power_mw
    return domains, report, baseline, reduction


def _report_payload(fab, plan, domains, report, baseline, reduction):
    return {
        "format": "axcgra-report-v1",
        "preset": fab.preset_name,
        "drum": plan.drum.to_dict() if plan else None,
        "qos_quantile": plan.qos_quantile if plan else None,
        "domains": {
            d.name: {"voltage_v": d.voltage_v, "tiles": sorted(d.members)}
            for d in domains
        },
        "ppa": report.to_dict(),
        "all_nominal_power_mw": baseline.total_power_mw,
        "power_reduction_vs_nominal": reduction,
        "nominal_slack_spread_ps": baseline.slack_spread_ps,
    }


def _summary_text(payload, extra=None):
    p = payload["ppa"]
    lines = [
        f"preset               {payload['preset']}",
        f"qos quantile         {payload['qos_quantile']}",
        f"drum k               {payload['drum']['k'] if payload['drum'] else '-'}",
    ]
    if extra:
        lines.extend(extra)
    ref_lo, ref_hi = p["reference_gops_per_watt"]
    lines.extend([
        f"cycles               {p['cycles']}",
        f"total area (um^2)    {p['total_area_um2']:.6g}",
        f"total power (mW)     {p['total_power_mw']:.6g}",
        f"power vs nominal     -{payload['power_reduction_vs_nominal'] * 100:.2f}%",
        f"shifter overhead     {p['level_shifter_overhead_fraction'] * 100:.3f}% area",
        f"slack spread (ps)    {p['slack_spread_ps']:.6g} "
        f"(all-nominal {payload['nominal_slack_spread_ps']:.6g})",
        f"energy/inference     {p['energy_per_inference_uj']:.6g} uJ"
        if p["energy_per_inference_uj"] is not None else
        "energy/inference     -",
        f"GOPS                 {p['gops']:.6g}" if p["gops"] is not None
        else "GOPS                 -",
        f"GOPS/W               {p['gops_per_watt']:.6g}"
        if p["gops_per_watt"] is not None else "GOPS/W               -",
        f"reference GOPS/W     {ref_lo:g}-{ref_hi:g} (published designs, "
        f"non-binding)",
    ])
    return "\n".join(lines) + "\n"


def cmd_report(args):
    fab = _load_fabric(args)
    costs, scaling = ppa.load_cost_config(args.costs)
    mapped = _load_json(args.mapped)
    plan = qnn.MappingPlan.from_dict(_load_json(args.plan)) if args.plan else None
    domains, report, baseline, reduction = _ppa_report(fab, costs, scaling, mapped)
    payload = _report_payload(fab, plan, domains, report, baseline, reduction)
    _dump_json(args.output, payload)
    print(_summary_text(payload), end="")
    return EXIT_OK


def cmd_run(args):
    cfg = RunConfig(
        model_dir=args.model,
        data_file=args.data,
        drum_k=args.k,
        quantile=args.quantile,
        preset=args.preset,
        fabric_file=args.fabric,
        costs_file=args.costs,
        out_dir=args.output,
        seed=args.seed,
        mode=args.mode.replace("-", "_"),
    )
    bundle = run_end_to_end(cfg)
    print(f"bundle written to {cfg.out_dir}")
    for name in sorted(bundle):
        print(f"  {name}")
    return EXIT_OK


def run_end_to_end(cfg):
    """Full pipeline; returns {filename: path} of the written bundle."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    model = qnn.load_model(cfg.model_dir)
    data = _load_data(model, cfg.data_file)
    drum = _drum_config(cfg.drum_k)
    if cfg.fabric_file:
        fab = fabric_mod.FabricConfig.load(cfg.fabric_file)
    else:
        fab = fabric_mod.build_preset(cfg.preset, drum_k=cfg.drum_k)
    costs, scaling = ppa.load_cost_config(cfg.costs_file)

    table = imp_mod.compute_all(model, data, drum, cfg.mode)
    plan = imp_mod.quantile_assign(table, cfg.quantile)
    evaluation = imp_mod.evaluate_plan(model, data, plan)

    schedule, pruned, placement, routing = _pnr_pipeline(
        model, plan, fab, cfg.seed
    )
    mapped = _mapped_payload(fab, schedule, pruned, placement, routing, cfg.seed)
    domains, report, baseline, reduction = _ppa_report(fab, costs, scaling, mapped)

    acc_total, ax_total = plan.split_counts(model)
    total = acc_total + ax_total
    payload = _report_payload(fab, plan, domains, report, baseline, reduction)
    payload["final_rmse"] = evaluation.final_rmse
    payload["per_layer_rmse"] = evaluation.per_layer_rmse
    payload["accurate_channel_pct"] = 100.0 * acc_total / total
    payload["approx_channel_pct"] = 100.0 * ax_total / total

    files = {
        "importance.csv": out / "importance.csv",
        "plan.json": out / "plan.json",
        "mapped.json": out / "mapped.json",
        "report.json": out / "report.json",
        "summary.txt": out / "summary.txt",
    }
    files["importance.csv"].write_text(table.to_csv())
    _dump_json(files["plan.json"], plan.to_dict())
    _dump_json(files["mapped.json"], mapped)
    _dump_json(files["report.json"], payload)
    extra = [
        f"final rmse           {evaluation.final_rmse:.6g}",
        f"channel split        {payload['accurate_channel_pct']:.1f}% accurate / "
        f"{payload['approx_channel_pct']:.1f}% approximate",
        f"routing              {routing.status} "
        f"(max congestion {routing.max_congestion:.2f})",
        f"pruned connections   {pruned.removed_fraction:.1%}",
    ]
    files["summary.txt"].write_text(_summary_text(payload, extra))

    if routing.status != "routed":
        raise RoutingFailedError(routing.overused, routing.iterations)
    return {name: str(p) for name, p in files.items()}


def cmd_sweep(args):
    quantiles = []
    if args.quantiles.strip():
        quantiles = [float(q) for q in args.quantiles.split(",")]
    model = qnn.load_model(args.model)
    data = _load_data(model, args.data)
    drum = _drum_config(args.k)
    fab = _load_fabric(args)
    costs, scaling = ppa.load_cost_config(args.costs)
    domains = ppa.assign_islands(fab, costs, m=scaling)

    table = imp_mod.compute_all(model, data, drum, args.mode.replace("-", "_"))
    rows = []
    for q in quantiles:
        plan = imp_mod.quantile_assign(table, q)
        evaluation = imp_mod.evaluate_plan(model, data, plan)
        schedule = mapper.schedule_workload(model, plan, fab)
        report = ppa.power_report(
            fab, domains, costs, scaling,
            cycles=schedule.cycles,
            activity=schedule.utilization,
            total_macs=schedule.total_macs,
        )
        acc, ax = plan.split_counts(model)
        total = acc + ax
        rows.append([
            repr(q),
            schedule.cycles,
            repr(evaluation.final_rmse),
            f"{100.0 * acc / total:.1f}",
            f"{100.0 * ax / total:.1f}",
            f"{report.energy_per_inference_uj:.6g}",
            f"{report.gops:.6g}",
            f"{report.gops_per_watt:.6g}",
        ])

    out = sys.stdout if not args.output else open(args.output, "w", newline="")
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["quantile", "cycles", "final_rmse", "acc_pct", "ax_pct",
                    "energy_uj", "gops", "gops_per_watt"])
        w.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_fixture(args):
    out = Path(args.output)
    model = build_fixture_model(seed=args.seed)
    batch = build_fixture_batch(seed=args.seed, batch=args.batch)
    qnn.save_model(model, out)
    qnn.save_tensor(out / "input.axt", batch)
    print(f"fixture model + input batch written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_fabric_args(p, required=False):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--preset", choices=fabric_mod.PRESET_NAMES)
    g.add_argument("--fabric", help="fabric description JSON")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="axcgra",
        description="approximate-CGRA co-design toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("drum", help="approximate multiplier analysis")
    dsub = p.add_subparsers(dest="drum_command", required=True)
    ps = dsub.add_parser("stats", help="exhaustive error statistics")
    ps.add_argument("--k", type=int, required=True)
    ps.add_argument("--width", type=int, default=8)
    ps.add_argument("--sign", choices=("unsigned", "signed"), default="unsigned")
    ps.add_argument("--json", help="also write the stats to this JSON file")
    ps.set_defaults(func=cmd_drum_stats)
    pl = dsub.add_parser("lut", help="emit the full product table")
    pl.add_argument("--k", type=int, required=True)
    pl.add_argument("--width", type=int, default=8)
    pl.add_argument("--sign", choices=("unsigned", "signed"), default="unsigned")
    pl.add_argument("--format", choices=("bin", "csv"), default="csv")
    pl.add_argument("-o", "--output")
    pl.set_defaults(func=cmd_drum_lut)

    p = sub.add_parser("qnn", help="quantized inference")
    qsub = p.add_subparsers(dest="qnn_command", required=True)
    pr = qsub.add_parser("run", help="forward pass under a mapping plan")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", required=True)
    pr.add_argument("--plan", required=True)
    pr.add_argument("-o", "--output")
    pr.set_defaults(func=cmd_qnn_run)

    p = sub.add_parser("importance", help="per-channel importance table")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mode", choices=("layer-local", "end-to-end"),
                   default="layer-local")
    p.add_argument("--csv", help="write the table as CSV here")
    p.add_argument("--json", help="write the table as JSON here")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("plan", help="quantile mapping plan from a table")
    p.add_argument("--importance", required=True, help="importance JSON file")
    p.add_argument("--quantile", type=float, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("fabric", help="fabric descriptions")
    fsub = p.add_subparsers(dest="fabric_command", required=True)
    pb = fsub.add_parser("build", help="materialize a preset")
    pb.add_argument("--preset", choices=fabric_mod.PRESET_NAMES, required=True)
    pb.add_argument("--k", type=int, default=7,
                    help="drum k of the approximate multiplier tiles")
    pb.add_argument("-o", "--output", required=True)
    pb.set_defaults(func=cmd_fabric_build)

    p = sub.add_parser("pnr", help="prune, place and route a workload")
    _add_fabric_args(p, required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--k", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dot", help="also export a DOT graph here")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_pnr)

    p = sub.add_parser("report", help="PPA report for a mapped design")
    _add_fabric_args(p, required=True)
    p.add_argument("--mapped", required=True)
    p.add_argument("--plan")
    p.add_argument("--costs", help="cost/scaling config JSON (defaults bundled)")
    p.add_argument("--k", type=int, default=7)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="end-to-end pipeline into a bundle dir")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--quantile", type=float, required=True)
    _add_fabric_args(p, required=True)
    p.add_argument("--costs")
    p.add_argument("--mode", choices=("layer-local", "end-to-end"),
                   default="layer-local")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="CSV over a list of quantiles")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--quantiles", required=True,
                   help="comma-separated, e.g. 0,0.125,0.25,0.5,0.75,0.875,1")
    _add_fabric_args(p, required=True)
    p.add_argument("--costs")
    p.add_argument("--mode", choices=("layer-local", "end-to-end"),
                   default="layer-local")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fixture", help="write the bundled demo model + batch")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fixture)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TimingViolationError, RoutingFailedError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_TIMING_ROUTING
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
