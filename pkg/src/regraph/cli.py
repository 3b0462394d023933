"""Command-line surface: synth, build-graph, train, predict, evaluate, analyze-graph.

Every command exits 0 on success, 2 on configuration or schema problems, and
3 on data problems. All randomness is derived from config seeds, so reruns
with identical inputs produce identical bytes; wall-clock timestamps are
confined to meta.json.
"""

import argparse
import json
import sys
import warnings
from datetime import datetime
from pathlib import Path

import numpy as np

from regraph.config import (
    load_config,
    model_spec_from,
    train_config_from,
    synth_config_from,
)
from regraph.data import (
    apply_scaling,
    generate_synthetic,
    interpolate_to_grid,
    load_records,
    make_windows,
    split_by_weeks,
)
from regraph.errors import ConfigError, DataError, NumericError
from regraph.evaluation import (
    evaluate_model,
    generality_inference,
    metric_rows,
    predict_samples,
    write_comparison_json,
    write_metrics_csv,
    write_timeseries,
)
from regraph.graph import (
    build_connected,
    decompose_random,
    decompose_regional,
    default_provider,
    degree,
    load_sites,
    overlap_cost,
)
from regraph.models import build_model, load_checkpoint, restore_model
from regraph.models.checkpoint import (
    graph_from_payload,
    graph_payload,
    partition_from_payload,
    partition_payload,
)
from regraph.training import split_validation, train
from regraph.training.loop import _val_rmse

__all__ = ["main"]

RESOLVED_CONFIG = "resolved_config.json"
META_FILE = "meta.json"


def _now() -> str:
    return datetime.now().isoformat(timespec="seconds")


def _write_meta(out_dir: Path, command: str, started: str, extra=None) -> None:
    meta = {"command": command, "started": started, "finished": _now()}
    if extra:
        meta.update(extra)
    (out_dir / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _echo_config(out_dir: Path, resolved: dict, args: dict) -> None:
    doc = {"args": args, "config": resolved}
    (out_dir / RESOLVED_CONFIG).write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _read_graph_file(path: Path):
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read graph file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"graph file {path} is not valid JSON: {exc.msg}") from exc
    for key in ("strategy", "graph"):
        if key not in doc:
            raise DataError(f"graph file {path} is missing the '{key}' entry")
    graph = graph_from_payload(doc["graph"])
    partition = None
    if doc.get("partition") is not None:
        partition = partition_from_payload(graph, doc["partition"])
    return graph, partition


def _frames_for_nodes(data_dir: Path, nodes, grid_step_min: int, max_gap: int):
    """Build feature frames with columns ordered like the model's node list."""
    sites = load_sites(data_dir / "sites.csv")
    by_id = {s.site_id: s for s in sites}
    wanted = [n.site_id for n in nodes]
    missing = sorted(set(wanted) - set(by_id))
    extra = sorted(set(by_id) - set(wanted))
    if missing or extra:
        raise DataError(
            f"sites in {data_dir} do not match the graph: "
            f"missing {missing or 'none'}, unexpected {extra or 'none'}")
    for node in nodes:
        if by_id[node.site_id] != node:
            raise DataError(
                f"site {node.site_id} metadata differs between {data_dir} "
                f"and the graph")
    records = load_records(data_dir / "records.csv")
    return interpolate_to_grid(records, list(nodes), grid_step_min, max_gap)


# ---------------------------------------------------------------- commands

def _cmd_synth(args) -> int:
    started = _now()
    resolved = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    generate_synthetic(synth_config_from(resolved), out)
    _echo_config(out, resolved, {"config": str(args.config), "out": str(args.out)})
    _write_meta(out, "synth", started)
    return 0


def _cmd_build_graph(args) -> int:
    sites = load_sites(Path(args.sites))
    provider = default_provider()
    graph = build_connected(sites, provider,
                            threshold_miles=args.threshold_miles,
                            adjacency_weights=args.weights,
                            sigma_miles=args.sigma_miles)
    partition = None
    if args.strategy == "regional":
        partition = decompose_regional(graph)
    elif args.strategy == "random":
        if args.regions is None:
            raise ConfigError("--regions is required for the random strategy")
        partition = decompose_random(graph, r=args.regions, seed=args.seed)
    doc = {
        "strategy": args.strategy,
        "graph": graph_payload(graph),
        "partition": None if partition is None else partition_payload(partition),
    }
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def _split_from_config(resolved: dict, frames):
    data_cfg = resolved["data"]
    samples = make_windows(frames, data_cfg["k"], tuple(data_cfg["horizons"]),
                           data_cfg["grid_step_min"])
    return split_by_weeks(samples, data_cfg["train_weeks"],
                          data_cfg["test_weeks"], data_cfg["generality_weeks"])


def _cmd_train(args) -> int:
    started = _now()
    resolved = load_config(args.config)
    graph, partition = _read_graph_file(Path(args.graph))
    data_cfg = resolved["data"]
    frames = _frames_for_nodes(Path(args.data), graph.nodes,
                               data_cfg["grid_step_min"],
                               data_cfg["max_gap_steps"])
    train_samples, _, _ = _split_from_config(resolved, frames)
    if not train_samples:
        raise DataError("no training samples fall inside train_weeks")

    region_count = None if partition is None else len(partition.region_order)
    spec = model_spec_from(resolved, region_count=region_count)
    if spec.connectivity == "connected":
        partition = None  # connected models ignore any stored partition
    model = build_model(spec, graph, partition)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, report = train(model, train_samples, train_config_from(resolved), out)
    _echo_config(out, resolved, {"config": str(args.config),
                                 "data": str(args.data),
                                 "graph": str(args.graph),
                                 "out": str(args.out)})
    _write_meta(out, "train", started,
                {"epoch_seconds": list(report.epoch_seconds),
                 "epochs_run": len(report.train_loss)})
    return 0


def _cmd_predict(args) -> int:
    bundle = load_checkpoint(Path(args.checkpoint))
    model = restore_model(bundle)
    spec = bundle.spec
    frames = _frames_for_nodes(Path(args.data), bundle.graph.nodes,
                               args.grid_step_min, args.max_gap_steps)
    samples = make_windows(frames, spec.k, spec.horizons, args.grid_step_min)
    if not samples:
        raise DataError(f"no usable prediction windows in {args.data}")
    preds, _ = predict_samples(model, samples, bundle.scaling_lo,
                               bundle.scaling_hi)
    header = ["site_id", "anchor_time"] + [
        f"pred_h{h * args.grid_step_min}" for h in spec.horizons]
    lines = [",".join(header)]
    site_ids = [n.site_id for n in bundle.graph.nodes]
    for s_idx, sample in enumerate(samples):
        for i, sid in enumerate(site_ids):
            row = [sid, sample.anchor_time.isoformat()]
            row += [repr(float(v)) for v in preds[s_idx, i]]
            lines.append(",".join(row))
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    return 0


def _run_name(run_dir: Path) -> str:
    return run_dir.name or run_dir.resolve().name


def _cmd_evaluate(args) -> int:
    started = _now()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    summaries = {}
    overlap_costs = {}
    literal = bool(args.literal_eq14)
    for run in (Path(r) for r in args.runs):
        name = _run_name(run)
        ckpt_path = run / "checkpoint_best.ckpt"
        cfg_path = run / RESOLVED_CONFIG
        if not ckpt_path.exists() or not cfg_path.exists():
            print(f"warning: skipping {run}: missing checkpoint or config",
                  file=sys.stderr)
            summaries[name] = {"status": "absent"}
            continue
        echo = json.loads(cfg_path.read_text())
        resolved, run_args = echo["config"], echo["args"]
        literal = literal or resolved["eval"]["literal_eq14"]
        bundle = load_checkpoint(ckpt_path)
        model = restore_model(bundle)
        data_cfg = resolved["data"]
        frames = _frames_for_nodes(Path(run_args["data"]), bundle.graph.nodes,
                                   data_cfg["grid_step_min"],
                                   data_cfg["max_gap_steps"])
        train_s, test_s, gen_s = _split_from_config(resolved, frames)
        if not test_s:
            raise DataError(f"run {run}: no samples fall inside test_weeks")

        seed = resolved["train"]["seed"]
        report = evaluate_model(model, test_s, bundle.scaling_lo,
                                bundle.scaling_hi, data_cfg["grid_step_min"])
        rows += metric_rows(bundle.spec.architecture, bundle.spec.connectivity,
                            seed, report)

        preds, _ = predict_samples(model, test_s, bundle.scaling_lo,
                                   bundle.scaling_hi)
        write_timeseries(out / f"timeseries_{name}.csv", test_s, preds,
                         report.site_ids, data_cfg["grid_step_min"])

        summary = {"status": "ok", "architecture": bundle.spec.architecture,
                   "connectivity": bundle.spec.connectivity, "seed": seed,
                   "test_samples": len(test_s)}
        train_report = json.loads((run / "train_report.json").read_text())
        if train_report.get("has_validation"):
            _, val_raw = split_validation(
                train_s, resolved["train"]["val_fraction"])
            if val_raw:
                val = [apply_scaling(s, bundle.scaling_lo, bundle.scaling_hi)
                       for s in val_raw]
                check = float(np.mean(_val_rmse(model, val, bundle.spec.horizons)))
                summary["val_rmse_check"] = check
                summary["val_rmse_reported"] = train_report["best_score"]
        if gen_s:
            gen_report = generality_inference(bundle, gen_s,
                                              data_cfg["grid_step_min"])
            summary["generality"] = {
                str(gen_report.horizon_minutes(h)): gen_report.metrics[h].as_row()
                for h in gen_report.horizons}
            summary["generality_samples"] = len(gen_s)
        summaries[name] = summary

        l_avg = float(np.mean([degree(bundle.graph, i)
                               for i in range(bundle.graph.n)]))
        overlap_costs.setdefault("connected", overlap_cost(bundle.graph, l_avg))
        if bundle.partition is not None:
            overlap_costs.setdefault(
                bundle.partition.strategy, overlap_cost(bundle.partition, l_avg))

    if rows:
        write_metrics_csv(out / "metrics.csv", rows)
        write_comparison_json(out / "comparison.json", rows,
                              overlap_costs=overlap_costs,
                              literal_headline=literal)
    (out / "evaluation.json").write_text(
        json.dumps(summaries, indent=2, sort_keys=True) + "\n")
    _write_meta(out, "evaluate", started)
    return 0


def _cmd_analyze_graph(args) -> int:
    graph, partition = _read_graph_file(Path(args.graph))
    degrees = [degree(graph, i) for i in range(graph.n)]
    l_avg = float(np.mean(degrees))
    doc = {
        "nodes": graph.n,
        "edges": len(graph.edges),
        "degree": {"min": int(min(degrees)), "max": int(max(degrees)),
                   "mean": l_avg},
        "overlap_cost": {"connected": overlap_cost(graph, l_avg)},
    }
    if partition is not None:
        groups = {label: partition.subgraphs[label].n
                  for label in partition.region_order}
        parent = {}
        if partition.strategy == "regional":
            idx = graph.node_index()
            for label in partition.region_order:
                sub = partition.subgraphs[label]
                for j, node in enumerate(sub.nodes):
                    full = degree(graph, idx[node.site_id])
                    parent.setdefault("violations", 0)
                    if degree(sub, j) > full:
                        parent["violations"] += 1
        else:
            parent["violations"] = sum(
                1 for label in partition.region_order
                for j in range(partition.subgraphs[label].n)
                if degree(partition.subgraphs[label], j) > graph.n - 1)
        doc["partition"] = {
            "strategy": partition.strategy,
            "groups": groups,
            "degree_monotone": parent["violations"] == 0,
            "violations": parent["violations"],
        }
        doc["overlap_cost"][partition.strategy] = overlap_cost(partition, l_avg)
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regraph",
        description="Truck-parking occupancy forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("build-graph", help="build the site graph and partition")
    p.add_argument("--sites", required=True)
    p.add_argument("--strategy", required=True,
                   choices=("connected", "random", "regional"))
    p.add_argument("--regions", type=int, default=None,
                   help="group count for the random strategy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold-miles", type=float, default=40.0)
    p.add_argument("--weights", choices=("gaussian", "binary", "raw"),
                   default="gaussian")
    p.add_argument("--sigma-miles", type=float, default=20.0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_build_graph)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("predict", help="frozen inference from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-step-min", type=int, default=10)
    p.add_argument("--max-gap-steps", type=int, default=6)
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("evaluate", help="metrics and comparison over run dirs")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--literal-eq14", action="store_true",
                   help="headline the squared-numerator metric reading")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("analyze-graph",
                       help="degrees, partition check, overlap costs")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_analyze_graph)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
