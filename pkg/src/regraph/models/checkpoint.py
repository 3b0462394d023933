"""Versioned binary model checkpoints.

Layout: an 8-byte magic, a little-endian uint64 header length, a compact
JSON header, then the raw weight arrays (float64, little-endian, C order)
concatenated in the order the header lists them. Everything needed to
reload and run the model lives in the file: architecture and hyper
parameters, feature-scaling constants, the training week set, the full
graph (sites, edges, kernel), and the partition with its stored edge
distances. No timestamps, so identical training runs write identical
bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import ConfigError, DataError
from ..graph.build import (
    RegionalPartition,
    SiteGraph,
    SiteMeta,
    _assemble_graph,
    _freeze,
)
from .architectures import ForecastModel, ModelSpec, build_model

__all__ = ["CheckpointBundle", "FORMAT_VERSION", "load_checkpoint", "restore_model",
           "save_checkpoint"]

MAGIC = b"RGCKPT01"
FORMAT_VERSION = 1


def _site_to_row(s: SiteMeta) -> list:
    return [s.site_id, s.region, s.latitude, s.longitude, s.travel_time,
            s.owner, s.amenity_count, s.capacity]


def _site_from_row(row) -> SiteMeta:
    return SiteMeta(site_id=row[0], region=row[1], latitude=row[2], longitude=row[3],
                    travel_time=row[4], owner=row[5], amenity_count=row[6], capacity=row[7])


def graph_payload(g: SiteGraph) -> dict:
    return {
        "sites": [_site_to_row(s) for s in g.nodes],
        "edges": [[i, j, miles] for i, j, miles in g.edges],
        "threshold_miles": g.threshold_miles,
        "adjacency_weights": g.adjacency_weights,
        "sigma_miles": g.sigma_miles,
    }


def graph_from_payload(d: dict) -> SiteGraph:
    nodes = [_site_from_row(row) for row in d["sites"]]
    edges = [(int(i), int(j), float(m)) for i, j, m in d["edges"]]
    return _assemble_graph(nodes, edges, d["threshold_miles"],
                           d["adjacency_weights"], d["sigma_miles"])


def partition_payload(p: RegionalPartition) -> dict:
    return {
        "strategy": p.strategy,
        "region_of": dict(p.region_of),
        "subgraph_edges": {
            label: [[sub.nodes[i].site_id, sub.nodes[j].site_id, miles]
                    for i, j, miles in sub.edges]
            for label, sub in p.subgraphs.items()
        },
    }


def partition_from_payload(g: SiteGraph, d: dict) -> RegionalPartition:
    assignment = d["region_of"]
    labels = sorted({assignment[s.site_id] for s in g.nodes})
    subgraphs: dict[str, SiteGraph] = {}
    node_indices: dict[str, np.ndarray] = {}
    for label in labels:
        idx = np.array([i for i, s in enumerate(g.nodes)
                        if assignment[s.site_id] == label], dtype=np.int64)
        sub_nodes = [g.nodes[int(p)] for p in idx]
        local = {s.site_id: k for k, s in enumerate(sub_nodes)}
        sub_edges = []
        for a, b, miles in d["subgraph_edges"].get(label, []):
            i, j = local[a], local[b]
            if i > j:
                i, j = j, i
            sub_edges.append((i, j, float(miles)))
        subgraphs[label] = _assemble_graph(sub_nodes, sub_edges, g.threshold_miles,
                                           g.adjacency_weights, g.sigma_miles)
        node_indices[label] = _freeze(idx)
    return RegionalPartition(strategy=d["strategy"], region_of=dict(assignment),
                             subgraphs=subgraphs, region_order=tuple(labels),
                             node_indices=node_indices)


@dataclass(frozen=True)
class CheckpointBundle:
    spec: ModelSpec
    weights: dict
    scaling_lo: np.ndarray
    scaling_hi: np.ndarray
    train_weeks: list
    graph: SiteGraph
    partition: RegionalPartition | None


def save_checkpoint(path: str | Path, model: ForecastModel,
                    scaling_lo: np.ndarray, scaling_hi: np.ndarray,
                    train_weeks: list) -> None:
    """Write the model, its graph context, and the data constants."""
    path = Path(path)
    spec = model.spec
    named = model.named_params()
    weight_index = [{"name": name, "shape": list(p.values.shape)}
                    for name, p in named.items()]
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": spec.architecture,
        "hyperparams": {
            "hidden": spec.hidden,
            "k": spec.k,
            "horizons": list(spec.horizons),
            "connectivity": spec.connectivity,
            "region_count": spec.region_count,
            "seed": spec.seed,
        },
        "scaling": {"lo": [float(x) for x in scaling_lo],
                    "hi": [float(x) for x in scaling_hi]},
        "train_weeks": list(train_weeks),
        "graph": graph_payload(model.ctx.graph),
        "partition": (partition_payload(model.ctx.partition)
                      if model.ctx.partition is not None else None),
        "weights": weight_index,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name, p in named.items():
            fh.write(np.ascontiguousarray(p.values, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> CheckpointBundle:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
        raise DataError(f"{path} is not a model checkpoint (bad magic)")
    (header_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    start = len(MAGIC) + 8
    try:
        header = json.loads(raw[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ConfigError(
            f"{path}: unsupported checkpoint format {header.get('format_version')}")

    hp = header["hyperparams"]
    spec = ModelSpec(
        architecture=header["architecture"],
        hidden=hp["hidden"],
        k=hp["k"],
        horizons=tuple(hp["horizons"]),
        connectivity=hp["connectivity"],
        region_count=hp["region_count"],
        seed=hp["seed"],
    )
    graph = graph_from_payload(header["graph"])
    partition = (partition_from_payload(graph, header["partition"])
                 if header["partition"] is not None else None)

    weights: dict = {}
    offset = start + header_len
    for entry in header["weights"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 8
        if end > len(raw):
            raise DataError(f"{path}: truncated checkpoint at weight {entry['name']}")
        arr = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).copy()
        weights[entry["name"]] = arr
        offset = end
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes after weights")

    return CheckpointBundle(
        spec=spec,
        weights=weights,
        scaling_lo=np.array(header["scaling"]["lo"]),
        scaling_hi=np.array(header["scaling"]["hi"]),
        train_weeks=header["train_weeks"],
        graph=graph,
        partition=partition,
    )


def restore_model(bundle: CheckpointBundle) -> ForecastModel:
    """Rebuild the architecture from a bundle and load its weights."""
    model = build_model(bundle.spec, bundle.graph, bundle.partition)
    model.load_state(bundle.weights)
    return model
