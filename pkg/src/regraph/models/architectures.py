"""The six forecasting architectures and their shared graph context.

Every model maps a window of K frames (n sites x 8 features each) to one
prediction matrix of n sites x |horizons| occupancy rates. Graph inputs
enter as fixed constants; all learnable weights are node-shared, which is
what makes the models permutation-equivariant.

Architectures:
    StackedGRU  two plain GRU layers over the lag sequence, no graph
    StackedGCN  two graph convolutions over the lag-concatenated features
    TGCN        structural conv -> GRU -> attention over lags -> decoder
    CSTGCN      five chained structural convs feeding the GRU
    RanTGCN     TGCN plus a per-group embedding path (random partition)
    RegTGCN     TGCN plus a per-region embedding path (state partition)

The partition path ("gamma"): each subgraph runs its own graph conv, the
per-group embeddings are scattered back into global node order, and one
shared per-node affine mixes them. The GRU of the partition models consumes
the feature concatenation of the full-graph conv and gamma, and its hidden
state starts from the oldest lag's gamma rather than zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data.frames import FEATURE_COLUMNS
from ..errors import ConfigError, ShapeError
from ..graph.build import RegionalPartition, SiteGraph
from ..numerics import DiffTensor, add, concat, constant, matmul, no_grad
from .layers import (
    AttentionAggregator,
    Decoder,
    GcnGruCell,
    GcnLayer,
    StructuralConv,
    affine,
    attention_aggregate,
    gcn_forward,
    gru_step,
    structural_conv,
    uniform_init,
)

__all__ = [
    "ARCHITECTURES",
    "IN_WIDTH",
    "ForecastModel",
    "GraphContext",
    "ModelSpec",
    "build_model",
]

IN_WIDTH = len(FEATURE_COLUMNS)

ARCHITECTURES = ("StackedGRU", "StackedGCN", "TGCN", "CSTGCN", "RanTGCN", "RegTGCN")

CONNECTIVITY_OF = {
    "StackedGRU": "connected",
    "StackedGCN": "connected",
    "TGCN": "connected",
    "CSTGCN": "connected",
    "RanTGCN": "random",
    "RegTGCN": "regional",
}

CST_DEPTH = 5


@dataclass(frozen=True)
class ModelSpec:
    architecture: str
    hidden: int
    k: int
    horizons: tuple[int, ...]
    connectivity: str
    region_count: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(
                f"unknown architecture {self.architecture!r}; pick from {ARCHITECTURES}")
        if self.hidden < 1:
            raise ConfigError(f"hidden size must be >= 1, got {self.hidden}")
        if self.k < 1:
            raise ConfigError(f"window length k must be >= 1, got {self.k}")
        horizons = tuple(self.horizons)
        if not horizons or any(h < 1 for h in horizons):
            raise ConfigError(f"horizons must be positive steps, got {horizons}")
        if list(horizons) != sorted(set(horizons)):
            raise ConfigError(f"horizons must be strictly increasing, got {horizons}")
        object.__setattr__(self, "horizons", horizons)
        expected = CONNECTIVITY_OF[self.architecture]
        if self.connectivity != expected:
            raise ConfigError(
                f"{self.architecture} requires connectivity={expected!r}, "
                f"got {self.connectivity!r}")
        if self.connectivity == "random":
            if self.region_count is None or self.region_count < 1:
                raise ConfigError("random connectivity needs region_count >= 1")
        elif self.region_count is not None:
            raise ConfigError("region_count only applies to random connectivity")

    @property
    def n_horizons(self) -> int:
        return len(self.horizons)


class GraphContext:
    """Frozen graph operators shared by a model's forward passes.

    Holds the full graph's normalized operator and binary neighbor matrix,
    and, when a partition is attached, each subgraph's normalized operator
    plus the gather/scatter selection matrices between local and global
    node order.
    """

    def __init__(self, graph: SiteGraph, partition: RegionalPartition | None = None):
        self.graph = graph
        self.partition = partition
        self.n = graph.n
        binary = (graph.adjacency > 0).astype(np.float64)
        np.fill_diagonal(binary, 0.0)
        self.binary_adjacency = constant(binary)
        self.normalized = constant(graph.normalized)

        self.region_order: tuple[str, ...] = ()
        self.sub_normalized: dict[str, DiffTensor] = {}
        self.gather: dict[str, DiffTensor] = {}
        self.scatter: dict[str, DiffTensor] = {}
        if partition is not None:
            covered = sorted(int(i) for label in partition.region_order
                             for i in partition.node_indices[label])
            if covered != list(range(graph.n)):
                raise ConfigError("partition does not cover the graph's nodes exactly")
            self.region_order = tuple(partition.region_order)
            for label in partition.region_order:
                idx = partition.node_indices[label]
                sub = partition.subgraphs[label]
                sel = np.zeros((graph.n, len(idx)))
                sel[idx, np.arange(len(idx))] = 1.0
                self.sub_normalized[label] = constant(sub.normalized)
                self.scatter[label] = constant(sel)
                self.gather[label] = constant(sel.T.copy())


class ForecastModel:
    """Shared parameter registry, forward dispatch, and frozen inference."""

    def __init__(self, spec: ModelSpec, ctx: GraphContext):
        self.spec = spec
        self.ctx = ctx
        self._named: list[tuple[str, DiffTensor]] = []

    def _register(self, prefix: str, layer) -> None:
        for name, p in layer.params():
            self._named.append((f"{prefix}.{name}", p))

    def _register_param(self, name: str, p: DiffTensor) -> None:
        self._named.append((name, p))

    def named_params(self) -> dict[str, DiffTensor]:
        return dict(self._named)

    def params(self) -> list[DiffTensor]:
        return [p for _, p in self._named]

    def load_state(self, arrays) -> None:
        names = [name for name, _ in self._named]
        missing = [n for n in names if n not in arrays]
        extra = [n for n in arrays if n not in names]
        if missing or extra:
            raise ConfigError(
                f"weight set mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
        for name, p in self._named:
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != p.values.shape:
                raise ShapeError(
                    f"weight {name}: stored shape {arr.shape} != model shape {p.values.shape}")
            p.values = arr.copy()

    def _check_window(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.shape != (self.spec.k, self.ctx.n, IN_WIDTH):
            raise ShapeError(
                f"window shape {inputs.shape} does not match "
                f"(k={self.spec.k}, n={self.ctx.n}, {IN_WIDTH})")
        return inputs

    def forward(self, inputs: np.ndarray) -> DiffTensor:
        raise NotImplementedError

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        with no_grad():
            out = self.forward(inputs)
        return out.values.copy()


class StackedGru(ForecastModel):
    """Two GRU layers over the lag sequence; adjacency never enters."""

    def __init__(self, spec: ModelSpec, ctx: GraphContext):
        super().__init__(spec, ctx)
        rng = np.random.default_rng(spec.seed)
        self.cell1 = GcnGruCell(rng, IN_WIDTH, spec.hidden)
        self.cell2 = GcnGruCell(rng, spec.hidden, spec.hidden)
        self.decoder = Decoder(rng, spec.hidden, spec.hidden, spec.n_horizons)
        self._register("gru1", self.cell1)
        self._register("gru2", self.cell2)
        self._register("decoder", self.decoder)

    def forward(self, inputs: np.ndarray) -> DiffTensor:
        inputs = self._check_window(inputs)
        h1 = constant(np.zeros((self.ctx.n, self.spec.hidden)))
        h2 = constant(np.zeros((self.ctx.n, self.spec.hidden)))
        for k in range(self.spec.k):
            x = constant(inputs[k])
            h1 = gru_step(self.cell1, x, h1)
            h2 = gru_step(self.cell2, h1, h2)
        return self.decoder.forward(h2)


class StackedGcn(ForecastModel):
    """Two graph convolutions over the feature concatenation of all lags."""

    def __init__(self, spec: ModelSpec, ctx: GraphContext):
        super().__init__(spec, ctx)
        rng = np.random.default_rng(spec.seed)
        self.layer1 = GcnLayer(rng, IN_WIDTH * spec.k, spec.hidden)
        self.layer2 = GcnLayer(rng, spec.hidden, spec.hidden)
        self.decoder = Decoder(rng, spec.hidden, spec.hidden, spec.n_horizons)
        self._register("gcn1", self.layer1)
        self._register("gcn2", self.layer2)
        self._register("decoder", self.decoder)

    def forward(self, inputs: np.ndarray) -> DiffTensor:
        inputs = self._check_window(inputs)
        stacked = concat([constant(inputs[k]) for k in range(self.spec.k)], axis=1)
        g1 = gcn_forward(self.layer1, self.ctx.normalized, stacked)
        g2 = gcn_forward(self.layer2, self.ctx.normalized, g1)
        return self.decoder.forward(g2)


class TGcn(ForecastModel):
    """Structural conv into a GRU, attention over the K hidden states."""

    conv_depth = 1

    def __init__(self, spec: ModelSpec, ctx: GraphContext, conv_depth: int | None = None):
        super().__init__(spec, ctx)
        if conv_depth is not None:
            self.conv_depth = conv_depth
        rng = np.random.default_rng(spec.seed)
        self.convs = [StructuralConv(rng, IN_WIDTH, spec.hidden)]
        for _ in range(self.conv_depth - 1):
            self.convs.append(StructuralConv(rng, spec.hidden, spec.hidden))
        self.cell = GcnGruCell(rng, spec.hidden, spec.hidden)
        self.attention = AttentionAggregator(rng, spec.k)
        self.decoder = Decoder(rng, spec.hidden, spec.hidden, spec.n_horizons)
        for d, conv in enumerate(self.convs):
            self._register(f"conv{d}", conv)
        self._register("gru", self.cell)
        self._register("attention", self.attention)
        self._register("decoder", self.decoder)

    def _spatial(self, x: DiffTensor) -> DiffTensor:
        out = x
        for conv in self.convs:
            out = structural_conv(conv, self.ctx.binary_adjacency, out)
        return out

    def forward(self, inputs: np.ndarray) -> DiffTensor:
        inputs = self._check_window(inputs)
        h = constant(np.zeros((self.ctx.n, self.spec.hidden)))
        states: list[DiffTensor] = []
        for k in range(self.spec.k):
            conv_out = self._spatial(constant(inputs[k]))
            h = gru_step(self.cell, conv_out, h)
            states.append(h)
        agg = attention_aggregate(self.attention, states)
        return self.decoder.forward(agg)


class CstGcn(TGcn):
    """TGcn with a five-deep structural conv chain."""

    conv_depth = CST_DEPTH


class PartitionedTGcn(ForecastModel):
    """TGcn plus the per-group embedding path (gamma).

    Per lag, the full-graph structural conv and the mixed per-group
    embeddings are concatenated feature-wise as the GRU input. The hidden
    state is seeded with the oldest lag's gamma.
    """

    strategy = "regional"
    group_prefix = "regional"

    def __init__(self, spec: ModelSpec, ctx: GraphContext):
        super().__init__(spec, ctx)
        if ctx.partition is None or ctx.partition.strategy != self.strategy:
            raise ConfigError(
                f"{spec.architecture} needs a {self.strategy} partition in its graph context")
        rng = np.random.default_rng(spec.seed)
        h = spec.hidden
        self.structural = StructuralConv(rng, IN_WIDTH, h)
        self.region_layers: dict[str, GcnLayer] = {
            label: GcnLayer(rng, IN_WIDTH, h) for label in ctx.region_order}
        self.mixer_w = uniform_init(rng, (h, h), h)
        self.mixer_b = uniform_init(rng, (1, h), h)
        self.cell = GcnGruCell(rng, 2 * h, h)
        self.attention = AttentionAggregator(rng, spec.k)
        self.decoder = Decoder(rng, h, h, spec.n_horizons)

        self._register("structural", self.structural)
        for label in ctx.region_order:
            self._register(f"{self.group_prefix}.{label}", self.region_layers[label])
        self._register_param("mixer.w", self.mixer_w)
        self._register_param("mixer.b", self.mixer_b)
        self._register("gru", self.cell)
        self._register("attention", self.attention)
        self._register("decoder", self.decoder)

    def regional_embedding(self, x: DiffTensor) -> DiffTensor:
        """Per-group conv, scatter to global order, shared affine mix."""
        scattered: DiffTensor | None = None
        for label in self.ctx.region_order:
            local = matmul(self.ctx.gather[label], x)
            emb = gcn_forward(self.region_layers[label], self.ctx.sub_normalized[label], local)
            placed = matmul(self.ctx.scatter[label], emb)
            scattered = placed if scattered is None else add(scattered, placed)
        return affine(scattered, self.mixer_w, self.mixer_b)

    def forward(self, inputs: np.ndarray) -> DiffTensor:
        inputs = self._check_window(inputs)
        frames = [constant(inputs[k]) for k in range(self.spec.k)]
        gammas = [self.regional_embedding(x) for x in frames]
        h = gammas[0]
        states: list[DiffTensor] = []
        for k in range(self.spec.k):
            structural = structural_conv(self.structural, self.ctx.binary_adjacency, frames[k])
            conv_in = concat([structural, gammas[k]], axis=1)
            h = gru_step(self.cell, conv_in, h)
            states.append(h)
        agg = attention_aggregate(self.attention, states)
        return self.decoder.forward(agg)


class RegTGcn(PartitionedTGcn):
    strategy = "regional"
    group_prefix = "regional"


class RanTGcn(PartitionedTGcn):
    strategy = "random"
    group_prefix = "group"


_MODEL_CLASSES = {
    "StackedGRU": StackedGru,
    "StackedGCN": StackedGcn,
    "TGCN": TGcn,
    "CSTGCN": CstGcn,
    "RanTGCN": RanTGcn,
    "RegTGCN": RegTGcn,
}


def build_model(spec: ModelSpec, graph: SiteGraph,
                partition: RegionalPartition | None = None) -> ForecastModel:
    """Construct the architecture named by the spec over the given graph."""
    needs_partition = spec.connectivity in ("regional", "random")
    if needs_partition and partition is None:
        raise ConfigError(f"{spec.architecture} requires a partition")
    if not needs_partition and partition is not None:
        raise ConfigError(f"{spec.architecture} does not take a partition")
    if partition is not None and partition.strategy != spec.connectivity:
        raise ConfigError(
            f"partition strategy {partition.strategy!r} does not match "
            f"connectivity {spec.connectivity!r}")
    ctx = GraphContext(graph, partition)
    return _MODEL_CLASSES[spec.architecture](spec, ctx)
