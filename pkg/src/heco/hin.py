"""Heterogeneous graph model, meta-path adjacencies and positive sets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, LoadError, SchemaError

log = logging.getLogger(__name__)

REVERSE = "~"


@dataclass(frozen=True)
class Relation:
    name: str
    src: str
    dst: str
    edges: np.ndarray  # (m, 2) int64, columns (src_id, dst_id)


@dataclass(frozen=True)
class MetaPath:
    """A relation sequence from the target type back to the target type.

    A step ``"~pa"`` walks relation ``pa`` from its dst side to its src side.
    """

    name: str
    steps: tuple[str, ...]


@dataclass
class HeteroGraph:
    node_types: list[str]
    target: str
    num_nodes: dict[str, int]
    features: dict[str, np.ndarray]
    relations: dict[str, Relation]
    metapaths: list[MetaPath] = field(default_factory=list)
    labels: np.ndarray | None = None
    feature_kinds: dict[str, str] = field(default_factory=dict)

    @property
    def num_targets(self) -> int:
        return self.num_nodes[self.target]

    @property
    def num_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1

    @property
    def network_schema(self) -> tuple[list[str], list[tuple[str, str, str]]]:
        return list(self.node_types), [(r.src, r.dst, r.name) for r in self.relations.values()]

    def neighbor_types(self) -> list[str]:
        """Non-target types directly linked to the target type, in schema order."""
        out: list[str] = []
        for r in self.relations.values():
            for a, b in ((r.src, r.dst), (r.dst, r.src)):
                if a == self.target and b != self.target and b not in out:
                    out.append(b)
        return out

    def step_matrix(self, step: str) -> tuple[str, str, sp.csr_matrix]:
        """Binary adjacency for one (possibly reversed) relation step."""
        reverse = step.startswith(REVERSE)
        name = step[1:] if reverse else step
        if name not in self.relations:
            raise SchemaError(f"unknown relation {name!r}")
        r = self.relations[name]
        e = r.edges
        shape = (self.num_nodes[r.src], self.num_nodes[r.dst])
        m = sp.csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=shape)
        m.data[:] = 1.0
        if reverse:
            return r.dst, r.src, m.T.tocsr()
        return r.src, r.dst, m

    def schema_neighbors(self) -> dict[str, "NeighborLists"]:
        """Per neighbor type, the one-hop neighbor lists of every target node."""
        n = self.num_targets
        out = {}
        for t in self.neighbor_types():
            acc = sp.csr_matrix((n, self.num_nodes[t]))
            for r in self.relations.values():
                if (r.src, r.dst) == (self.target, t):
                    acc = acc + self.step_matrix(r.name)[2]
                elif (r.src, r.dst) == (t, self.target):
                    acc = acc + self.step_matrix(REVERSE + r.name)[2]
            acc = acc.tocsr()
            acc.sum_duplicates()
            acc.sort_indices()
            out[t] = NeighborLists(acc.indptr.copy(), acc.indices.astype(np.int64))
        return out


@dataclass(frozen=True)
class NeighborLists:
    """CSR-style neighbor lists: neighbors of row i are indices[indptr[i]:indptr[i+1]]."""

    indptr: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.indptr) - 1

    def __getitem__(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)


@dataclass(frozen=True)
class MetaPathAdjacency:
    name: str
    neighbors: NeighborLists

    @property
    def degrees(self) -> np.ndarray:
        return self.neighbors.degrees

    @property
    def num_nodes(self) -> int:
        return len(self.neighbors)

    def __contains__(self, pair: tuple[int, int]) -> bool:
        i, j = pair
        row = self.neighbors[i]
        k = np.searchsorted(row, j)
        return bool(k < len(row) and row[k] == j)

    def to_sparse(self) -> sp.csr_matrix:
        n = self.num_nodes
        nb = self.neighbors
        return sp.csr_matrix((np.ones(len(nb.indices)), nb.indices, nb.indptr), shape=(n, n))

    def gcn_matrix(self) -> sp.csr_matrix:
        """Self-loop-augmented symmetric normalisation used by the meta-path GCN."""
        d = self.degrees.astype(np.float64) + 1.0
        inv = 1.0 / np.sqrt(d)
        a = self.to_sparse() + sp.identity(self.num_nodes, format="csr")
        return sp.csr_matrix(sp.diags(inv) @ a @ sp.diags(inv))


def check_metapath(g: HeteroGraph, p: MetaPath) -> None:
    if not p.steps:
        raise SchemaError(f"meta-path {p.name} has no steps")
    current = g.target
    for step in p.steps:
        src, dst, _ = g.step_matrix(step)
        if src != current:
            raise SchemaError(
                f"meta-path {p.name}: step {step!r} starts at {src!r}, expected {current!r}"
            )
        current = dst
    if current != g.target:
        raise SchemaError(f"meta-path {p.name} ends at {current!r}, not target {g.target!r}")


def compose_metapath_adjacency(g: HeteroGraph, p: MetaPath) -> MetaPathAdjacency:
    check_metapath(g, p)
    prod = None
    for step in p.steps:
        m = g.step_matrix(step)[2]
        prod = m if prod is None else prod @ m
        prod.data[:] = 1.0
    prod = sp.csr_matrix(prod - sp.diags(prod.diagonal()))
    prod.eliminate_zeros()
    prod.sort_indices()
    return MetaPathAdjacency(p.name, NeighborLists(prod.indptr.copy(), prod.indices.astype(np.int64)))


def metapath_adjacencies(g: HeteroGraph) -> list[MetaPathAdjacency]:
    return [compose_metapath_adjacency(g, p) for p in g.metapaths]


def count_metapath_connections(adjacencies: list[MetaPathAdjacency], i: int, j: int) -> int:
    """Number of meta-paths under which j is a neighbor of i (0 when i == j)."""
    if i == j:
        return 0
    return sum((i, j) in a for a in adjacencies)


@dataclass(frozen=True)
class PosNegSets:
    """Positive set per target node; negatives are the complement."""

    positives: list[np.ndarray]
    t_pos: int

    @property
    def num_nodes(self) -> int:
        return len(self.positives)

    def pos_mask(self) -> np.ndarray:
        n = self.num_nodes
        mask = np.zeros((n, n), dtype=bool)
        for i, p in enumerate(self.positives):
            mask[i, p] = True
        return mask

    def negatives(self, i: int) -> np.ndarray:
        keep = np.ones(self.num_nodes, dtype=bool)
        keep[self.positives[i]] = False
        return np.flatnonzero(keep)


def build_positive_negative_sets(adjacencies: list[MetaPathAdjacency], t_pos: int) -> PosNegSets:
    """Top-``t_pos`` nodes by meta-path connection count, plus the node itself.

    Ties in the count are broken by ascending node id.
    """
    if t_pos < 1:
        raise ConfigError(f"t_pos must be >= 1, got {t_pos}")
    n = adjacencies[0].num_nodes
    counts = sp.csr_matrix((n, n))
    for a in adjacencies:
        counts = counts + a.to_sparse()
    counts = sp.csr_matrix(counts)
    counts.sort_indices()
    positives = []
    for i in range(n):
        lo, hi = counts.indptr[i], counts.indptr[i + 1]
        cols = counts.indices[lo:hi]
        vals = counts.data[lo:hi]
        keep = cols != i
        cols, vals = cols[keep], vals[keep]
        order = np.lexsort((cols, -vals))
        chosen = cols[order[:t_pos]]
        positives.append(np.concatenate([[i], chosen]).astype(np.int64))
    return PosNegSets(positives, t_pos)


@dataclass(frozen=True)
class SchemaSampleConfig:
    """Neighbor budget per neighbor type; mode ``"all"`` disables sampling."""

    thresholds: dict[str, int]
    modes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for t, k in self.thresholds.items():
            if self.mode(t) == "sample" and k < 1:
                raise ConfigError(f"threshold for {t} must be >= 1, got {k}")
        for t, m in self.modes.items():
            if m not in ("sample", "all"):
                raise ConfigError(f"unknown sampling mode {m!r} for {t}")

    def mode(self, t: str) -> str:
        return self.modes.get(t, "sample")


@dataclass(frozen=True)
class SampledNeighbors:
    """Padded neighbor indices of shape (num_targets, width) with a validity mask."""

    index: np.ndarray
    mask: np.ndarray

    def row(self, i: int) -> np.ndarray:
        return self.index[i][self.mask[i]]

    @property
    def present(self) -> np.ndarray:
        return self.mask.any(axis=1)


def sample_schema_neighbors(
    neighbors: dict[str, NeighborLists],
    cfg: SchemaSampleConfig,
    rng: np.random.Generator,
) -> dict[str, SampledNeighbors]:
    out = {}
    for t, nl in neighbors.items():
        n = len(nl)
        deg = nl.degrees
        if cfg.mode(t) == "all":
            width = max(int(deg.max(initial=0)), 1)
            index = np.zeros((n, width), dtype=np.int64)
            mask = np.zeros((n, width), dtype=bool)
            for i in range(n):
                row = nl[i]
                index[i, :len(row)] = row
                mask[i, :len(row)] = True
        else:
            width = cfg.thresholds[t]
            index = np.zeros((n, width), dtype=np.int64)
            mask = np.zeros((n, width), dtype=bool)
            for i in range(n):
                row = nl[i]
                if len(row) == 0:
                    continue
                index[i] = rng.choice(row, width, replace=len(row) <= width)
                mask[i] = True
        out[t] = SampledNeighbors(index, mask)
    return out


@dataclass
class Diagnostics:
    isolated_targets: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.isolated_targets or self.warnings)


def validate_graph(g: HeteroGraph) -> Diagnostics:
    """Raise :class:`LoadError` on broken invariants; return soft warnings."""
    if g.target not in g.node_types:
        raise LoadError(f"target type {g.target!r} is not a declared node type")
    if len(g.node_types) + len(g.relations) <= 2:
        raise LoadError("a heterogeneous graph needs |types| + |relations| > 2")
    for t in g.node_types:
        if t not in g.num_nodes:
            raise LoadError(f"no node count for type {t!r}")
        x = g.features.get(t)
        if x is None:
            raise LoadError(f"no features for type {t!r}")
        if x.shape[0] != g.num_nodes[t]:
            raise LoadError(f"features of {t!r} have {x.shape[0]} rows, expected {g.num_nodes[t]}")
        if sp.issparse(x):
            if not np.all(np.isfinite(x.data)):
                raise LoadError(f"non-finite feature for {t!r}")
        elif not np.all(np.isfinite(x)):
            bad = np.argwhere(~np.isfinite(x))[0]
            raise LoadError(f"non-finite feature for {t!r} node {bad[0]} column {bad[1]}")
    for r in g.relations.values():
        for side, t in ((0, r.src), (1, r.dst)):
            if t not in g.num_nodes:
                raise LoadError(f"relation {r.name!r} references undeclared type {t!r}")
            ids = r.edges[:, side] if len(r.edges) else np.zeros(0, dtype=np.int64)
            bad = np.flatnonzero((ids < 0) | (ids >= g.num_nodes[t]))
            if bad.size:
                k = bad[0]
                raise LoadError(
                    f"relation {r.name!r} edge {k} ({r.edges[k, 0]}, {r.edges[k, 1]}) "
                    f"points to nonexistent {t!r} node"
                )
    if g.labels is not None and len(g.labels) != g.num_targets:
        raise LoadError(f"{len(g.labels)} labels for {g.num_targets} target nodes")
    for p in g.metapaths:
        try:
            check_metapath(g, p)
        except SchemaError as exc:
            raise LoadError(str(exc)) from exc

    diag = Diagnostics()
    deg = np.zeros(g.num_targets, dtype=np.int64)
    for nl in g.schema_neighbors().values():
        deg += nl.degrees
    diag.isolated_targets = np.flatnonzero(deg == 0).tolist()
    if diag.isolated_targets:
        msg = f"target nodes without schema neighbors: {diag.isolated_targets[:20]}"
        diag.warnings.append(msg)
        log.warning(msg)
    return diag
