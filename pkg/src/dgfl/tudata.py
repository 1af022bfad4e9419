"""Graph dataset ingestion: TUDataset text parsing, synthetic generation, partitioning.

All indices are 0-based internally; the TUDataset text layout is 1-based and
converted at the boundary. Every undirected edge is stored exactly once as an
(min, max) pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

DEFAULT_DEGREE_CAP = 16


@dataclass(frozen=True)
class Graph:
    node_count: int
    edges: tuple[tuple[int, int], ...]
    node_features: np.ndarray  # (node_count, feature_dim) float64
    label: int

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg


@dataclass
class GraphDataset:
    graphs: list[Graph]
    num_classes: int
    feature_dim: int
    name: str
    # Retained by gen_synthetic so tests can tell the two families apart.
    tags: list[str] | None = None

    def __post_init__(self):
        if not self.graphs:
            raise FormatError(f"dataset {self.name!r} is empty")
        for g in self.graphs:
            if not 0 <= g.label < self.num_classes:
                raise FormatError(
                    f"label {g.label} outside [0, {self.num_classes}) in {self.name!r}")


@dataclass(frozen=True)
class PartitionPlan:
    client_shards: list[list[int]]
    test_indices: list[int]
    seed: int


def _dedupe_edges(pairs) -> tuple[tuple[int, int], ...]:
    seen = set()
    out = []
    for u, v in pairs:
        if u == v:
            continue
        key = (u, v) if u < v else (v, u)
        if key not in seen:
            seen.add(key)
            out.append(key)
    return tuple(out)


def _read_lines(path: Path) -> list[str]:
    # Tolerate CRLF and trailing blank lines.
    text = path.read_text()
    return [ln.strip() for ln in text.splitlines() if ln.strip()]


def parse_tudataset(directory_path, dataset_name: str) -> GraphDataset:
    """Parse the standard multi-file TUDataset text layout.

    Node features come from ``<name>_node_labels.txt`` (one-hot) if present,
    else ``<name>_node_attributes.txt``, else a degree one-hot capped at
    DEFAULT_DEGREE_CAP.
    """
    directory = Path(directory_path)

    def req(suffix: str) -> Path:
        p = directory / f"{dataset_name}{suffix}"
        if not p.is_file():
            raise FormatError(f"missing required file: {p}")
        return p

    indicator_lines = _read_lines(req("_graph_indicator.txt"))
    label_lines = _read_lines(req("_graph_labels.txt"))
    edge_path = req("_A.txt")

    try:
        indicator = [int(x) for x in indicator_lines]
    except ValueError as e:
        raise FormatError(f"graph_indicator: non-integer entry ({e})") from None

    n_graphs = len(label_lines)
    if n_graphs == 0:
        raise FormatError("graph_labels file is empty")
    graph_ids = sorted(set(indicator))
    if graph_ids != list(range(1, n_graphs + 1)):
        raise FormatError("graph_indicator ids do not cover 1..n_graphs")

    # Global 1-based node id -> (graph index, local node index).
    local_of: dict[int, tuple[int, int]] = {}
    node_counts = [0] * n_graphs
    for node_id, gid in enumerate(indicator, start=1):
        g = gid - 1
        local_of[node_id] = (g, node_counts[g])
        node_counts[g] += 1

    edges_per_graph: list[list[tuple[int, int]]] = [[] for _ in range(n_graphs)]
    for lineno, ln in enumerate(_read_lines(edge_path), start=1):
        parts = [p.strip() for p in ln.split(",")]
        try:
            a, b = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            raise FormatError(f"{dataset_name}_A.txt line {lineno}: bad edge {ln!r}") from None
        if a not in local_of or b not in local_of:
            raise FormatError(f"{dataset_name}_A.txt line {lineno}: node id out of range")
        ga, ia = local_of[a]
        gb, ib = local_of[b]
        if ga != gb:
            raise FormatError(
                f"{dataset_name}_A.txt line {lineno}: edge crosses graph boundary")
        edges_per_graph[ga].append((ia, ib))

    # Labels remapped to contiguous [0, num_classes) by first appearance.
    raw_labels = []
    for lineno, ln in enumerate(label_lines, start=1):
        try:
            raw_labels.append(int(ln))
        except ValueError:
            raise FormatError(
                f"{dataset_name}_graph_labels.txt line {lineno}: non-integer label {ln!r}") from None
    remap: dict[int, int] = {}
    for lab in raw_labels:
        if lab not in remap:
            remap[lab] = len(remap)
    labels = [remap[lab] for lab in raw_labels]
    num_classes = len(remap)

    node_label_path = directory / f"{dataset_name}_node_labels.txt"
    node_attr_path = directory / f"{dataset_name}_node_attributes.txt"
    features_per_graph: list[np.ndarray]
    if node_label_path.is_file():
        vals = []
        for lineno, ln in enumerate(_read_lines(node_label_path), start=1):
            try:
                vals.append(int(ln.split(",")[0]))
            except ValueError:
                raise FormatError(
                    f"{dataset_name}_node_labels.txt line {lineno}: non-integer label") from None
        if len(vals) != len(indicator):
            raise FormatError("node_labels length differs from graph_indicator")
        distinct = sorted(set(vals))
        index_of = {v: i for i, v in enumerate(distinct)}
        feature_dim = len(distinct)
        per_node = np.zeros((len(vals), feature_dim))
        for i, v in enumerate(vals):
            per_node[i, index_of[v]] = 1.0
        features_per_graph = _split_rows(per_node, indicator, n_graphs)
    elif node_attr_path.is_file():
        rows = []
        for lineno, ln in enumerate(_read_lines(node_attr_path), start=1):
            try:
                rows.append([float(p) for p in ln.split(",")])
            except ValueError:
                raise FormatError(
                    f"{dataset_name}_node_attributes.txt line {lineno}: bad attribute row") from None
        if len(rows) != len(indicator):
            raise FormatError("node_attributes length differs from graph_indicator")
        per_node = np.asarray(rows, dtype=np.float64)
        features_per_graph = _split_rows(per_node, indicator, n_graphs)
    else:
        features_per_graph = []  # filled from degrees below

    graphs = []
    for g in range(n_graphs):
        edges = _dedupe_edges(edges_per_graph[g])
        if features_per_graph:
            feats = features_per_graph[g]
        else:
            feats = None
        graphs.append((node_counts[g], edges, feats, labels[g]))

    if features_per_graph:
        built = [Graph(n, e, f, lab) for n, e, f, lab in graphs]
        feature_dim = built[0].node_features.shape[1]
    else:
        bare = [Graph(n, e, np.zeros((n, 0)), lab) for n, e, _, lab in graphs]
        return degree_features(bare, DEFAULT_DEGREE_CAP, num_classes=num_classes,
                               name=dataset_name)

    return GraphDataset(built, num_classes, feature_dim, dataset_name)


def _split_rows(per_node: np.ndarray, indicator: list[int], n_graphs: int) -> list[np.ndarray]:
    buckets: list[list[np.ndarray]] = [[] for _ in range(n_graphs)]
    for row, gid in zip(per_node, indicator):
        buckets[gid - 1].append(row)
    return [np.vstack(b) for b in buckets]


def degree_features(graphs: list[Graph], max_degree_cap: int,
                    num_classes: int | None = None, name: str = "degree") -> GraphDataset:
    """Attach one-hot(min(degree, cap)) node features; feature_dim = cap + 1."""
    dim = max_degree_cap + 1
    out = []
    labels = set()
    for g in graphs:
        feats = np.zeros((g.node_count, dim))
        for v, d in enumerate(g.degrees()):
            feats[v, min(int(d), max_degree_cap)] = 1.0
        out.append(Graph(g.node_count, g.edges, feats, g.label))
        labels.add(g.label)
    if num_classes is None:
        num_classes = max(labels) + 1
    return GraphDataset(out, num_classes, dim, name)


def write_tudataset(dataset: GraphDataset, directory_path, name: str | None = None) -> None:
    """Serialize to the TUDataset text layout (edges written in both directions)."""
    name = name or dataset.name
    directory = Path(directory_path)
    directory.mkdir(parents=True, exist_ok=True)
    a_lines, ind_lines, lab_lines, attr_lines = [], [], [], []
    offset = 0
    for gid, g in enumerate(dataset.graphs, start=1):
        for u, v in g.edges:
            a_lines.append(f"{offset + u + 1}, {offset + v + 1}")
            a_lines.append(f"{offset + v + 1}, {offset + u + 1}")
        ind_lines.extend([str(gid)] * g.node_count)
        lab_lines.append(str(g.label))
        for row in g.node_features:
            attr_lines.append(", ".join(repr(float(x)) for x in row))
        offset += g.node_count
    (directory / f"{name}_A.txt").write_text("\n".join(a_lines) + "\n")
    (directory / f"{name}_graph_indicator.txt").write_text("\n".join(ind_lines) + "\n")
    (directory / f"{name}_graph_labels.txt").write_text("\n".join(lab_lines) + "\n")
    (directory / f"{name}_node_attributes.txt").write_text("\n".join(attr_lines) + "\n")


@dataclass(frozen=True)
class SyntheticSpec:
    """Two families of random graphs differing in mean degree.

    Within each family the label is 1 iff the graph's edge count is strictly
    above the family median, else 0.
    """
    count_a: int = 50
    count_b: int = 50
    nodes_a: int = 10
    nodes_b: int = 10
    mean_degree_a: float = 2.0
    mean_degree_b: float = 6.0
    degree_cap: int = DEFAULT_DEGREE_CAP
    name: str = "synthetic"


def _random_graph(n: int, mean_degree: float, rng: np.random.Generator) -> tuple[tuple[int, int], ...]:
    p = min(1.0, mean_degree / max(n - 1, 1))
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                edges.append((u, v))
    return tuple(edges)


def gen_synthetic(spec: SyntheticSpec, seed: int) -> GraphDataset:
    """Deterministic two-family random graph dataset with degree one-hot features."""
    if spec.count_a < 2 or spec.count_b < 2:
        raise ConfigError("each synthetic family needs at least 2 graphs")
    if spec.mean_degree_a == spec.mean_degree_b:
        raise ConfigError("the two families must have distinct mean degrees")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xDA7A)))

    bare: list[Graph] = []
    tags: list[str] = []
    for tag, count, n, d in (("A", spec.count_a, spec.nodes_a, spec.mean_degree_a),
                             ("B", spec.count_b, spec.nodes_b, spec.mean_degree_b)):
        family = [_random_graph(n, d, rng) for _ in range(count)]
        median = float(np.median([len(e) for e in family]))
        for edges in family:
            label = 1 if len(edges) > median else 0
            bare.append(Graph(n, edges, np.zeros((n, 0)), label))
            tags.append(tag)

    order = rng.permutation(len(bare))
    bare = [bare[i] for i in order]
    tags = [tags[i] for i in order]
    ds = degree_features(bare, spec.degree_cap, num_classes=2, name=spec.name)
    ds.tags = tags
    return ds


def partition(dataset: GraphDataset, n_clients: int, test_fraction: float,
              unevenness: float, seed: int) -> PartitionPlan:
    """Global test holdout plus a Dirichlet-skewed split of the rest.

    unevenness 0 gives an equal split; larger values concentrate graphs on
    fewer clients. Every client always receives at least one graph.
    """
    total = len(dataset.graphs)
    test_size = round(test_fraction * total)
    if total < n_clients + math.ceil(test_fraction * total):
        raise ConfigError(
            f"{total} graphs cannot cover {n_clients} clients plus a "
            f"{test_fraction:.0%} test holdout")
    if n_clients < 1:
        raise ConfigError("n_clients must be >= 1")

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5917)))
    perm = rng.permutation(total)
    test_indices = sorted(int(i) for i in perm[:test_size])
    remaining = perm[test_size:]
    m = len(remaining)

    if unevenness <= 0:
        counts = np.full(n_clients, m // n_clients, dtype=np.int64)
        counts[: m % n_clients] += 1
    else:
        alpha = 1.0 / max(unevenness, 1e-9)
        props = rng.dirichlet(np.full(n_clients, alpha))
        counts = np.floor(props * m).astype(np.int64)
        # Largest-remainder apportionment of the leftover graphs.
        leftover = m - int(counts.sum())
        remainders = props * m - np.floor(props * m)
        for i in np.argsort(-remainders, kind="stable")[:leftover]:
            counts[i] += 1
    # Rebalance so every client holds at least one graph.
    while (counts == 0).any():
        counts[int(np.argmin(counts))] += 1
        counts[int(np.argmax(counts))] -= 1

    shards = []
    pos = 0
    for c in counts:
        shards.append(sorted(int(i) for i in remaining[pos: pos + int(c)]))
        pos += int(c)
    return PartitionPlan(shards, test_indices, seed)


def dataset_stats(dataset: GraphDataset) -> dict:
    """Counts and per-graph averages (undirected edges counted once)."""
    n = len(dataset.graphs)
    return {
        "graphs": n,
        "classes": dataset.num_classes,
        "avg_nodes": sum(g.node_count for g in dataset.graphs) / n,
        "avg_edges": sum(len(g.edges) for g in dataset.graphs) / n,
    }
