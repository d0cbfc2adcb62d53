"""Knowledge graph ingestion: triple files to adjacency and node features.

Triples arrive as tab-separated ``head<TAB>relation<TAB>tail`` lines. The
graph is materialized as a symmetric binary adjacency with self-loops,
row-normalized so each row sums to one, plus a learned node-feature matrix.
Relations are kept on the triple list but do not type the adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .tensor import Tensor, xavier


class TripleParseError(ValueError):
    """A triple line is malformed; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


Triple = tuple[str, str, str]


def parse_triples(source: str | Iterable[str]) -> list[Triple]:
    """Parse tab-separated triples, skipping blank lines and ``#`` comments.

    Fields are stripped of surrounding whitespace. Duplicate triples are
    retained; deduplication happens in :func:`build_graph`.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    triples: list[Triple] = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split("\t")]
        if len(fields) != 3:
            raise TripleParseError(line_no, f"expected 3 tab-separated fields, got {len(fields)}")
        if any(not f for f in fields):
            raise TripleParseError(line_no, "empty field")
        triples.append((fields[0], fields[1], fields[2]))
    return triples


def serialize_triples(triples: Iterable[Triple]) -> str:
    return "".join(f"{h}\t{r}\t{t}\n" for h, r, t in triples)


def load_triples(path) -> list[Triple]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_triples(fh)


def save_triples(path, triples: Iterable[Triple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_triples(triples))


@dataclass
class KnowledgeGraph:
    """Node store with row-normalized adjacency and trainable features.

    ``adjacency`` row i sums to 1 (self-loops guarantee no zero row) and
    ``features`` row i is the learned input vector of node i.
    """

    node_ids: list[str]
    node_index: dict[str, int]
    triples: list[Triple]
    adjacency: Tensor
    features: Tensor
    undirected_edges: set[tuple[int, int]] = field(default_factory=set)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)


def build_graph(triples: list[Triple], feature_dim: int, seed: int) -> KnowledgeGraph:
    """Materialize a graph from triples.

    Nodes are indexed in first-appearance order (head before tail). The
    adjacency is the binary symmetric edge matrix plus identity, divided
    row-wise by degree + 1. Node features are xavier-initialized and marked
    trainable, since triple files carry no feature information.
    """
    if not triples:
        raise ValueError("cannot build a graph from an empty triple list")
    if feature_dim < 1:
        raise ValueError(f"feature_dim must be >= 1, got {feature_dim}")

    node_ids: list[str] = []
    node_index: dict[str, int] = {}
    for head, _, tail in triples:
        for name in (head, tail):
            if name not in node_index:
                node_index[name] = len(node_ids)
                node_ids.append(name)

    n = len(node_ids)
    binary = np.eye(n)
    undirected: set[tuple[int, int]] = set()
    for head, _, tail in triples:
        i, j = node_index[head], node_index[tail]
        binary[i, j] = 1.0
        binary[j, i] = 1.0
        if i != j:
            undirected.add((min(i, j), max(i, j)))

    adjacency = Tensor(binary / binary.sum(axis=1, keepdims=True))
    features = xavier([n, feature_dim], seed).requires_grad_(True)
    return KnowledgeGraph(
        node_ids=node_ids,
        node_index=node_index,
        triples=list(triples),
        adjacency=adjacency,
        features=features,
        undirected_edges=undirected,
    )


def subgraph_stats(graph: KnowledgeGraph) -> dict:
    """Node/edge counts and degree histogram over deduplicated undirected
    edges, self-loops excluded."""
    degree = [0] * graph.n_nodes
    for i, j in graph.undirected_edges:
        degree[i] += 1
        degree[j] += 1
    histogram: dict[int, int] = {}
    for d in degree:
        histogram[d] = histogram.get(d, 0) + 1
    return {
        "n_nodes": graph.n_nodes,
        "n_edges": len(graph.undirected_edges),
        "degree_histogram": histogram,
    }
