"""Layout graphs: relation detection and node/edge featurisation."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .layout import ElementType, LayoutError, canonical_reading_order

D_NODE = 16
D_EDGE = 10
N_TYPES = len(ElementType)


class RelationKind(enum.IntEnum):
    align_left = 0
    align_right = 1
    align_center_x = 2
    align_top = 3
    align_bottom = 4
    align_center_y = 5
    proximity = 6
    hierarchy = 7

    @property
    def directed(self):
        return self is RelationKind.hierarchy


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: RelationKind
    offset: tuple


@dataclass
class GraphConfig:
    tau_align: float = 0.01
    tau_prox: float = 0.05
    k_nn: int = 4
    tau_cap: float = 0.10
    self_loop: bool = True

    def __post_init__(self):
        for name in ("tau_align", "tau_prox", "tau_cap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.k_nn < 1:
            raise ValueError("k_nn must be a positive integer")

    def to_dict(self):
        return asdict(self)


@dataclass
class LayoutGraph:
    doc_id: str
    node_features: np.ndarray
    edges: list
    edge_features: np.ndarray
    order: list

    @property
    def n_nodes(self):
        return self.node_features.shape[0]

    def node_types(self):
        return [int(i) for i in np.argmax(self.node_features[:, :N_TYPES], axis=1)]

    def node_bboxes(self):
        return self.node_features[:, N_TYPES:N_TYPES + 4]


# ---------------------------------------------------------------- relations


def detect_alignment(a, b, cfg):
    """Alignment kinds shared by two elements (symmetric in a, b)."""
    tau = cfg.tau_align
    (ax0, ay0, ax1, ay1), (bx0, by0, bx1, by1) = a.bbox, b.bbox
    tests = (
        (RelationKind.align_left, ax0, bx0),
        (RelationKind.align_right, ax1, bx1),
        (RelationKind.align_center_x, 0.5 * (ax0 + ax1), 0.5 * (bx0 + bx1)),
        (RelationKind.align_top, ay0, by0),
        (RelationKind.align_bottom, ay1, by1),
        (RelationKind.align_center_y, 0.5 * (ay0 + ay1), 0.5 * (by0 + by1)),
    )
    return {kind for kind, u, v in tests if abs(u - v) <= tau}


def bbox_distance(a, b):
    """Euclidean gap between two boxes; 0 when they touch or overlap."""
    (ax0, ay0, ax1, ay1), (bx0, by0, bx1, by1) = a.bbox, b.bbox
    gap_x = max(0.0, max(ax0, bx0) - min(ax1, bx1))
    gap_y = max(0.0, max(ay0, by0) - min(ay1, by1))
    return math.sqrt(gap_x * gap_x + gap_y * gap_y)


def detect_proximity(a, b, cfg):
    return bbox_distance(a, b) <= cfg.tau_prox


def _offset(els, src, dst):
    (sx, sy), (dx, dy) = els[src].center, els[dst].center
    return (dx - sx, dy - sy)


def infer_hierarchy(doc, order, cfg):
    """Directed edges in reading-order node indices.

    Titles and headings point at their reading-order successor; each caption
    is pointed at by its nearest image when that image is within ``tau_cap``.
    """
    els = [doc.elements[i] for i in order]
    edges = []
    for k, el in enumerate(els):
        if el.element_type in (ElementType.title, ElementType.heading) and k + 1 < len(els):
            edges.append(Edge(k, k + 1, RelationKind.hierarchy, _offset(els, k, k + 1)))
    for k, el in enumerate(els):
        if el.element_type is not ElementType.caption:
            continue
        best = None
        for j, other in enumerate(els):
            if other.element_type is ElementType.image:
                d = bbox_distance(other, el)
                if d <= cfg.tau_cap and (best is None or d < best[0]):
                    best = (d, j)
        if best is not None:
            edges.append(Edge(best[1], k, RelationKind.hierarchy, _offset(els, best[1], k)))
    return edges


# ---------------------------------------------------------------- graph build


def node_features(els):
    n = len(els)
    feats = np.zeros((n, D_NODE))
    for i, el in enumerate(els):
        feats[i, int(el.element_type)] = 1.0
        feats[i, 8:12] = el.bbox
        feats[i, 12] = el.width
        feats[i, 13] = el.height
        feats[i, 14] = 0.0 if el.font_size is None else el.font_size
        feats[i, 15] = i / (n - 1) if n > 1 else 0.0
    return feats


def edge_feature(edge):
    f = np.zeros(D_EDGE)
    f[int(edge.kind)] = 1.0
    f[8:10] = edge.offset
    return f


def build_graph(doc, cfg=None):
    cfg = cfg or GraphConfig()
    if not doc.elements:
        raise LayoutError(f"document {doc.id!r}: elements: cannot build a graph from an empty document")
    order = canonical_reading_order(doc)
    els = [doc.elements[i] for i in order]
    n = len(els)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            for kind in sorted(detect_alignment(els[i], els[j], cfg)):
                edges.append(Edge(i, j, kind, _offset(els, i, j)))
    prox_pairs = set()
    for i in range(n):
        cands = []
        for j in range(n):
            if j != i:
                d = bbox_distance(els[i], els[j])
                if d <= cfg.tau_prox:
                    cands.append((d, j))
        for _, j in sorted(cands)[: cfg.k_nn]:
            prox_pairs.add((min(i, j), max(i, j)))
    for i, j in sorted(prox_pairs):
        edges.append(Edge(i, j, RelationKind.proximity, _offset(els, i, j)))
    edges.extend(infer_hierarchy(doc, order, cfg))
    if cfg.self_loop:
        edges.extend(Edge(i, i, RelationKind.proximity, (0.0, 0.0)) for i in range(n))
    ef = np.array([edge_feature(e) for e in edges]).reshape(len(edges), D_EDGE)
    return LayoutGraph(doc_id=doc.id, node_features=node_features(els), edges=edges,
                       edge_features=ef, order=list(order))


def check_graph(g):
    """Names of violated LayoutGraph invariants (empty when valid)."""
    bad = []
    n = g.node_features.shape[0] if g.node_features.ndim == 2 else 0
    if g.node_features.ndim != 2 or g.node_features.shape[1] != D_NODE:
        bad.append("node feature dimension")
    if sorted(g.order) != list(range(n)):
        bad.append("order is not a permutation")
    if g.edge_features.shape != (len(g.edges), D_EDGE):
        bad.append("edge feature dimension")
    for e in g.edges:
        if not (0 <= e.src < n and 0 <= e.dst < n):
            bad.append("endpoint out of range")
            continue
        if e.src == e.dst:
            if e.kind is not RelationKind.proximity or tuple(e.offset) != (0.0, 0.0):
                bad.append("self-loop must be proximity with zero offset")
        elif not e.kind.directed and e.src > e.dst:
            bad.append("canonical endpoint order")
    if n and g.node_features.shape[1] == D_NODE:
        onehot = g.node_features[:, :N_TYPES]
        if not np.all(onehot.sum(axis=1) == 1.0):
            bad.append("type one-hot")
    return sorted(set(bad))


def dump_graphs(graphs):
    """Debug JSON Lines text, one graph per line."""
    lines = []
    for g in graphs:
        lines.append(json.dumps({
            "doc_id": g.doc_id,
            "node_features": g.node_features.tolist(),
            "edges": [[e.src, e.dst, e.kind.name, list(e.offset)] for e in g.edges],
            "order": g.order,
        }))
    return "".join(line + "\n" for line in lines)
