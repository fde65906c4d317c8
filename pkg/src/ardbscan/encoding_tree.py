"""Two-level encoding trees and greedy structural entropy minimization.

An encoding tree of height two sits over a structured graph: a root, a
layer of intermediate "community" nodes, and the graph vertices as
leaves.  Its entropy charges every non-root node for the probability
that a random walk enters it from outside.  Lower tree entropy means
the communities capture more of the walk's locality, so minimizing it
is a parameter-free way to partition the graph by density.

The optimizer starts from the flat tree (every vertex a direct child
of the root) and greedily merges the pair of root children whose merge
lowers entropy the most, stopping when no merge strictly helps.
Communities that never merge, including isolated vertices, are still
wrapped in their own intermediate node so that every partition has a
well-defined information uncertainty afterwards.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dbscan_core import NOISE, DbscanParams, run_dbscan
from .structured_graph import StructuredGraph, one_dim_se

ROOT = -1

# a merge must beat this margin to count as strict descent
_DESCENT_TOL = -1e-12


@dataclass(frozen=True)
class TreeNode:
    """One node of an encoding tree.

    ``vertices`` is the sorted set of graph vertices below the node,
    ``cut`` the total weight leaving that set and ``volume`` the total
    degree inside it.  Leaves carry their own degree in both fields.
    """

    node_id: int
    parent: Optional[int]
    children: Tuple[int, ...]
    vertices: Tuple[int, ...]
    cut: float
    volume: float


class EncodingTree:
    """Height-two encoding tree over a :class:`StructuredGraph`.

    Node ids: ``ROOT`` (-1) for the root, ``0..n-1`` for leaves (equal
    to vertex ids), and ids ``>= n`` for intermediate community nodes.
    Trees are treated as immutable; the operators below return new
    trees instead of mutating.
    """

    def __init__(
        self,
        graph: StructuredGraph,
        nodes: Dict[int, TreeNode],
        entropy_trace: Optional[List[float]] = None,
    ) -> None:
        self.graph = graph
        self.nodes = nodes
        self.entropy_trace: List[float] = entropy_trace if entropy_trace is not None else []

    @classmethod
    def flat(cls, graph: StructuredGraph) -> "EncodingTree":
        """Tree with every vertex as a direct child of the root."""
        n = graph.n
        deg = graph.degrees
        nodes: Dict[int, TreeNode] = {
            ROOT: TreeNode(ROOT, None, tuple(range(n)), tuple(range(n)),
                           0.0, graph.volume),
        }
        for v in range(n):
            d = float(deg[v])
            nodes[v] = TreeNode(v, ROOT, (), (v,), d, d)
        tree = cls(graph, nodes)
        tree.entropy_trace = [tree_entropy(tree)]
        return tree

    def is_leaf(self, node_id: int) -> bool:
        return 0 <= node_id < self.graph.n

    def intermediates(self) -> List[int]:
        return sorted(nid for nid in self.nodes if nid >= self.graph.n)

    def export_nodes(self, k: Optional[int] = None) -> List[dict]:
        """Plain-dict dump of the tree, suitable for JSON output."""
        rows = []
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            row = {
                "id": nid,
                "parent": node.parent,
                "vertices": list(node.vertices),
                "entropy": None if nid == ROOT else node_entropy(self, nid),
            }
            if k is not None and not self.is_leaf(nid) and nid != ROOT:
                row["uncertainty"] = information_uncertainty(self, nid, k)
            rows.append(row)
        return rows


def node_entropy(tree: EncodingTree, node_id: int) -> float:
    """Entropy term of one non-root node."""
    if node_id == ROOT:
        raise ValueError("the root has no entropy term")
    node = tree.nodes[node_id]
    if node.cut == 0.0 or node.volume == 0.0:
        return 0.0
    parent_volume = tree.nodes[node.parent].volume
    return -(node.cut / tree.graph.volume) * math.log2(node.volume / parent_volume)


def tree_entropy(tree: EncodingTree) -> float:
    return sum(node_entropy(tree, nid) for nid in tree.nodes if nid != ROOT)


def _xlog2(coeff: float, ratio: float) -> float:
    if coeff == 0.0:
        return 0.0
    return coeff * math.log2(ratio)


def _merge_delta(vol: float, v_a: float, g_a: float, v_b: float, g_b: float,
                 w_ab: float) -> float:
    """Entropy change of replacing root-children A and B with A union B.

    Works for any mix of leaves and communities; a leaf behaves exactly
    like the singleton community holding it.
    """
    v_ab = v_a + v_b
    g_ab = g_a + g_b - 2.0 * w_ab
    total = (
        -_xlog2(g_ab, v_ab / vol)
        + _xlog2(g_a, v_a / vol)
        + _xlog2(g_b, v_b / vol)
        + _xlog2(v_a, v_ab / v_a)
        + _xlog2(v_b, v_ab / v_b)
    )
    return total / vol


def _cross_weight(graph: StructuredGraph, verts_a: Sequence[int],
                  verts_b: Sequence[int]) -> float:
    mask_a = np.zeros(graph.n, dtype=bool)
    mask_b = np.zeros(graph.n, dtype=bool)
    mask_a[list(verts_a)] = True
    mask_b[list(verts_b)] = True
    sel = (mask_a[graph.u] & mask_b[graph.v]) | (mask_b[graph.u] & mask_a[graph.v])
    return float(graph.w[sel].sum())


def _check_mergeable(tree: EncodingTree, a: int, b: int) -> None:
    if a == b:
        raise ValueError("merge requires two distinct nodes")
    for nid in (a, b):
        if nid == ROOT:
            raise ValueError("the root cannot be merged")
        if nid not in tree.nodes:
            raise ValueError(f"unknown node id {nid}")
    pa = tree.nodes[a].parent
    pb = tree.nodes[b].parent
    if pa != pb:
        raise ValueError("nodes must be siblings")
    if pa != ROOT:
        raise ValueError("merging below the root would exceed height 2")


def _apply_union(tree: EncodingTree, a: int, b: int) -> Tuple["EncodingTree", float]:
    na, nb = tree.nodes[a], tree.nodes[b]
    w_ab = _cross_weight(tree.graph, na.vertices, nb.vertices)
    delta = _merge_delta(tree.graph.volume, na.volume, na.cut,
                         nb.volume, nb.cut, w_ab)

    new_nodes = dict(tree.nodes)
    child_ids: List[int] = []
    for nid in (a, b):
        if tree.is_leaf(nid):
            child_ids.append(nid)
        else:
            child_ids.extend(tree.nodes[nid].children)
            del new_nodes[nid]
    new_id = max(new_nodes) + 1 if new_nodes else tree.graph.n
    new_id = max(new_id, tree.graph.n)
    merged = TreeNode(
        new_id, ROOT, tuple(child_ids),
        tuple(sorted(na.vertices + nb.vertices)),
        na.cut + nb.cut - 2.0 * w_ab,
        na.volume + nb.volume,
    )
    new_nodes[new_id] = merged
    for ch in child_ids:
        new_nodes[ch] = replace(new_nodes[ch], parent=new_id)
    root = new_nodes[ROOT]
    new_children = tuple(c for c in root.children if c not in (a, b)) + (new_id,)
    new_nodes[ROOT] = replace(root, children=new_children)

    trace = list(tree.entropy_trace)
    if trace:
        trace.append(trace[-1] + delta)
    return EncodingTree(tree.graph, new_nodes, trace), delta


def merge_operator(tree: EncodingTree, a: int, b: int) -> Tuple[EncodingTree, float]:
    """Merge two root children into one community.

    Children of the merged nodes become children of a single new
    intermediate node.  Returns the new tree and the entropy change;
    the input tree is left untouched.
    """
    _check_mergeable(tree, a, b)
    return _apply_union(tree, a, b)


def combine_operator(tree: EncodingTree, a: int, b: int) -> Tuple[EncodingTree, float]:
    """Wrap two leaf children of the root in a fresh intermediate node."""
    _check_mergeable(tree, a, b)
    if not (tree.is_leaf(a) and tree.is_leaf(b)):
        raise ValueError("combine expects two leaves")
    return _apply_union(tree, a, b)


def optimize_two_level(graph: StructuredGraph) -> EncodingTree:
    """Greedy best-first structural entropy minimization.

    Maintains one community per connected bundle of merges, picks the
    globally best merge by its entropy delta at every step, and stops
    when no remaining merge is strictly negative.  Ties are broken by
    the lexicographically smallest pair of community minimum-vertex
    ids, which keeps the result independent of heap internals.
    """
    n = graph.n
    if graph.volume <= 0.0:
        raise ValueError("degenerate graph (volume is zero)")
    vol = graph.volume

    # symmetric adjacency in CSR form, indexed by initial community id
    src = np.concatenate([graph.u, graph.v])
    dst = np.concatenate([graph.v, graph.u]).astype(np.int64)
    wts = np.concatenate([graph.w, graph.w]).astype(np.float64)
    order = np.argsort(src, kind="stable")
    src, dst, wts = src[order], dst[order], wts[order]
    starts = np.searchsorted(src, np.arange(n))
    ends = np.searchsorted(src, np.arange(n), side="right")

    cap = 2 * n
    parent = np.arange(cap, dtype=np.int64)
    volume = np.zeros(cap)
    volume[:n] = graph.degrees
    cut = np.zeros(cap)
    cut[:n] = graph.degrees
    minv = np.arange(cap, dtype=np.int64)
    alive = np.zeros(cap, dtype=bool)
    alive[:n] = True
    adj: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
    for c in range(n):
        if ends[c] > starts[c]:
            adj[c] = (dst[starts[c]:ends[c]], wts[starts[c]:ends[c]])
    next_id = n

    def resolve(ids: np.ndarray) -> np.ndarray:
        r = ids
        while True:
            p = parent[r]
            if np.array_equal(p, r):
                break
            r = p
        parent[ids] = r  # path compression
        return r

    def clean(c: int) -> Tuple[np.ndarray, np.ndarray]:
        """Resolve community c's neighbor list to live roots and coalesce."""
        d, w = adj[c]
        if d.size:
            r = resolve(d)
            keep = r != c
            r, w = r[keep], w[keep]
            if r.size:
                uniq, inv = np.unique(r, return_inverse=True)
                w = np.bincount(inv, weights=w, minlength=uniq.size)
                r = uniq
            d = r
        adj[c] = (d, w)
        return d, w

    heap: List[Tuple[float, int, int, int, int]] = []

    def push_best(c: int) -> None:
        d, w = clean(c)
        if d.size == 0:
            return
        v_c, g_c = volume[c], cut[c]
        v_p, g_p = volume[d], cut[d]
        v_ab = v_c + v_p
        g_ab = g_c + g_p - 2.0 * w
        delta = (
            -g_ab * np.log2(v_ab / vol)
            + g_c * math.log2(v_c / vol)
            + g_p * np.log2(v_p / vol)
            + v_c * np.log2(v_ab / v_c)
            + v_p * np.log2(v_ab / v_p)
        ) / vol
        k1 = np.minimum(minv[c], minv[d])
        k2 = np.maximum(minv[c], minv[d])
        i = np.lexsort((k2, k1, delta))[0]
        heapq.heappush(heap, (float(delta[i]), int(k1[i]), int(k2[i]), c, int(d[i])))

    trace = [one_dim_se(graph)]
    for c in list(adj):
        push_best(c)

    while heap:
        delta, _, _, a, b = heapq.heappop(heap)
        if not alive[a] or not alive[b]:
            if alive[a]:
                # the stored partner died; this community needs a fresh bid
                push_best(a)
            continue
        if delta >= _DESCENT_TOL:
            break
        c = next_id
        next_id += 1
        da, wa = adj.pop(a)
        db, wb = adj.pop(b)
        # extract the a-b weight before reparenting, while b is still a root
        w_ab = float(wa[resolve(da) == b].sum())
        alive[a] = alive[b] = False
        alive[c] = True
        parent[a] = parent[b] = c
        volume[c] = volume[a] + volume[b]
        cut[c] = cut[a] + cut[b] - 2.0 * w_ab
        minv[c] = min(minv[a], minv[b])
        adj[c] = (np.concatenate([da, db]), np.concatenate([wa, wb]))
        trace.append(trace[-1] + delta)
        push_best(c)

    # materialize: every surviving community becomes one intermediate node,
    # singletons included, ordered by their smallest vertex id
    roots = resolve(np.arange(n))
    uniq_roots, inv = np.unique(roots, return_inverse=True)
    part_order = np.argsort(minv[uniq_roots], kind="stable")
    rank = np.empty(uniq_roots.size, dtype=np.int64)
    rank[part_order] = np.arange(uniq_roots.size)

    deg = graph.degrees
    nodes: Dict[int, TreeNode] = {}
    inter_ids = []
    for pos, root_pos in enumerate(part_order):
        root_c = int(uniq_roots[root_pos])
        members = tuple(int(v) for v in np.flatnonzero(inv == root_pos))
        nid = n + pos
        inter_ids.append(nid)
        nodes[nid] = TreeNode(nid, ROOT, members, members,
                              float(cut[root_c]), float(volume[root_c]))
        for v in members:
            d = float(deg[v])
            nodes[v] = TreeNode(v, nid, (), (v,), d, d)
    nodes[ROOT] = TreeNode(ROOT, None, tuple(inter_ids), tuple(range(n)),
                           0.0, vol)
    return EncodingTree(graph, nodes, trace)


def information_uncertainty(tree: EncodingTree, node_id: int, k: int) -> float:
    """Per-object entropy share of one community: H(node) / (size * k)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if node_id == ROOT:
        raise ValueError("the root has no information uncertainty")
    if node_id not in tree.nodes:
        raise ValueError(f"unknown node id {node_id}")
    if tree.is_leaf(node_id):
        raise ValueError("leaf nodes have no information uncertainty")
    node = tree.nodes[node_id]
    return node_entropy(tree, node_id) / (len(node.vertices) * k)


def _cluster_uncertainties(values: Sequence[float], eps: float,
                           min_pts: int) -> List[int]:
    """Group 1-d uncertainty values by chaining within eps.

    Runs plain density clustering on the values; any value left as
    noise becomes its own group so every community lands somewhere.
    """
    pts = np.asarray(values, dtype=np.float64).reshape(-1, 1)
    result = run_dbscan(pts, DbscanParams(eps=eps, min_pts=min_pts))
    labels = result.assignment.copy()
    next_gid = labels.max() + 1 if labels.size else 0
    for i in np.flatnonzero(labels == NOISE):
        labels[i] = next_gid
        next_gid += 1
    return [int(x) for x in labels]


@dataclass(frozen=True)
class AgentAllocation:
    """Grouping of tree communities into agent partitions.

    ``partitions[i]`` holds the sorted vertex ids one agent is
    responsible for; ``node_to_partition`` maps each intermediate tree
    node to its partition index.
    """

    partitions: List[np.ndarray]
    uncertainties: Dict[int, float]
    node_to_partition: Dict[int, int]


def allocate_agents(tree: EncodingTree, k: int, alloc_eps: float = 0.3,
                    alloc_minpts: int = 1) -> AgentAllocation:
    """Pool communities with similar information uncertainty.

    Communities whose per-object uncertainties chain within
    ``alloc_eps`` share one search agent; well-separated ones get their
    own.  Partitions are ordered by first appearance of their group.
    """
    ids = tree.intermediates()
    if not ids:
        raise ValueError("tree has no intermediate nodes")
    uncertainties = {nid: information_uncertainty(tree, nid, k) for nid in ids}
    groups = _cluster_uncertainties([uncertainties[nid] for nid in ids],
                                    alloc_eps, alloc_minpts)
    order: List[int] = []
    members: Dict[int, List[int]] = {}
    for nid, gid in zip(ids, groups):
        if gid not in members:
            members[gid] = []
            order.append(gid)
        members[gid].append(nid)
    partitions = []
    node_to_partition = {}
    for pid, gid in enumerate(order):
        verts = np.sort(np.concatenate(
            [np.asarray(tree.nodes[nid].vertices, dtype=np.int64)
             for nid in members[gid]]
        ))
        partitions.append(verts)
        for nid in members[gid]:
            node_to_partition[nid] = pid
    return AgentAllocation(partitions, uncertainties, node_to_partition)
