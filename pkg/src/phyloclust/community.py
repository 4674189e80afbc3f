"""Weighted graphs and short-random-walk community detection.

Communities are grown by agglomerative merging of adjacent groups,
choosing at each step the merge with the smallest Ward-style increase in
the sum of squared walk distances between vertices and their community.
The merge tree is then cut at the level of maximum modularity.
"""

from __future__ import annotations

import heapq
import logging

import numpy as np

from .errors import EmptyInput, IdSetMismatch
from .io_formats import Partition

log = logging.getLogger(__name__)


class WeightedGraph:
    """Undirected weighted graph as a dense symmetric matrix.

    No self-loops in the stored form: the diagonal is zero and weights are
    non-negative.
    """

    def __init__(self, ids: list[str], weights: np.ndarray):
        n = len(ids)
        if len(set(ids)) != n:
            raise IdSetMismatch("duplicate vertex ids")
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n, n):
            raise ValueError(f"weight matrix shape {w.shape} does not fit {n} ids")
        if n and not np.allclose(w, w.T):
            raise ValueError("weight matrix must be symmetric")
        if n and w.min() < 0:
            raise ValueError("negative edge weight")
        w = w.copy()
        if n:
            np.fill_diagonal(w, 0.0)
        self.ids = list(ids)
        self.weights = w

    @property
    def n(self) -> int:
        return len(self.ids)

    def degrees(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def total_weight(self) -> float:
        return float(self.weights.sum()) / 2.0


def partition_adjacency(p: Partition) -> WeightedGraph:
    """Unit-weight edges between every co-clustered pair of ids."""
    ids = p.ids()
    if not ids:
        raise EmptyInput("empty partition")
    labels = [p.assignment[i] for i in ids]
    codes = {lab: k for k, lab in enumerate(dict.fromkeys(labels))}
    vec = np.array([codes[lab] for lab in labels])
    w = (vec[:, None] == vec[None, :]).astype(np.float64)
    np.fill_diagonal(w, 0.0)
    return WeightedGraph(ids, w)


def average_adjacency(graphs: list[WeightedGraph]) -> WeightedGraph:
    """Element-wise mean of the weight matrices (identical id lists)."""
    if not graphs:
        raise EmptyInput("no graphs to average")
    first = graphs[0]
    for g in graphs[1:]:
        if g.ids != first.ids:
            raise IdSetMismatch("graphs must share the same vertex order")
    stack = np.stack([g.weights for g in graphs])
    return WeightedGraph(first.ids, stack.mean(axis=0))


def modularity(g: WeightedGraph, p: Partition) -> float:
    """Newman modularity sum_c (e_c/m - (d_c/2m)^2) with weighted degrees.

    Zero for an edgeless graph.
    """
    m = g.total_weight()
    if m == 0.0:
        return 0.0
    idx = {ident: k for k, ident in enumerate(g.ids)}
    deg = g.degrees()
    q = 0.0
    for members in p.clusters().values():
        rows = np.array([idx[i] for i in members])
        e_c = float(g.weights[np.ix_(rows, rows)].sum()) / 2.0
        d_c = float(deg[rows].sum())
        q += e_c / m - (d_c / (2.0 * m)) ** 2
    return q


def walktrap_communities(g: WeightedGraph, walk_length: int = 4) -> Partition:
    """Community detection by agglomeration of short-random-walk profiles.

    Vertices with no edges stay their own communities.  Only adjacent
    communities merge; candidate merges are ordered by the Ward increase,
    ties by the lowest community index pair.  The returned partition is
    the dendrogram level of maximum modularity.
    """
    n = g.n
    if n == 0:
        raise EmptyInput("empty graph")
    if walk_length < 1:
        raise ValueError("walk_length must be at least 1")
    deg = g.degrees()
    active = np.flatnonzero(deg > 0)
    isolated = [g.ids[k] for k in np.flatnonzero(deg == 0)]
    if active.size == 0:
        return Partition.from_clusters([[i] for i in g.ids])

    sub = g.weights[np.ix_(active, active)]
    sdeg = deg[active]
    p_t = np.linalg.matrix_power(sub / sdeg[:, None], walk_length)
    # pre-scale columns by 1/sqrt(deg) so the walk distance between two
    # communities is a plain Euclidean norm of profile rows
    profiles = p_t / np.sqrt(sdeg)[None, :]

    na = int(active.size)
    total_m = g.total_weight()
    members: dict[int, list[int]] = {k: [k] for k in range(na)}
    size: dict[int, int] = {k: 1 for k in range(na)}
    profile: dict[int, np.ndarray] = {k: profiles[k] for k in range(na)}
    internal: dict[int, float] = {k: 0.0 for k in range(na)}
    degsum: dict[int, float] = {k: float(sdeg[k]) for k in range(na)}
    neighbors: dict[int, set[int]] = {k: set() for k in range(na)}
    cross: dict[tuple[int, int], float] = {}
    for a in range(na):
        for b in range(a + 1, na):
            w = float(sub[a, b])
            if w > 0.0:
                neighbors[a].add(b)
                neighbors[b].add(a)
                cross[(a, b)] = w

    def _ord(a: int, b: int) -> tuple[int, int]:
        return (a, b) if a < b else (b, a)

    def ward(a: int, b: int) -> float:
        diff = profile[a] - profile[b]
        return size[a] * size[b] / (size[a] + size[b]) / na * float(diff @ diff)

    def contrib(k: int) -> float:
        return internal[k] / total_m - (degsum[k] / (2.0 * total_m)) ** 2

    heap: list[tuple[float, int, int]] = [
        (ward(a, b), a, b) for (a, b) in cross
    ]
    heapq.heapify(heap)

    alive = set(range(na))
    q_now = sum(contrib(k) for k in alive)
    q_levels = [q_now]
    merges: list[tuple[int, int]] = []
    nxt = na
    while len(alive) > 1 and heap:
        _, a, b = heapq.heappop(heap)
        if a not in alive or b not in alive:
            continue
        key = _ord(a, b)
        c = nxt
        nxt += 1
        q_now -= contrib(a) + contrib(b)
        members[c] = members.pop(a) + members.pop(b)
        profile[c] = (size[a] * profile[a] + size[b] * profile[b]) / (
            size[a] + size[b]
        )
        size[c] = size[a] + size[b]
        internal[c] = internal.pop(a) + internal.pop(b) + cross.pop(key)
        degsum[c] = degsum.pop(a) + degsum.pop(b)
        nb = (neighbors.pop(a) | neighbors.pop(b)) - {a, b}
        neighbors[c] = nb
        for x in nb:
            w = cross.pop(_ord(a, x), 0.0) + cross.pop(_ord(b, x), 0.0)
            cross[_ord(c, x)] = w
            neighbors[x].discard(a)
            neighbors[x].discard(b)
            neighbors[x].add(c)
        for k in (a, b):
            del profile[k], size[k]
        alive.discard(a)
        alive.discard(b)
        alive.add(c)
        q_now += contrib(c)
        q_levels.append(q_now)
        merges.append((a, b))
        for x in neighbors[c]:
            heapq.heappush(heap, (ward(c, x), *_ord(c, x)))

    best_level = int(np.argmax(q_levels))
    log.debug(
        "walktrap: %d merges, best modularity %.6f at level %d",
        len(merges),
        q_levels[best_level],
        best_level,
    )

    # replay merges up to the best level to recover the membership
    groups: dict[int, list[int]] = {k: [k] for k in range(na)}
    nxt = na
    for a, b in merges[:best_level]:
        groups[nxt] = groups.pop(a) + groups.pop(b)
        nxt += 1
    clusters = [
        [g.ids[active[v]] for v in vs] for vs in groups.values()
    ]
    clusters.extend([i] for i in isolated)
    return Partition.from_clusters(clusters)
