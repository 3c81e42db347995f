"""Weighted Louvain community detection (local moving + aggregation).

Graphs are plain ``{(u, v): weight}`` maps over hashable, sortable node ids.
Node visit order within each pass is a seeded shuffle, so the result is a
pure function of the graph and the seed.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

GAIN_TOL = 1e-12


@dataclass
class LouvainResult:
    partition: dict            # node -> community index (0..n_communities-1)
    modularity: float
    history: list = field(default_factory=list)  # modularity after each pass

    @property
    def n_communities(self) -> int:
        return len(set(self.partition.values()))

    def communities(self):
        groups = defaultdict(list)
        for node, c in self.partition.items():
            groups[c].append(node)
        return [sorted(groups[c]) for c in sorted(groups)]


def _adjacency(nodes, edges):
    adj = {n: defaultdict(float) for n in nodes}
    loops = defaultdict(float)
    for (u, v), w in edges.items():
        if w <= 0:
            continue
        if u == v:
            loops[u] += w
        else:
            adj[u][v] += w
            adj[v][u] += w
    return adj, loops


def modularity(nodes, edges, partition, resolution=1.0) -> float:
    """Newman weighted modularity; self-loops count twice toward degree."""
    adj, loops = _adjacency(nodes, edges)
    deg = {n: sum(adj[n].values()) + 2 * loops[n] for n in nodes}
    m2 = sum(deg.values())
    if m2 == 0:
        return 0.0
    internal = defaultdict(float)
    total = defaultdict(float)
    for n in nodes:
        c = partition[n]
        total[c] += deg[n]
        internal[c] += 2 * loops[n]
        for v, w in adj[n].items():
            if partition[v] == c:
                internal[c] += w
    return float(sum(internal[c] / m2 - resolution * (total[c] / m2) ** 2 for c in total))


def _degrees(nodes, adj, loops):
    return {n: sum(adj[n].values()) + 2 * loops[n] for n in nodes}


def _move_nodes(nodes, adj, deg, m2, comm, resolution, order):
    """Greedy single-node moves until no move raises modularity.

    ``comm`` is updated in place; returns whether any node moved.
    """
    tot = defaultdict(float)
    for n in nodes:
        tot[comm[n]] += deg[n]
    moved_any = False
    improved = True
    while improved:
        improved = False
        for n in order:
            c_old = comm[n]
            links = defaultdict(float)
            for v, w in adj[n].items():
                links[comm[v]] += w
            k = deg[n]
            tot[c_old] -= k
            best_c = c_old
            best_gain = links.get(c_old, 0.0) - resolution * tot[c_old] * k / m2
            for c in sorted(links):
                if c == c_old:
                    continue
                gain = links[c] - resolution * tot[c] * k / m2
                if gain > best_gain + GAIN_TOL:
                    best_gain, best_c = gain, c
            tot[best_c] += k
            if best_c != c_old:
                comm[n] = best_c
                improved = True
                moved_any = True
    return moved_any


def _aggregate(nodes, adj, loops, comm):
    new_nodes = sorted(set(comm.values()))
    new_adj = {c: defaultdict(float) for c in new_nodes}
    new_loops = defaultdict(float)
    for n in nodes:
        cn = comm[n]
        new_loops[cn] += loops[n]
        for v, w in adj[n].items():
            cv = comm[v]
            if cv == cn:
                new_loops[cn] += w / 2.0
            else:
                new_adj[cn][cv] += w
    return new_nodes, new_adj, new_loops


def _relabel(nodes, comm):
    labels = {}
    for n in nodes:
        labels.setdefault(comm[n], len(labels))
    return {n: labels[comm[n]] for n in nodes}


def louvain(nodes, edges, seed=0, resolution=1.0, refine=True) -> LouvainResult:
    """Partition ``nodes`` to (locally) maximize modularity of ``edges``.

    Phase 1 moves single nodes between communities; phase 2 collapses each
    community into one node; the two repeat until nothing moves. With
    ``refine`` the final partition is then unfolded level by level and
    single-node moves are re-run at every level, starting from the
    projected partition (multi-level refinement). ``history`` records the
    modularity after every pass and is non-decreasing.
    """
    nodes = sorted(nodes)
    if not nodes:
        return LouvainResult({}, 0.0, [])
    rng = np.random.default_rng(seed)
    adj0, loops0 = _adjacency(nodes, edges)
    index = {n: i for i, n in enumerate(nodes)}
    level_nodes = list(range(len(nodes)))
    level_adj = {i: defaultdict(float) for i in level_nodes}
    level_loops = defaultdict(float)
    for n in nodes:
        for v, w in adj0[n].items():
            level_adj[index[n]][index[v]] += w
        level_loops[index[n]] = loops0[n]
    deg0 = _degrees(level_nodes, level_adj, level_loops)
    m2 = sum(deg0.values())
    membership = {n: index[n] for n in nodes}
    if m2 == 0:
        return LouvainResult(_canonical_labels(nodes, membership), 0.0, [0.0])

    history = [modularity(nodes, edges, membership, resolution)]
    levels = []  # (nodes, adj, loops, comm) for each coarsening step
    while True:
        deg = _degrees(level_nodes, level_adj, level_loops)
        comm = {n: n for n in level_nodes}
        order = list(level_nodes)
        rng.shuffle(order)
        if not _move_nodes(level_nodes, level_adj, deg, m2, comm, resolution, order):
            break
        comm = _relabel(level_nodes, comm)
        levels.append((level_nodes, level_adj, level_loops, comm))
        membership = {orig: comm[lvl] for orig, lvl in membership.items()}
        history.append(modularity(nodes, edges, membership, resolution))
        level_nodes, level_adj, level_loops = _aggregate(level_nodes, level_adj, level_loops, comm)
        if len(level_nodes) == 1:
            break

    if refine and len(levels) > 1:
        # community of each coarse node at the top, pushed down one level at a time
        top = {n: n for n in level_nodes}
        for lv_nodes, lv_adj, lv_loops, lv_comm in reversed(levels):
            assign = {n: top[lv_comm[n]] for n in lv_nodes}
            deg = _degrees(lv_nodes, lv_adj, lv_loops)
            order = list(lv_nodes)
            rng.shuffle(order)
            _move_nodes(lv_nodes, lv_adj, deg, m2, assign, resolution, order)
            top = assign
        refined = {orig: top[index[orig]] for orig in nodes}
        q = modularity(nodes, edges, refined, resolution)
        if q > history[-1] + GAIN_TOL:
            membership = refined
            history.append(q)

    final = _canonical_labels(nodes, membership)
    return LouvainResult(final, history[-1], history)


def _canonical_labels(nodes, membership):
    """Number communities by first appearance in sorted node order."""
    labels = {}
    out = {}
    for n in nodes:
        c = membership[n]
        labels.setdefault(c, len(labels))
        out[n] = labels[c]
    return out
