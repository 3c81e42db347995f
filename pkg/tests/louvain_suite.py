"""Small weighted graphs and an exhaustive modularity oracle."""

import itertools

import numpy as np

from amkg.louvain import modularity


def clique(nodes, offset=0, w=1.0):
    return {(a + offset, b + offset): w for a, b in itertools.combinations(nodes, 2)}


def suite():
    """(name, nodes, edges) graphs with at most 8 nodes."""
    g = []
    e = {**clique(range(4)), **clique(range(4), offset=4), (3, 4): 0.1}
    g.append(("two_4_cliques_weak_bridge", list(range(8)), e))
    g.append(("barbell_3_3", list(range(6)), {**clique(range(3)), **clique(range(3), offset=3), (2, 3): 1.0}))
    g.append(("cycle_8", list(range(8)), {(i, (i + 1) % 8) if i < 7 else (0, 7): 1.0 for i in range(8)}))
    g.append(("path_6", list(range(6)), {(i, i + 1): 1.0 for i in range(5)}))
    g.append(("star_7", list(range(7)), {(0, i): 1.0 for i in range(1, 7)}))
    g.append(("complete_5", list(range(5)), clique(range(5))))
    g.append(("edgeless_4", list(range(4)), {}))
    g.append(("single_edge", [0, 1], {(0, 1): 2.5}))
    g.append(("two_triangles_disjoint", list(range(6)), {**clique(range(3)), **clique(range(3), offset=3)}))
    e = {(0, 1): 1.2, (0, 2): 1.2, (0, 3): 0.6, (4, 5): 1.2, (4, 6): 0.6, (4, 7): 1.8, (3, 7): 0.28, (2, 6): 0.3}
    g.append(("equation_hubs", list(range(8)), e))
    for seed in range(20):
        g.append((f"planted_{seed}",) + planted(seed))
    return g


def planted(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 9))
    k = int(rng.integers(2, 4))
    groups = np.arange(n) % k
    e = {}
    for i in range(n):
        for j in range(i + 1, n):
            p = 0.85 if groups[i] == groups[j] else 0.15
            if rng.random() < p:
                e[(i, j)] = float(rng.uniform(0.5, 1.5))
    return list(range(n)), e


def set_partitions(n):
    """Every partition of range(n) as a restricted growth string."""
    def rec(i, labels, top):
        if i == n:
            yield list(labels)
            return
        for c in range(top + 1):
            labels.append(c)
            yield from rec(i + 1, labels, top + 1 if c == top else top)
            labels.pop()
    yield from rec(0, [], 0)


def brute_force_max(nodes, edges):
    return max(modularity(nodes, edges, dict(zip(nodes, p))) for p in set_partitions(len(nodes)))
