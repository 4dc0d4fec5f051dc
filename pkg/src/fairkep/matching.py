"""Undirected matching kernel.

Maximum-cardinality matching via blossoms, Gallai-Edmonds decomposition,
weighted (perfect) matching with exact rational weights, dual certificates for
minimum-cost perfect matching, and admissible-edge extraction (edges lying in
some optimum).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Mapping, Optional

import networkx as nx

from .core import FairkepError
from .simplexlp import lp_solve_exact

Edge = tuple[int, int]


class NoPerfectMatching(FairkepError):
    pass


class NotBipartite(FairkepError):
    pass


def norm_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class UGraph:
    """Simple undirected graph; optional rational edge costs."""

    vertices: frozenset[int]
    edges: frozenset[Edge]
    edge_costs: Mapping[Edge, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "edges", frozenset(norm_edge(u, v) for u, v in self.edges)
        )
        for (u, v) in self.edges:
            if u == v:
                raise ValueError(f"loop at {u}")
            if u not in self.vertices or v not in self.vertices:
                raise ValueError(f"edge ({u},{v}) references unknown vertex")

    @staticmethod
    def of(vertices: Iterable[int], edges: Iterable[Edge], costs=None) -> "UGraph":
        return UGraph(frozenset(vertices), frozenset(edges), dict(costs or {}))

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {v: [] for v in self.vertices}
        for (u, v) in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def without(self, removed: Iterable[int]) -> "UGraph":
        gone = set(removed)
        return UGraph.of(
            self.vertices - gone,
            {e for e in self.edges if e[0] not in gone and e[1] not in gone},
            {e: c for e, c in self.edge_costs.items() if e[0] not in gone and e[1] not in gone},
        )

    def induced(self, keep: Iterable[int]) -> "UGraph":
        return self.without(self.vertices - set(keep))


@dataclass(frozen=True)
class GallaiEdmonds:
    """Partition of the vertex set: D (missed by some maximum matching), A = N(D)∖D, C = rest."""

    D: frozenset[int]
    A: frozenset[int]
    C: frozenset[int]
    components_D: tuple[frozenset[int], ...]
    nu: int
    matching: dict[int, int]


class _Blossom:
    """Iterative blossom algorithm over an indexed adjacency list (O(V^3))."""

    def __init__(self, n: int, adj: list[list[int]]):
        self.n = n
        self.adj = adj
        self.match = [-1] * n

    def solve(self) -> int:
        size = 0
        for v in range(self.n):
            if self.match[v] == -1 and self._find_path(v):
                size += 1
        return size

    def _find_path(self, root: int, banned: int = -1) -> bool:
        n, adj, match = self.n, self.adj, self.match
        p = [-1] * n
        base = list(range(n))
        used = [False] * n
        used[root] = True
        q = deque([root])
        blossom = [False] * n

        def lca(a: int, b: int) -> int:
            seen = [False] * n
            while True:
                a = base[a]
                seen[a] = True
                if match[a] == -1:
                    break
                a = p[match[a]]
            while True:
                b = base[b]
                if seen[b]:
                    return b
                b = p[match[b]]

        def mark_path(v: int, b: int, child: int) -> None:
            while base[v] != b:
                blossom[base[v]] = True
                blossom[base[match[v]]] = True
                p[v] = child
                child = match[v]
                v = p[match[v]]

        while q:
            v = q.popleft()
            for to in adj[v]:
                if to == banned:
                    continue
                if base[v] == base[to] or match[v] == to:
                    continue
                if to == root or (match[to] != -1 and p[match[to]] != -1):
                    curbase = lca(v, to)
                    for i in range(n):
                        blossom[i] = False
                    mark_path(v, curbase, to)
                    mark_path(to, curbase, v)
                    for i in range(n):
                        if blossom[base[i]]:
                            base[i] = curbase
                            if not used[i]:
                                used[i] = True
                                q.append(i)
                elif p[to] == -1:
                    p[to] = v
                    if match[to] == -1:
                        self._augment(to, p)
                        return True
                    used[match[to]] = True
                    q.append(match[to])
        return False

    def _augment(self, v: int, p: list[int]) -> None:
        while v != -1:
            pv = p[v]
            nxt = self.match[pv]
            self.match[v] = pv
            self.match[pv] = v
            v = nxt


def _index(graph: UGraph) -> tuple[list[int], dict[int, int], list[list[int]]]:
    order = sorted(graph.vertices)
    idx = {v: i for i, v in enumerate(order)}
    adj: list[list[int]] = [[] for _ in order]
    for (u, v) in sorted(graph.edges):
        adj[idx[u]].append(idx[v])
        adj[idx[v]].append(idx[u])
    return order, idx, adj


def max_matching(graph: UGraph) -> set[Edge]:
    """A maximum-cardinality matching as a set of normalized edges."""
    order, _, adj = _index(graph)
    solver = _Blossom(len(order), adj)
    solver.solve()
    out = set()
    for i, j in enumerate(solver.match):
        if j > i:
            out.add(norm_edge(order[i], order[j]))
    return out


def matching_number(graph: UGraph) -> int:
    order, _, adj = _index(graph)
    return _Blossom(len(order), adj).solve()


def has_perfect_matching(graph: UGraph) -> bool:
    return len(graph.vertices) % 2 == 0 and 2 * matching_number(graph) == len(graph.vertices)


def perfect_matching(graph: UGraph) -> set[Edge]:
    """A perfect matching; raises NoPerfectMatching if none exists."""
    m = max_matching(graph)
    if 2 * len(m) != len(graph.vertices):
        raise NoPerfectMatching(f"deficiency {len(graph.vertices) - 2 * len(m)}")
    return m


def gallai_edmonds(graph: UGraph) -> GallaiEdmonds:
    """Compute (D, A, C) by one blossom solve plus a warm-started deletion test per vertex."""
    order, idx, adj = _index(graph)
    n = len(order)
    solver = _Blossom(n, adj)
    nu = solver.solve()
    opt = solver.match[:]
    D: set[int] = set()
    for i in range(n):
        if opt[i] == -1:
            D.add(order[i])
            continue
        j = opt[i]
        solver.match = opt[:]
        solver.match[i] = -1
        solver.match[j] = -1
        # nu(G - v) == nu(G) iff the freed partner can re-augment without v
        if solver._find_path(j, banned=i):
            D.add(order[i])
    solver.match = opt
    neigh_of_D: set[int] = set()
    adjmap = graph.adjacency()
    for v in D:
        neigh_of_D.update(adjmap[v])
    A = neigh_of_D - D
    C = graph.vertices - D - A
    components = _components(D, adjmap)
    ge = GallaiEdmonds(
        D=frozenset(D),
        A=frozenset(A),
        C=frozenset(C),
        components_D=tuple(sorted(components, key=min)) if components else (),
        nu=nu,
        matching={order[i]: order[j] for i, j in enumerate(opt) if j != -1},
    )
    assert 2 * nu == len(graph.vertices) - len(ge.components_D) + len(A)
    return ge


def _components(D: set[int], adjmap: dict[int, list[int]]) -> list[frozenset[int]]:
    seen: set[int] = set()
    comps = []
    for v in sorted(D):
        if v in seen:
            continue
        comp = {v}
        stack = [v]
        seen.add(v)
        while stack:
            u = stack.pop()
            for w in adjmap[u]:
                if w in D and w not in seen:
                    seen.add(w)
                    comp.add(w)
                    stack.append(w)
        comps.append(frozenset(comp))
    return comps


def is_factor_critical(graph: UGraph) -> bool:
    n = len(graph.vertices)
    if n % 2 == 0:
        return False
    return all(has_perfect_matching(graph.without([v])) for v in graph.vertices)


# ---------------------------------------------------------------------------
# weighted matching (networkx kernel, exact Fraction weights)
# ---------------------------------------------------------------------------

def _nx_graph(graph: UGraph, weights: Mapping[Edge, Fraction]) -> "nx.Graph":
    g = nx.Graph()
    g.add_nodes_from(graph.vertices)
    for e in graph.edges:
        g.add_edge(*e, weight=Fraction(weights.get(e, 0)))
    return g


def max_weight_matching(
    graph: UGraph, weights: Mapping[Edge, Fraction], maxcardinality: bool = False
) -> set[Edge]:
    g = _nx_graph(graph, weights)
    m = nx.max_weight_matching(g, maxcardinality=maxcardinality)
    return {norm_edge(u, v) for (u, v) in m}


def matching_weight(matching: Iterable[Edge], weights: Mapping[Edge, Fraction]) -> Fraction:
    return sum((Fraction(weights.get(norm_edge(*e), 0)) for e in matching), Fraction(0))


def lex_weights(
    tiers: Mapping[Edge, tuple[Fraction, Fraction]], n_vertices: int
) -> dict[Edge, Fraction]:
    """Collapse two-level lexicographic edge weights into one exact rational weight.

    Primary tier strictly dominates: denominators of the primary tier are
    cleared so its sums differ by >= 1 when they differ at all, then the
    secondary tier is scaled below that granularity.
    """
    if not tiers:
        return {}
    den = 1
    for (t1, _) in tiers.values():
        den = den * Fraction(t1).denominator // _gcd(den, Fraction(t1).denominator)
    max2 = max((abs(Fraction(t2)) for (_, t2) in tiers.values()), default=Fraction(0))
    scale = Fraction(1, int(n_vertices * max2) + 1)
    return {e: Fraction(t1) * den + Fraction(t2) * scale for e, (t1, t2) in tiers.items()}


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def max_weight_perfect_matching_value(
    graph: UGraph, weights: Mapping[Edge, Fraction]
) -> Optional[Fraction]:
    """Maximum weight of a perfect matching, or None if the graph has none."""
    if len(graph.vertices) % 2 != 0:
        return None
    if not graph.vertices:
        return Fraction(0)
    m = max_weight_matching(graph, weights, maxcardinality=True)
    if 2 * len(m) != len(graph.vertices):
        return None
    return matching_weight(m, weights)


def min_cost_perfect_matching(
    graph: UGraph, costs: Mapping[Edge, Fraction]
) -> tuple[set[Edge], Fraction]:
    neg = {e: -Fraction(c) for e, c in costs.items()}
    if len(graph.vertices) % 2 != 0:
        raise NoPerfectMatching("odd number of vertices")
    if not graph.vertices:
        return set(), Fraction(0)
    m = max_weight_matching(graph, neg, maxcardinality=True)
    if 2 * len(m) != len(graph.vertices):
        raise NoPerfectMatching(f"deficiency {len(graph.vertices) - 2 * len(m)}")
    return m, matching_weight(m, costs)


@dataclass(frozen=True)
class DualCertificate:
    """Exact duals for the min-cost perfect-matching LP over odd-set cuts.

    y maps frozenset({v}) and odd sets U (|U| >= 3) to rationals; admissible_edges
    is the set of edges lying in at least one minimum-cost perfect matching.
    """

    y: dict[frozenset[int], Fraction]
    admissible_edges: frozenset[Edge]
    objective: Fraction

    def slack(self, e: Edge, costs: Mapping[Edge, Fraction]) -> Fraction:
        u, v = e
        total = Fraction(0)
        for U, val in self.y.items():
            if (u in U) != (v in U):
                total += val
        return Fraction(costs[e]) - total


DUAL_SIZE_LIMIT = 10


def max_weight_perfect_matching(
    graph: UGraph,
    costs: Mapping[Edge, Fraction],
    with_certificate: bool = True,
) -> tuple[set[Edge], Optional[DualCertificate]]:
    """Min-cost perfect matching (costs are negated weights) with an exact dual certificate.

    The certificate solves the odd-set dual LP exactly and is only available for
    graphs with at most DUAL_SIZE_LIMIT vertices; pass with_certificate=False to
    skip it on larger graphs.
    """
    m, value = min_cost_perfect_matching(graph, costs)
    if not with_certificate:
        return m, None
    n = len(graph.vertices)
    if n > DUAL_SIZE_LIMIT:
        raise ValueError(
            f"exact dual certificate limited to {DUAL_SIZE_LIMIT} vertices (got {n}); "
            "pass with_certificate=False"
        )
    cert = _odd_set_duals(graph, costs, value)
    return m, cert


def _odd_set_duals(
    graph: UGraph, costs: Mapping[Edge, Fraction], opt_value: Fraction
) -> DualCertificate:
    order = sorted(graph.vertices)
    n = len(order)
    sets: list[frozenset[int]] = [frozenset({v}) for v in order]
    for k in range(3, n // 2 + 1, 2):
        for comb in combinations(order, k):
            sets.append(frozenset(comb))
    nvar = len(sets)
    edges = sorted(graph.edges)
    # dual: max sum(y) s.t. for each edge, sum over crossing sets <= cost;
    # singleton duals free, odd-set duals >= 0
    A_ub = []
    b_ub = []
    for (u, v) in edges:
        row = [Fraction(1) if (u in U) != (v in U) else Fraction(0) for U in sets]
        A_ub.append(row)
        b_ub.append(Fraction(costs[(u, v)]))
    res = lp_solve_exact(
        [Fraction(1)] * nvar, A_ub=A_ub, b_ub=b_ub, free_vars=list(range(n))
    )
    assert res.objective == opt_value, "strong duality must hold exactly"
    y = {U: val for U, val in zip(sets, res.x) if val != 0 or len(U) == 1}
    admissible = frozenset(optimal_pm_edges(graph, costs, opt_value))
    return DualCertificate(y=y, admissible_edges=admissible, objective=res.objective)


def optimal_pm_edges(
    graph: UGraph, costs: Mapping[Edge, Fraction], opt_value: Optional[Fraction] = None
) -> set[Edge]:
    """Edges lying in at least one minimum-cost perfect matching (forcing test)."""
    if opt_value is None:
        _, opt_value = min_cost_perfect_matching(graph, costs)
    out = set()
    for e in graph.edges:
        rest = graph.without(e)
        try:
            _, sub = min_cost_perfect_matching(rest, costs)
        except NoPerfectMatching:
            continue
        if sub + Fraction(costs[e]) == opt_value:
            out.add(e)
    return out


def bipartition(graph: UGraph) -> tuple[set[int], set[int]]:
    """Two-color the graph; raises NotBipartite on an odd cycle."""
    color: dict[int, int] = {}
    for start in sorted(graph.vertices):
        if start in color:
            continue
        color[start] = 0
        stack = [start]
        adj = graph.adjacency()
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in color:
                    color[w] = 1 - color[u]
                    stack.append(w)
                elif color[w] == color[u]:
                    raise NotBipartite(f"odd cycle through edge ({u},{w})")
    left = {v for v, c in color.items() if c == 0}
    return left, graph.vertices - left


def bipartite_admissible_subgraph(
    graph: UGraph, weights: Mapping[Edge, Fraction]
) -> set[Edge]:
    """Edges lying in some maximum-weight perfect matching of a bipartite graph.

    Determined by forcing each edge in turn and re-solving; unambiguous where
    optimal duals are not unique.
    """
    bipartition(graph)  # raises NotBipartite
    opt = max_weight_perfect_matching_value(graph, weights)
    if opt is None:
        raise NoPerfectMatching("bipartite graph has no perfect matching")
    out = set()
    for e in sorted(graph.edges):
        sub = max_weight_perfect_matching_value(graph.without(e), weights)
        if sub is not None and sub + Fraction(weights.get(e, 0)) == opt:
            out.add(e)
    return out
