"""Degree sequences: realizability, construction and the rack-aware solvers.

Two graph problems come out of the per-node partner counts:

* inter-rack: a k-partite graph (racks are the parts) with as many edges as
  possible while no node exceeds its demanded external degree;
* intra-rack: per rack, a simple graph minimizing ``sum_i |deg(i) - d_i| / Pr(d_i)``.

Both have exact backends for small instances (used as test oracles) and
heuristic defaults that scale to production-sized racks.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dist import StepDistribution


@dataclass(frozen=True)
class RackLayout:
    """``n`` nodes in racks of ``m``; node ``i`` lives in rack ``i // m``."""

    n: int
    m: int

    def __post_init__(self):
        if self.n <= 0 or self.m <= 0:
            raise ValueError("n and m must be positive")

    @classmethod
    def uniform(cls, racks: int, hosts_per_rack: int) -> "RackLayout":
        return cls(racks * hosts_per_rack, hosts_per_rack)

    @property
    def k(self) -> int:
        return -(-self.n // self.m)

    def rack_of(self, i):
        return np.asarray(i) // self.m

    def rack_nodes(self, rack: int) -> range:
        return range(rack * self.m, min((rack + 1) * self.m, self.n))

    def rack_size(self, rack: int) -> int:
        return len(self.rack_nodes(rack))

    def same_rack(self, i, j):
        return self.rack_of(i) == self.rack_of(j)

    def intra_pair_count(self) -> int:
        return sum(s * (s - 1) // 2 for s in map(self.rack_size, range(self.k)))

    def inter_pair_count(self) -> int:
        return self.n * (self.n - 1) // 2 - self.intra_pair_count()


@dataclass(frozen=True, eq=False)
class DegreeSequence:
    degrees: np.ndarray
    kind: str = "plain"

    def __post_init__(self):
        d = np.array(self.degrees, dtype=np.int64).ravel()
        if np.any(d < 0):
            raise ValueError("degrees must be non-negative")
        if self.kind not in ("plain", "intra", "inter"):
            raise ValueError(f"unknown kind {self.kind!r}")
        object.__setattr__(self, "degrees", d)

    def __len__(self):
        return self.degrees.size

    def check_layout(self, layout: RackLayout) -> None:
        """Raise if a degree exceeds what the layout allows for its kind."""
        if self.degrees.size != layout.n:
            raise ValueError("sequence length differs from layout.n")
        sizes = np.array([layout.rack_size(r) for r in layout.rack_of(np.arange(layout.n))])
        cap = sizes - 1 if self.kind == "intra" else layout.n - sizes
        if self.kind != "plain" and np.any(self.degrees > cap):
            raise ValueError(f"{self.kind} degree exceeds the layout capacity")


def _as_degrees(d) -> np.ndarray:
    return d.degrees if isinstance(d, DegreeSequence) else np.asarray(d, dtype=np.int64).ravel()


@dataclass(frozen=True, eq=False)
class AdjacencyGraph:
    """Simple undirected graph stored as a sorted ``(E, 2)`` array with ``i < j``."""

    n: int
    edges: np.ndarray = field(default_factory=lambda: np.empty((0, 2), np.int64))

    def __post_init__(self):
        e = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            e = np.sort(e, axis=1)
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loop")
            if e.min() < 0 or e.max() >= self.n:
                raise ValueError("node id out of range")
            e = e[np.lexsort((e[:, 1], e[:, 0]))]
            if np.any(np.all(e[1:] == e[:-1], axis=1)):
                raise ValueError("duplicate edge")
        object.__setattr__(self, "edges", e)

    @classmethod
    def from_edges(cls, n: int, edges) -> "AdjacencyGraph":
        return cls(n, np.array(sorted(edges), dtype=np.int64).reshape(-1, 2))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def edge_set(self) -> set:
        return set(map(tuple, self.edges.tolist()))

    def union(self, other: "AdjacencyGraph") -> "AdjacencyGraph":
        if other.n != self.n:
            raise ValueError("graphs differ in node count")
        return AdjacencyGraph(self.n, np.concatenate((self.edges, other.edges)))

    def __eq__(self, other):
        return (isinstance(other, AdjacencyGraph) and self.n == other.n
                and np.array_equal(self.edges, other.edges))


@dataclass(frozen=True, eq=False)
class IntraSolveReport:
    graph: AdjacencyGraph
    penalties: np.ndarray
    objective: float


# -- realizability ---------------------------------------------------------


def erdos_gallai_check(d) -> bool:
    """Whether the sequence is graphical (even sum and the k-prefix inequalities)."""
    deg = np.sort(_as_degrees(d))[::-1]
    n = deg.size
    if deg.sum() % 2:
        return False
    prefix = np.cumsum(deg)
    for k in range(1, n + 1):
        if prefix[k - 1] > k * (k - 1) + np.minimum(deg[k:], k).sum():
            return False
    return True


def havel_hakimi(d) -> AdjacencyGraph | None:
    """Realize ``d`` as a simple graph, or return ``None`` if it is not graphical.

    Repeatedly connects the node of largest residual degree to the nodes of
    next-largest residual degree (ties broken by lower index).
    """
    res = _as_degrees(d).copy()
    n = res.size
    if res.sum() % 2 or (n and res.max() > n - 1):
        return None
    edges = []
    active = np.ones(n, dtype=bool)
    for _ in range(n):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        order = idx[np.lexsort((idx, -res[idx]))]
        u, rest = order[0], order[1:]
        need = res[u]
        active[u] = False
        if need == 0:
            continue
        if need > rest.size or res[rest[need - 1]] == 0:
            return None
        targets = rest[:need]
        res[targets] -= 1
        res[u] = 0
        edges.extend((min(u, v), max(u, v)) for v in targets.tolist())
    return AdjacencyGraph.from_edges(n, edges)


@functools.lru_cache(maxsize=8)
def _all_graphs(n: int):
    """Degree vectors of every labelled simple graph on ``n`` nodes."""
    pairs = list(itertools.combinations(range(n), 2))
    masks = np.arange(1 << len(pairs), dtype=np.int64)
    deg = np.zeros((masks.size, n), dtype=np.int8)
    for bit, (i, j) in enumerate(pairs):
        on = ((masks >> bit) & 1).astype(np.int8)
        deg[:, i] += on
        deg[:, j] += on
    return pairs, deg


def enumerate_graph_degrees(n: int) -> np.ndarray:
    """``(2**C(n,2), n)`` degrees; row ``mask`` is the graph with pair bits ``mask``."""
    return _all_graphs(n)[1]


def graph_from_mask(n: int, mask: int) -> AdjacencyGraph:
    pairs = _all_graphs(n)[0]
    return AdjacencyGraph.from_edges(n, [p for b, p in enumerate(pairs) if mask >> b & 1])


def brute_force_realize(d, max_n: int = 7) -> AdjacencyGraph | None:
    """Exhaustive search over all labelled graphs; ``None`` if none realizes ``d``."""
    deg = _as_degrees(d)
    n = deg.size
    if n > max_n:
        raise ValueError(f"n={n} exceeds max_n={max_n}")
    if n == 0:
        return AdjacencyGraph(0)
    table = enumerate_graph_degrees(n)
    hit = np.flatnonzero(np.all(table == deg.astype(np.int8), axis=1)) if deg.max() < 128 else []
    if len(hit) == 0:
        return None
    return graph_from_mask(n, int(hit[0]))


# -- inter-rack (k-partite edge maximization) ------------------------------


class _Adj:
    """Mutable adjacency sets with per-node degree bookkeeping."""

    def __init__(self, n):
        self.nbr = [set() for _ in range(n)]

    def add(self, u, v):
        self.nbr[u].add(v)
        self.nbr[v].add(u)

    def remove(self, u, v):
        self.nbr[u].discard(v)
        self.nbr[v].discard(u)

    def has(self, u, v):
        return v in self.nbr[u]

    def deg(self, u):
        return len(self.nbr[u])

    def graph(self, n):
        return AdjacencyGraph.from_edges(n, [(u, v) for u in range(n) for v in self.nbr[u] if u < v])


def _kpartite_greedy(cap: np.ndarray, rack: np.ndarray) -> _Adj:
    n = cap.size
    res = cap.copy()
    adj = _Adj(n)
    done = np.zeros(n, dtype=bool)
    idx = np.arange(n)
    for _ in range(n):
        cand = np.flatnonzero(~done)
        if cand.size == 0:
            break
        u = cand[np.lexsort((cand, -res[cand]))[0]]
        done[u] = True
        if res[u] == 0:
            continue
        ok = (~done) & (rack != rack[u]) & (res > 0)
        pool = idx[ok]
        if pool.size == 0:
            continue
        take = pool[np.lexsort((pool, -res[pool]))[:res[u]]]
        for v in take.tolist():
            adj.add(u, v)
        res[take] -= 1
        res[u] -= take.size
    return adj


def _augment_inter(adj: _Adj, cap: np.ndarray, rack: np.ndarray, max_rounds: int = 100000) -> None:
    """Edge-count-increasing moves until none applies.

    1. join two deficient nodes in different racks;
    2. break ``(x, y)`` and join ``(u, x)``, ``(v, y)`` for deficient ``u != v``;
    3. break ``(x, y)`` and join ``(u, x)``, ``(u, y)`` when ``u`` lacks two.
    Each move adds exactly one edge, so the loop terminates.
    """
    n = cap.size

    def deficit(u):
        return cap[u] - adj.deg(u)

    for _ in range(max_rounds):
        needy = [u for u in range(n) if deficit(u) > 0]
        if not needy:
            return
        if _join_pair(adj, needy, rack) or _rewire_two(adj, needy, rack, n) \
                or _rewire_one(adj, needy, rack, n, deficit):
            continue
        return


def _join_pair(adj, needy, rack) -> bool:
    for a, u in enumerate(needy):
        for v in needy[a + 1:]:
            if rack[u] != rack[v] and not adj.has(u, v):
                adj.add(u, v)
                return True
    return False


def _rewire_two(adj, needy, rack, n) -> bool:
    for a, u in enumerate(needy):
        for v in needy[a + 1:]:
            for x in range(n):
                if x in (u, v) or rack[x] == rack[u] or adj.has(u, x):
                    continue
                for y in list(adj.nbr[x]):
                    if y in (u, v) or rack[y] == rack[v] or adj.has(v, y):
                        continue
                    adj.remove(x, y)
                    adj.add(u, x)
                    adj.add(v, y)
                    return True
    return False


def _rewire_one(adj, needy, rack, n, deficit) -> bool:
    for u in needy:
        if deficit(u) < 2:
            continue
        for x in range(n):
            if x == u or rack[x] == rack[u] or adj.has(u, x):
                continue
            for y in list(adj.nbr[x]):
                if y == u or rack[y] == rack[u] or adj.has(u, y):
                    continue
                adj.remove(x, y)
                adj.add(u, x)
                adj.add(u, y)
                return True
    return False


def _inter_exact(cap: np.ndarray, rack: np.ndarray) -> AdjacencyGraph:
    """Branch and bound over cross-rack pairs maximizing the edge count."""
    n = cap.size
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rack[i] != rack[j]
             and cap[i] > 0 and cap[j] > 0]
    # pairs still available to each node from position p onwards
    avail = np.zeros((len(pairs) + 1, n), dtype=np.int64)
    for p in range(len(pairs) - 1, -1, -1):
        avail[p] = avail[p + 1]
        i, j = pairs[p]
        avail[p, i] += 1
        avail[p, j] += 1
    res = cap.copy()
    best = [-1, []]
    chosen = []

    def bound(p):
        return sum(min(res[v], avail[p, v]) for v in range(n)) // 2

    def dfs(p):
        if len(chosen) + bound(p) <= best[0]:
            return
        if p == len(pairs):
            best[0], best[1] = len(chosen), list(chosen)
            return
        i, j = pairs[p]
        if res[i] > 0 and res[j] > 0:
            res[i] -= 1
            res[j] -= 1
            chosen.append((i, j))
            dfs(p + 1)
            chosen.pop()
            res[i] += 1
            res[j] += 1
        dfs(p + 1)

    dfs(0)
    return AdjacencyGraph.from_edges(n, best[1])


def _inter_milp(cap: np.ndarray, rack: np.ndarray) -> AdjacencyGraph:
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import coo_matrix

    n = cap.size
    pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, n) if rack[i] != rack[j]],
                     dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return AdjacencyGraph(n)
    e = len(pairs)
    rows = pairs.T.ravel()
    cols = np.tile(np.arange(e), 2)
    a = coo_matrix((np.ones(2 * e), (rows, cols)), shape=(n, e))
    out = milp(-np.ones(e), integrality=np.ones(e), bounds=Bounds(0, 1),
               constraints=LinearConstraint(a, -np.inf, cap))
    if not out.success:
        raise RuntimeError(f"milp failed: {out.message}")
    return AdjacencyGraph(n, pairs[np.round(out.x) > 0.5])


def solve_inter_rack(d, layout: RackLayout, backend: str = "greedy") -> AdjacencyGraph:
    """Cross-rack graph with maximal edge count subject to ``deg(i) <= d_i``.

    ``backend``: ``"greedy"`` (k-partite Havel-Hakimi plus augmenting
    rewires), ``"exact"`` (branch and bound, small ``n`` only) or
    ``"milp"`` (scipy's HiGHS).
    """
    cap = _as_degrees(d).copy()
    if cap.size != layout.n:
        raise ValueError("sequence length differs from layout.n")
    rack = layout.rack_of(np.arange(layout.n))
    # a node can have at most n - |own rack| cross-rack partners
    sizes = np.bincount(rack)
    cap = np.minimum(cap, layout.n - sizes[rack])
    if backend == "exact":
        g = _inter_exact(cap, rack)
    elif backend == "milp":
        g = _inter_milp(cap, rack)
    elif backend == "greedy":
        adj = _kpartite_greedy(cap, rack)
        _augment_inter(adj, cap, rack)
        g = adj.graph(layout.n)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if g.edge_count:
        assert not np.any(rack[g.edges[:, 0]] == rack[g.edges[:, 1]])
    assert np.all(g.degrees() <= cap)
    return g


def inter_shortfall(d, g: AdjacencyGraph) -> int:
    """Total missing external degree ``sum(d_i - deg(i))``."""
    return int((_as_degrees(d) - g.degrees()).sum())


# -- intra-rack (weighted penalty minimization) ----------------------------


def penalty_weights(d, prior: StepDistribution) -> np.ndarray:
    """``1 / Pr(d_i)``; zero-probability demands use the smallest positive mass."""
    deg = _as_degrees(d)
    vals, probs = prior.pmf()
    pos = probs[probs > 0]
    floor = pos.min() if pos.size else 1.0
    lookup = dict(zip(vals.tolist(), probs.tolist()))
    pr = np.array([lookup.get(float(x), 0.0) for x in deg.tolist()])
    return 1.0 / np.where(pr > 0, pr, floor)


def _objective(deg, d, w) -> float:
    return float(np.dot(w, np.abs(deg - d)))


def _intra_exact(d, w) -> np.ndarray:
    """Exact DFS over all pairs with an optimistic penalty bound."""
    m = d.size
    pairs = list(itertools.combinations(range(m), 2))
    avail = np.zeros((len(pairs) + 1, m), dtype=np.int64)
    for p in range(len(pairs) - 1, -1, -1):
        avail[p] = avail[p + 1]
        i, j = pairs[p]
        avail[p, i] += 1
        avail[p, j] += 1
    deg = np.zeros(m, dtype=np.int64)
    best = [math.inf, None]
    chosen = np.zeros(len(pairs), dtype=bool)

    def dfs(p):
        lb = float(np.dot(w, np.maximum(deg - d, 0) + np.maximum(d - deg - avail[p], 0)))
        if lb >= best[0] - 1e-12:
            return
        if p == len(pairs):
            best[0], best[1] = lb, chosen.copy()
            return
        i, j = pairs[p]
        # try the edge first when both ends still want partners
        order = (True, False) if deg[i] < d[i] and deg[j] < d[j] else (False, True)
        for take in order:
            if take:
                deg[i] += 1
                deg[j] += 1
            chosen[p] = take
            dfs(p + 1)
            chosen[p] = False
            if take:
                deg[i] -= 1
                deg[j] -= 1

    dfs(0)
    adj = np.zeros((m, m), dtype=bool)
    for p in np.flatnonzero(best[1]):
        i, j = pairs[p]
        adj[i, j] = adj[j, i] = True
    return adj


def _intra_greedy(d) -> np.ndarray:
    m = d.size
    adj = np.zeros((m, m), dtype=bool)
    res = np.minimum(d, m - 1).copy()
    done = np.zeros(m, dtype=bool)
    idx = np.arange(m)
    for _ in range(m):
        cand = np.flatnonzero(~done)
        u = cand[np.lexsort((cand, -res[cand]))[0]]
        done[u] = True
        if res[u] <= 0:
            continue
        pool = idx[(~done) & (res > 0)]
        take = pool[np.lexsort((pool, -res[pool]))[:res[u]]]
        adj[u, take] = adj[take, u] = True
        res[take] -= 1
        res[u] -= take.size
    return adj


def _cost_delta(deg, d, w, node, step):
    """Objective change per node when its degree moves by ``step``."""
    return w[node] * (np.abs(deg[node] + step - d[node]) - np.abs(deg[node] - d[node]))


def _intra_local_search(adj: np.ndarray, d, w, max_iter: int = 10000) -> np.ndarray:
    """Steepest-descent over edge toggles, endpoint shifts and double rewires."""
    m = d.size
    off = ~np.eye(m, dtype=bool)
    for _ in range(max_iter):
        deg = adj.sum(axis=1)
        up = _cost_delta(deg, d, w, np.arange(m), 1)
        down = _cost_delta(deg, d, w, np.arange(m), -1)
        # toggle (i, j)
        toggle = np.where(adj, down[:, None] + down[None, :], up[:, None] + up[None, :])
        toggle[~off] = np.inf
        i, j = np.unravel_index(np.argmin(toggle), toggle.shape)
        best = toggle[i, j]
        move = ("toggle", i, j)
        # shift: drop (a, b), add (a, c): b loses one, c gains one
        shift = down[:, None] + up[None, :]  # [b, c]
        np.fill_diagonal(shift, np.inf)
        if shift.min() < best - 1e-12:
            for b, c in zip(*np.unravel_index(np.argsort(shift, axis=None), shift.shape)):
                if shift[b, c] >= min(best, 0) - 1e-12:
                    break
                cands = np.flatnonzero(adj[:, b] & ~adj[:, c] & off[:, c])
                if cands.size:
                    best, move = shift[b, c], ("shift", cands[0], b, c)
                    break
        if best >= -1e-12:
            needy = np.flatnonzero(up < 0)
            move = _double_rewire(adj, needy, off) if needy.size >= 1 else None
            if move is None:
                return adj
            u, v, x, y = move
            adj[x, y] = adj[y, x] = False
            adj[u, x] = adj[x, u] = True
            adj[v, y] = adj[y, v] = True
            if _objective(adj.sum(axis=1), d, w) >= _objective(deg, d, w) - 1e-12:
                adj[u, x] = adj[x, u] = False
                adj[v, y] = adj[y, v] = False
                adj[x, y] = adj[y, x] = True
                return adj
            continue
        if move[0] == "toggle":
            _, i, j = move
            adj[i, j] = adj[j, i] = not adj[i, j]
        else:
            _, a, b, c = move
            adj[a, b] = adj[b, a] = False
            adj[a, c] = adj[c, a] = True
    return adj


def _double_rewire(adj, needy, off):
    """``(u, v, x, y)``: break ``(x, y)``, join ``(u, x)`` and ``(v, y)``.

    ``u`` and ``v`` are under-served nodes (``u == v`` allowed) and the
    endpoints ``x, y`` keep their degrees, so the move strictly helps.
    """
    for a, u in enumerate(needy):
        for v in needy[a:]:
            for x, y in zip(*np.nonzero(np.triu(adj))):
                for x2, y2 in ((x, y), (y, x)):
                    if len({u, v, x2, y2}) < (3 if u == v else 4):
                        continue
                    if adj[u, x2] or adj[v, y2] or not off[u, x2] or not off[v, y2]:
                        continue
                    if u == v and x2 == y2:
                        continue
                    return u, v, x2, y2
    return None


def _intra_milp(d, w) -> np.ndarray:
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import coo_matrix, hstack, identity

    m = d.size
    pairs = np.array(list(itertools.combinations(range(m), 2)), dtype=np.int64).reshape(-1, 2)
    e = len(pairs)
    inc = coo_matrix((np.ones(2 * e), (pairs.T.ravel(), np.tile(np.arange(e), 2))), shape=(m, e))
    eye = identity(m)
    cons = [LinearConstraint(hstack([-inc, eye]), -d, np.inf),   # p >= deg - d
            LinearConstraint(hstack([inc, eye]), d, np.inf)]     # p >= d - deg
    c = np.concatenate((np.zeros(e), w))
    integ = np.concatenate((np.ones(e), np.zeros(m)))
    lo = np.zeros(e + m)
    hi = np.concatenate((np.ones(e), np.full(m, np.inf)))
    out = milp(c, integrality=integ, bounds=Bounds(lo, hi), constraints=cons)
    if not out.success:
        raise RuntimeError(f"milp failed: {out.message}")
    adj = np.zeros((m, m), dtype=bool)
    for i, j in pairs[np.round(out.x[:e]) > 0.5]:
        adj[i, j] = adj[j, i] = True
    return adj


def solve_intra_rack(d, degree_prior: StepDistribution, backend: str = "auto",
                     exact_max_m: int = 8) -> IntraSolveReport:
    """Graph on one rack minimizing ``sum_i |deg(i) - d_i| / Pr(d_i)``.

    Node ids in the returned graph are rack-local (``0 .. m-1``).
    ``backend``: ``"auto"`` (exact up to ``exact_max_m`` nodes, local
    search above), ``"exact"``, ``"local"`` or ``"milp"``.
    """
    dem = _as_degrees(d)
    m = dem.size
    w = penalty_weights(dem, degree_prior)
    if backend == "auto":
        backend = "exact" if m <= exact_max_m else "local"
    if m == 0:
        adj = np.zeros((0, 0), dtype=bool)
    elif backend == "exact":
        adj = _intra_exact(dem, w)
    elif backend == "local":
        adj = _intra_local_search(_intra_greedy(dem), dem, w)
    elif backend == "milp":
        adj = _intra_milp(dem, w)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    ii, jj = np.nonzero(np.triu(adj, 1))
    g = AdjacencyGraph(m, np.column_stack((ii, jj)))
    pen = np.abs(g.degrees() - dem)
    return IntraSolveReport(g, pen, float(np.dot(w, pen)))
