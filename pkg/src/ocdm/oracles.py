"""Linear-optimization oracles over the two decision regions.

Both concrete regions return a vertex maximizing ``c @ w`` with a
deterministic tie-break (prefer the lower item/edge index), which keeps
subgradient-based training reproducible.  ``solve_batch`` applies the same
rule row-wise to a stack of cost vectors; the scalar ``solve`` delegates to
it so the two paths can never disagree.

Grid edge indexing: nodes of the n-by-n grid are numbered row-major from the
southwest corner, ``node = row * n + col`` with rows increasing northward and
columns eastward.  Edges are listed by ascending tail node, east edge before
north edge, giving ``2n(n-1)`` edges total.  Every monotone source-to-sink
path uses exactly ``2(n-1)`` of them.
"""

from __future__ import annotations

import itertools
from abc import ABC, abstractmethod

import numpy as np

from .core import ConfigurationError


class FeasibleRegionOracle(ABC):
    """Deterministic argmax selector over a compact decision region."""

    dim: int

    @abstractmethod
    def solve_batch(self, costs: np.ndarray) -> np.ndarray:
        """Row-wise argmax decisions for a (batch, dim) stack of cost vectors."""

    def solve(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if c.shape != (self.dim,):
            raise ConfigurationError(f"cost vector shape {c.shape}, expected ({self.dim},)")
        return self.solve_batch(c[None, :])[0]

    def vertices(self) -> np.ndarray | None:
        """Full vertex enumeration when small enough to be practical, else None."""
        return None

    @abstractmethod
    def is_feasible_vertex(self, w: np.ndarray) -> bool:
        """Whether w is a vertex of the region (used for runtime sanity checks)."""


class KnapsackRegion(FeasibleRegionOracle):
    """Select at most k of d items: {w : sum(w) <= k, 0 <= w <= 1}."""

    def __init__(self, d: int, k: int):
        if not 1 <= k <= d:
            raise ConfigurationError(f"need 1 <= k <= d, got k={k}, d={d}")
        self.dim = d
        self.k = k

    def solve_batch(self, costs: np.ndarray) -> np.ndarray:
        costs = np.asarray(costs, dtype=float)
        # Stable descending sort: equal costs keep ascending index order.
        order = np.argsort(-costs, axis=1, kind="stable")
        top = order[:, : self.k]
        vals = np.take_along_axis(costs, top, axis=1)
        out = np.zeros_like(costs)
        np.put_along_axis(out, top, (vals > 0.0).astype(float), axis=1)
        return out

    def vertices(self) -> np.ndarray:
        verts = []
        for size in range(self.k + 1):
            for idx in itertools.combinations(range(self.dim), size):
                w = np.zeros(self.dim)
                w[list(idx)] = 1.0
                verts.append(w)
        return np.array(verts)

    def is_feasible_vertex(self, w: np.ndarray) -> bool:
        w = np.asarray(w)
        binary = np.all((w == 0.0) | (w == 1.0))
        return bool(binary and w.sum() <= self.k)


class GridPathRegion(FeasibleRegionOracle):
    """Monotone southwest-to-northeast paths on an n-by-n grid with north/east edges."""

    def __init__(self, n: int):
        if n < 2:
            raise ConfigurationError(f"grid side must be >= 2, got {n}")
        self.n = n
        self.dim = 2 * n * (n - 1)
        self._build_graph()

    def _build_graph(self) -> None:
        n = self.n
        tails, heads = [], []
        for node in range(n * n):
            row, col = divmod(node, n)
            if col < n - 1:  # east edge first
                tails.append(node)
                heads.append(node + 1)
            if row < n - 1:
                tails.append(node)
                heads.append(node + n)
        self.edge_tail = np.array(tails)
        self.edge_head = np.array(heads)
        # Incoming edge ids per node, ascending (ties prefer the lower edge id).
        self._incoming: list[list[int]] = [[] for _ in range(n * n)]
        for e, h in enumerate(self.edge_head):
            self._incoming[h].append(e)

    def solve_batch(self, costs: np.ndarray) -> np.ndarray:
        costs = np.asarray(costs, dtype=float)
        s = costs.shape[0]
        n_nodes = self.n * self.n
        best = np.full((s, n_nodes), -np.inf)
        best[:, 0] = 0.0
        choice = np.zeros((s, n_nodes), dtype=int)
        for node in range(1, n_nodes):
            cand = np.stack(
                [best[:, self.edge_tail[e]] + costs[:, e] for e in self._incoming[node]],
                axis=1,
            )
            pick = np.argmax(cand, axis=1)  # first max: lower edge id wins ties
            best[:, node] = cand[np.arange(s), pick]
            choice[:, node] = np.asarray(self._incoming[node])[pick]
        out = np.zeros_like(costs)
        rows = np.arange(s)
        cur = np.full(s, n_nodes - 1)
        for _ in range(2 * (self.n - 1)):
            e = choice[rows, cur]
            out[rows, e] = 1.0
            cur = self.edge_tail[e]
        return out

    def vertices(self) -> np.ndarray:
        steps = 2 * (self.n - 1)
        verts = []
        for east_positions in itertools.combinations(range(steps), self.n - 1):
            node = 0
            w = np.zeros(self.dim)
            for step in range(steps):
                go_east = step in east_positions
                for e in range(self.dim):
                    if self.edge_tail[e] == node:
                        east_edge = self.edge_head[e] == node + 1
                        if east_edge == go_east:
                            w[e] = 1.0
                            node = self.edge_head[e]
                            break
            verts.append(w)
        return np.array(verts)

    def is_feasible_vertex(self, w: np.ndarray) -> bool:
        w = np.asarray(w)
        if not np.all((w == 0.0) | (w == 1.0)):
            return False
        if w.sum() != 2 * (self.n - 1):
            return False
        n_nodes = self.n * self.n
        balance = np.zeros(n_nodes)
        for e in range(self.dim):
            balance[self.edge_tail[e]] -= w[e]
            balance[self.edge_head[e]] += w[e]
        expected = np.zeros(n_nodes)
        expected[0] = -1.0
        expected[n_nodes - 1] = 1.0
        return bool(np.array_equal(balance, expected))


def brute_force_solve(c: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Reference argmax over an explicit vertex list, first-index tie-break."""
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[0] == 0:
        raise ValueError("vertex list must be a non-empty 2-d array")
    objs = vertices @ np.asarray(c, dtype=float)
    return vertices[int(np.argmax(objs))]
