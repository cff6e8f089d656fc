"""Adjacency algebra, algebraic connectivity and connectivity-preserving link removal."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

CONNECTIVITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class LinkTopology:
    adj: np.ndarray

    def __post_init__(self):
        a = np.array(self.adj, dtype=np.int8)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a)):
            raise ValueError("adjacency diagonal must be zero")
        if np.any((a != 0) & (a != 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        a.setflags(write=False)
        object.__setattr__(self, "adj", a)

    @classmethod
    def complete(cls, n: int) -> "LinkTopology":
        return cls(np.ones((n, n), dtype=np.int8) - np.eye(n, dtype=np.int8))

    @classmethod
    def empty(cls, n: int) -> "LinkTopology":
        return cls(np.zeros((n, n), dtype=np.int8))

    @classmethod
    def from_edges(cls, n: int, edges) -> "LinkTopology":
        a = np.zeros((n, n), dtype=np.int8)
        for i, j in edges:
            a[i, j] = a[j, i] = 1
        return cls(a)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def link_count(self) -> int:
        return int(self.adj.sum()) // 2

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adj, 1))
        return list(zip(i.tolist(), j.tolist()))

    def degree(self) -> np.ndarray:
        return self.adj.sum(axis=1).astype(int)

    def with_link(self, i: int, j: int, value: int) -> "LinkTopology":
        a = self.adj.copy()
        a[i, j] = a[j, i] = value
        return LinkTopology(a)

    def __eq__(self, other):
        return isinstance(other, LinkTopology) and np.array_equal(self.adj, other.adj)

    def __hash__(self):
        return hash(self.adj.tobytes())


@dataclass(frozen=True)
class SpectralReport:
    degree: np.ndarray
    lambda2: float
    connected: bool


def laplacian(topo: LinkTopology) -> np.ndarray:
    a = topo.adj.astype(float)
    return np.diag(a.sum(axis=1)) - a


def algebraic_connectivity(topo: LinkTopology) -> float:
    if topo.n < 2:
        raise ValueError("algebraic connectivity needs n >= 2")
    eig = np.linalg.eigvalsh(laplacian(topo))
    return max(float(eig[1]), 0.0)


def is_connected(topo: LinkTopology) -> bool:
    n = topo.n
    if n == 0:
        return True
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    adj = topo.adj
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return bool(seen.all())


def spectral_report(topo: LinkTopology) -> SpectralReport:
    lam2 = algebraic_connectivity(topo) if topo.n >= 2 else 0.0
    connected = is_connected(topo)
    if connected != (lam2 > CONNECTIVITY_TOL):
        raise AssertionError(f"BFS says connected={connected} but lambda2={lam2:.3e}")
    return SpectralReport(topo.degree(), lam2, connected)


def guarded_remove(topo: LinkTopology, i: int, j: int) -> tuple[LinkTopology, bool]:
    """Drop link (i, j) unless that would disconnect the graph."""
    if i == j or not topo.adj[i, j]:
        return topo, False
    candidate = topo.with_link(i, j, 0)
    if is_connected(candidate):
        return candidate, True
    return topo, False
