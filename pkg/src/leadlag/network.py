"""Lead-lag correlation networks and their minimum spanning trees."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .estimators import DEFAULT_MAX_LAG, panel_curve
from .tick_sync import SyncedPanel


@dataclass(frozen=True)
class LeadLagMatrix:
    """Pairwise LLC (symmetric, unit diagonal) and LLT (antisymmetric) values.

    ``llt[i, j] > 0`` means instrument ``i`` leads instrument ``j``.
    """

    instruments: tuple
    llc: np.ndarray
    llt: np.ndarray

    def index(self, instrument: str) -> int:
        return self.instruments.index(instrument)


def lead_lag_matrix(panel: SyncedPanel, lags=DEFAULT_MAX_LAG) -> LeadLagMatrix:
    k = len(panel.instruments)
    llc = np.eye(k)
    llt = np.zeros((k, k), dtype=int)
    for i, j in combinations(range(k), 2):
        curve = panel_curve(panel, panel.instruments[i], panel.instruments[j], lags)
        llc[i, j] = llc[j, i] = curve.llc
        llt[i, j], llt[j, i] = curve.llt, -curve.llt
    return LeadLagMatrix(panel.instruments, llc, llt)


def distance_matrix(m: LeadLagMatrix | np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """``d = sqrt(1 - |llc|)``, in ``[0, 1]`` with a zero diagonal."""
    llc = np.asarray(m.llc if isinstance(m, LeadLagMatrix) else m, dtype=float)
    if np.any(np.abs(llc) > 1 + tol):
        raise ValidationError("|LLC| exceeds 1")
    d = np.sqrt(np.clip(1 - np.abs(llc), 0.0, 1.0))
    np.fill_diagonal(d, 0.0)
    return d


@dataclass(frozen=True)
class SpanningTree:
    nodes: tuple
    edges: tuple                    # (node_a, node_b, distance), node_a < node_b
    root: str | None = None

    @property
    def weight(self) -> float:
        return math.fsum(e[2] for e in self.edges)

    def degree(self, node: str) -> int:
        return sum(node in e[:2] for e in self.edges)


def mst(distances: np.ndarray, nodes: Sequence[str] | None = None) -> SpanningTree:
    """Kruskal's algorithm with edges ordered by ``(distance, min id, max id)``."""
    d = np.asarray(distances, dtype=float)
    n = d.shape[0]
    if d.shape != (n, n) or not np.allclose(d, d.T) or not np.all(np.isfinite(d)):
        raise ValidationError("distances must be a finite symmetric square matrix")
    nodes = tuple(nodes) if nodes is not None else tuple(str(i) for i in range(n))
    candidates = sorted(
        (d[i, j], *sorted((nodes[i], nodes[j])), i, j) for i, j in combinations(range(n), 2))
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edges = []
    for dist, a, b, i, j in candidates:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((a, b, float(dist)))
            if len(edges) == n - 1:
                break
    hub = [v for v in nodes if sum(v in e[:2] for e in edges) == n - 1] if n > 2 else []
    return SpanningTree(nodes, tuple(edges), hub[0] if hub else None)


def is_lead_centered(tree: SpanningTree, lead: str, matrix: LeadLagMatrix) -> bool:
    """Star on ``lead`` whose every edge has the lead ahead by exactly one tick."""
    if len(tree.edges) != len(tree.nodes) - 1:
        return False
    i = matrix.index(lead)
    for a, b, _ in tree.edges:
        if lead not in (a, b):
            return False
        other = b if a == lead else a
        if matrix.llt[i, matrix.index(other)] != 1:
            return False
    return True


def day_network(panel: SyncedPanel, lags=DEFAULT_MAX_LAG):
    """Matrix, tree and lead-centred flag for one panel whose first column is the lead."""
    matrix = lead_lag_matrix(panel, lags)
    tree = mst(distance_matrix(matrix), matrix.instruments)
    return matrix, tree, is_lead_centered(tree, panel.instruments[0], matrix)
