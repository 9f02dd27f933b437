"""Containers shared by the model builders."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from ..chain import Generator
from ..coupling import CouplingRates
from ..entropy import PhiFamily
from ..errors import NonSimpleGraph


@dataclass
class KappaReport:
    """Curvature constants of a model instance.

    ``kappa`` is the general constant for any admissible phi, ``kappa_1``
    the logarithmic one, and power members use
    ``alpha * alpha_slope + alpha_offset``.
    """

    kappa: float
    kappa_1: float
    alpha_slope: float
    alpha_offset: float = 0.0
    kappa_bar: float | None = None
    hypotheses_ok: bool = True
    failed_hypothesis: str | None = None
    tables: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def kappa_alpha(self, alpha: float) -> float:
        return alpha * self.alpha_slope + self.alpha_offset

    def for_phi(self, phi: PhiFamily) -> float:
        """Strongest constant the theory grants for this phi."""
        if phi.alpha_value is None:
            return self.kappa
        if phi.is_log:
            return self.kappa_1
        return self.kappa_alpha(phi.alpha_value)

    @property
    def implied(self) -> dict:
        return {"kappa_phi": self.kappa, "kappa_1": self.kappa_1,
                "kappa_1.5": self.kappa_alpha(1.5), "kappa_2": self.kappa_alpha(2.0)}

    def flag(self, name: str) -> None:
        if self.hypotheses_ok:
            self.hypotheses_ok = False
            self.failed_hypothesis = name


@dataclass
class Model:
    family: str
    params: dict
    generator: Generator
    measure: np.ndarray
    coupling: CouplingRates
    kappas: KappaReport
    cancellation: str = "nonmerging"
    extras: dict = field(default_factory=dict)


def log_weights_to_measure(logw) -> np.ndarray:
    logw = np.asarray(logw, dtype=float)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def simple_graph(n_vertices: int, edges) -> list[set]:
    """Neighbour sets of a simple connected graph given by an edge list."""
    nbrs = [set() for _ in range(n_vertices)]
    for x, y in edges:
        x, y = int(x), int(y)
        if x == y or not (0 <= x < n_vertices and 0 <= y < n_vertices):
            raise NonSimpleGraph(f"bad edge {(x, y)}")
        if y in nbrs[x]:
            raise NonSimpleGraph(f"repeated edge {(x, y)}")
        nbrs[x].add(y)
        nbrs[y].add(x)
    if not edges:
        raise NonSimpleGraph("graph needs at least one edge")
    rows = [x for x in range(n_vertices) for _ in nbrs[x]]
    cols = [y for x in range(n_vertices) for y in nbrs[x]]
    adj = scipy.sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_vertices, n_vertices))
    ncomp, _ = scipy.sparse.csgraph.connected_components(adj, directed=False)
    if ncomp != 1:
        raise NonSimpleGraph("graph must be connected")
    return nbrs


def cycle_edges(n: int) -> list[tuple[int, int]]:
    return [(i, (i + 1) % n) for i in range(n)]


def box_graph_edges(shape) -> list[tuple[int, int]]:
    """Nearest-neighbour edges of a box in Z^d, periodic along sides of length > 2."""
    shape = tuple(shape)
    sites = list(np.ndindex(*shape))
    index = {s: i for i, s in enumerate(sites)}
    edges = set()
    for s in sites:
        for axis, length in enumerate(shape):
            if length < 2:
                continue
            t = list(s)
            t[axis] = (t[axis] + 1) % length
            a, b = index[s], index[tuple(t)]
            if a != b:
                edges.add((min(a, b), max(a, b)))
    return sorted(edges)
