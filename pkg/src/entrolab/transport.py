"""Wasserstein distances for the L1 graph metric on integer configurations."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chain import Generator, evolve_law
from .errors import (
    DimensionMismatch,
    HypothesisViolation,
    InfeasibleMarginals,
    MassLeak,
    TimeTooLarge,
)
from .models.base import Model
from .models.irw import dec, inc


def graph_distance(x, y) -> int:
    if len(x) != len(y):
        raise DimensionMismatch("configurations differ in length")
    return int(sum(abs(int(a) - int(b)) for a, b in zip(x, y)))


@dataclass
class DiscreteLaw:
    """Probability weights over the states of a generator."""

    weights: np.ndarray
    states: Sequence[tuple]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.states),):
            raise DimensionMismatch("weights do not match states")
        if np.any(self.weights < 0):
            raise ValueError("negative mass")

    @classmethod
    def dirac(cls, states, index: int) -> "DiscreteLaw":
        w = np.zeros(len(states))
        w[index] = 1.0
        return cls(w, states)

    def support(self, threshold: float = 0.0) -> np.ndarray:
        return np.nonzero(self.weights > threshold)[0]


@dataclass
class TransportPlan:
    """Sparse coupling: ``entries`` maps (source index, target index) to mass."""

    entries: dict
    p: float
    states: Sequence[tuple]
    cost: float = field(default=0.0)

    def __post_init__(self):
        self.cost = plan_cost(self.entries, self.states, self.p)

    def marginals(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        rows, cols = np.zeros(n), np.zeros(n)
        for (i, j), w in self.entries.items():
            rows[i] += w
            cols[j] += w
        return rows, cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["src_state", "dst_state", "mass", "distance"])
        for (i, j), w in sorted(self.entries.items()):
            wr.writerow([" ".join(map(str, self.states[i])), " ".join(map(str, self.states[j])),
                         repr(float(w)), graph_distance(self.states[i], self.states[j])])
        return buf.getvalue()


def plan_cost(entries: dict, states, p: float) -> float:
    terms = [w * graph_distance(states[i], states[j]) ** p for (i, j), w in entries.items()]
    return math.fsum(terms)


def _emd():
    """Import POT's network simplex without loading deep-learning backends."""
    for key in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{key}", "1")
    import ot

    return ot.emd


def wasserstein_p(mu: DiscreteLaw, nu: DiscreteLaw, p: float = 1.0,
                  cap: int = 2000, prune: float = 0.0) -> tuple[float, TransportPlan]:
    """Exact W_p via the network simplex on the complete bipartite support graph.

    Atoms lighter than ``prune`` times the total mass may be left out; the
    default keeps everything.  Plan marginals are checked to 1e-10.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    states = mu.states
    if len(nu.states) != len(states):
        raise DimensionMismatch("laws live on different state lists")
    total = float(mu.weights.sum())
    if abs(total - nu.weights.sum()) > 1e-9:
        raise InfeasibleMarginals(f"masses {total!r} and {nu.weights.sum()!r}")
    src, dst = mu.support(prune * total), nu.support(prune * total)
    if len(src) > cap or len(dst) > cap:
        raise ValueError("support exceeds cap")
    a, b = mu.weights[src], nu.weights[dst]
    b = b * (a.sum() / b.sum())
    pts_a = np.array([states[i] for i in src], dtype=float)
    pts_b = np.array([states[j] for j in dst], dtype=float)
    cost = np.abs(pts_a[:, None, :] - pts_b[None, :, :]).sum(axis=2) ** p
    flows, log = _emd()(a, b, cost, numItermax=10_000_000, log=True)
    if log["warning"] is not None:
        raise InfeasibleMarginals(log["warning"])
    nz = np.nonzero(flows > 0)
    entries = {(int(src[i]), int(dst[j])): float(flows[i, j]) for i, j in zip(*nz)}
    plan = TransportPlan(entries, p, states)
    rows, cols = plan.marginals(len(states))
    resid = max(np.abs(rows - mu.weights).max(), np.abs(cols - nu.weights).max())
    if resid > 1e-10 + len(states) * prune * total:
        raise InfeasibleMarginals(f"plan marginal residual {resid:.3e}")
    return max(plan.cost, 0.0) ** (1.0 / p), plan


def one_jump_law(gen: Generator, state: int, t: float) -> DiscreteLaw:
    """(1 - t sum c) delta_x + t sum_g c(x, g) delta_{gx}."""
    total = float(gen.rates[state].sum())
    if t < 0 or t * total > 1 + 1e-15:
        raise TimeTooLarge(f"t * total rate = {t * total!r}")
    w = np.zeros(gen.n_states)
    w[state] += 1.0 - t * total
    np.add.at(w, gen.targets[state], t * gen.rates[state])
    return DiscreteLaw(w, gen.states)


def neighbor_optimal_coupling(model: Model, state: int, i: int, t: float) -> TransportPlan:
    """Explicit plan between the one-jump laws from x and x + e_i.

    It transports every jump along the coupled move of the seed table and
    leaves the two stay-put masses paired, so its cost is
    1 - t (kappa+ + kappa-) for every p.
    """
    gen = model.generator
    key = (state, i)
    kplus, kminus = model.extras["kappa_plus"], model.extras["kappa_minus"]
    if key not in kplus:
        raise HypothesisViolation(f"no interior increment seed at {gen.states[state]}, i={i}")
    if kplus[key] < 0 or kminus[key] < 0:
        raise HypothesisViolation("kappa+/kappa- nonnegative", gen.states[state], i)
    other = gen.target(state, inc(i))
    mu = one_jump_law(gen, state, t)
    stay = mu.weights[state] - t * kminus[key]
    if stay < 0:
        raise TimeTooLarge("diagonal entry would be negative")
    entries: dict = {}

    def put(a, b, w):
        if w > 0:
            entries[(a, b)] = entries.get((a, b), 0.0) + w

    tab = model.coupling.tables[(state, inc(i))]
    for (g, gb), r in tab.items():
        put(gen.target(state, g), gen.target(other, gb), t * r)
    put(state, other, stay)
    return TransportPlan(entries, 1.0, gen.states)


def with_order(plan: TransportPlan, p: float) -> TransportPlan:
    return TransportPlan(dict(plan.entries), p, plan.states)


@dataclass
class MonotonicityReport:
    passed: bool
    violation: tuple | None = None
    excess: float = 0.0


def check_cyclical_monotonicity(plan: TransportPlan, p: float, threshold: float = 1e-14,
                                tol: float = 1e-12) -> MonotonicityReport:
    """Pairwise swap test on the plan support."""
    support = [k for k, w in plan.entries.items() if w > threshold]
    if len(support) > 1000:
        raise ValueError("support too large for the pairwise scan")
    st = plan.states
    dist = lambda a, b: graph_distance(st[a], st[b]) ** p
    worst, where = 0.0, None
    for x1, x2 in support:
        for y1, y2 in support:
            excess = dist(x1, x2) + dist(y1, y2) - dist(y1, x2) - dist(x1, y2)
            if excess > worst:
                worst, where = excess, (st[x1], st[x2], st[y1], st[y2])
    return MonotonicityReport(worst <= tol, where if worst > tol else None, worst)


@dataclass
class ContractionReport:
    rows: list  # (t, wp, bound, ratio)
    kappa: float
    kappa_emp: float | None
    leak: float
    passed: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "wp", "bound", "ratio"])
        for row in self.rows:
            wr.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def boundary_mass(model: Model, weights) -> float:
    """Mass on configurations touching the truncation wall."""
    n = model.params.get("n")
    if n is None:
        return 0.0
    wall = np.array([max(s) >= n for s in model.generator.states])
    return float(np.asarray(weights)[wall].sum())


def contraction_check(model: Model, mu: DiscreteLaw, nu: DiscreteLaw, p: float,
                      t_grid: Sequence[float], kappa: float | None = None,
                      leak_tol: float = 1e-6) -> ContractionReport:
    """Evolve two laws and compare W_p(mu_t, nu_t) with exp(-kappa t / p) W_p(mu, nu)."""
    gen = model.generator
    kappa = model.kappas.kappa if kappa is None else kappa
    w0, _ = wasserstein_p(mu, nu, p)
    rows, leak, ok = [], 0.0, True
    for t in t_grid:
        laws = []
        for law in (mu, nu):
            w = evolve_law(gen, law.weights, t, 1e-12)
            deficit = 1.0 - w.sum()
            if abs(deficit) >= 1e-9:
                raise MassLeak(f"uniformization deficit {deficit:.3e}")
            w = np.clip(w, 0.0, None)
            w /= w.sum()
            leak = max(leak, boundary_mass(model, w))
            laws.append(DiscreteLaw(w, gen.states))
        wt, _ = wasserstein_p(laws[0], laws[1], p)
        bound = math.exp(-kappa * t / p) * w0
        ratio = wt / w0 if w0 > 0 else 0.0
        rows.append((t, wt, bound, ratio))
        ok = ok and wt <= bound * (1 + 1e-6) + 1e-15
    if leak >= leak_tol:
        raise MassLeak(f"mass {leak:.3e} reached the truncation wall")
    kappa_emp = None
    pos = [(t, r) for t, _, _, r in rows if r > 0]
    if w0 > 0 and len(pos) >= 2:
        ts = np.array([0.0] + [t for t, _ in pos])
        ys = np.log([1.0] + [r for _, r in pos])
        kappa_emp = -p * float(np.polyfit(ts, ys, 1)[0])
    return ContractionReport(rows, kappa, kappa_emp, leak, ok)
