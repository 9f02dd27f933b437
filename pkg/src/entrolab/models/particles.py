"""Conservative and exclusion particle systems: hardcore, Bernoulli-Laplace, zero-range."""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from ..chain import NULL, Move, build_generator
from ..coupling import CouplingRates
from ..errors import ConditionFailed, InvalidParams
from .base import KappaReport, Model, log_weights_to_measure, simple_graph


def _set(x, site, value):
    y = list(x)
    y[site] = value
    return tuple(y)


# hardcore -------------------------------------------------------------------

def hardcore(n_vertices: int, edges, rho: float, strict: bool = False) -> Model:
    """Birth and death of particles on independent sets of a graph.

    A particle appears at a free vertex (whose closed neighbourhood is
    empty) at rate rho and disappears at rate 1.
    """
    if rho <= 0:
        raise InvalidParams("rho must be positive")
    nbrs = simple_graph(n_vertices, edges)
    closed = [nb | {x} for x, nb in enumerate(nbrs)]
    delta = max(len(nb) for nb in nbrs)

    def free(x, v):
        return all(x[y] == 0 for y in closed[v])

    moves = []
    for v in range(n_vertices):
        moves.append(Move(f"add({v})", f"remove({v})",
                          lambda x, v=v: _set(x, v, 1) if free(x, v) else tuple(x)))
        moves.append(Move(f"remove({v})", f"add({v})", lambda x, v=v: _set(x, v, 0)))
    states = [x for x in itertools.product((0, 1), repeat=n_vertices)
              if all(not (x[a] and x[b]) for a in range(n_vertices) for b in nbrs[a])]

    def rate(x, mv):
        v = int(mv.id[mv.id.index("(") + 1:-1])
        if mv.id.startswith("add"):
            return rho if free(x, v) else 0.0
        return float(x[v])

    gen = build_generator(states, moves, rate)
    m = log_weights_to_measure([sum(x) * math.log(rho) for x in states])
    add, remove = (lambda v: 2 * v), (lambda v: 2 * v + 1)
    tables = {}
    for s, x in enumerate(gen.states):
        for v in range(n_vertices):
            if not free(x, v):
                continue
            t = gen.target(s, add(v))
            tab = {}
            for g in range(gen.n_moves):
                low = min(gen.rates[s, g], gen.rates[t, g])
                if low > 0:
                    tab[(g, g)] = low
            free_nbrs = [y for y in nbrs[v] if free(x, y)]
            for y in free_nbrs:
                tab[(add(y), remove(v))] = rho
            tab[(add(v), NULL)] = rho
            tab[(NULL, remove(v))] = 1 - rho * len(free_nbrs)
            tables[(s, add(v))] = tab
            tables[(t, remove(v))] = {(gb, g): r for (g, gb), r in tab.items()}
    kappa = 1 - rho * (delta - 1)
    kappa_bar = min(rho, 1 - rho * delta)
    rep = KappaReport(kappa=kappa, kappa_1=kappa + 2 * kappa_bar, alpha_slope=kappa,
                      kappa_bar=kappa_bar, extras={"max_degree": delta})
    if rho * delta > 1:
        if strict:
            raise ConditionFailed("rho * max degree <= 1")
        rep.flag("rho * max degree <= 1")
    return Model("hardcore", {"n_vertices": n_vertices, "rho": rho}, gen, m,
                 CouplingRates(tables), rep, cancellation="nonmerging")


# Bernoulli-Laplace ------------------------------------------------------------

def _swap(x, i, j):
    if x[i] == 1 and x[j] == 0:
        y = list(x)
        y[i], y[j] = 0, 1
        return tuple(y)
    return tuple(x)


def bernoulli_laplace(L: int, N: int) -> Model:
    """N particles on L sites; each particle-hole pair swaps at rate 1."""
    if not (0 < N < L):
        raise InvalidParams("need 0 < N < L")
    pairs = [(i, j) for i in range(L) for j in range(L) if i != j]
    moves = [Move(f"swap({i}->{j})", f"swap({j}->{i})", lambda x, i=i, j=j: _swap(x, i, j))
             for i, j in pairs]
    idx = {p: k for k, p in enumerate(pairs)}
    states = [x for x in itertools.product((0, 1), repeat=L) if sum(x) == N]

    def rate(x, mv):
        i, j = pairs[moves.index(mv)]
        return float(x[i] * (1 - x[j]))

    gen = build_generator(states, moves, rate)
    m = np.full(gen.n_states, 1.0 / gen.n_states)
    tables = {}
    for s, x in enumerate(gen.states):
        for (i, j), k in idx.items():
            if not (x[i] == 1 and x[j] == 0):
                continue
            t = gen.target(s, k)
            tab = {}
            for g in range(gen.n_moves):
                low = min(gen.rates[s, g], gen.rates[t, g])
                if low > 0:
                    tab[(g, g)] = low
            tab[(k, NULL)] = 1.0
            tab[(NULL, idx[(j, i)])] = 1.0
            for l in range(L):
                if l in (i, j):
                    continue
                if x[l] == 0:
                    tab[(idx[(i, l)], idx[(j, l)])] = 1.0
                else:
                    tab[(idx[(l, j)], idx[(l, i)])] = 1.0
            tables[(s, k)] = tab
    rep = KappaReport(kappa=float(L), kappa_1=float(L + 2), alpha_slope=float(L))
    return Model("bernoulli_laplace", {"L": L, "N": N}, gen, m, CouplingRates(tables), rep,
                 cancellation="synchronous")


# zero-range -------------------------------------------------------------------

def compositions(N: int, L: int) -> list[tuple]:
    """All occupation vectors of length L summing to N, lexicographically."""
    return [x for x in itertools.product(range(N + 1), repeat=L) if sum(x) == N]


def _transfer(x, a, b):
    if x[a] == 0 or a == b:
        return tuple(x)
    y = list(x)
    y[a] -= 1
    y[b] += 1
    return tuple(y)


def zero_range(L: int, N: int, site_rates: Sequence[Callable[[int], float]] | Callable[[int], float],
               strict: bool = False) -> Model:
    """Particles leave site x at total rate c_x(occupation) toward a uniform site.

    ``site_rates`` is one function per site or a single shared function.
    The increment bounds c <= c_x(k+1) - c_x(k) <= c + delta are measured
    over k = 0..N-1.
    """
    if L < 2 or N < 1:
        raise InvalidParams("need L >= 2 and N >= 1")
    if callable(site_rates):
        site_rates = [site_rates] * L
    if len(site_rates) != L:
        raise InvalidParams("one rate function per site")
    table = np.array([[float(site_rates[x](k)) for k in range(N + 2)] for x in range(L)])
    pairs = [(a, b) for a in range(L) for b in range(L)]
    moves = [Move(f"transfer({a}->{b})", f"transfer({b}->{a})",
                  lambda x, a=a, b=b: _transfer(x, a, b)) for a, b in pairs]
    idx = {p: k for k, p in enumerate(pairs)}
    states = compositions(N, L)

    def rate(x, mv):
        a, _ = pairs[moves.index(mv)]
        return table[a, x[a]] / L

    gen = build_generator(states, moves, rate)
    logw = [-sum(np.log(table[x, 1:k + 1]).sum() for x, k in enumerate(st)) for st in states]
    m = log_weights_to_measure(logw)
    incr = np.diff(table[:, :N + 1], axis=1)
    c = float(incr.min())
    delta = float(incr.max()) - c
    tables = {}
    for s, x in enumerate(gen.states):
        for (a, b), k in idx.items():
            if a == b or x[a] == 0:
                continue
            t = gen.target(s, k)
            tab = {}
            for g in range(gen.n_moves):
                low = min(gen.rates[s, g], gen.rates[t, g])
                if low > 0:
                    tab[(g, g)] = low
            for w in range(L):
                out_rate = (table[a, x[a]] - table[a, x[a] - 1] - c) / L
                in_rate = (table[b, x[b] + 1] - table[b, x[b]] - c) / L
                if out_rate:
                    tab[(idx[(a, w)], NULL)] = out_rate
                if in_rate:
                    tab[(NULL, idx[(b, w)])] = in_rate
                if c:
                    tab[(idx[(a, w)], idx[(b, w)])] = c / L
            tables[(s, k)] = tab
    rep = KappaReport(kappa=c - delta, kappa_1=c - delta, alpha_slope=c, alpha_offset=-delta,
                      extras={"c": c, "delta": delta})
    bad_zero = [x for x in range(L) if table[x, 0] != 0]
    if bad_zero:
        if strict:
            raise ConditionFailed(bad_zero[0], 0)
        rep.flag(f"rate at empty site {bad_zero[0]} is nonzero")
    elif delta > c:
        x, k = np.unravel_index(int(np.argmax(incr)), incr.shape)
        if strict:
            raise ConditionFailed(int(x), int(k))
        rep.flag(f"increment spread exceeds c at site {x}, k={k}")
    return Model("zero_range", {"L": L, "N": N}, gen, m, CouplingRates(tables), rep,
                 cancellation="synchronous", extras={"site_rates": table})
