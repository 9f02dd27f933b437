"""Glauber dynamics for spin systems, with Curie-Weiss and Ising instances."""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np

from ..chain import NULL, Move, build_generator
from ..coupling import CouplingRates
from ..errors import ConditionFailed, HypothesisViolation, InvalidParams
from .base import KappaReport, Model, box_graph_edges, log_weights_to_measure, simple_graph


def _flip(x, site):
    y = list(x)
    y[site] = -y[site]
    return tuple(y)


def spin_states(n_sites: int) -> list[tuple]:
    return list(itertools.product((-1, 1), repeat=n_sites))


def build_glauber(hamiltonian: Callable[[tuple], float], beta: float, n_sites: int,
                  family: str = "glauber", params: dict | None = None,
                  strict: bool = False) -> Model:
    """Heat-bath style flips with rates exp(-(beta/2) (H(flip x) - H(x))).

    The coupling pairs identical flips as far as the two rates allow,
    routes rate decreases onto the seed flip of the second copy and rate
    increases onto the seed flip of the first copy.
    """
    if beta < 0:
        raise InvalidParams("beta must be nonnegative")
    moves = [Move(f"flip({x})", f"flip({x})", lambda s, x=x: _flip(s, x)) for x in range(n_sites)]
    states = spin_states(n_sites)
    energy = {s: hamiltonian(s) for s in states}

    def rate(s, mv):
        x = int(mv.id[5:-1])
        return math.exp(-0.5 * beta * (energy[_flip(s, x)] - energy[s]))

    gen = build_generator(states, moves, rate)
    m = log_weights_to_measure([-beta * energy[s] for s in states])
    rates = gen.rates
    local = np.zeros((gen.n_states, n_sites))
    tables = {}
    for s in range(gen.n_states):
        for k in range(n_sites):
            t = gen.target(s, k)
            grad = rates[t] - rates[s]
            others = [g for g in range(n_sites) if g != k]
            local[s, k] = rates[t, k] - sum(max(-grad[g], 0.0) for g in others)
    for s in range(gen.n_states):
        for k in range(n_sites):
            t = gen.target(s, k)
            grad = rates[t] - rates[s]
            tab = {}
            for g in range(n_sites):
                if g == k:
                    continue
                tab[(g, g)] = min(rates[t, g], rates[s, g])
                if grad[g] < 0:
                    tab[(g, k)] = -grad[g]
                elif grad[g] > 0:
                    tab[(k, g)] = grad[g]
            tab[(k, NULL)] = local[t, k]
            tab[(NULL, k)] = local[s, k]
            tables[(s, k)] = tab
    pair = local + local[gen.targets, np.arange(n_sites)[None, :]]
    kappa = float(pair.min())
    kappa_bar = float(local.min())
    rep = KappaReport(kappa=kappa, kappa_1=kappa + 2 * kappa_bar, alpha_slope=kappa,
                      kappa_bar=kappa_bar, tables={"local": local})
    if kappa_bar < 0:
        s, k = np.unravel_index(int(np.argmin(local)), local.shape)
        rep.flag(f"kappa_bar nonnegative at {gen.states[s]}, flip({k})")
        if strict:
            raise HypothesisViolation("kappa_bar nonnegative", gen.states[s], k)
    model = Model(family, dict(params or {}, beta=beta, n_sites=n_sites), gen, m,
                  CouplingRates(tables), rep, cancellation="synchronous")
    return model


# Curie-Weiss ----------------------------------------------------------------

def curie_weiss_profile(N: int, beta: float) -> Callable[[int], float]:
    """m -> kappa(x, flip i) + kappa(flip_i x, flip i) with m aligned neighbours of i."""
    q = math.exp(2 * beta / N) - 1

    def f_cw(m):
        e = beta * (N - 1 - 2 * m) / N
        return math.exp(-e) * (1 - (N - 1 - m) * q) + math.exp(e) * (1 - m * q)
    return f_cw


def curie_weiss_condition(N: int, beta: float) -> float:
    """1 - (N - 1)(e^{2 beta / N} - 1); nonnegative when the theory applies."""
    return 1 - (N - 1) * (math.exp(2 * beta / N) - 1)


def curie_weiss_boundary_beta(N: int) -> float:
    """beta at which the Curie-Weiss condition holds with equality."""
    return 0.5 * N * math.log(1 + 1 / (N - 1))


def curie_weiss(N: int, beta: float, strict: bool = False) -> Model:
    """Mean-field Glauber dynamics, H(x) = -(sum x)^2 / (2N).

    Reported constants come from the closed forms; the exhaustive values
    extracted from the rates are kept in ``kappas.extras`` for comparison.
    """
    if N < 2:
        raise InvalidParams("need N >= 2")
    model = build_glauber(lambda s: -sum(s) ** 2 / (2 * N), beta, N, "curie_weiss", {"N": N})
    f_cw = curie_weiss_profile(N, beta)
    scan = [f_cw(m) for m in range(N)]
    mid = f_cw((N - 1) // 2)
    q = math.exp(2 * beta / N) - 1
    kappa_bar = math.exp(-beta * (N - 1) / N) * (1 - (N - 1) * q)
    generic = model.kappas
    rep = KappaReport(kappa=mid, kappa_1=mid + 2 * kappa_bar, alpha_slope=mid, kappa_bar=kappa_bar,
                      tables=generic.tables)
    rep.extras = {"f_cw_scan_min": min(scan), "generic_kappa": generic.kappa,
                  "generic_kappa_bar": generic.kappa_bar,
                  "kappa_bar_opposite_sign": math.exp(-beta * (N - 1) / N) * (1 + (N - 1) * q)}
    if N % 2 == 1:
        rep.extras["odd_midpoint"] = 2 * (1 - (N - 1) / 2 * q)
    if curie_weiss_condition(N, beta) < 0:
        if strict:
            raise ConditionFailed("curie condition")
        rep.flag("curie condition")
    model.kappas = rep
    model.extras["f_cw"] = f_cw
    return model


# Ising ----------------------------------------------------------------------

def ising_condition(d: int, beta: float) -> float:
    """1 - 2d (1 - e^{-2 beta}) e^{4 d beta}."""
    return 1 - 2 * d * (1 - math.exp(-2 * beta)) * math.exp(4 * d * beta)


def ising_closed_forms(d: int, beta: float) -> tuple[float, float]:
    a = 2 * d * (1 - math.exp(-2 * beta)) * math.exp(2 * beta * d)
    return 2 - a, math.exp(-2 * beta * d) - a


def ising(n_vertices: int, edges, beta: float, dim: int, strict: bool = False) -> Model:
    """Ferromagnetic Glauber dynamics with rate exp(-beta x_v sum_{w ~ v} x_w)."""
    nbrs = simple_graph(n_vertices, edges)
    if max(len(nb) for nb in nbrs) > 2 * dim:
        raise InvalidParams("degree exceeds 2 * dim")
    edge_list = [(x, y) for x in range(n_vertices) for y in nbrs[x] if x < y]
    model = build_glauber(lambda s: -sum(s[x] * s[y] for x, y in edge_list), beta, n_vertices,
                          "ising", {"n_vertices": n_vertices, "dim": dim})
    kappa, kappa_bar = ising_closed_forms(dim, beta)
    generic = model.kappas
    rep = KappaReport(kappa=kappa, kappa_1=kappa + 2 * kappa_bar, alpha_slope=kappa,
                      kappa_bar=kappa_bar, tables=generic.tables,
                      extras={"generic_kappa": generic.kappa, "generic_kappa_bar": generic.kappa_bar})
    if ising_condition(dim, beta) < 0:
        if strict:
            raise ConditionFailed("ising condition")
        rep.flag("ising condition")
    model.kappas = rep
    return model


def ising_box(shape, beta: float, strict: bool = False) -> Model:
    shape = tuple(shape)
    return ising(int(np.prod(shape)), box_graph_edges(shape), beta, len(shape), strict)
