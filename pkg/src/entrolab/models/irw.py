"""Interacting random walks on a box of N^d.

Particles at each coordinate are created at rate exp(-(V+(x+e_i) - V+(x)))
and destroyed at rate exp(-(V-(x-e_i) - V-(x))) (zero on an empty site).
The reversible measure is proportional to exp(-V+ - V-).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..chain import NULL, Move, box_states, build_generator
from ..coupling import CouplingRates
from ..errors import HessianSignViolation, InvalidParams, NoSuchM
from .base import KappaReport, Model, log_weights_to_measure

Potential = Callable[[tuple], float]


def poisson_v_minus(lam: float) -> Potential:
    """Potential giving destruction rate lam * x_i (Poisson marginals of mean 1/lam)."""
    if lam <= 0:
        raise InvalidParams("lambda must be positive")
    log_lam = math.log(lam)
    return lambda x: sum(log_lam * k + math.lgamma(k + 1) for k in x)


def symmetric_v_plus(h: Callable[[int], float], beta: float) -> Potential:
    """V+(x) = beta * h(|x|)."""
    return lambda x: beta * h(sum(x))


def zero_potential(x) -> float:
    return 0.0


def _shift(x, i, delta):
    y = list(x)
    y[i] += delta
    return tuple(y)


def _moves(d: int) -> list[Move]:
    moves = []
    for i in range(d):
        moves.append(Move(f"inc({i})", f"dec({i})", lambda x, i=i: _shift(x, i, 1)))
        moves.append(Move(f"dec({i})", f"inc({i})",
                          lambda x, i=i: _shift(x, i, -1) if x[i] > 0 else tuple(x)))
    return moves


def inc(i: int) -> int:
    return 2 * i


def dec(i: int) -> int:
    return 2 * i + 1


def build_irw(v_plus: Potential, v_minus: Potential, d: int, n: int, params: dict | None = None) -> Model:
    """Truncated generator, reversible measure and coupling table on {0..n}^d."""
    if d < 1 or n < 1:
        raise InvalidParams("need d >= 1 and n >= 1")
    moves = _moves(d)

    def rate(x, mv):
        k = int(mv.id[4:-1])
        if mv.id.startswith("inc"):
            return math.exp(-(v_plus(_shift(x, k, 1)) - v_plus(x)))
        if x[k] == 0:
            return 0.0
        return math.exp(-(v_minus(_shift(x, k, -1)) - v_minus(x)))

    states = box_states(d, n)
    gen = build_generator(states, moves, rate, truncate=True)
    m = log_weights_to_measure([-(v_plus(x) + v_minus(x)) for x in states])
    kplus, kminus = _kappa_tables(gen, d)
    coupling = _coupling(gen, d, kplus, kminus)
    model = Model("irw", dict(params or {}, d=d, n=n), gen, m, coupling, KappaReport(0, 0, 0))
    model.extras["kappa_plus"], model.extras["kappa_minus"] = kplus, kminus
    model.kappas = irw_kappas(model)
    return model


def _kappa_tables(gen, d):
    """kappa+ and kappa- at every state with x_i < n, keyed by (state index, i)."""
    kplus, kminus = {}, {}
    rates = gen.rates
    for s in range(gen.n_states):
        for i in range(d):
            if gen.is_trivial(s, inc(i)):
                continue
            t = gen.target(s, inc(i))
            grad = rates[t] - rates[s]
            others = [g for g in range(gen.n_moves) if g not in (inc(i), dec(i))]
            kplus[(s, i)] = -grad[inc(i)] - sum(max(grad[g], 0.0) for g in others)
            kminus[(s, i)] = grad[dec(i)] - sum(max(-grad[g], 0.0) for g in others)
    return kplus, kminus


def _coupling(gen, d, kplus, kminus) -> CouplingRates:
    rates = gen.rates
    tables = {}
    for (s, i), kp in kplus.items():
        t = gen.target(s, inc(i))
        grad = rates[t] - rates[s]
        tab = {}
        for g in range(gen.n_moves):
            low = min(rates[s, g], rates[t, g])
            if low > 0:
                tab[(g, g)] = low
            if g in (inc(i), dec(i)):
                continue
            if grad[g] > 0:
                tab[(inc(i), g)] = grad[g]
            elif grad[g] < 0:
                tab[(g, dec(i))] = -grad[g]
        tab[(inc(i), NULL)] = kp
        tab[(NULL, dec(i))] = kminus[(s, i)]
        tables[(s, inc(i))] = tab
        # the mirrored table serves the decrement seed started from t
        if rates[t, dec(i)] > 0:
            tables[(t, dec(i))] = {(gb, g): r for (g, gb), r in tab.items()}
    return CouplingRates(tables)


def irw_kappas(model: Model) -> KappaReport:
    """kappa = inf (kappa+ + kappa-) over seeds whose increment stays in the box.

    Seeds at the wall (x_i = n) act as the identity after truncation and are
    listed under ``tables['boundary']``.  Rates are the untruncated ones, so
    every listed value coincides with the value on N^d.
    """
    kplus, kminus = model.extras["kappa_plus"], model.extras["kappa_minus"]
    gen = model.generator
    d = model.params["d"]
    sums = {key: kplus[key] + kminus[key] for key in kplus}
    kappa = min(sums.values()) if sums else 0.0
    rep = KappaReport(kappa=kappa, kappa_1=kappa, alpha_slope=kappa,
                      tables={"kappa_plus": {(gen.states[s], i): v for (s, i), v in kplus.items()},
                              "kappa_minus": {(gen.states[s], i): v for (s, i), v in kminus.items()},
                              "boundary": [(gen.states[s], i) for s in range(gen.n_states)
                                           for i in range(d) if gen.is_trivial(s, inc(i))]})
    for (s, i) in sorted(sums):
        if kplus[(s, i)] < 0 or kminus[(s, i)] < 0:
            rep.flag(f"kappa+/kappa- nonnegative at {gen.states[s]}, i={i}")
            break
    return rep


# closed forms for the symmetric interaction V+ = beta h(|x|) ---------------

def _bracket(h, beta, m):
    return math.exp(-beta * (h(m + 1) - h(m))) - math.exp(-beta * (h(m + 2) - h(m + 1)))


def symmetric_interaction(h, beta: float, lam: float, d: int, m_max: int) -> dict:
    """Hypothesis value and kappa over total occupations 0..m_max."""
    hyp = min(lam - (d - 1) * _bracket(h, beta, m) for m in range(m_max + 1))
    vals = [lam - (d - 2) * _bracket(h, beta, m) for m in range(m_max + 1)]
    m_star = int(np.argmin(vals))
    return {"hypothesis": hyp, "kappa": vals[m_star], "argmin": m_star}


def explicit_symmetric_kappa(h, beta: float, lam: float, d: int) -> float:
    """lam - (d - 2) exp(-beta (h(1) - h(0))), valid for increasing h and large beta."""
    return lam - (d - 2) * math.exp(-beta * (h(1) - h(0)))


# oddly convex potentials ---------------------------------------------------

def oddly_convex_kappa(v: Potential, lam: float, d: int, n: int) -> KappaReport:
    """Constants for V+ = v with nonnegative mixed increments and Poisson V-.

    kappa(i) = inf over the box of lam + [e^{-D_i v(x)} - e^{-D_i v(x+e_i)}]
    - sum_{j != i} [e^{-D_j v(x)} - e^{-D_j v(x+e_i)}], where D_j is the
    forward increment.  When lam - sum_{j != i} e^{-D_j v(0)} >= 0 for all i
    the value at the origin is also reported as ``kappa_origin``.
    """
    states = box_states(d, n)

    def incr(x, j):
        return v(_shift(x, j, 1)) - v(x)

    for x in states:
        for i in range(d):
            for j in range(d):
                mixed = incr(_shift(x, i, 1), j) - incr(x, j)
                if mixed < -1e-12 * max(1.0, abs(incr(x, j))):
                    raise HessianSignViolation(x, i, j)
    kappa = math.inf
    for x in states:
        for i in range(d):
            y = _shift(x, i, 1)
            val = lam + math.exp(-incr(x, i)) - math.exp(-incr(y, i))
            val -= sum(math.exp(-incr(x, j)) - math.exp(-incr(y, j)) for j in range(d) if j != i)
            kappa = min(kappa, val)
    origin = tuple([0] * d)
    at_origin = min(lam - sum(math.exp(-incr(origin, j)) for j in range(d) if j != i) for i in range(d))
    rep = KappaReport(kappa=kappa, kappa_1=kappa, alpha_slope=kappa)
    rep.extras["origin_condition"] = at_origin
    if at_origin >= 0:
        rep.extras["kappa_origin"] = at_origin
    if kappa < 0:
        rep.flag("oddly convex kappa negative")
    return rep


# potential surgery ---------------------------------------------------------

@dataclass
class TildeH:
    """h replaced below m_eps by its linear extension with slope h(m_eps+1)-h(m_eps)."""

    h: Callable[[int], float]
    m_eps: int
    slope: float

    def __call__(self, m: int) -> float:
        if m >= self.m_eps:
            return self.h(m)
        return self.h(self.m_eps) - self.slope * (self.m_eps - m)


def tilde_h(h, beta: float, d: int, eps: float, cap: int = 2000) -> TildeH:
    """Smallest M past which h is convex and the exp-increment condition holds.

    ``h`` may be a callable or a sequence of values; the scan covers
    m = 0..cap (or the sequence length).  The returned potential satisfies
    -(d - 1) * D exp(-beta D h~(m)) <= eps for every scanned m, i.e. the
    symmetric-interaction hypothesis for any lam >= eps.
    """
    if eps <= 0 or d < 2:
        raise InvalidParams("need eps > 0 and d >= 2")
    if not callable(h):
        values = list(h)
        cap = min(cap, len(values) - 3)
        h = values.__getitem__
    m_eps = 0
    for m in range(cap + 1):
        if m >= 1 and h(m + 1) - 2 * h(m) + h(m - 1) < 0:
            m_eps = max(m_eps, m)
        if _bracket(h, beta, m) > eps / (d - 1):
            m_eps = max(m_eps, m + 1)
    if m_eps >= cap:
        raise NoSuchM(f"condition fails up to the scan cap {cap}")
    out = TildeH(h, m_eps, h(m_eps + 1) - h(m_eps))
    worst = max((d - 1) * _bracket(out, beta, m) for m in range(cap - 1))
    if worst > eps * (1 + 1e-12):
        raise NoSuchM("surgery failed to enforce the hypothesis")
    return out
