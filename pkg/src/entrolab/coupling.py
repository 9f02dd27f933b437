"""Coupling rates, the coupled generator and the second-derivative organizer."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .chain import NULL, NULL_ID, Generator, Move
from .entropy import PhiFamily, energy, random_positive
from .errors import InadmissibleCoupling, NegativeCouplingRate, UnknownSeed

Seed = tuple  # (state index, move index)
Entry = tuple  # (gamma, gammabar) move indices, NULL for e


class CouplingRates:
    """Per-seed sparse tables of rates over pairs of moves.

    ``tables[(s, k)]`` maps ``(gamma, gammabar)`` to a rate, with move
    indices of the underlying generator and ``NULL`` for the null move.
    Missing entries are zero.
    """

    def __init__(self, tables: Mapping[Seed, Mapping[Entry, float]]):
        self.tables = {
            (int(s), int(k)): {(int(g), int(gb)): float(r) for (g, gb), r in tab.items() if r != 0.0}
            for (s, k), tab in tables.items()
        }

    @property
    def seeds(self) -> list[Seed]:
        return sorted(self.tables)

    def rate(self, seed: Seed, gamma: int, gammabar: int) -> float:
        return self.tables.get(seed, {}).get((gamma, gammabar), 0.0)

    def with_entry(self, seed: Seed, gamma: int, gammabar: int, value: float) -> "CouplingRates":
        tables = {s: dict(t) for s, t in self.tables.items()}
        tables.setdefault(seed, {})[(gamma, gammabar)] = value
        return CouplingRates(tables)

    def to_json(self, gen: Generator) -> str:
        def mid(k):
            return NULL_ID if k == NULL else gen.moves[k].id
        out = []
        for s, k in self.seeds:
            entries = [[mid(g), mid(gb), r] for (g, gb), r in sorted(self.tables[(s, k)].items())]
            out.append({"eta": s, "sigma": mid(k), "entries": entries})
        return json.dumps(out, indent=1)

    @classmethod
    def from_json(cls, text: str, gen: Generator) -> "CouplingRates":
        def idx(m):
            return NULL if m == NULL_ID else gen.move_index[m]
        tables = {}
        for item in json.loads(text):
            tables[(item["eta"], idx(item["sigma"]))] = {
                (idx(g), idx(gb)): float(r) for g, gb, r in item["entries"]}
        return cls(tables)


def nontrivial_seeds(gen: Generator) -> list[Seed]:
    """Pairs (state, move) with positive rate whose move changes the state."""
    s, k = np.nonzero((gen.rates > 0) & (gen.targets != np.arange(gen.n_states)[:, None]))
    return list(zip(s.tolist(), k.tolist()))


def independent_coupling(gen: Generator) -> CouplingRates:
    """Both copies move independently: rate(g, e) = c(x, g), rate(e, g') = c(sx, g')."""
    tables = {}
    for s, k in nontrivial_seeds(gen):
        t = gen.target(s, k)
        tab = {}
        for g in range(gen.n_moves):
            if gen.rates[s, g] > 0:
                tab[(g, NULL)] = gen.rates[s, g]
            if gen.rates[t, g] > 0:
                tab[(NULL, g)] = gen.rates[t, g]
        tables[(s, k)] = tab
    return CouplingRates(tables)


def _synchronous_table(gen: Generator, s: int) -> dict:
    return {(g, g): float(gen.rates[s, g]) for g in range(gen.n_moves) if gen.rates[s, g] > 0}


def _table_for(cr: CouplingRates, gen: Generator, s: int, k: int) -> dict:
    tab = cr.tables.get((s, k))
    if tab is not None:
        return tab
    if gen.is_trivial(s, k):
        return _synchronous_table(gen, s)
    raise InadmissibleCoupling(f"no coupling table for seed ({gen.states[s]}, {gen.moves[k].id})")


@dataclass
class AdmissibilityReport:
    max_row: float
    max_col: float
    worst_seed: tuple | None
    passed: bool


def check_admissible(cr: CouplingRates, gen: Generator, tol: float = 1e-12) -> AdmissibilityReport:
    """Check both marginal identities of every seed table."""
    worst_row = worst_col = 0.0
    worst_seed, worst_val = None, -1.0
    for s, k in cr.seeds:
        if not (0 <= s < gen.n_states and 0 <= k < gen.n_moves) or gen.rates[s, k] <= 0:
            raise UnknownSeed((s, k))
        tab = cr.tables[(s, k)]
        t = gen.target(s, k)
        rows = np.zeros(gen.n_moves + 1)
        cols = np.zeros(gen.n_moves + 1)
        for (g, gb), r in tab.items():
            if r < 0:
                raise NegativeCouplingRate((gen.states[s], gen.moves[k].id, g, gb, r))
            rows[g] += r
            cols[gb] += r
        row_err = float(np.abs(rows[:-1] - gen.rates[s]).max(initial=0.0))
        col_err = float(np.abs(cols[:-1] - gen.rates[t]).max(initial=0.0))
        worst_row = max(worst_row, row_err)
        worst_col = max(worst_col, col_err)
        if max(row_err, col_err) > worst_val:
            worst_val = max(row_err, col_err)
            worst_seed = (gen.states[s], gen.moves[k].id)
    passed = worst_row <= tol and worst_col <= tol
    return AdmissibilityReport(worst_row, worst_col, worst_seed, passed)


def coupled_generator(cr: CouplingRates, gen: Generator) -> Generator:
    """Generator of the coupled pair process, on pairs reachable from the seeds.

    Pairs that are seeds use their table; diagonal pairs move together;
    any other reachable pair uses independent motion.
    """
    by_pair = {}
    for s, k in cr.seeds:
        by_pair.setdefault((s, gen.target(s, k)), cr.tables[(s, k)])

    def table(pair):
        if pair in by_pair:
            return by_pair[pair]
        x, y = pair
        if x == y:
            return _synchronous_table(gen, x)
        tab = {}
        for g in range(gen.n_moves):
            if gen.rates[x, g] > 0:
                tab[(g, NULL)] = gen.rates[x, g]
            if gen.rates[y, g] > 0:
                tab[(NULL, g)] = gen.rates[y, g]
        return tab

    pair_moves = [(g, gb) for g in range(-1, gen.n_moves) for gb in range(-1, gen.n_moves)
                  if not (g == NULL and gb == NULL)]
    col = {pm: j for j, pm in enumerate(pair_moves)}
    order = sorted(by_pair)
    seen = set(order)
    frontier = list(order)
    rows = {}
    while frontier:
        pair = frontier.pop()
        entries = {}
        for (g, gb), r in table(pair).items():
            if r <= 0:
                continue
            nxt = (gen.target(pair[0], g), gen.target(pair[1], gb))
            entries[col[(g, gb)]] = (r, nxt)
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
        rows[pair] = entries
    pairs = sorted(seen)
    pidx = {p: i for i, p in enumerate(pairs)}
    rates = np.zeros((len(pairs), len(pair_moves)))
    targets = np.tile(np.arange(len(pairs))[:, None], (1, len(pair_moves)))
    for p, entries in rows.items():
        for j, (r, nxt) in entries.items():
            rates[pidx[p], j] = r
            targets[pidx[p], j] = pidx[nxt]

    def mid(k):
        return NULL_ID if k == NULL else gen.moves[k].id

    def inv(k):
        return NULL_ID if k == NULL else gen.moves[k].inverse_id

    moves = [Move(f"{mid(g)}|{mid(gb)}", f"{inv(g)}|{inv(gb)}") for g, gb in pair_moves]
    states = [tuple(gen.states[a]) + tuple(gen.states[b]) for a, b in pairs]
    out = Generator(states, moves, rates, targets)
    out.pairs = pairs
    return out


class _Flat:
    """All seed-table entries laid out as arrays for vectorized sums."""

    def __init__(self, cr: CouplingRates, gen: Generator, m):
        m = np.asarray(m, dtype=float)
        src, dst, w, g_img, gb_img, rate, merge, sync, seed_id, gam, gambar = ([] for _ in range(11))
        self.seeds = []
        for s, k in nontrivial_seeds(gen):
            tab = _table_for(cr, gen, s, k)
            t = gen.target(s, k)
            sid = len(self.seeds)
            self.seeds.append((s, k))
            for (g, gb), r in tab.items():
                a2, b2 = gen.target(s, g), gen.target(t, gb)
                src.append(s); dst.append(t)
                w.append(gen.rates[s, k] * m[s])
                g_img.append(a2); gb_img.append(b2)
                rate.append(r)
                merge.append(a2 == b2)
                sync.append(g == gb and g != NULL)
                seed_id.append(sid); gam.append(g); gambar.append(gb)
        as_int = lambda v: np.asarray(v, dtype=np.int64)
        self.src, self.dst, self.g_img, self.gb_img = map(as_int, (src, dst, g_img, gb_img))
        self.seed_id, self.gamma, self.gammabar = map(as_int, (seed_id, gam, gambar))
        self.weight = np.asarray(w, dtype=float)
        self.rate = np.asarray(rate, dtype=float)
        self.merge = np.asarray(merge, dtype=bool)
        self.sync = np.asarray(sync, dtype=bool)

    def terms(self, phi: PhiFamily, f):
        a, b = f[self.src], f[self.dst]
        a2, b2 = f[self.g_img], f[self.gb_img]
        base = phi.big_phi(a, b)
        moved = phi.big_phi(a2, b2)
        da, db = phi.jac(a, b)
        lin = da * (a2 - a) + db * (b2 - b)
        wr = self.weight * self.rate
        return wr, moved - base, lin


def _flat(cr: CouplingRates, gen: Generator, m) -> _Flat:
    key = (id(gen), np.asarray(m).tobytes())
    cache = cr.__dict__.setdefault("_flat_cache", {})
    if key not in cache:
        cache.clear()
        cache[key] = _Flat(cr, gen, m)
    return cache[key]


@dataclass
class OrganizerDecomposition:
    diagonal_part: float
    off_part: float
    full_derivative: float
    bound: float
    kept_sum: float
    improvement: float
    dropped_slack: float
    min_term_slack: float


def organize_terms(gen: Generator, m, cr: CouplingRates, phi: PhiFamily, f) -> OrganizerDecomposition:
    """Split the dissipation derivative along the coupling table.

    ``full_derivative`` is the coupled rewriting of d/dt 2E(phi'(f_t), f_t);
    ``kept_sum`` holds the increments of Phi along coupled moves, and
    ``bound = kept_sum - improvement`` where the improvement collects the
    convexity gaps on merging moves.
    """
    fl = _flat(cr, gen, m)
    f = np.asarray(f, dtype=float)
    wr, grad_phi, lin = fl.terms(phi, f)
    slack = grad_phi - lin
    merge = fl.merge
    diag = float(np.sum(wr[merge] * lin[merge]))
    off = float(np.sum(wr[~merge] * lin[~merge]))
    kept = float(np.sum(wr * grad_phi))
    improvement = float(np.sum(wr[merge] * slack[merge]))
    dropped = float(np.sum(wr[~merge] * slack[~merge]))
    scale = np.abs(grad_phi) + np.abs(lin) + 1e-300
    min_slack = float(np.min(slack / scale)) if len(slack) else 0.0
    return OrganizerDecomposition(diag, off, diag + off, kept - improvement, kept,
                                  improvement, dropped, min_slack)


def synchronous_sum(gen: Generator, m, cr: CouplingRates, phi: PhiFamily, f) -> float:
    """Sum over seeds of rate(g, g) times the increment of Phi along (g, g)."""
    fl = _flat(cr, gen, m)
    wr, grad_phi, _ = fl.terms(phi, np.asarray(f, dtype=float))
    return float(np.sum(wr[fl.sync] * grad_phi[fl.sync]))


def nonmerging_sum(gen: Generator, m, cr: CouplingRates, phi: PhiFamily, f) -> float:
    """Sum of the Phi increments over coupled moves that do not merge the pair."""
    fl = _flat(cr, gen, m)
    wr, grad_phi, _ = fl.terms(phi, np.asarray(f, dtype=float))
    keep = ~fl.merge
    return float(np.sum(wr[keep] * grad_phi[keep]))


def kappa_second(gen: Generator, cr: CouplingRates) -> float:
    """min over seeds of min(rate(sigma, e), rate(e, sigma^-1))."""
    vals = []
    for s, k in nontrivial_seeds(gen):
        tab = _table_for(cr, gen, s, k)
        inv = gen.inverse_index(k)
        vals.append(min(tab.get((k, NULL), 0.0), tab.get((NULL, inv), 0.0)))
    return min(vals) if vals else 0.0


def kappa_third(gen: Generator, cr: CouplingRates) -> float:
    """min over seeds of the total rate of merging coupled moves."""
    vals = []
    for s, k in nontrivial_seeds(gen):
        tab = _table_for(cr, gen, s, k)
        t = gen.target(s, k)
        vals.append(sum(r for (g, gb), r in tab.items() if gen.target(s, g) == gen.target(t, gb)))
    return min(vals) if vals else 0.0


@dataclass
class SufficientConditionReport:
    kappa_second: float
    kappa_third: float
    per_phi: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.per_phi.values())


def kappa_prime_samples(gen: Generator, m, cr: CouplingRates, phi: PhiFamily,
                        num_f: int, seed: int) -> np.ndarray:
    """-kept_sum / (2 E(phi'(f), f)) over random positive f."""
    out = []
    for j in range(num_f):
        f = random_positive(gen.n_states, seed, j)
        e = energy(gen, m, phi, f)
        if e <= 0:
            continue
        out.append(-organize_terms(gen, m, cr, phi, f).kept_sum / (2 * e))
    return np.asarray(out)


def verify_sufficient_condition(gen: Generator, m, cr: CouplingRates, phi_list: Sequence[PhiFamily],
                                num_f: int, seed: int, claims: Mapping[str, float] | None = None
                                ) -> SufficientConditionReport:
    """Empirical discrete-gradient constant and the two coupling constants.

    For each phi the report gives the sampled minimum ``kappa_prime`` and
    the constants it implies: kappa' itself, kappa' + 2 kappa'' for the
    logarithmic member and kappa' + (alpha - 1) kappa''' for power members.
    ``claims`` optionally maps phi names to constants that kappa' must reach.
    """
    k2 = kappa_second(gen, cr)
    k3 = kappa_third(gen, cr)
    rep = SufficientConditionReport(k2, k3)
    for phi in phi_list:
        vals = kappa_prime_samples(gen, m, cr, phi, num_f, seed)
        kp = float(vals.min()) if len(vals) else float("inf")
        implied = {"kappa_phi": kp}
        if phi.alpha_value is not None:
            implied["kappa_1" if phi.is_log else "kappa_alpha"] = (
                kp + 2 * k2 if phi.is_log else kp + (phi.alpha_value - 1) * k3)
        target = (claims or {}).get(phi.name, 0.0)
        rep.per_phi[phi.name] = {"kappa_prime_emp": kp, "implied": implied,
                                 "passed": kp >= target - 1e-6}
    return rep
