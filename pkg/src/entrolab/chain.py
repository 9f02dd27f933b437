"""Finite continuous-time Markov chains built from moves and rates.

A chain is described by an enumerated state list, a list of moves and a
rate table ``rates[s, k]`` giving the jump rate of move ``k`` at state
``s``.  Each move also has a target table ``targets[s, k]``.  Moves whose
image leaves the state space (under truncation) keep their rate but point
back to their source, so they act as the identity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph
import scipy.sparse.linalg
import scipy.stats

from .errors import (
    DimensionMismatch,
    MissingInverse,
    NegativeRate,
    NonFinite,
    Reducible,
    TargetOutsideSpace,
)

State = tuple

NULL = -1
"""Index used for the null move ``e`` inside coupling tables."""

NULL_ID = "e"


@dataclass(frozen=True)
class Move:
    """A symbolic move with its inverse.

    ``action`` maps a configuration to its image; it may return a
    configuration outside the state space, which the builder either rejects
    or (under truncation) replaces by the identity.
    """

    id: str
    inverse_id: str
    action: Callable[[State], State] | None = field(default=None, compare=False, repr=False)

    def __call__(self, state: State) -> State:
        if self.action is None:
            raise ValueError(f"move {self.id} carries no action")
        return tuple(self.action(state))


NULL_MOVE = Move(NULL_ID, NULL_ID, lambda s: s)


class Generator:
    """Immutable finite generator.

    Attributes
    ----------
    states : list of tuples, in lexicographic order when built by a model.
    moves : list of :class:`Move`.
    rates : array (n_states, n_moves) of nonnegative rates c(eta, sigma).
    targets : int array (n_states, n_moves) with the index of sigma(eta).
    """

    def __init__(self, states: Sequence[State], moves: Sequence[Move],
                 rates: np.ndarray, targets: np.ndarray):
        self.states = [tuple(s) for s in states]
        self.index = {s: i for i, s in enumerate(self.states)}
        self.moves = list(moves)
        self.move_index = {mv.id: k for k, mv in enumerate(self.moves)}
        n, k = len(self.states), len(self.moves)
        self.rates = np.asarray(rates, dtype=float).reshape(n, k)
        self.targets = np.asarray(targets, dtype=np.int64).reshape(n, k)
        self.rates.setflags(write=False)
        self.targets.setflags(write=False)
        self._q = None

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_moves(self) -> int:
        return len(self.moves)

    def inverse_index(self, k: int) -> int:
        """Index of the inverse of move ``k``; ``NULL`` maps to itself."""
        if k == NULL:
            return NULL
        inv = self.moves[k].inverse_id
        if inv not in self.move_index:
            raise MissingInverse(self.moves[k].id)
        return self.move_index[inv]

    def target(self, s: int, k: int) -> int:
        return s if k == NULL else int(self.targets[s, k])

    def rate(self, s: int, k: int) -> float:
        return 0.0 if k == NULL else float(self.rates[s, k])

    @property
    def transitions(self) -> list[tuple[int, str, int, float]]:
        """All (source, move id, target, rate) entries with positive rate."""
        out = []
        for s in range(self.n_states):
            for k in range(self.n_moves):
                r = self.rates[s, k]
                if r > 0:
                    out.append((s, self.moves[k].id, int(self.targets[s, k]), float(r)))
        return out

    def is_trivial(self, s: int, k: int) -> bool:
        """True when move ``k`` acts as the identity at state ``s``."""
        return int(self.targets[s, k]) == s

    def rate_matrix(self) -> scipy.sparse.csr_matrix:
        """Sparse Q with Q[s, t] the total rate s -> t and zero row sums."""
        if self._q is None:
            n = self.n_states
            src = np.repeat(np.arange(n), self.n_moves)
            dst = self.targets.ravel()
            val = self.rates.ravel()
            keep = (src != dst) & (val > 0)
            q = scipy.sparse.coo_matrix((val[keep], (src[keep], dst[keep])), shape=(n, n)).tocsr()
            exit_rates = np.asarray(q.sum(axis=1)).ravel()
            self._q = (q - scipy.sparse.diags(exit_rates)).tocsr()
        return self._q

    def exit_rates(self) -> np.ndarray:
        return -self.rate_matrix().diagonal()

    # serialization -----------------------------------------------------
    def to_json(self) -> str:
        states = ",\n    ".join(json.dumps(list(s)) for s in self.states)
        moves = ",\n    ".join(
            json.dumps({"id": mv.id, "inverse": mv.inverse_id}) for mv in self.moves)
        trans = ",\n    ".join(
            f"[{s}, {json.dumps(mid)}, {t}, {r:.16e}]" for s, mid, t, r in self.transitions)
        return ('{\n  "states": [\n    ' + states + '\n  ],\n'
                '  "moves": [\n    ' + moves + '\n  ],\n'
                '  "transitions": [\n    ' + trans + '\n  ]\n}\n')

    @classmethod
    def from_json(cls, text: str) -> "Generator":
        data = json.loads(text)
        states = [tuple(s) for s in data["states"]]
        moves = [Move(m["id"], m["inverse"]) for m in data["moves"]]
        kidx = {mv.id: k for k, mv in enumerate(moves)}
        n = len(states)
        rates = np.zeros((n, len(moves)))
        targets = np.tile(np.arange(n)[:, None], (1, len(moves)))
        for s, mid, t, r in data["transitions"]:
            rates[s, kidx[mid]] = float(r)
            targets[s, kidx[mid]] = t
        return cls(states, moves, rates, targets)


def build_generator(states: Iterable[State], moves: Sequence[Move],
                    rate_fn: Callable[[State, Move], float],
                    truncate: bool = False) -> Generator:
    """Enumerate rates and targets of every (state, move) pair.

    With ``truncate=True`` a move whose image is not a listed state acts
    as the identity while keeping its rate; otherwise such a move with a
    positive rate raises :class:`TargetOutsideSpace`.
    """
    states = [tuple(s) for s in states]
    index = {s: i for i, s in enumerate(states)}
    n, nm = len(states), len(moves)
    rates = np.zeros((n, nm))
    targets = np.tile(np.arange(n)[:, None], (1, nm)).astype(np.int64)
    for i, s in enumerate(states):
        for k, mv in enumerate(moves):
            r = float(rate_fn(s, mv))
            if not math.isfinite(r):
                raise NonFinite(f"rate of {mv.id} at {s} is {r}")
            if r < 0:
                raise NegativeRate(s, mv.id)
            image = mv(s)
            j = index.get(image)
            if j is None:
                if r > 0 and not truncate:
                    raise TargetOutsideSpace(s, mv.id)
                j = i
            rates[i, k] = r
            targets[i, k] = j
    gen = Generator(states, moves, rates, targets)
    _check_inverse_action(gen, moves)
    return gen


def _check_inverse_action(gen: Generator, moves: Sequence[Move]) -> None:
    ids = {mv.id for mv in moves}
    for s, mid, t, _ in gen.transitions:
        if s == t:
            continue
        k = gen.move_index[mid]
        inv = gen.moves[k].inverse_id
        if inv not in ids:
            continue  # reported by check_reversibility
        back = gen.moves[gen.move_index[inv]](gen.states[t])
        if back != gen.states[s]:
            raise MissingInverse(f"{inv} does not undo {mid} at {gen.states[s]}")


def truncate(states_in_box: Iterable[State], moves: Sequence[Move],
             rate_fn: Callable[[State, Move], float]) -> Generator:
    """Build a generator on a box, turning out-of-box moves into the identity."""
    return build_generator(states_in_box, moves, rate_fn, truncate=True)


def box_states(d: int, n: int) -> list[State]:
    """Lexicographically ordered configurations of {0..n}^d."""
    if n < 1:
        raise ValueError("box size must be at least 1")
    return [tuple(int(x) for x in s) for s in np.ndindex(*([n + 1] * d))]


# measures ------------------------------------------------------------------

def stationary_measure(gen: Generator) -> np.ndarray:
    """Normalized invariant vector m with m Q = 0."""
    n = gen.n_states
    if n == 0:
        return np.zeros(0)
    q = gen.rate_matrix()
    ncomp, _ = scipy.sparse.csgraph.connected_components(q != 0, directed=True, connection="strong")
    if ncomp > 1:
        raise Reducible(f"{ncomp} communicating classes")
    if n == 1:
        return np.ones(1)
    # replace one balance equation by the normalization constraint
    a = q.T.tolil()
    a[n - 1, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    m = scipy.sparse.linalg.spsolve(a.tocsc(), rhs)
    m = np.clip(m, 0.0, None)
    m /= m.sum()
    resid = np.abs(q.T @ m).max()
    if resid > 1e-10 * max(1.0, np.abs(q.diagonal()).max()):
        raise Reducible(f"stationary residual {resid:.3e}")
    return m


def normalize_weights(w: Sequence[float]) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return w / w.sum()


@dataclass
class ReversibilityReport:
    max_violation: float
    worst_state: State | None
    worst_move: str | None
    passed: bool


def check_reversibility(gen: Generator, m: np.ndarray, tol: float = 1e-10) -> ReversibilityReport:
    """Maximum detailed-balance defect |m(x)c(x,s) - m(sx)c(sx,s^-1)|."""
    m = np.asarray(m, dtype=float)
    if m.shape != (gen.n_states,):
        raise DimensionMismatch(f"measure of length {m.shape} for {gen.n_states} states")
    worst, where = 0.0, (None, None)
    for s, mid, t, r in gen.transitions:
        if s == t:
            continue
        inv = gen.inverse_index(gen.move_index[mid])
        back = gen.rates[t, inv] if gen.targets[t, inv] == s else 0.0
        v = abs(m[s] * r - m[t] * back)
        if v > worst:
            worst, where = v, (gen.states[s], mid)
    return ReversibilityReport(worst, where[0], where[1], worst <= tol)


# semigroup -----------------------------------------------------------------

def apply_generator(gen: Generator, f: np.ndarray) -> np.ndarray:
    """(Lf)(x) = sum_s c(x,s) (f(sx) - f(x))."""
    f = _as_vector(gen, f)
    return (gen.rates * (f[gen.targets] - f[:, None])).sum(axis=1)


def _as_vector(gen: Generator, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (gen.n_states,):
        raise DimensionMismatch(f"vector of shape {f.shape} for {gen.n_states} states")
    return f


def _poisson_cutoff(lam_t: float, tol: float) -> int:
    k = int(lam_t + 10 * math.sqrt(lam_t) + 10)
    while scipy.stats.poisson.sf(k, lam_t) >= tol:
        k *= 2
    lo, hi = 0, k
    while lo < hi:
        mid = (lo + hi) // 2
        if scipy.stats.poisson.sf(mid, lam_t) < tol:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _uniformize(gen: Generator, v: np.ndarray, t: float, tol: float, transpose: bool) -> np.ndarray:
    if t < 0:
        raise ValueError("time must be nonnegative")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    q = gen.rate_matrix()
    lam = float(gen.exit_rates().max()) if gen.n_states else 0.0
    if not math.isfinite(lam):
        raise NonFinite("exit rate")
    if t == 0 or lam == 0:
        return v.copy()
    # keep each uniformization window moderate so Poisson weights stay representable
    pieces = max(1, int(math.ceil(lam * t / 200.0)))
    dt = t / pieces
    p = scipy.sparse.identity(gen.n_states, format="csr") + q / lam
    if transpose:
        p = p.T.tocsr()
    piece_tol = tol / pieces
    kmax = _poisson_cutoff(lam * dt, piece_tol)
    weights = scipy.stats.poisson.pmf(np.arange(kmax + 1), lam * dt)
    out = v
    for _ in range(pieces):
        term = out
        acc = weights[0] * term
        for k in range(1, kmax + 1):
            term = p @ term
            acc = acc + weights[k] * term
        out = acc
    return out


def evolve(gen: Generator, f: np.ndarray, t: float, tol: float = 1e-12) -> np.ndarray:
    """S_t f by uniformization, accurate to ``tol`` in sup norm relative to |f|."""
    return _uniformize(gen, _as_vector(gen, f), t, tol, transpose=False)


def evolve_law(gen: Generator, mu: np.ndarray, t: float, tol: float = 1e-12) -> np.ndarray:
    """mu S_t: forward evolution of a probability vector."""
    return _uniformize(gen, _as_vector(gen, mu), t, tol, transpose=True)


def dense_semigroup(gen: Generator, t: float) -> np.ndarray:
    """Reference matrix exponential exp(tQ); intended for small chains only."""
    if gen.n_states > 200:
        raise ValueError("dense oracle limited to 200 states")
    return scipy.linalg.expm(t * gen.rate_matrix().toarray())
