"""Convex entropies, Dirichlet forms and functional-inequality checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.special
import scipy.sparse.linalg

from .chain import Generator, apply_generator, evolve
from .errors import (
    DegenerateCurve,
    DimensionMismatch,
    DomainError,
    EigenFailure,
    FiniteDifferenceMismatch,
    FormMismatch,
    NonPositiveF,
)

LOWER, UPPER = 1e-300, 1e300


def _check_domain(*xs):
    for x in xs:
        x = np.asarray(x)
        if np.any(~(x > LOWER)) or np.any(~(x < UPPER)):
            raise DomainError("arguments must lie in (1e-300, 1e300)")


class PhiFamily:
    """Convex function phi with the derivatives needed by the library.

    Use :meth:`alpha` for the power family (alpha = 1 is a log a - a + 1)
    or pass callables for a custom convex function.  ``d3phi`` is only used
    for the Hessian of the two-point function.
    """

    def __init__(self, phi, dphi, d2phi, d3phi=None, name="custom", alpha=None):
        self._phi, self._dphi, self._d2phi, self._d3phi = phi, dphi, d2phi, d3phi
        self.name = name
        self.alpha_value = alpha

    @classmethod
    def alpha(cls, a: float) -> "PhiFamily":
        if not 1.0 <= a <= 2.0:
            raise ValueError("alpha must lie in [1, 2]")
        if abs(a - 1.0) < 1e-12:
            return cls(
                lambda x: x * np.log(x) - x + 1.0,
                np.log,
                lambda x: 1.0 / x,
                lambda x: -1.0 / x ** 2,
                name="phi_1", alpha=1.0)
        return cls(
            lambda x: (x ** a - x) / (a - 1.0) - x + 1.0,
            lambda x: (a * x ** (a - 1.0) - 1.0) / (a - 1.0) - 1.0,
            lambda x: a * x ** (a - 2.0),
            lambda x: a * (a - 2.0) * x ** (a - 3.0),
            name=f"phi_{a:g}", alpha=a)

    @property
    def is_log(self) -> bool:
        return self.alpha_value == 1.0

    def __repr__(self):
        return f"PhiFamily({self.name})"

    def phi(self, a):
        _check_domain(a)
        return self._phi(np.asarray(a, dtype=float))

    def dphi(self, a):
        _check_domain(a)
        return self._dphi(np.asarray(a, dtype=float))

    def d2phi(self, a):
        _check_domain(a)
        return self._d2phi(np.asarray(a, dtype=float))

    def d3phi(self, a):
        _check_domain(a)
        a = np.asarray(a, dtype=float)
        if self._d3phi is not None:
            return self._d3phi(a)
        h = 1e-5 * a
        return (self._d2phi(a + h) - self._d2phi(a - h)) / (2 * h)

    def bregman(self, a, b):
        """phi(a) - phi(b) - phi'(b)(a - b), computed to avoid cancellation."""
        _check_domain(a, b)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.is_log:
            r = a / b
            u = (a - b) / b
            near = np.abs(u) < 0.5
            # log1p keeps accuracy near a = b; xlogy copes with r underflowing to 0
            close = (1.0 + u) * np.log1p(np.where(near, u, 0.0)) - u
            far = scipy.special.xlogy(r, r) - r + 1.0
            return b * np.where(near, close, far)
        if self.alpha_value is not None:
            al = self.alpha_value
            return (a ** al - b ** al - al * b ** (al - 1.0) * (a - b)) / (al - 1.0)
        return self._phi(a) - self._phi(b) - self._dphi(b) * (a - b)

    def big_phi(self, a, b):
        """(phi'(b) - phi'(a)) (b - a)."""
        _check_domain(a, b)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.is_log:
            return np.log(b / a) * (b - a)
        return (self._dphi(b) - self._dphi(a)) * (b - a)

    def jac(self, a, b):
        """Partial derivatives (d/da, d/db) of big_phi."""
        _check_domain(a, b)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        dd = self._dphi(b) - self._dphi(a)
        if self.is_log:
            dd = np.log(b / a)
        return -self._d2phi(a) * (b - a) - dd, self._d2phi(b) * (b - a) + dd

    def hessian(self, a: float, b: float) -> np.ndarray:
        """2x2 Hessian of big_phi at (a, b)."""
        _check_domain(a, b)
        h_aa = -self.d3phi(a) * (b - a) + 2 * self._d2phi(a)
        h_bb = self.d3phi(b) * (b - a) + 2 * self._d2phi(b)
        h_ab = -self._d2phi(a) - self._d2phi(b)
        return np.array([[h_aa, h_ab], [h_ab, h_bb]], dtype=float)


def big_phi(phi: PhiFamily, a, b):
    return phi.big_phi(a, b)


def _positive(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if np.any(~(f > 0)):
        raise NonPositiveF("f must be strictly positive")
    return f


def phi_entropy(f, m, phi: PhiFamily) -> float:
    """sum phi(f) m - phi(sum f m), evaluated as a mean Bregman divergence."""
    f = _positive(f)
    m = np.asarray(m, dtype=float)
    if f.shape != m.shape:
        raise DimensionMismatch("f and m differ in shape")
    mean = float(f @ m)
    return float(phi.bregman(f, mean) @ m)


def dirichlet_form(gen: Generator, m, f, g, rtol: float = 1e-9) -> float:
    """E(f, g) = -sum g (Lf) m, cross-checked against the symmetric gradient form."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    m = np.asarray(m, dtype=float)
    if not (f.shape == g.shape == m.shape == (gen.n_states,)):
        raise DimensionMismatch("vectors must match the state space")
    lf = apply_generator(gen, f)
    direct = -float(np.sum(g * lf * m))
    grad_f = f[gen.targets] - f[:, None]
    grad_g = g[gen.targets] - g[:, None]
    sym = 0.5 * float(np.sum(gen.rates * grad_f * grad_g * m[:, None]))
    scale = max(abs(direct), abs(sym))
    floor = 1e-12 * max(1.0, float(np.sum(np.abs(g * lf) * m)))
    if abs(direct - sym) > rtol * scale + floor:
        raise FormMismatch(f"generator form {direct!r} vs gradient form {sym!r}")
    return direct


def energy(gen: Generator, m, phi: PhiFamily, f) -> float:
    """E(phi'(f), f) as half the sum of c * Phi(f(x), f(sx)) * m."""
    f = _positive(f)
    vals = phi.big_phi(f[:, None], f[gen.targets])
    return 0.5 * float(np.sum(gen.rates * vals * np.asarray(m)[:, None]))


def _energy_grad(gen: Generator, m, phi: PhiFamily, f) -> np.ndarray:
    da, db = phi.jac(f[:, None], f[gen.targets])
    w = 0.5 * gen.rates * np.asarray(m)[:, None]
    grad = (w * da).sum(axis=1)
    np.add.at(grad, gen.targets.ravel(), (w * db).ravel())
    return grad


def _entropy_grad(m, phi: PhiFamily, f) -> np.ndarray:
    mean = float(f @ m)
    return (phi.dphi(f) - phi.dphi(mean)) * m


def within(lhs: float, rhs: float, rtol: float = 1e-9, atol: float = 1e-12) -> bool:
    """lhs <= rhs up to relative tolerance against the larger side."""
    return lhs - rhs <= max(rtol * max(abs(lhs), abs(rhs)), atol)


@dataclass
class EntropyReport:
    entropy: float
    dirichlet: float
    slack: float
    passed: bool


def csi_check(gen: Generator, m, phi: PhiFamily, kappa: float, f) -> EntropyReport:
    """Check kappa * H(f) <= E(phi'(f), f)."""
    ent = phi_entropy(f, m, phi)
    dir_ = energy(gen, m, phi, f)
    slack = dir_ - kappa * ent
    return EntropyReport(ent, dir_, slack, slack >= -1e-9 * max(1.0, dir_))


def random_positive(n: int, seed: int, index: int = 0, spread: float = 3.0) -> np.ndarray:
    """exp(U) with U uniform on [-spread, spread] from an independent stream."""
    rng = np.random.default_rng([seed, index])
    return np.exp(rng.uniform(-spread, spread, size=n))


def decay_curve(gen: Generator, m, phi: PhiFamily, f, t_grid: Sequence[float],
                tol: float = 1e-12) -> list[tuple[float, float]]:
    """Entropy of S_t f along an increasing time grid."""
    f = _positive(f)
    ts = list(t_grid)
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("time grid must be increasing")
    out = []
    cur, t_prev = f, 0.0
    for t in ts:
        cur = evolve(gen, cur, t - t_prev, tol)
        t_prev = t
        out.append((float(t), phi_entropy(cur, m, phi)))
    return out


def fit_decay_rate(curve, floor: float = 1e-13) -> tuple[float, float]:
    """Least-squares exponential rate of an entropy curve, with RMS residual."""
    pts = [(t, h) for t, h in curve if h > floor]
    if len(pts) < 3:
        raise DegenerateCurve("fewer than three positive entropies")
    t = np.array([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(t, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * t + intercept)) ** 2)))
    return -float(slope), resid


def spectral_gap(gen: Generator, m) -> float:
    """Smallest nonzero eigenvalue of -L in L^2(m)."""
    m = np.asarray(m, dtype=float)
    root = np.sqrt(m)
    q = gen.rate_matrix()
    n = gen.n_states
    if n < 2:
        raise EigenFailure("need at least two states")
    try:
        if n <= 2500:
            s = (root[:, None] * q.toarray()) / root[None, :]
            s = -(s + s.T) / 2
            vals = scipy.linalg.eigvalsh(s)
        else:
            d = scipy.sparse.diags(root)
            dinv = scipy.sparse.diags(1 / root)
            s = -(d @ q @ dinv)
            s = (s + s.T) / 2
            vals = scipy.sparse.linalg.eigsh(s, k=2, sigma=-1e-9, which="LM")[0]
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackError) as exc:
        raise EigenFailure(str(exc)) from exc
    vals = np.sort(vals)
    return float(vals[1])


@dataclass
class BestConstant:
    value: float
    method: str
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)


def estimate_best_constant(gen: Generator, m, phi: PhiFamily, restarts: int = 8,
                           steps: int = 400, seed: int = 0, cap: int = 5000) -> BestConstant:
    """Upper-bound estimate of the best constant in kappa H(f) <= E(phi'(f), f).

    For the quadratic member this is exactly twice the spectral gap.  For
    other phi the ratio is minimized over f = exp(u) by L-BFGS from random
    starts; the near-constant limit (twice the gap) is also a candidate,
    since the ratio tends to it along the slowest eigenvector.
    """
    if gen.n_states > cap:
        raise ValueError(f"state count {gen.n_states} exceeds cap {cap}")
    m = np.asarray(m, dtype=float)
    gap2 = 2.0 * spectral_gap(gen, m)
    if phi.alpha_value == 2.0:
        return BestConstant(gap2, "eigen")

    def ratio_and_grad(u):
        u = u - float(u @ m)
        f = np.exp(u)
        ent = phi_entropy(f, m, phi)
        if ent <= 1e-300:
            return gap2, np.zeros_like(u)
        en = energy(gen, m, phi, f)
        g = (_energy_grad(gen, m, phi, f) * ent - en * _entropy_grad(m, phi, f)) / ent ** 2
        g = g * f
        g = g - m * g.sum()  # gradient of the centring map
        return en / ent, g

    best, ok = gap2, True
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        u0 = rng.uniform(-2, 2, size=gen.n_states)
        res = scipy.optimize.minimize(ratio_and_grad, u0, jac=True, method="L-BFGS-B",
                                      bounds=[(-25.0, 25.0)] * gen.n_states,
                                      options={"maxiter": steps})
        ok = ok and bool(res.success)
        best = min(best, float(res.fun))
    return BestConstant(best, "optimize", ok, {"twice_gap": gap2})


def _two_energy(gen, m, phi, f):
    return 2.0 * energy(gen, m, phi, f)


def entropy_second_derivative(gen: Generator, m, phi: PhiFamily, f, step: float = 1e-4,
                              rtol: float = 1e-5, check: bool = True) -> float:
    """d/dt 2E(phi'(S_t f), S_t f) at t = 0, checked by a centred difference."""
    f = _positive(f)
    m = np.asarray(m, dtype=float)
    lf = apply_generator(gen, f)
    da, db = phi.jac(f[:, None], f[gen.targets])
    terms = gen.rates * (da * lf[:, None] + db * lf[gen.targets]) * m[:, None]
    value = float(terms.sum())
    if check:
        fd = finite_difference_dissipation(gen, m, phi, f, step)
        scale = max(abs(value), abs(fd))
        floor = 1e-10 * max(1.0, float(np.abs(terms).sum()))
        if abs(value - fd) > rtol * scale + floor:
            raise FiniteDifferenceMismatch(f"analytic {value!r} vs finite difference {fd!r}")
    return value


def finite_difference_dissipation(gen: Generator, m, phi: PhiFamily, f, step: float = 1e-4,
                                  richardson: bool = True) -> float:
    """Centred difference of t -> 2E(phi'(S_t f), S_t f) at t = 0.

    Five-point stencil at ``step``; with ``richardson`` the stencil at
    step/2 is combined with it to cancel the step^4 term, which matters for
    steep f whose local time scale is only a few steps.  The evolved
    functions come from Krylov exponentials, which also handle the small
    negative times of the stencil.
    """
    q = gen.rate_matrix()

    def value(t):
        return _two_energy(gen, m, phi, scipy.sparse.linalg.expm_multiply(q * t, f))

    def stencil(h):
        return (-value(2 * h) + 8 * value(h) - 8 * value(-h) + value(-2 * h)) / (12 * h)

    coarse = stencil(step)
    if not richardson:
        return coarse
    return (16 * stencil(step / 2) - coarse) / 15


@dataclass
class LemmaA1Report:
    alpha: float
    samples: int
    min_hessian_eig: float
    min_beckner_slack: float
    min_mlsi_slack: float | None
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def _log_uniform(rng, n, lo=1e-3, hi=1e3):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size=n))


def check_lemma_A1(alpha: float, num_samples: int, seed: int) -> LemmaA1Report:
    """Sample the two-point inequalities behind the Beckner and MLSI improvements.

    Checked on log-uniform points of (1e-3, 1e3): joint convexity of Phi,
    the Beckner improvement with a' = b', and for alpha = 1 the MLSI
    improvement with right side 2 Phi(a, b).  Slacks are reported
    relative to the magnitude of the individual terms.
    """
    phi = PhiFamily.alpha(alpha)
    rng = np.random.default_rng([seed, int(round(alpha * 1000))])
    a = _log_uniform(rng, num_samples)
    b = _log_uniform(rng, num_samples)
    a2 = _log_uniform(rng, num_samples)
    failures = []

    # (i) convexity through the closed-form Hessian
    d2a, d2b = phi.d2phi(a), phi.d2phi(b)
    d3a, d3b = phi.d3phi(a), phi.d3phi(b)
    h_aa = -d3a * (b - a) + 2 * d2a
    h_bb = d3b * (b - a) + 2 * d2b
    h_ab = -d2a - d2b
    tr = h_aa + h_bb
    disc = np.sqrt(((h_aa - h_bb) / 2) ** 2 + h_ab ** 2)
    lam_max = tr / 2 + disc
    det = h_aa * h_bb - h_ab ** 2
    # smallest eigenvalue via det / lam_max avoids cancellation
    lam_min = np.where(lam_max > 0, det / np.where(lam_max > 0, lam_max, 1.0), tr / 2 - disc)
    norm = np.sqrt(h_aa ** 2 + h_bb ** 2 + 2 * h_ab ** 2)
    lam_tol = 1e-8 * norm
    rel_eig = lam_min / norm
    bad = np.nonzero(lam_min < -lam_tol)[0]
    failures += [("hessian", float(a[i]), float(b[i])) for i in bad[:10]]

    # (ii) Beckner improvement with a' = b'
    big = phi.big_phi(a, b)
    ja, jb = phi.jac(a, b)
    t1, t2 = ja * (a2 - a), jb * (a2 - b)
    lhs = -big - t1 - t2
    rhs = (alpha - 1.0) * big
    scale = np.abs(big) + np.abs(t1) + np.abs(t2) + np.abs(rhs)
    slack = lhs - rhs
    bad = np.nonzero(slack < -np.maximum(1e-9 * scale, 1e-12))[0]
    failures += [("beckner", float(a[i]), float(b[i]), float(a2[i])) for i in bad[:10]]
    beck = float(np.min(slack / np.maximum(scale, 1e-300)))

    mlsi = None
    if abs(alpha - 1.0) < 1e-12:
        u1 = -big - jb * (a - b)
        u2 = -big - ja * (b - a)
        lhs = u1 + u2
        rhs = 2 * big
        scale = 2 * np.abs(big) + np.abs(jb * (a - b)) + np.abs(ja * (b - a)) + np.abs(rhs)
        slack = lhs - rhs
        bad = np.nonzero(slack < -np.maximum(1e-9 * scale, 1e-12))[0]
        failures += [("mlsi", float(a[i]), float(b[i])) for i in bad[:10]]
        mlsi = float(np.min(slack / np.maximum(scale, 1e-300)))

    return LemmaA1Report(alpha, num_samples, float(np.min(rel_eig)), beck, mlsi, failures)
