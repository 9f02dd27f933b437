"""Verification suites.  Each suite returns a SuiteResult; none writes files."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..chain import check_reversibility, stationary_measure
from ..coupling import (
    check_admissible,
    kappa_second,
    kappa_third,
    nonmerging_sum,
    organize_terms,
    synchronous_sum,
    verify_sufficient_condition,
)
from ..entropy import (
    PhiFamily,
    check_lemma_A1,
    csi_check,
    decay_curve,
    entropy_second_derivative,
    estimate_best_constant,
    finite_difference_dissipation,
    fit_decay_rate,
    phi_entropy,
    random_positive,
    spectral_gap,
)
from ..errors import DegenerateCurve, EntrolabError, NegativeCouplingRate
from ..models.base import Model
from .config import ExperimentConfig

LEMMA_ALPHAS = (1.0, 1.25, 1.5, 1.75, 2.0)

# frozen CSV schemas; bump SCHEMA_VERSION when any of these change
SCHEMA_VERSION = 1
CSV_SCHEMAS = {
    "reversibility": ["quantity", "value"],
    "admissibility": ["quantity", "value"],
    "csi": ["phi", "sample", "kappa", "entropy", "dissipation", "slack", "passed"],
    "decay": ["phi", "sample", "t", "entropy", "bound", "passed"],
    "convexity": ["phi", "sample", "organized", "finite_difference", "rel_error", "bound",
                  "min_term_slack", "passed"],
    "wasserstein": ["kind", "p", "t", "value", "reference", "passed"],
    "constants": ["phi", "kappa_theory", "kappa_best_est", "kappa_decay_fit", "kappa_prime_emp",
                  "kappa_implied", "twice_gap", "margin"],
    "lemmaA1": ["alpha", "samples", "min_hessian_eig", "min_beckner_slack", "min_mlsi_slack", "passed"],
    "cancellation": ["phi", "sample", "kind", "value", "scale", "passed"],
}


@dataclass
class SuiteResult:
    name: str
    status: str  # pass | fail | gated | error
    summary: dict = field(default_factory=dict)
    witness: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    @property
    def header(self) -> list:
        return CSV_SCHEMAS[self.name]


@dataclass
class Context:
    model: Model
    config: ExperimentConfig
    decay_fits: dict = field(default_factory=dict)

    @property
    def phis(self) -> list[PhiFamily]:
        return [PhiFamily.alpha(a) for a in self.config.phi_list]

    def sample(self, suite: str, j: int) -> np.ndarray:
        # independent stream per (seed, suite, j): suites can run in any order
        tag = sum(ord(c) * 31 ** k for k, c in enumerate(suite)) % 2 ** 31
        return random_positive(self.model.generator.n_states, self.config.seed, tag * 100003 + j)


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def reversibility(ctx: Context) -> SuiteResult:
    gen, m = ctx.model.generator, ctx.model.measure
    rep = check_reversibility(gen, m)
    stat = stationary_measure(gen)
    drift = float(np.abs(stat - m).max())
    ok = rep.passed and drift <= 1e-9
    witness = {}
    if rep.worst_state is not None:
        witness = {"state": list(rep.worst_state), "move": rep.worst_move}
    rows = [["max_violation", rep.max_violation], ["stationary_drift", drift],
            ["n_states", gen.n_states], ["n_moves", gen.n_moves]]
    return SuiteResult("reversibility", _status(ok),
                       {"max_violation": rep.max_violation, "stationary_drift": drift}, witness, rows)


def admissibility(ctx: Context) -> SuiteResult:
    try:
        rep = check_admissible(ctx.model.coupling, ctx.model.generator)
    except NegativeCouplingRate as exc:
        state, move, *_, value = exc.args[0]
        return SuiteResult("admissibility", "fail", {"negative_rate": value},
                           {"state": list(state), "move": move}, [["negative_rate", value]])
    witness = {}
    if rep.worst_seed is not None:
        witness = {"state": list(rep.worst_seed[0]), "move": rep.worst_seed[1]}
    rows = [["max_row_error", rep.max_row], ["max_col_error", rep.max_col],
            ["seeds", len(ctx.model.coupling.seeds)]]
    return SuiteResult("admissibility", _status(rep.passed),
                       {"max_row_error": rep.max_row, "max_col_error": rep.max_col}, witness, rows)


def csi(ctx: Context) -> SuiteResult:
    gen, m = ctx.model.generator, ctx.model.measure
    rows, worst, ok = [], None, True
    for phi in ctx.phis:
        kappa = ctx.model.kappas.for_phi(phi)
        for j in range(ctx.config.samples_for("csi")):
            rep = csi_check(gen, m, phi, kappa, ctx.sample("csi", j))
            rel = rep.slack / max(1.0, rep.dirichlet)
            rows.append([phi.name, j, kappa, rep.entropy, rep.dirichlet, rep.slack, rep.passed])
            ok = ok and rep.passed
            if worst is None or rel < worst[0]:
                worst = (rel, phi.name, j)
    return SuiteResult("csi", _status(ok), {"min_relative_slack": worst[0]},
                       {"phi": worst[1], "sample": worst[2]}, rows)


def decay(ctx: Context) -> SuiteResult:
    gen, m = ctx.model.generator, ctx.model.measure
    tol = float(ctx.config.options.get("uniformization_tol", 1e-10))
    rows, ok, fits, worst = [], True, {}, None
    for phi in ctx.phis:
        kappa = ctx.model.kappas.for_phi(phi)
        rates = []
        for j in range(ctx.config.samples_for("decay")):
            f = ctx.sample("decay", j)
            h0 = phi_entropy(f, m, phi)
            curve = decay_curve(gen, m, phi, f, ctx.config.t_grid, tol)
            for t, h in curve:
                bound = math.exp(-kappa * t) * h0
                good = h <= bound * (1 + 1e-6) + 1e-15
                ok = ok and good
                rows.append([phi.name, j, t, h, bound, good])
                ratio = h / bound if bound > 0 else 0.0
                if worst is None or ratio > worst[0]:
                    worst = (ratio, phi.name, j, t)
            try:
                rates.append(fit_decay_rate([(0.0, h0)] + curve)[0])
            except DegenerateCurve:
                pass
        fits[phi.name] = min(rates) if rates else None
    return SuiteResult("decay", _status(ok), {"kappa_decay_fit": fits, "max_ratio_to_bound": worst[0]},
                       {"phi": worst[1], "sample": worst[2], "t": worst[3]}, rows)


def convexity(ctx: Context) -> SuiteResult:
    """Organizer identity against finite differences, plus the convexity bound."""
    gen, m, cr = ctx.model.generator, ctx.model.measure, ctx.model.coupling
    rows, ok, worst = [], True, None
    for phi in ctx.phis:
        for j in range(ctx.config.samples_for("convexity")):
            f = ctx.sample("convexity", j)
            org = organize_terms(gen, m, cr, phi, f)
            analytic = entropy_second_derivative(gen, m, phi, f, check=False)
            fd = finite_difference_dissipation(gen, m, phi, f, 1e-4)
            rel = abs(org.full_derivative - fd) / max(abs(fd), 1e-300)
            ident = abs(org.full_derivative - analytic) <= 1e-9 * max(1.0, abs(analytic))
            tol = 1e-9 * max(1.0, abs(org.bound))
            good = ident and rel <= 1e-5 and org.min_term_slack >= -1e-9 \
                and org.full_derivative <= org.bound + tol
            ok = ok and good
            rows.append([phi.name, j, org.full_derivative, fd, rel, org.bound, org.min_term_slack, good])
            if worst is None or rel > worst[0]:
                worst = (rel, phi.name, j)
    return SuiteResult("convexity", _status(ok), {"max_rel_error": worst[0]},
                       {"phi": worst[1], "sample": worst[2]}, rows)


def wasserstein(ctx: Context) -> SuiteResult:
    from .. import transport as tr

    model = ctx.model
    gen = model.generator
    rows, ok, summary, witness = [], True, {}, {}
    if model.family == "irw":
        n, d = model.params["n"], model.params["d"]
        centre = tuple([max(1, n // 3)] * d)
        s = gen.index[centre]
        kp, km = model.extras["kappa_plus"][(s, 0)], model.extras["kappa_minus"][(s, 0)]
        if kp < 0 or km < 0:
            return SuiteResult("wasserstein", "fail", {"reason": "kappa+ or kappa- negative at the probe state"},
                               {"state": list(centre)})
        other = gen.target(s, 0)
        for p in (1.0, 2.0):
            for t in (1e-2, 1e-3):
                plan = tr.with_order(tr.neighbor_optimal_coupling(model, s, 0, t), p)
                mu, nu = tr.one_jump_law(gen, s, t), tr.one_jump_law(gen, other, t)
                w, _ = tr.wasserstein_p(mu, nu, p)
                same = abs(plan.cost - w ** p) <= 1e-10
                mono = tr.check_cyclical_monotonicity(plan, p).passed
                slope = (1 - w ** p) / t
                near = abs(slope - (kp + km)) <= 5 * t * max(1.0, kp + km)
                ok = ok and same and mono and near
                rows.append(["one_jump_cost", p, t, plan.cost, w ** p, same and mono])
                rows.append(["small_t_slope", p, t, slope, kp + km, near])
        far = tuple(c + 1 if k == 0 else c for k, c in enumerate(centre))
        mu = tr.DiscreteLaw.dirac(gen.states, s)
        nu = tr.DiscreteLaw.dirac(gen.states, gen.index[far])
        grid = ctx.config.options.get("contraction_t_grid", [0.05, 0.1, 0.2])
        try:
            rep = tr.contraction_check(model, mu, nu, 1.0, grid)
        except EntrolabError as exc:
            return SuiteResult("wasserstein", "error", {"error": f"{type(exc).__name__}: {exc}"}, {}, rows)
        for t, wt, bound, _ in rep.rows:
            rows.append(["contraction", 1.0, t, wt, bound, wt <= bound * (1 + 1e-6) + 1e-15])
        ok = ok and rep.passed
        summary = {"kappa": rep.kappa, "kappa_emp": rep.kappa_emp, "leak": rep.leak,
                   "kappa_plus_minus": kp + km}
        witness = {"state": list(centre)}
    else:
        # generic check on the first seed: exact LP between one-jump laws
        s, k = model.coupling.seeds[0]
        other = gen.target(s, k)
        t = 0.5 / max(float(gen.exit_rates().max()), 1e-300)
        mu, nu = tr.one_jump_law(gen, s, t), tr.one_jump_law(gen, other, t)
        for p in (1.0, 2.0):
            w, plan = tr.wasserstein_p(mu, nu, p)
            r, c = plan.marginals(gen.n_states)
            resid = max(np.abs(r - mu.weights).max(), np.abs(c - nu.weights).max())
            mono = tr.check_cyclical_monotonicity(plan, p).passed
            ok = ok and mono and resid <= 1e-10
            rows.append(["one_jump_lp", p, t, w, resid, mono and resid <= 1e-10])
        summary = {"seed_state": list(gen.states[s]), "seed_move": gen.moves[k].id}
    return SuiteResult("wasserstein", _status(ok), summary, witness, rows)


def constants(ctx: Context) -> SuiteResult:
    gen, m, cr = ctx.model.generator, ctx.model.measure, ctx.model.coupling
    kr = ctx.model.kappas
    gap2 = 2 * spectral_gap(gen, m)
    claims = {phi.name: kr.kappa for phi in ctx.phis}
    suff = verify_sufficient_condition(gen, m, cr, ctx.phis, ctx.config.samples_for("constants"),
                                       ctx.config.seed, claims)
    fits = ctx.decay_fits
    rows, ok = [], True
    restarts = int(ctx.config.options.get("best_constant_restarts", 4))
    for phi in ctx.phis:
        granted = kr.for_phi(phi)
        best = estimate_best_constant(gen, m, phi, restarts=restarts, steps=300, seed=ctx.config.seed).value
        kp = suff.per_phi[phi.name]["kappa_prime_emp"]
        implied = suff.per_phi[phi.name]["implied"]
        implied_val = implied.get("kappa_1", implied.get("kappa_alpha", kp))
        margin = best - granted
        ok = ok and margin >= -1e-6 and suff.per_phi[phi.name]["passed"]
        rows.append([phi.name, granted, best, fits.get(phi.name), kp, implied_val, gap2, margin])
    summary = {"kappa_second": suff.kappa_second, "kappa_third": suff.kappa_third, "twice_gap": gap2,
               "kappa": kr.kappa, "kappa_1": kr.kappa_1, "kappa_2": kr.kappa_alpha(2.0),
               "kappa_bar": kr.kappa_bar}
    return SuiteResult("constants", _status(ok), summary, {}, rows)


def lemma_a1(ctx: Context) -> SuiteResult:
    n = int(ctx.config.options.get("lemma_samples", 10_000))
    rows, ok, fails = [], True, []
    for alpha in LEMMA_ALPHAS:
        rep = check_lemma_A1(alpha, n, ctx.config.seed)
        ok = ok and rep.passed
        fails += [list(f) for f in rep.failures[:3]]
        rows.append([alpha, n, rep.min_hessian_eig, rep.min_beckner_slack, rep.min_mlsi_slack, rep.passed])
    return SuiteResult("lemmaA1", _status(ok), {"alphas": list(LEMMA_ALPHAS), "samples": n},
                       {"failures": fails} if fails else {}, rows)


def cancellation(ctx: Context) -> SuiteResult:
    gen, m, cr = ctx.model.generator, ctx.model.measure, ctx.model.coupling
    kind = ctx.model.cancellation
    total = synchronous_sum if kind == "synchronous" else nonmerging_sum
    rows, ok, worst = [], True, None
    for phi in ctx.phis:
        for j in range(ctx.config.samples_for("cancellation")):
            f = ctx.sample("cancellation", j)
            val = total(gen, m, cr, phi, f)
            scale = max(1.0, abs(organize_terms(gen, m, cr, phi, f).kept_sum))
            good = abs(val) <= 1e-10 * scale
            ok = ok and good
            rows.append([phi.name, j, kind, val, scale, good])
            if worst is None or abs(val) / scale > worst[0]:
                worst = (abs(val) / scale, phi.name, j)
    return SuiteResult("cancellation", _status(ok), {"kind": kind, "max_relative": worst[0]},
                       {"phi": worst[1], "sample": worst[2]}, rows)


SUITE_FUNCTIONS = {
    "reversibility": reversibility, "admissibility": admissibility, "csi": csi, "decay": decay,
    "convexity": convexity, "wasserstein": wasserstein, "constants": constants,
    "lemmaA1": lemma_a1, "cancellation": cancellation,
}
