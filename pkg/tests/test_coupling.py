import numpy as np
import pytest

from entrolab.chain import NULL, Move, apply_generator, build_generator
from entrolab.coupling import (
    CouplingRates,
    check_admissible,
    coupled_generator,
    independent_coupling,
    kappa_second,
    kappa_third,
    nonmerging_sum,
    nontrivial_seeds,
    organize_terms,
    synchronous_sum,
    verify_sufficient_condition,
)
from entrolab.entropy import PhiFamily, entropy_second_derivative, random_positive
from entrolab.errors import InadmissibleCoupling, NegativeCouplingRate, UnknownSeed
from entrolab.models import bernoulli_laplace, build_irw, hardcore, poisson_v_minus, symmetric_v_plus
from entrolab.models.base import cycle_edges
from entrolab.models.spin import build_glauber

PHIS = [PhiFamily.alpha(a) for a in (1.0, 1.5, 2.0)]


@pytest.fixture(scope="module")
def bl():
    return bernoulli_laplace(4, 2)


@pytest.fixture(scope="module")
def irw():
    return build_irw(symmetric_v_plus(lambda m: m * m, 0.5), poisson_v_minus(1.0), 2, 4)


def single_spin():
    return build_glauber(lambda s: 0.0, 0.0, 1)


class TestAdmissibility:
    def test_independent_coupling(self, bl):
        rep = check_admissible(independent_coupling(bl.generator), bl.generator)
        assert rep.passed and rep.max_row == 0 and rep.max_col == 0

    def test_model_couplings(self, bl, irw):
        for model in (bl, irw, hardcore(5, cycle_edges(5), 0.15), single_spin()):
            assert check_admissible(model.coupling, model.generator).passed

    def test_small_perturbation_named(self, bl):
        gen = bl.generator
        seed = nontrivial_seeds(gen)[3]
        cr = independent_coupling(gen)
        bumped = cr.with_entry(seed, seed[1], NULL, cr.rate(seed, seed[1], NULL) + 1e-6)
        rep = check_admissible(bumped, gen)
        assert not rep.passed
        assert rep.max_row == pytest.approx(1e-6)
        assert rep.worst_seed == (gen.states[seed[0]], gen.moves[seed[1]].id)

    def test_unknown_seed(self, bl):
        gen = bl.generator
        zero = next((s, k) for s in range(gen.n_states) for k in range(gen.n_moves)
                    if gen.rates[s, k] == 0)
        with pytest.raises(UnknownSeed):
            check_admissible(CouplingRates({zero: {(NULL, 0): 1.0}}), gen)
        with pytest.raises(UnknownSeed):
            check_admissible(CouplingRates({(gen.n_states, 0): {}}), gen)

    def test_negative_entry(self, bl):
        gen = bl.generator
        seed = nontrivial_seeds(gen)[0]
        with pytest.raises(NegativeCouplingRate):
            check_admissible(bl.coupling.with_entry(seed, 0, 1, -0.5), gen)

    def test_json_round_trip(self, bl):
        back = CouplingRates.from_json(bl.coupling.to_json(bl.generator), bl.generator)
        assert back.tables == bl.coupling.tables

    def test_missing_table(self, bl):
        with pytest.raises(InadmissibleCoupling):
            kappa_second(bl.generator, CouplingRates({}))


class TestCoupledGenerator:
    @pytest.mark.parametrize("which", ["model", "independent"])
    def test_marginals(self, bl, which):
        gen = bl.generator
        cr = bl.coupling if which == "model" else independent_coupling(gen)
        cg = coupled_generator(cr, gen)
        f = random_positive(gen.n_states, 4)
        lf = apply_generator(gen, f)
        first = np.array([f[a] for a, _ in cg.pairs])
        second = np.array([f[b] for _, b in cg.pairs])
        assert np.allclose(apply_generator(cg, first), [lf[a] for a, _ in cg.pairs], atol=1e-12)
        assert np.allclose(apply_generator(cg, second), [lf[b] for _, b in cg.pairs], atol=1e-12)

    def test_diagonal_absorbing(self, bl):
        cg = coupled_generator(bl.coupling, bl.generator)
        for p, (a, b) in enumerate(cg.pairs):
            if a != b:
                continue
            for j in range(cg.n_moves):
                if cg.rates[p, j] > 0:
                    a2, b2 = cg.pairs[cg.target(p, j)]
                    assert a2 == b2

    def test_independent_moves_one_copy(self, bl):
        cg = coupled_generator(independent_coupling(bl.generator), bl.generator)
        for p, (a, b) in enumerate(cg.pairs):
            for j in range(cg.n_moves):
                if cg.rates[p, j] > 0 and a != b:
                    a2, b2 = cg.pairs[cg.target(p, j)]
                    assert a2 == a or b2 == b


class TestConstants:
    def test_no_moving_seeds(self):
        gen = build_generator([(-1,), (1,)], [Move("flip", "flip", lambda x: (-x[0],))],
                              lambda x, m: 0.0)
        cr = CouplingRates({})
        assert kappa_second(gen, cr) == 0.0 and kappa_third(gen, cr) == 0.0

    def test_bernoulli_laplace(self, bl):
        assert kappa_second(bl.generator, bl.coupling) == 1.0
        assert kappa_third(bl.generator, bl.coupling) == 4.0

    def test_hardcore(self):
        model = hardcore(5, cycle_edges(5), 0.15)
        assert kappa_second(model.generator, model.coupling) == pytest.approx(0.15)

    def test_single_spin(self):
        model = single_spin()
        # each copy flips on its own at rate 1 and the pair merges
        assert kappa_second(model.generator, model.coupling) == 1.0
        assert kappa_third(model.generator, model.coupling) == 2.0

    def test_sufficient_condition_bernoulli_laplace(self, bl):
        rep = verify_sufficient_condition(bl.generator, bl.measure, bl.coupling, PHIS, 40, 0,
                                          claims={"phi_1": 4.0, "phi_1.5": 4.0, "phi_2": 4.0})
        assert rep.passed
        for name, entry in rep.per_phi.items():
            assert entry["kappa_prime_emp"] == pytest.approx(4.0, abs=1e-9)
        assert rep.per_phi["phi_1"]["implied"]["kappa_1"] == pytest.approx(6.0)
        assert rep.per_phi["phi_2"]["implied"]["kappa_alpha"] == pytest.approx(8.0)

    def test_overclaim_fails(self, bl):
        rep = verify_sufficient_condition(bl.generator, bl.measure, bl.coupling, PHIS[:1], 10, 0,
                                          claims={"phi_1": 4.5})
        assert not rep.passed


class TestOrganizer:
    def test_single_spin_matches_difference_quotient(self):
        model = single_spin()
        f = np.array([0.4, 2.5])
        for phi in PHIS:
            dec = organize_terms(model.generator, model.measure, model.coupling, phi, f)
            fd = entropy_second_derivative(model.generator, model.measure, phi, f)
            assert dec.full_derivative == pytest.approx(fd, rel=1e-10)

    @pytest.mark.parametrize("fixture", ["bl", "irw"])
    def test_bound_and_slack(self, request, fixture):
        model = request.getfixturevalue(fixture)
        gen, m, cr = model.generator, model.measure, model.coupling
        for phi in PHIS:
            for j in range(10):
                f = random_positive(gen.n_states, 21, j)
                dec = organize_terms(gen, m, cr, phi, f)
                exact = entropy_second_derivative(gen, m, phi, f)
                scale = abs(dec.kept_sum) + abs(dec.improvement) + 1.0
                assert dec.full_derivative == pytest.approx(exact, rel=1e-9, abs=1e-12 * scale)
                assert dec.full_derivative <= dec.bound + 1e-12 * scale
                assert dec.dropped_slack >= -1e-12 * scale
                assert dec.bound - dec.full_derivative == pytest.approx(dec.dropped_slack,
                                                                       abs=1e-10 * scale)
                assert dec.min_term_slack >= -1e-9

    def test_constant_f(self, bl):
        dec = organize_terms(bl.generator, bl.measure, bl.coupling, PHIS[0], np.ones(6))
        assert dec.full_derivative == 0 and dec.kept_sum == 0

    def test_cancellation_sums(self, bl):
        scale_f = random_positive(bl.generator.n_states, 5)
        for phi in PHIS:
            s = synchronous_sum(bl.generator, bl.measure, bl.coupling, phi, scale_f)
            assert abs(s) <= 1e-12
        model = hardcore(5, cycle_edges(5), 0.15)
        f = random_positive(model.generator.n_states, 5)
        assert abs(nonmerging_sum(model.generator, model.measure, model.coupling, PHIS[1], f)) <= 1e-12
