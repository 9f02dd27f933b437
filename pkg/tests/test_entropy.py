import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entrolab.chain import Move, build_generator
from entrolab.entropy import (
    PhiFamily,
    check_lemma_A1,
    csi_check,
    decay_curve,
    dirichlet_form,
    energy,
    entropy_second_derivative,
    estimate_best_constant,
    finite_difference_dissipation,
    fit_decay_rate,
    phi_entropy,
    random_positive,
    spectral_gap,
)
from entrolab.errors import DegenerateCurve, DomainError, FiniteDifferenceMismatch, NonPositiveF
from entrolab.models import bernoulli_laplace, build_irw, hardcore, poisson_v_minus, symmetric_v_plus
from entrolab.models.base import cycle_edges

PHI1, PHI15, PHI2 = (PhiFamily.alpha(a) for a in (1.0, 1.5, 2.0))
HALF = np.array([0.5, 0.5])
positive = st.floats(1e-3, 1e3, allow_nan=False)


def flip_chain():
    mv = Move("flip", "flip", lambda x: (-x[0],))
    return build_generator([(-1,), (1,)], [mv], lambda x, m: 1.0)


class TestPhi:
    def test_log_member_value(self):
        assert PHI1.phi(math.e) == pytest.approx(1.0)

    def test_alpha_one_limit(self):
        near = PhiFamily.alpha(1.0 + 1e-7)
        for a in (0.3, 1.0, 4.0):
            assert near.phi(a) == pytest.approx(PHI1.phi(a), abs=1e-6)

    def test_range_checked(self):
        with pytest.raises(ValueError):
            PhiFamily.alpha(2.5)

    def test_domain_guard(self):
        with pytest.raises(DomainError):
            PHI1.phi(0.0)

    def test_big_phi_diagonal(self):
        for phi in (PHI1, PHI15, PHI2):
            assert phi.big_phi(2.0, 2.0) == 0.0

    def test_big_phi_log(self):
        assert PHI1.big_phi(1.0, math.e) == pytest.approx(math.e - 1, rel=1e-15)

    @given(positive, positive)
    def test_big_phi_quadratic(self, a, b):
        assert PHI2.big_phi(a, b) == pytest.approx(2 * (b - a) ** 2, rel=1e-9, abs=1e-9)

    def test_quadratic_hessian(self):
        assert np.allclose(PHI2.hessian(0.7, 3.1), [[4, -4], [-4, 4]])
        assert np.allclose(np.linalg.eigvalsh(PHI2.hessian(0.7, 3.1)), [0, 8], atol=1e-12)

    @settings(max_examples=50)
    @given(positive, positive, st.sampled_from([1.0, 1.3, 1.7, 2.0]))
    def test_jacobian_matches_differences(self, a, b, alpha):
        phi = PhiFamily.alpha(alpha)
        ja, jb = phi.jac(a, b)
        ha, hb = 1e-6 * a, 1e-6 * b
        fa = (phi.big_phi(a + ha, b) - phi.big_phi(a - ha, b)) / (2 * ha)
        fb = (phi.big_phi(a, b + hb) - phi.big_phi(a, b - hb)) / (2 * hb)
        scale = abs(ja) + abs(jb) + abs(phi.big_phi(a, b)) / min(a, b)
        assert abs(ja - fa) <= 1e-5 * scale + 1e-8
        assert abs(jb - fb) <= 1e-5 * scale + 1e-8

    @given(positive, positive)
    def test_bregman_nonnegative(self, a, b):
        for phi in (PHI1, PHI15, PHI2):
            assert phi.bregman(a, b) >= -1e-12 * max(a, b)

    def test_bregman_far_ratio(self):
        assert PHI1.bregman(1e-200, 1.0) == pytest.approx(1.0)

    def test_custom_phi(self):
        phi = PhiFamily(lambda x: x * x, lambda x: 2 * x, lambda x: 2 + 0 * x, name="square")
        assert phi.big_phi(1.0, 3.0) == pytest.approx(8.0)
        assert phi.d3phi(2.0) == pytest.approx(0.0, abs=1e-6)


class TestEntropy:
    def test_constant_has_zero_entropy(self):
        assert phi_entropy(np.full(4, 2.0), np.full(4, 0.25), PHI1) == pytest.approx(0.0, abs=1e-15)

    @given(st.lists(positive, min_size=3, max_size=3))
    def test_quadratic_is_variance(self, values):
        f = np.array(values)
        m = np.array([0.2, 0.3, 0.5])
        var = float(m @ f ** 2 - (m @ f) ** 2)
        assert phi_entropy(f, m, PHI2) == pytest.approx(var, rel=1e-9, abs=1e-9)

    def test_two_point_log_entropy(self):
        expected = 1.5 * math.log(3) - 2 * math.log(2)
        assert phi_entropy(np.array([1.0, 3.0]), HALF, PHI1) == pytest.approx(expected, rel=1e-14)

    def test_nonpositive_rejected(self):
        with pytest.raises(NonPositiveF):
            phi_entropy(np.array([1.0, 0.0]), HALF, PHI1)


class TestDirichlet:
    def test_constant_gives_zero(self):
        assert dirichlet_form(flip_chain(), HALF, np.ones(2), np.array([0.0, 5.0])) == 0.0

    def test_flip_value(self):
        f = np.array([0.0, 1.0])
        assert dirichlet_form(flip_chain(), HALF, f, f) == pytest.approx(0.5)

    def test_energy_is_dirichlet_of_derivative(self):
        model = bernoulli_laplace(4, 2)
        f = random_positive(model.generator.n_states, 1)
        for phi in (PHI1, PHI15):
            lhs = dirichlet_form(model.generator, model.measure, phi.dphi(f), f)
            assert lhs == pytest.approx(energy(model.generator, model.measure, phi, f), rel=1e-12)


class TestCSI:
    def test_constant_passes_any_kappa(self):
        rep = csi_check(flip_chain(), HALF, PHI1, 1e6, np.ones(2))
        assert rep.passed and rep.slack == pytest.approx(0.0, abs=1e-12)

    def test_bernoulli_laplace_power_member(self):
        model = bernoulli_laplace(4, 2)
        gen, m = model.generator, model.measure
        assert all(csi_check(gen, m, PHI15, 4.0, random_positive(gen.n_states, 2, j)).passed
                   for j in range(500))

    def test_inflated_constant_fails(self):
        model = bernoulli_laplace(4, 2)
        gen, m = model.generator, model.measure
        assert not all(csi_check(gen, m, PHI15, 40.0, random_positive(gen.n_states, 2, j)).passed
                       for j in range(50))


class TestDecay:
    def test_curve_starts_at_entropy(self):
        f = np.array([0.5, 1.5])
        curve = decay_curve(flip_chain(), HALF, PHI2, f, [1e-12])
        assert curve[0][1] == pytest.approx(phi_entropy(f, HALF, PHI2), rel=1e-9)

    def test_constant_curve(self):
        assert all(h == 0 for _, h in decay_curve(flip_chain(), HALF, PHI1, np.ones(2), [0.1, 1.0]))

    def test_two_state_variance_rate(self):
        f = np.array([0.5, 1.5])
        grid = [0.1, 0.2, 0.5, 1.0]
        h0 = phi_entropy(f, HALF, PHI2)
        curve = decay_curve(flip_chain(), HALF, PHI2, f, grid)
        for t, h in curve:
            assert h == pytest.approx(math.exp(-4 * t) * h0, rel=1e-10)
        assert fit_decay_rate(curve)[0] == pytest.approx(4.0, abs=1e-6)

    def test_fit_exact_exponential(self):
        curve = [(t, math.exp(-3 * t)) for t in (0.0, 0.5, 1.0, 2.0)]
        assert fit_decay_rate(curve)[0] == pytest.approx(3.0, abs=1e-10)

    def test_fit_degenerate(self):
        with pytest.raises(DegenerateCurve):
            fit_decay_rate([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])

    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            decay_curve(flip_chain(), HALF, PHI2, np.array([1.0, 2.0]), [1.0, 0.5])


class TestBestConstant:
    def test_flip_quadratic(self):
        assert spectral_gap(flip_chain(), HALF) == pytest.approx(2.0)
        assert estimate_best_constant(flip_chain(), HALF, PHI2).value == pytest.approx(4.0)

    def test_beckner_ordering(self):
        model = hardcore(5, cycle_edges(5), 0.15)
        gen, m = model.generator, model.measure
        k1 = estimate_best_constant(gen, m, PHI1, restarts=3, steps=200).value
        k2 = estimate_best_constant(gen, m, PHI2).value
        assert k2 >= k1 - 1e-6

    def test_bernoulli_laplace_quadratic(self):
        model = bernoulli_laplace(4, 2)
        assert estimate_best_constant(model.generator, model.measure, PHI2).value >= 8 - 1e-9

    def test_cap(self):
        with pytest.raises(ValueError):
            estimate_best_constant(flip_chain(), HALF, PHI1, cap=1)


class TestSecondDerivative:
    def test_constant(self):
        assert entropy_second_derivative(flip_chain(), HALF, PHI1, np.ones(2)) == 0.0

    def test_two_state_quadratic(self):
        f = np.array([0.5, 1.5])
        val = entropy_second_derivative(flip_chain(), HALF, PHI2, f)
        # 2E(phi2'(f_t), f_t) = 4 E(f_t, f_t) = 4 * 0.5 * e^{-4t}; derivative -8 at t = 0
        assert val == pytest.approx(-8.0, rel=1e-12)

    def test_irw_instance(self):
        model = build_irw(symmetric_v_plus(lambda m: m * m, 0.5), poisson_v_minus(1.0), 2, 4)
        gen, m = model.generator, model.measure
        for j in range(5):
            f = random_positive(gen.n_states, 9, j)
            entropy_second_derivative(gen, m, PHI15, f)  # raises on mismatch

    def test_richardson_beats_plain_stencil(self):
        model = bernoulli_laplace(4, 2)
        gen, m = model.generator, model.measure
        f = np.array([0.07, 16.0, 1.0, 0.5, 3.0, 0.1])
        exact = entropy_second_derivative(gen, m, PHI1, f, check=False)
        plain = finite_difference_dissipation(gen, m, PHI1, f, 1e-4, richardson=False)
        rich = finite_difference_dissipation(gen, m, PHI1, f, 1e-4)
        assert abs(rich - exact) < abs(plain - exact)

    def test_mismatch_raised(self):
        with pytest.raises(FiniteDifferenceMismatch):
            # a coarse step leaves a 1.6e-4 relative error, above the default tolerance
            entropy_second_derivative(flip_chain(), HALF, PHI1, np.array([1.0, 3.0]), step=0.1)


class TestLemmaA1:
    @pytest.mark.parametrize("alpha", [1.0, 1.25, 1.5, 1.75, 2.0])
    def test_sampled_inequalities(self, alpha):
        rep = check_lemma_A1(alpha, 2000, seed=3)
        assert rep.passed, rep.failures[:3]
        assert rep.min_hessian_eig >= -1e-8

    def test_mlsi_hand_value(self):
        a, b = 1.0, math.e
        big = PHI1.big_phi(a, b)
        ja, jb = PHI1.jac(a, b)
        lhs = -2 * big - jb * (a - b) - ja * (b - a)
        assert lhs == pytest.approx((math.e - 1) * (math.e - 1 / math.e), rel=1e-14)
        assert lhs >= 2 * (math.e - 1)

    def test_diagonal_degenerate(self):
        big = PHI15.big_phi(2.0, 2.0)
        ja, jb = PHI15.jac(2.0, 2.0)
        assert big == 0 and ja == 0 and jb == 0
