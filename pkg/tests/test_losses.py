import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awgan.losses import (
    DiscreteDistribution,
    aw_value,
    bce_pair,
    discrete_kl,
    discriminator_pair,
    generator_loss,
    hinge_pair,
    minimax_value,
    optimal_discriminator,
    value_decomposition_check,
)
from awgan.nn import default_discriminator
from awgan.verify import grid_argmax, random_distribution

LN_HALF = math.log(0.5)


class TestBce:
    def test_zero_logits(self):
        pair = bce_pair(np.zeros(4), np.zeros(3))
        assert pair.real == pytest.approx(LN_HALF, abs=1e-15)
        assert pair.fake == pytest.approx(LN_HALF, abs=1e-15)

    def test_real_term_rises_to_zero(self):
        vals = [bce_pair(np.full(3, t), np.zeros(1)).real for t in (2.0, 4.0, 8.0)]
        assert vals[0] < vals[1] < vals[2] < 0
        assert vals[2] == pytest.approx(-math.log1p(math.exp(-8)), rel=1e-12)

    def test_matches_direct_formula(self):
        r, f = np.array([-1.5, 0.3, 2.0]), np.array([0.7, -0.2])
        pair = bce_pair(r, f)
        sig = lambda t: 1 / (1 + np.exp(-t))  # noqa: E731
        assert pair.real == pytest.approx(np.mean(np.log(sig(r))), rel=1e-13)
        assert pair.fake == pytest.approx(np.mean(np.log(1 - sig(f))), rel=1e-13)

    def test_gradients_are_separate(self):
        pair = bce_pair(np.array([0.0, 1.0]), np.array([0.0]))
        g_r = pair.real_grad()["logits"]
        g_f = pair.fake_grad()["logits"]
        # d/dt mean log sigmoid(t) = (1 - sigmoid(t)) / n
        np.testing.assert_allclose(g_r, [0.25, (1 - 1 / (1 + math.e ** -1)) / 2], rtol=1e-14)
        np.testing.assert_allclose(g_f, [-0.5], rtol=1e-14)


class TestHinge:
    def test_hand_value(self):
        assert hinge_pair(np.array([2.0, 0.5, -1.0]), np.array([-3.0])).real == pytest.approx(-2.5 / 3, abs=1e-15)

    def test_margin_satisfied(self):
        assert hinge_pair(np.array([1.0]), np.array([-2.0, -1.0])).fake == 0.0

    def test_saturated(self):
        pair = hinge_pair(np.array([1.0, 3.0]), np.array([-1.0, -5.0]))
        assert pair.real == pair.fake == 0.0
        assert not pair.real_grad()["logits"].any()
        assert not pair.fake_grad()["logits"].any()

    @settings(max_examples=50)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.lists(st.floats(-5, 5), min_size=1, max_size=8))
    def test_non_positive(self, r, f):
        pair = hinge_pair(np.array(r), np.array(f))
        assert pair.real <= 0 and pair.fake <= 0


class TestGeneratorLoss:
    def test_bce_at_zero(self):
        assert generator_loss(np.zeros(5), "bce-nonsaturating") == pytest.approx(-LN_HALF, abs=1e-15)

    def test_hinge_symmetric(self):
        assert generator_loss(np.array([1.0, -1.0]), "hinge") == 0.0

    @pytest.mark.parametrize("family", ["bce-nonsaturating", "hinge"])
    def test_descent_raises_fake_logits(self, family):
        from awgan.autodiff import Graph
        from awgan.losses import generator_term

        logits = np.array([-1.0, 0.2, 2.0])
        g = Graph()
        generator_term(g, g.param("logits"), family)
        g.forward({"logits": logits})
        grad = g.backward()["logits"]
        # A descent step moves logits along -grad; every entry should go up.
        assert np.all(-grad > 0)
        assert generator_loss(logits - 0.1 * grad, family) < generator_loss(logits, family)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            generator_loss(np.zeros(2), "wasserstein")


class TestDiscriminatorPair:
    @pytest.mark.parametrize("family", ["bce", "hinge"])
    def test_real_grad_ignores_fake_batch(self, family):
        disc = default_discriminator(1, hidden=8)
        rng = np.random.default_rng(0)
        real = rng.standard_normal((5, 2))
        a, _, _ = discriminator_pair(disc, real, rng.standard_normal((4, 2)), family)
        b, _, _ = discriminator_pair(disc, real, 10 * rng.standard_normal((7, 2)), family)
        for k, v in a.real_grad().items():
            assert np.array_equal(v, b.real_grad()[k])

    @pytest.mark.parametrize("family", ["bce", "hinge"])
    def test_fake_grad_ignores_real_batch(self, family):
        disc = default_discriminator(2, hidden=8)
        rng = np.random.default_rng(1)
        fake = rng.standard_normal((5, 2))
        a, _, _ = discriminator_pair(disc, rng.standard_normal((3, 2)), fake, family)
        b, _, _ = discriminator_pair(disc, rng.standard_normal((9, 2)), fake, family)
        for k, v in a.fake_grad().items():
            assert np.array_equal(v, b.fake_grad()[k])

    def test_both_graphs_share_parameter_names(self):
        pair, r, f = discriminator_pair(default_discriminator(0, hidden=4), np.ones((2, 2)), np.zeros((3, 2)), "bce")
        assert set(pair.real_grad()) == set(pair.fake_grad())
        assert r.shape == (2,) and f.shape == (3,)
        assert math.isfinite(pair.real) and math.isfinite(pair.fake)

    def test_maximization_convention(self):
        # Stored values are maximized: raising real logits raises L_r, lowering fake logits raises L_f.
        lo, hi = bce_pair(np.array([0.0]), np.array([0.0])), bce_pair(np.array([1.0]), np.array([-1.0]))
        assert hi.real > lo.real and hi.fake > lo.fake


class TestDistribution:
    def test_validation(self):
        with pytest.raises(ValueError):
            DiscreteDistribution(np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            DiscreteDistribution(np.array([1.2, -0.2]))
        with pytest.raises(ValueError):
            DiscreteDistribution(np.array([]))
        DiscreteDistribution(np.array([0.3, 0.7 + 5e-13]))


class TestOptimalDiscriminator:
    def test_equal_distributions(self):
        p = np.array([0.2, 0.3, 0.5])
        assert optimal_discriminator(p, p, 1.0, 1.0).tolist() == [0.5, 0.5, 0.5]

    def test_weighted_point(self):
        d = optimal_discriminator(np.array([0.6, 0.4]), np.array([0.4, 0.6]), 2.0, 1.0)
        assert d[0] == pytest.approx(0.75, abs=1e-15)
        assert grid_argmax(2 * 0.6, 1 * 0.4) == pytest.approx(0.75, abs=1e-5)

    def test_fake_free_point(self):
        d = optimal_discriminator(np.array([0.5, 0.5, 0.0]), np.array([0.0, 0.5, 0.5]), 1.0, 3.0)
        assert d[0] == 1.0 and d[2] == 0.0

    def test_outside_support_is_nan(self):
        d = optimal_discriminator(np.array([1.0, 0.0]), np.array([1.0, 0.0]), 1.0, 1.0)
        assert math.isnan(d[1])

    @pytest.mark.parametrize("w", [(0.0, 1.0), (1.0, -2.0)])
    def test_bad_weights(self, w):
        p = np.array([1.0])
        with pytest.raises(ValueError):
            optimal_discriminator(p, p, *w)
        with pytest.raises(ValueError):
            minimax_value(*w)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_matches_grid_search(self, seed):
        rng = np.random.default_rng(seed)
        pd, pg = random_distribution(rng, 3), random_distribution(rng, 3)
        w_r, w_f = rng.uniform(0.1, 10, 2)
        d = optimal_discriminator(pd, pg, w_r, w_f)
        for i in range(3):
            a, b = w_r * pd[i], w_f * pg[i]
            if a > 0 and b > 0:
                assert abs(d[i] - grid_argmax(a, b)) < 1e-5

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), bump=st.floats(-0.2, 0.2))
    def test_perturbation_never_improves(self, seed, bump):
        rng = np.random.default_rng(seed)
        pd, pg = random_distribution(rng, 4), random_distribution(rng, 4)
        w_r, w_f = rng.uniform(0.1, 10, 2)
        d = optimal_discriminator(pd, pg, w_r, w_f)
        both = (pd > 0) & (pg > 0)
        moved = np.where(both, np.clip(d + bump, 1e-9, 1 - 1e-9), d)
        assert aw_value(pd, pg, d, w_r, w_f) >= aw_value(pd, pg, moved, w_r, w_f) - 1e-12


class TestMinimax:
    def test_unit_weights(self):
        assert minimax_value(1.0, 1.0) == pytest.approx(-2 * math.log(2), abs=1e-15)
        p = np.array([0.1, 0.9])
        assert aw_value(p, p, np.full(2, 0.5), 1.0, 1.0) == pytest.approx(-1.386294361, abs=1e-9)

    @given(st.floats(0.01, 100))
    def test_homogeneous(self, c):
        assert minimax_value(c, c) == pytest.approx(c * minimax_value(1.0, 1.0), rel=1e-12)

    def test_vanishing_real_weight(self):
        assert abs(minimax_value(1e-300, 1.0)) < 1e-290

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_equals_value_at_optimum_when_equal(self, seed):
        rng = np.random.default_rng(seed)
        p = random_distribution(rng, 5)
        w_r, w_f = rng.uniform(0.1, 10, 2)
        d = optimal_discriminator(p, p, w_r, w_f)
        assert aw_value(p, p, d, w_r, w_f) == pytest.approx(minimax_value(w_r, w_f), rel=1e-12, abs=1e-12)


class TestDecomposition:
    def test_equal_distributions(self):
        p = np.array([0.25, 0.75])
        assert value_decomposition_check(p, p, 2.0, 0.5)[2] < 1e-12

    def test_disjoint_supports(self):
        lhs, rhs, res = value_decomposition_check(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 1.0, 1.0)
        assert lhs == 0.0
        assert rhs == pytest.approx(0.0, abs=1e-15)
        assert res < 1e-15

    def test_random_pairs(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            pd, pg = random_distribution(rng, 6), random_distribution(rng, 6)
            worst = max(worst, value_decomposition_check(pd, pg, *rng.uniform(0.1, 10, 2))[2])
        assert worst < 1e-9


class TestKl:
    def test_self(self):
        p = np.array([0.2, 0.8])
        assert discrete_kl(p, p) == 0.0

    def test_hand_value(self):
        assert discrete_kl(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(math.log(2), abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_gibbs(self, seed):
        rng = np.random.default_rng(seed)
        p = random_distribution(rng, 5)
        q = random_distribution(rng, 5, zero_prob=0.0)
        assert discrete_kl(p, q) >= 0.0

    def test_absolute_continuity(self):
        with pytest.raises(ValueError):
            discrete_kl(np.array([0.5, 0.5]), np.array([1.0, 0.0]))
