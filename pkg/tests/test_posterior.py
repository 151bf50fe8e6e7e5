"""MAP fitting, Laplace covariance, and sum-to-zero conditioning.

Reference oracles:

* ``oracle_objective`` assembles the negative log posterior from
  ``scipy.stats.norm.logcdf`` with literal loops -- independent of the
  vectorized library path.
* Finite differences of the oracle check the analytic gradient; finite
  differences of the analytic gradient check the Hessian.
* ``grid_search_two_leaf`` minimizes the symmetric two-leaf case by brute
  grid refinement.
* ``scipy.optimize.minimize`` provides a generic minimizer to cross-check
  the damped Newton solver.
"""

import numpy as np
import pytest
from scipy.stats import norm

from treepref.domain import (
    ComparisonPair,
    Continuous,
    FeatureSchema,
    FeatureSpec,
    Instance,
    PreferenceDataset,
)
from treepref.posterior import (
    FitError,
    LatentPosterior,
    LeafPairIndex,
    NoiseConfig,
    aggregate_leaf_pairs,
    condition_sum_to_zero,
    find_map,
    fit_leaf_posterior,
    fit_surrogate,
    laplace_posterior,
    negative_log_likelihood,
    objective_with_derivatives,
)
from treepref.tree import TreeConfig, grow_tree

DEFAULTS = NoiseConfig()  # sigma_noise 0.01, sigma_prior 0.02


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def oracle_objective(f, pairs, config, prior_mean=None):
    mu0 = np.zeros_like(f) if prior_mean is None else prior_mean
    total = 0.5 * float(((f - mu0) ** 2).sum()) / config.sigma_prior**2
    for p in pairs:
        z = (f[p.winner_leaf] - f[p.loser_leaf]) / (np.sqrt(2.0) * config.sigma_noise)
        total -= p.multiplicity * float(norm.logcdf(z))
    return total


def oracle_gradient(f, pairs, config, prior_mean=None):
    """Textbook gradient assembled from norm.pdf/norm.cdf with literal loops.

    The naive phi/Phi ratio is fine here: oracle inputs keep |z| modest.
    """
    mu0 = np.zeros_like(f) if prior_mean is None else prior_mean
    g = (f - mu0) / config.sigma_prior**2
    a = 1.0 / (np.sqrt(2.0) * config.sigma_noise)
    for p in pairs:
        z = a * (f[p.winner_leaf] - f[p.loser_leaf])
        if z > -30.0:
            ratio = norm.pdf(z) / norm.cdf(z)
        else:  # norm.cdf underflows; two-term tail series of phi/Phi
            ratio = -z - 1.0 / z
        g[p.winner_leaf] -= p.multiplicity * a * ratio
        g[p.loser_leaf] += p.multiplicity * a * ratio
    return g


def fd_gradient(func, f, h=1e-7):
    g = np.zeros_like(f)
    for i in range(f.shape[0]):
        e = np.zeros_like(f)
        e[i] = h
        g[i] = (func(f + e) - func(f - e)) / (2.0 * h)
    return g


def grid_search_two_leaf(config, multiplicity=1, span=0.06, points=4001, rounds=3):
    """Brute 1-D minimization of g(d) = -mult ln Phi(sqrt(2) d / sigma_n) + d^2 / sigma_p^2
    (the symmetric f = (d, -d) slice of the two-leaf objective)."""

    def g(d):
        z = 2.0 * d / (np.sqrt(2.0) * config.sigma_noise)
        return -multiplicity * norm.logcdf(z) + d * d / config.sigma_prior**2

    lo, hi = -span, span
    best = 0.0
    for _ in range(rounds):
        grid = np.linspace(lo, hi, points)
        vals = np.array([g(d) for d in grid])
        best = float(grid[int(np.argmin(vals))])
        half = (hi - lo) / points * 2
        lo, hi = best - half, best + half
    return best, float(g(best))


def random_leaf_pairs(rng, m, n):
    pairs = []
    for _ in range(n):
        w, l = rng.choice(m, size=2, replace=False)
        pairs.append(LeafPairIndex(int(w), int(l), int(rng.integers(1, 5))))
    return pairs


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

class TestTypes:
    def test_same_leaf_pair_rejected(self):
        with pytest.raises(ValueError, match="same-leaf"):
            LeafPairIndex(2, 2)

    def test_nonpositive_multiplicity_rejected(self):
        with pytest.raises(ValueError, match="multiplicity"):
            LeafPairIndex(0, 1, 0)

    def test_nonpositive_scales_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            NoiseConfig(sigma_noise=0.0)
        with pytest.raises(ValueError, match="positive"):
            NoiseConfig(sigma_prior=-1.0)

    def test_posterior_check_catches_asymmetry(self):
        post = LatentPosterior(np.zeros(2), np.array([[1.0, 0.5], [0.2, 1.0]]), False)
        with pytest.raises(ValueError, match="symmetric"):
            post.check()


# ---------------------------------------------------------------------------
# Objective and derivatives
# ---------------------------------------------------------------------------

class TestObjective:
    def test_value_at_zero_is_ln2_per_comparison(self):
        pairs = [LeafPairIndex(0, 1, 3), LeafPairIndex(2, 1, 2)]
        value, _, _ = objective_with_derivatives(np.zeros(3), pairs, DEFAULTS)
        assert value == pytest.approx(5 * np.log(2.0), rel=1e-12)

    def test_no_pairs_reduces_to_prior(self):
        f = np.array([0.01, -0.02, 0.005])
        value, grad, hess = objective_with_derivatives(f, [], DEFAULTS)
        inv_var = 1.0 / DEFAULTS.sigma_prior**2
        assert value == pytest.approx(0.5 * inv_var * float(f @ f))
        np.testing.assert_allclose(grad, inv_var * f)
        np.testing.assert_allclose(hess, inv_var * np.eye(3))

    def test_matches_oracle_value(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            m = int(rng.integers(2, 7))
            pairs = random_leaf_pairs(rng, m, int(rng.integers(1, 21)))
            f = rng.normal(scale=DEFAULTS.sigma_prior, size=m)
            value, _, _ = objective_with_derivatives(f, pairs, DEFAULTS)
            assert value == pytest.approx(oracle_objective(f, pairs, DEFAULTS), rel=1e-10)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            m = int(rng.integers(2, 7))
            pairs = random_leaf_pairs(rng, m, int(rng.integers(1, 21)))
            f = rng.normal(scale=DEFAULTS.sigma_prior, size=m)
            _, grad, _ = objective_with_derivatives(f, pairs, DEFAULTS)
            fd = fd_gradient(lambda x: oracle_objective(x, pairs, DEFAULTS), f)
            np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5)

    def test_hessian_matches_gradient_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            m = int(rng.integers(2, 6))
            pairs = random_leaf_pairs(rng, m, int(rng.integers(1, 15)))
            f = rng.normal(scale=DEFAULTS.sigma_prior, size=m)
            _, _, hess = objective_with_derivatives(f, pairs, DEFAULTS)
            h = 1e-6
            for i in range(m):
                e = np.zeros(m)
                e[i] = h
                _, gp, _ = objective_with_derivatives(f + e, pairs, DEFAULTS)
                _, gm, _ = objective_with_derivatives(f - e, pairs, DEFAULTS)
                np.testing.assert_allclose(hess[:, i], (gp - gm) / (2 * h), rtol=1e-4, atol=1e-3)

    def test_likelihood_hessian_annihilates_ones(self):
        rng = np.random.default_rng(4)
        inv_var = 1.0 / DEFAULTS.sigma_prior**2
        for _ in range(20):
            m = int(rng.integers(2, 7))
            pairs = random_leaf_pairs(rng, m, int(rng.integers(1, 21)))
            f = rng.normal(scale=DEFAULTS.sigma_prior, size=m)
            _, _, hess = objective_with_derivatives(f, pairs, DEFAULTS)
            likelihood_part = hess - inv_var * np.eye(m)
            assert np.abs(likelihood_part @ np.ones(m)).max() <= 1e-8

    def test_likelihood_term_is_translation_invariant(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            m = int(rng.integers(2, 7))
            pairs = random_leaf_pairs(rng, m, int(rng.integers(1, 21)))
            f = rng.normal(scale=DEFAULTS.sigma_prior, size=m)
            base = negative_log_likelihood(f, pairs, DEFAULTS)
            for c in rng.uniform(-10, 10, size=3):
                shifted = negative_log_likelihood(f + c, pairs, DEFAULTS)
                assert abs(shifted - base) <= 1e-9

    def test_objective_is_convex_along_random_chords(self):
        rng = np.random.default_rng(6)
        pairs = random_leaf_pairs(rng, 4, 10)
        for _ in range(50):
            f1 = rng.normal(scale=0.05, size=4)
            f2 = rng.normal(scale=0.05, size=4)
            lam = float(rng.uniform())
            v1 = oracle_objective(f1, pairs, DEFAULTS)
            v2 = oracle_objective(f2, pairs, DEFAULTS)
            mid = oracle_objective(lam * f1 + (1 - lam) * f2, pairs, DEFAULTS)
            assert mid <= lam * v1 + (1 - lam) * v2 + 1e-9

    def test_prior_mean_recenters_only_the_prior(self):
        pairs = [LeafPairIndex(0, 1)]
        f = np.array([0.004, -0.009])
        mu = np.array([0.02, 0.01])
        value, _, _ = objective_with_derivatives(f, pairs, DEFAULTS, prior_mean=mu)
        assert value == pytest.approx(oracle_objective(f, pairs, DEFAULTS, prior_mean=mu), rel=1e-12)
        # likelihood piece is unchanged by the prior center
        v0, _, _ = objective_with_derivatives(f, pairs, DEFAULTS)
        prior0 = 0.5 * float(f @ f) / DEFAULTS.sigma_prior**2
        prior_mu = 0.5 * float((f - mu) @ (f - mu)) / DEFAULTS.sigma_prior**2
        assert value - prior_mu == pytest.approx(v0 - prior0, rel=1e-9)


# ---------------------------------------------------------------------------
# MAP solver
# ---------------------------------------------------------------------------

class TestFindMap:
    def test_no_evidence_returns_prior_mode(self):
        np.testing.assert_array_equal(find_map([], 3, DEFAULTS), np.zeros(3))
        mu = np.array([0.01, -0.03])
        np.testing.assert_array_equal(find_map([], 2, DEFAULTS, prior_mean=mu), mu)

    def test_out_of_range_leaf_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            find_map([LeafPairIndex(0, 3)], 3, DEFAULTS)

    def test_two_leaf_map_matches_grid_oracle(self):
        f = find_map([LeafPairIndex(0, 1)], 2, DEFAULTS)
        d_star, v_star = grid_search_two_leaf(DEFAULTS)
        assert f[0] > 0
        assert f[0] == pytest.approx(-f[1], abs=1e-12)  # symmetric problem
        assert abs(f[0] - d_star) <= 1e-4
        value, _, _ = objective_with_derivatives(f, [LeafPairIndex(0, 1)], DEFAULTS)
        assert abs(value - v_star) <= 1e-4

    def test_gradient_is_tiny_at_the_map(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m = int(rng.integers(2, 5))
            pairs = random_leaf_pairs(rng, m, int(rng.integers(1, 11)))
            f = find_map(pairs, m, DEFAULTS)
            _, grad, _ = objective_with_derivatives(f, pairs, DEFAULTS)
            assert np.abs(grad).max() <= 1e-8

    def test_matches_generic_minimizer(self):
        from scipy.optimize import minimize

        rng = np.random.default_rng(8)
        for _ in range(15):
            m = int(rng.integers(2, 5))
            pairs = random_leaf_pairs(rng, m, int(rng.integers(1, 11)))
            ours = find_map(pairs, m, DEFAULTS)
            ref = minimize(
                lambda x: oracle_objective(x, pairs, DEFAULTS),
                np.zeros(m),
                jac=lambda x: oracle_gradient(x, pairs, DEFAULTS),
                method="L-BFGS-B",
                bounds=[(-0.2, 0.2)] * m,  # generous box; the mode sits near the prior scale
                options={"gtol": 1e-9, "ftol": 1e-14},
            )
            assert np.abs(oracle_gradient(ref.x, pairs, DEFAULTS)).max() <= 1e-5
            assert np.abs(ours - ref.x).max() <= 1e-4

    def test_repeated_evidence_strengthens_separation(self):
        gaps = []
        for mult in range(1, 13):
            f = find_map([LeafPairIndex(0, 1, mult)], 2, DEFAULTS)
            gaps.append(f[0] - f[1])
        assert all(g > 0 for g in gaps)
        assert all(b >= a - 1e-12 for a, b in zip(gaps, gaps[1:]))

    def test_chain_orders_leaves(self):
        pairs = [LeafPairIndex(0, 1, 4), LeafPairIndex(1, 2, 4)]
        f = find_map(pairs, 3, DEFAULTS)
        assert f[0] > f[1] > f[2]
        assert f[1] == pytest.approx(0.0, abs=1e-10)  # symmetric chain

    def test_contradictory_evidence_cancels(self):
        pairs = [LeafPairIndex(0, 1, 5), LeafPairIndex(1, 0, 5)]
        f = find_map(pairs, 2, DEFAULTS)
        np.testing.assert_allclose(f, 0.0, atol=1e-10)


# ---------------------------------------------------------------------------
# Laplace posterior and conditioning
# ---------------------------------------------------------------------------

class TestLaplace:
    def test_no_evidence_gives_isotropic_prior(self):
        post = laplace_posterior(np.zeros(3), [], DEFAULTS)
        np.testing.assert_allclose(post.covariance, DEFAULTS.sigma_prior**2 * np.eye(3), rtol=1e-12)
        assert not post.constrained

    def test_ones_direction_keeps_prior_variance(self):
        """The evidence never constrains the common level, so
        1' Sigma 1 = m sigma_prior^2 exactly, however strong the data."""
        rng = np.random.default_rng(9)
        for _ in range(20):
            m = int(rng.integers(2, 7))
            pairs = random_leaf_pairs(rng, m, int(rng.integers(1, 21)))
            f = find_map(pairs, m, DEFAULTS)
            post = laplace_posterior(f, pairs, DEFAULTS)
            got = float(np.ones(m) @ post.covariance @ np.ones(m))
            assert got == pytest.approx(m * DEFAULTS.sigma_prior**2, rel=1e-6)

    def test_conditioning_closed_form_two_leaves(self):
        pairs = [LeafPairIndex(0, 1)]
        f = find_map(pairs, 2, DEFAULTS)
        free = laplace_posterior(f, pairs, DEFAULTS)
        cond = condition_sum_to_zero(free)
        sp2 = DEFAULTS.sigma_prior**2
        # s = Sigma 1 = sigma_p^2 1, d = 2 sigma_p^2: the rank-one correction
        # subtracts sigma_p^2/2 from every covariance entry
        np.testing.assert_allclose(cond.covariance, free.covariance - sp2 / 2.0, rtol=1e-9)
        assert cond.mean.sum() == pytest.approx(0.0, abs=1e-12)
        assert cond.constrained

    def test_conditioned_posterior_satisfies_constraint(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            m = int(rng.integers(2, 7))
            pairs = random_leaf_pairs(rng, m, int(rng.integers(1, 21)))
            f = find_map(pairs, m, DEFAULTS)
            cond = condition_sum_to_zero(laplace_posterior(f, pairs, DEFAULTS))
            assert np.abs(cond.covariance @ np.ones(m)).max() <= 1e-8
            assert abs(cond.mean.sum()) <= 1e-8 * m
            cond.check()

    def test_conditioning_twice_is_rejected(self):
        cond = condition_sum_to_zero(laplace_posterior(np.zeros(2), [], DEFAULTS))
        with pytest.raises(ValueError, match="already conditioned"):
            condition_sum_to_zero(cond)


# ---------------------------------------------------------------------------
# End-to-end fit
# ---------------------------------------------------------------------------

def one_dim_dataset(*pairs):
    schema = FeatureSchema((FeatureSpec("x", Continuous(0.0, 1.0)),))
    made = [ComparisonPair(Instance((w,)), Instance((l,))) for w, l in pairs]
    return PreferenceDataset(schema, made)


class TestFitSurrogate:
    def test_aggregation_counts_multiplicity_in_first_seen_order(self):
        ds = one_dim_dataset((0.9, 0.1), (0.8, 0.2), (0.1, 0.9), (0.95, 0.05))
        tree = grow_tree(ds, TreeConfig())
        leaf_pairs, same_leaf = aggregate_leaf_pairs(ds, tree)
        assert same_leaf == 0
        by_key = {(p.winner_leaf, p.loser_leaf): p.multiplicity for p in leaf_pairs}
        assert by_key == {(1, 0): 3, (0, 1): 1}
        assert (leaf_pairs[0].winner_leaf, leaf_pairs[0].loser_leaf) == (1, 0)

    def test_same_leaf_comparisons_are_dropped(self):
        ds = one_dim_dataset((0.4, 0.41), (0.42, 0.4))
        tree = grow_tree(ds, TreeConfig(max_depth=0))
        leaf_pairs, same_leaf = aggregate_leaf_pairs(ds, tree)
        assert leaf_pairs == [] and same_leaf == 2

    def test_empty_dataset_fit(self):
        tree, post = fit_surrogate(one_dim_dataset(), TreeConfig(), DEFAULTS)
        assert post.constrained
        np.testing.assert_allclose(post.mean, [0.0])
        np.testing.assert_allclose(post.covariance, [[0.0]], atol=1e-15)

    def test_consistent_pairs_order_the_leaves(self):
        ds = one_dim_dataset((0.9, 0.1), (0.8, 0.2), (0.7, 0.3))
        tree, post = fit_surrogate(ds, TreeConfig(), DEFAULTS)
        assert post.mean.shape == (2,)
        assert post.mean[1] > 0 > post.mean[0]  # winners' leaf above losers'
        assert post.mean.sum() == pytest.approx(0.0, abs=1e-12)

    def test_prior_mean_length_checked(self):
        ds = one_dim_dataset((0.9, 0.1))
        tree = grow_tree(ds, TreeConfig())
        with pytest.raises(ValueError, match="prior mean has length"):
            fit_leaf_posterior(tree, ds, DEFAULTS, prior_mean=np.zeros(5))

    def test_informative_prior_pulls_the_fit(self):
        ds = one_dim_dataset((0.9, 0.1))
        tree = grow_tree(ds, TreeConfig())
        wide = NoiseConfig(sigma_noise=DEFAULTS.sigma_noise, sigma_prior=0.2)
        neutral = fit_leaf_posterior(tree, ds, wide)
        pulled = fit_leaf_posterior(tree, ds, wide, prior_mean=np.array([0.5, -0.5]))
        # prior says leaf 0 is better; one comparison says otherwise; the
        # posterior lands between the two
        assert pulled.mean[0] > neutral.mean[0]
