"""Laplace-approximate posterior over per-leaf latent utilities.

Answered comparisons enter a probit likelihood on the difference of the
winner's and loser's leaf utilities.  The MAP utility vector is found by
damped Newton on the strictly convex negative log posterior, the posterior is
approximated by a Gaussian at the mode, and the Gaussian is finally
conditioned on its coordinates summing to zero to remove the translational
degeneracy of difference-only evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import log_ndtr

from .domain import PreferenceDataset
from .tree import TreeConfig, TreeNode, grow_tree, leaf_count, route

__all__ = [
    "LeafPairIndex",
    "NoiseConfig",
    "LatentPosterior",
    "FitError",
    "objective_with_derivatives",
    "negative_log_likelihood",
    "find_map",
    "laplace_posterior",
    "condition_sum_to_zero",
    "aggregate_leaf_pairs",
    "fit_leaf_posterior",
    "fit_surrogate",
]

_GRAD_TOL = 1e-8
_MAX_NEWTON_ITERS = 200
_ARMIJO_C1 = 1e-4
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LeafPairIndex:
    """One aggregated comparison between two distinct leaves."""

    winner_leaf: int
    loser_leaf: int
    multiplicity: int = 1

    def __post_init__(self) -> None:
        if self.winner_leaf == self.loser_leaf:
            raise ValueError(f"same-leaf comparison (leaf {self.winner_leaf}) carries no evidence")
        if self.multiplicity < 1:
            raise ValueError(f"multiplicity must be >= 1, got {self.multiplicity}")


@dataclass(frozen=True)
class NoiseConfig:
    """Observation and prior scales; defaults follow the reference setup."""

    sigma_noise: float = 0.01
    sigma_prior: float = 0.02

    def __post_init__(self) -> None:
        if self.sigma_noise <= 0 or self.sigma_prior <= 0:
            raise ValueError(
                f"scales must be positive, got sigma_noise={self.sigma_noise}, sigma_prior={self.sigma_prior}"
            )


@dataclass
class LatentPosterior:
    """Gaussian over leaf utilities; ``constrained`` marks the sum-to-zero form."""

    mean: np.ndarray
    covariance: np.ndarray
    constrained: bool

    def check(self, atol: float = 1e-8) -> None:
        """Validate symmetry/PSD (and the constraint, when claimed)."""
        m = self.mean.shape[0]
        if self.covariance.shape != (m, m):
            raise ValueError(f"covariance shape {self.covariance.shape} does not match mean length {m}")
        if not np.allclose(self.covariance, self.covariance.T, atol=atol):
            raise ValueError("covariance is not symmetric")
        eigvals = np.linalg.eigvalsh(self.covariance)
        if eigvals.min() < -atol:
            raise ValueError(f"covariance not PSD, min eigenvalue {eigvals.min():.3e}")
        if self.constrained:
            if abs(float(self.mean.sum())) > atol * max(m, 1):
                raise ValueError(f"constrained mean does not sum to zero: {self.mean.sum():.3e}")
            rows = self.covariance @ np.ones(m)
            if np.abs(rows).max() > 1e-6:
                raise ValueError(f"constrained covariance rows do not sum to zero: {np.abs(rows).max():.3e}")


class FitError(RuntimeError):
    """Raised when the MAP optimization fails to converge."""


# ---------------------------------------------------------------------------
# Probit terms
# ---------------------------------------------------------------------------

def _mills_ratio(z: np.ndarray) -> np.ndarray:
    """phi(z) / Phi(z), evaluated in log space for deep-tail stability."""
    return np.exp(-0.5 * z * z - _LOG_SQRT_2PI - log_ndtr(z))


def _hessian_weight(z: np.ndarray) -> np.ndarray:
    """Second derivative of -ln Phi(z): r(z) * (z + r(z)), r = phi/Phi.

    Below z = -1e5 the direct form loses all precision to cancellation in
    z + r(z); the asymptotic series 1 - 1/z^2 takes over there.
    """
    r = _mills_ratio(z)
    w = r * (z + r)
    deep = z < -1e5
    if np.any(deep):
        w = np.where(deep, 1.0 - 1.0 / (z * z), w)
    return np.maximum(w, 0.0)


def _unpack(pairs: Sequence[LeafPairIndex]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    wi = np.asarray([p.winner_leaf for p in pairs], dtype=int)
    li = np.asarray([p.loser_leaf for p in pairs], dtype=int)
    mult = np.asarray([p.multiplicity for p in pairs], dtype=float)
    return wi, li, mult


def negative_log_likelihood(
    f: np.ndarray, pairs: Sequence[LeafPairIndex], config: NoiseConfig
) -> float:
    """Comparison-evidence term alone, without the prior."""
    if not pairs:
        return 0.0
    wi, li, mult = _unpack(pairs)
    z = (f[wi] - f[li]) / (math.sqrt(2.0) * config.sigma_noise)
    return float(-(mult * log_ndtr(z)).sum())


def objective_with_derivatives(
    f: np.ndarray,
    pairs: Sequence[LeafPairIndex],
    config: NoiseConfig,
    prior_mean: np.ndarray | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Negative log posterior with analytic gradient and Hessian.

    The value is ``-sum_k mult_k ln Phi(z_k) + |f - mu0|^2 / (2 sigma_prior^2)``
    with ``z_k = (f_winner - f_loser) / (sqrt(2) sigma_noise)`` and ``mu0``
    zero unless ``prior_mean`` is given.  The likelihood Hessian annihilates
    the all-ones vector by construction; strict convexity comes from the
    prior block alone.
    """
    m = f.shape[0]
    centered = f if prior_mean is None else f - prior_mean
    inv_var = 1.0 / (config.sigma_prior**2)
    value = 0.5 * inv_var * float(centered @ centered)
    grad = inv_var * centered
    hess = inv_var * np.eye(m)
    if pairs:
        wi, li, mult = _unpack(pairs)
        a = 1.0 / (math.sqrt(2.0) * config.sigma_noise)
        z = a * (f[wi] - f[li])
        value += float(-(mult * log_ndtr(z)).sum())
        coef = mult * a * _mills_ratio(z)
        np.add.at(grad, wi, -coef)
        np.add.at(grad, li, coef)
        wts = mult * a * a * _hessian_weight(z)
        np.add.at(hess, (wi, wi), wts)
        np.add.at(hess, (li, li), wts)
        np.add.at(hess, (wi, li), -wts)
        np.add.at(hess, (li, wi), -wts)
    return value, grad, hess


# ---------------------------------------------------------------------------
# MAP and Laplace
# ---------------------------------------------------------------------------

def find_map(
    pairs: Sequence[LeafPairIndex],
    m: int,
    config: NoiseConfig,
    prior_mean: np.ndarray | None = None,
) -> np.ndarray:
    """Minimize the negative log posterior by damped Newton.

    Starts from the prior mode (zero, unless ``prior_mean`` is given) and
    stops when the gradient max-norm drops to 1e-8.  Each step is a Cholesky
    Newton direction with Armijo backtracking; the objective is strictly
    convex so failures only surface as a FitError carrying the final
    gradient norm.
    """
    for p in pairs:
        if not (0 <= p.winner_leaf < m and 0 <= p.loser_leaf < m):
            raise ValueError(f"leaf pair ({p.winner_leaf}, {p.loser_leaf}) out of range for {m} leaves")
    f = np.zeros(m) if prior_mean is None else prior_mean.astype(float).copy()
    value, grad, hess = objective_with_derivatives(f, pairs, config, prior_mean)
    for _ in range(_MAX_NEWTON_ITERS):
        if np.abs(grad).max() <= _GRAD_TOL:
            return f
        step = cho_solve(cho_factor(hess), -grad)
        slope = float(grad @ step)
        # Near the optimum the true decrease sinks below float resolution of
        # the objective; without this slack the line search rejects the final
        # Newton step and spins on unrepresentably small ones.
        noise_floor = 4.0 * np.finfo(float).eps * max(1.0, abs(value))
        t = 1.0
        while t > 2.0**-60:
            candidate = f + t * step
            cand_value, cand_grad, cand_hess = objective_with_derivatives(
                candidate, pairs, config, prior_mean
            )
            if cand_value <= value + _ARMIJO_C1 * t * slope + noise_floor:
                f, value, grad, hess = candidate, cand_value, cand_grad, cand_hess
                break
            t /= 2.0
        else:
            raise FitError(
                f"line search stalled; gradient max-norm {np.abs(grad).max():.3e}"
            )
    if np.abs(grad).max() <= _GRAD_TOL:
        return f
    raise FitError(
        f"Newton did not converge in {_MAX_NEWTON_ITERS} iterations; "
        f"gradient max-norm {np.abs(grad).max():.3e}"
    )


def laplace_posterior(
    f_map: np.ndarray, pairs: Sequence[LeafPairIndex], config: NoiseConfig
) -> LatentPosterior:
    """Gaussian at the mode: covariance is the inverse Hessian there."""
    _, _, hess = objective_with_derivatives(f_map, pairs, config)
    cov = cho_solve(cho_factor(hess), np.eye(f_map.shape[0]))
    cov = (cov + cov.T) / 2.0
    return LatentPosterior(mean=f_map.copy(), covariance=cov, constrained=False)


def condition_sum_to_zero(posterior: LatentPosterior) -> LatentPosterior:
    """Condition the Gaussian on its coordinates summing to zero.

    Uses the standard linear-constraint conditioning: with s = Sigma 1 and
    d = 1' Sigma 1, the mean shifts by -(1'mu / d) s and the covariance loses
    the rank-one part s s' / d.
    """
    if posterior.constrained:
        raise ValueError("posterior is already conditioned on the sum-to-zero constraint")
    m = posterior.mean.shape[0]
    s = posterior.covariance @ np.ones(m)
    d = float(s.sum())
    if d <= 0.0:
        raise ValueError(f"1' Sigma 1 = {d:.3e} is not positive; cannot condition")
    mean = posterior.mean - (float(posterior.mean.sum()) / d) * s
    cov = posterior.covariance - np.outer(s, s) / d
    cov = (cov + cov.T) / 2.0
    return LatentPosterior(mean=mean, covariance=cov, constrained=True)


# ---------------------------------------------------------------------------
# End-to-end fit
# ---------------------------------------------------------------------------

def aggregate_leaf_pairs(
    dataset: PreferenceDataset, tree: TreeNode
) -> tuple[list[LeafPairIndex], int]:
    """Route every comparison through the tree and aggregate by leaf pair.

    Comparisons whose winner and loser land in the same leaf carry no
    difference evidence and are dropped; the count of dropped comparisons is
    returned alongside the aggregated cross-leaf multiplicities.  Aggregation
    order is first appearance in the dataset.
    """
    tally: dict[tuple[int, int], int] = {}
    same_leaf = 0
    for pair in dataset.pairs:
        key = (route(tree, pair.winner), route(tree, pair.loser))
        if key[0] == key[1]:
            same_leaf += 1
            continue
        tally[key] = tally.get(key, 0) + 1
    return [LeafPairIndex(w, l, n) for (w, l), n in tally.items()], same_leaf


def fit_leaf_posterior(
    tree: TreeNode,
    dataset: PreferenceDataset,
    config: NoiseConfig,
    prior_mean: np.ndarray | None = None,
) -> LatentPosterior:
    """Fit the constrained posterior for a fixed tree structure."""
    m = leaf_count(tree)
    if prior_mean is not None and prior_mean.shape[0] != m:
        raise ValueError(f"prior mean has length {prior_mean.shape[0]}, tree has {m} leaves")
    leaf_pairs, _ = aggregate_leaf_pairs(dataset, tree)
    f_map = find_map(leaf_pairs, m, config, prior_mean)
    posterior = laplace_posterior(f_map, leaf_pairs, config)
    return condition_sum_to_zero(posterior)


def fit_surrogate(
    dataset: PreferenceDataset, tree_config: TreeConfig, noise_config: NoiseConfig
) -> tuple[TreeNode, LatentPosterior]:
    """Grow the tree on the dataset, then fit its constrained leaf posterior."""
    tree = grow_tree(dataset, tree_config)
    return tree, fit_leaf_posterior(tree, dataset, noise_config)
