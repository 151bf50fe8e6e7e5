"""Pair selection: posterior prediction and expected-best-of-pair scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .domain import Categorical, Continuous, FeatureSchema, Instance
from .posterior import LatentPosterior
from .tree import TreeNode, leaf_pair_counts, route

__all__ = [
    "PairPrediction",
    "AcquisitionConfig",
    "predict",
    "qeubo_value",
    "sample_pool",
    "select_pair_from_pool",
    "select_next_pair",
    "random_pair_from_pool",
    "random_pair",
]

_DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class PairPrediction:
    """Joint Gaussian belief over the utilities of two candidate instances."""

    mean_a: float
    mean_b: float
    var_a: float
    var_b: float
    covariance: float

    def __post_init__(self) -> None:
        if self.var_a < 0 or self.var_b < 0:
            raise ValueError(f"variances must be non-negative, got {self.var_a}, {self.var_b}")
        if self.covariance**2 > self.var_a * self.var_b + 1e-12:
            raise ValueError(
                f"covariance {self.covariance} inconsistent with variances {self.var_a}, {self.var_b}"
            )


@dataclass(frozen=True)
class AcquisitionConfig:
    pool_size: int = 64
    prioritize_within_leaf: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.pool_size < 2:
            raise ValueError(f"pool_size must be at least 2, got {self.pool_size}")


def predict(tree: TreeNode, posterior: LatentPosterior, instance: Instance) -> tuple[float, float, int]:
    """Posterior (mean, variance, leaf index) of one instance's utility."""
    leaf = route(tree, instance)
    return float(posterior.mean[leaf]), float(posterior.covariance[leaf, leaf]), leaf


def qeubo_value(prediction: PairPrediction) -> float:
    """Expected utility of the better element of the pair.

    For jointly Gaussian (A, B) this is the classic closed form
    ``mu_a Phi(alpha) + mu_b Phi(-alpha) + s phi(alpha)`` with
    ``s^2 = var_a + var_b - 2 cov`` and ``alpha = (mu_a - mu_b) / s``.  When
    the difference is deterministic (s below 1e-12, e.g. both instances in
    one leaf) it degenerates to max(mu_a, mu_b).
    """
    s2 = prediction.var_a + prediction.var_b - 2.0 * prediction.covariance
    s = math.sqrt(max(s2, 0.0))
    if s <= _DEGENERATE_STD:
        return max(prediction.mean_a, prediction.mean_b)
    alpha = (prediction.mean_a - prediction.mean_b) / s
    phi = math.exp(-0.5 * alpha * alpha) / math.sqrt(2.0 * math.pi)
    return float(prediction.mean_a * ndtr(alpha) + prediction.mean_b * ndtr(-alpha) + s * phi)


def sample_pool(schema: FeatureSchema, size: int, rng: np.random.Generator) -> list[Instance]:
    """Uniform candidate instances: continuous in bounds, categorical by label."""
    pool = []
    for _ in range(size):
        values: list[float | int] = []
        for spec in schema.features:
            if isinstance(spec.kind, Continuous):
                values.append(float(rng.uniform(spec.kind.lower, spec.kind.upper)))
            else:
                values.append(int(rng.integers(len(spec.kind.labels))))
        pool.append(Instance(tuple(values)))
    return pool


def _pair_distance(schema: FeatureSchema, a: Instance, b: Instance) -> float:
    """Range-normalized squared distance; categorical mismatches count 1."""
    total = 0.0
    for spec, va, vb in zip(schema.features, a.values, b.values):
        if isinstance(spec.kind, Continuous):
            total += ((va - vb) / (spec.kind.upper - spec.kind.lower)) ** 2
        else:
            total += 0.0 if va == vb else 1.0
    return total


def _qeubo_batch(
    means: np.ndarray, variances: np.ndarray, posterior: LatentPosterior, leaves: np.ndarray,
    ia: np.ndarray, ib: np.ndarray,
) -> np.ndarray:
    mean_a, mean_b = means[ia], means[ib]
    cov = posterior.covariance[leaves[ia], leaves[ib]]
    s = np.sqrt(np.maximum(variances[ia] + variances[ib] - 2.0 * cov, 0.0))
    out = np.maximum(mean_a, mean_b)
    live = s > _DEGENERATE_STD
    if np.any(live):
        alpha = (mean_a[live] - mean_b[live]) / s[live]
        phi = np.exp(-0.5 * alpha * alpha) / math.sqrt(2.0 * math.pi)
        out[live] = mean_a[live] * ndtr(alpha) + mean_b[live] * ndtr(-alpha) + s[live] * phi
    return out


def select_pair_from_pool(
    tree: TreeNode,
    posterior: LatentPosterior,
    schema: FeatureSchema,
    pool: Sequence[Instance],
    *,
    prioritize_within_leaf: bool = False,
    saturation_pairs: int = 4,
) -> tuple[Instance, Instance]:
    """Pick the next question from an explicit candidate pool.

    Scores every unordered pool pair by :func:`qeubo_value` using the full
    joint posterior (off-diagonal covariance included) and returns the first
    maximizer in enumeration order.  With ``prioritize_within_leaf``, if some
    leaf holds at least two pool candidates while its fitted comparison count
    is still below ``saturation_pairs``, the highest-mean such leaf is probed
    instead, using its two most distant pool candidates.
    """
    if len(pool) < 2:
        raise ValueError(f"pool must contain at least 2 candidates, got {len(pool)}")
    leaves = np.asarray([route(tree, x) for x in pool], dtype=int)
    means = posterior.mean[leaves]
    variances = np.diag(posterior.covariance)[leaves]

    if prioritize_within_leaf:
        counts = leaf_pair_counts(tree)
        members: dict[int, list[int]] = {}
        for i, leaf in enumerate(leaves):
            members.setdefault(int(leaf), []).append(i)
        hungry = [
            leaf for leaf, idx in members.items()
            if len(idx) >= 2 and counts[leaf] < saturation_pairs
        ]
        if hungry:
            target = max(hungry, key=lambda leaf: (posterior.mean[leaf], -leaf))
            idx = members[target]
            best = None
            for p in range(len(idx)):
                for q in range(p + 1, len(idx)):
                    d = _pair_distance(schema, pool[idx[p]], pool[idx[q]])
                    if best is None or d > best[0]:
                        best = (d, idx[p], idx[q])
            assert best is not None
            return pool[best[1]], pool[best[2]]

    ia, ib = np.triu_indices(len(pool), k=1)
    values = _qeubo_batch(means, variances, posterior, leaves, ia, ib)
    k = int(np.argmax(values))  # first max wins: deterministic tie-break
    return pool[ia[k]], pool[ib[k]]


def select_next_pair(
    tree: TreeNode,
    posterior: LatentPosterior,
    schema: FeatureSchema,
    config: AcquisitionConfig,
    *,
    saturation_pairs: int = 4,
    seed: int | None = None,
) -> tuple[Instance, Instance]:
    """Draw a seeded uniform pool and pick its best pair (see pool variant)."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    pool = sample_pool(schema, config.pool_size, rng)
    return select_pair_from_pool(
        tree,
        posterior,
        schema,
        pool,
        prioritize_within_leaf=config.prioritize_within_leaf,
        saturation_pairs=saturation_pairs,
    )


def random_pair_from_pool(pool: Sequence[Instance], rng: np.random.Generator) -> tuple[Instance, Instance]:
    ia, ib = np.triu_indices(len(pool), k=1)
    k = int(rng.integers(len(ia)))
    return pool[ia[k]], pool[ib[k]]


def random_pair(schema: FeatureSchema, pool_size: int, seed: int) -> tuple[Instance, Instance]:
    """Baseline acquisition: a uniformly random pair from a fresh pool."""
    rng = np.random.default_rng(seed)
    pool = sample_pool(schema, pool_size, rng)
    return random_pair_from_pool(pool, rng)
