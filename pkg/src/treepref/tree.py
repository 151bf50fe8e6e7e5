"""Comparison-consistency decision trees over mixed feature spaces.

The tree partitions the search space with axis-aligned tests.  Splits are
scored by how cleanly they separate answered comparisons: a comparison whose
winner and loser fall on opposite sides of a test is evidence that the test
tracks the direction of preference.  Leaves carry indices into the latent
utility vector fitted elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import (
    Categorical,
    ComparisonPair,
    Continuous,
    FeatureSchema,
    Instance,
    PreferenceDataset,
)

__all__ = [
    "Threshold",
    "CategoryEquals",
    "SplitTest",
    "TreeConfig",
    "Internal",
    "Leaf",
    "TreeNode",
    "consistency_score",
    "best_split",
    "partition_pairs",
    "grow_tree",
    "route",
    "leaf_count",
    "leaf_pair_counts",
    "export_explanation",
    "explanation_to_tree",
    "render_tree_text",
]


@dataclass(frozen=True)
class Threshold:
    """Numeric test: an instance passes when ``value >= threshold``."""

    value: float


@dataclass(frozen=True)
class CategoryEquals:
    """Categorical test: an instance passes when its label index matches."""

    label_index: int


@dataclass(frozen=True)
class SplitTest:
    feature_index: int
    test: Threshold | CategoryEquals


@dataclass(frozen=True)
class TreeConfig:
    """Growth hyperparameters; defaults follow the reference configuration."""

    min_split_score: int = 1
    min_samples_split: int = 1
    max_depth: int = 50

    def __post_init__(self) -> None:
        if self.min_split_score < 0:
            raise ValueError(f"min_split_score must be >= 0, got {self.min_split_score}")
        if self.min_samples_split < 1:
            raise ValueError(f"min_samples_split must be >= 1, got {self.min_samples_split}")
        if self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")


@dataclass(frozen=True)
class Leaf:
    leaf_index: int
    pair_count: int


@dataclass(frozen=True)
class Internal:
    test: SplitTest
    left: "TreeNode"
    right: "TreeNode"
    split_score: int
    discarded_count: int


TreeNode = Internal | Leaf


# ---------------------------------------------------------------------------
# Vectorized pair views
# ---------------------------------------------------------------------------

def _pair_matrices(pairs: Sequence[ComparisonPair]) -> tuple[np.ndarray, np.ndarray]:
    """Stack winner/loser feature values into (n, d) float matrices.

    Categorical label indices survive the float round trip exactly, so
    equality tests stay safe.
    """
    if not pairs:
        return np.empty((0, 0)), np.empty((0, 0))
    winners = np.asarray([p.winner.values for p in pairs], dtype=float)
    losers = np.asarray([p.loser.values for p in pairs], dtype=float)
    return winners, losers


def _pass_mask(column: np.ndarray, test: Threshold | CategoryEquals) -> np.ndarray:
    if isinstance(test, Threshold):
        return column >= test.value
    return column == float(test.label_index)


def _check_test_kind(schema: FeatureSchema, split: SplitTest) -> None:
    if not 0 <= split.feature_index < len(schema):
        raise ValueError(f"feature_index {split.feature_index} out of range for {len(schema)}-feature schema")
    kind = schema.features[split.feature_index].kind
    if isinstance(split.test, Threshold) and not isinstance(kind, Continuous):
        raise ValueError(f"threshold test on categorical feature {schema.features[split.feature_index].name!r}")
    if isinstance(split.test, CategoryEquals):
        if not isinstance(kind, Categorical):
            raise ValueError(f"category test on continuous feature {schema.features[split.feature_index].name!r}")
        if not 0 <= split.test.label_index < len(kind.labels):
            raise ValueError(
                f"label index {split.test.label_index} out of range for feature "
                f"{schema.features[split.feature_index].name!r}"
            )


# ---------------------------------------------------------------------------
# Scoring and splitting
# ---------------------------------------------------------------------------

def consistency_score(pairs: Sequence[ComparisonPair], split: SplitTest, schema: FeatureSchema) -> int:
    """Score one candidate test by the imbalance of separated comparisons.

    ``n_right`` counts comparisons whose winner passes the test while the
    loser fails; ``n_left`` the reverse.  The score is ``|n_right - n_left|``:
    a test that sends winners consistently to one side scores high, while one
    that separates comparisons in both directions cancels itself out.
    """
    _check_test_kind(schema, split)
    if not pairs:
        return 0
    winners, losers = _pair_matrices(pairs)
    w = _pass_mask(winners[:, split.feature_index], split.test)
    l = _pass_mask(losers[:, split.feature_index], split.test)
    n_right = int(np.sum(w & ~l))
    n_left = int(np.sum(~w & l))
    return abs(n_right - n_left)


def candidate_tests(schema: FeatureSchema, values: np.ndarray) -> list[SplitTest]:
    """Enumerate candidate tests for the points in ``values`` (rows).

    Continuous features contribute thresholds at midpoints between
    consecutive distinct observed values; categorical features contribute one
    equals-test per observed label.  Order is deterministic: features
    ascending, then thresholds/labels ascending.
    """
    tests: list[SplitTest] = []
    for k, spec in enumerate(schema.features):
        observed = np.unique(values[:, k]) if values.size else np.empty(0)
        if isinstance(spec.kind, Continuous):
            for lo, hi in zip(observed[:-1], observed[1:]):
                tests.append(SplitTest(k, Threshold(float((lo + hi) / 2.0))))
        else:
            for label in observed:
                tests.append(SplitTest(k, CategoryEquals(int(label))))
    return tests


def _best_split_arrays(
    winners: np.ndarray, losers: np.ndarray, schema: FeatureSchema, min_split_score: int
) -> tuple[SplitTest, int] | None:
    """Exhaustive scan over candidate tests on pre-stacked pair matrices."""
    best: tuple[SplitTest, int] | None = None
    for k, spec in enumerate(schema.features):
        wcol, lcol = winners[:, k], losers[:, k]
        observed = np.unique(np.concatenate([wcol, lcol]))
        if isinstance(spec.kind, Continuous):
            if observed.size < 2:
                continue
            cuts = (observed[:-1] + observed[1:]) / 2.0
            wr = wcol[None, :] >= cuts[:, None]
            lr = lcol[None, :] >= cuts[:, None]
            scores = np.abs((wr & ~lr).sum(axis=1) - (~wr & lr).sum(axis=1))
            j = int(np.argmax(scores))  # first max keeps the lowest threshold
            if best is None or scores[j] > best[1]:
                best = (SplitTest(k, Threshold(float(cuts[j]))), int(scores[j]))
        else:
            we = wcol[None, :] == observed[:, None]
            le = lcol[None, :] == observed[:, None]
            scores = np.abs((we & ~le).sum(axis=1) - (~we & le).sum(axis=1))
            j = int(np.argmax(scores))
            if best is None or scores[j] > best[1]:
                best = (SplitTest(k, CategoryEquals(int(observed[j]))), int(scores[j]))
    if best is None or best[1] < min_split_score:
        return None
    return best


def best_split(
    pairs: Sequence[ComparisonPair], schema: FeatureSchema, config: TreeConfig
) -> tuple[SplitTest, int] | None:
    """Find the highest-scoring candidate test, or None below the score gate.

    Ties break toward the lowest feature index, then the lowest
    threshold/label.
    """
    if not pairs:
        return None
    winners, losers = _pair_matrices(pairs)
    return _best_split_arrays(winners, losers, schema, config.min_split_score)


def partition_pairs(
    pairs: Sequence[ComparisonPair], split: SplitTest
) -> tuple[list[ComparisonPair], list[ComparisonPair], list[ComparisonPair]]:
    """Partition comparisons into (left, right, discarded) under a test.

    A comparison goes left when both members fail the test, right when both
    pass, and is discarded when the test separates its members.  Order within
    each bucket follows the input.
    """
    left: list[ComparisonPair] = []
    right: list[ComparisonPair] = []
    discarded: list[ComparisonPair] = []
    for pair in pairs:
        w = bool(_pass_mask(np.asarray([pair.winner.values[split.feature_index]], dtype=float), split.test)[0])
        l = bool(_pass_mask(np.asarray([pair.loser.values[split.feature_index]], dtype=float), split.test)[0])
        if w and l:
            right.append(pair)
        elif not w and not l:
            left.append(pair)
        else:
            discarded.append(pair)
    return left, right, discarded


# ---------------------------------------------------------------------------
# Growth and routing
# ---------------------------------------------------------------------------

def grow_tree(dataset: PreferenceDataset, config: TreeConfig) -> TreeNode:
    """Grow a tree top-down until no candidate clears the score gate.

    A node becomes a leaf when it holds fewer than ``min_samples_split``
    comparisons, sits at ``max_depth``, or has no candidate test scoring at
    least ``min_split_score``.  Comparisons split by a test are dropped from
    the subtrees (and tallied on the internal node); children may therefore
    hold zero comparisons and become leaves immediately.  Leaf indices are
    assigned depth-first, left to right.
    """
    schema = dataset.schema
    winners, losers = _pair_matrices(dataset.pairs)

    def build(w: np.ndarray, current_l: np.ndarray, depth: int, next_leaf: int) -> tuple[TreeNode, int]:
        n = w.shape[0]
        if n < config.min_samples_split or depth >= config.max_depth:
            return Leaf(next_leaf, n), next_leaf + 1
        found = None
        if n:
            found = _best_split_arrays(w, current_l, schema, config.min_split_score)
        if found is None:
            return Leaf(next_leaf, n), next_leaf + 1
        split, score = found
        wp = _pass_mask(w[:, split.feature_index], split.test)
        lp = _pass_mask(current_l[:, split.feature_index], split.test)
        go_left = ~wp & ~lp
        go_right = wp & lp
        discarded = int(n - go_left.sum() - go_right.sum())
        left, next_leaf = build(w[go_left], current_l[go_left], depth + 1, next_leaf)
        right, next_leaf = build(w[go_right], current_l[go_right], depth + 1, next_leaf)
        return Internal(split, left, right, score, discarded), next_leaf

    if len(dataset.pairs) == 0:
        return Leaf(0, 0)
    node, _ = build(winners, losers, 0, 0)
    return node


def route(tree: TreeNode, instance: Instance) -> int:
    """Return the leaf index an instance lands in (pass goes right)."""
    node = tree
    while isinstance(node, Internal):
        value = float(instance.values[node.test.feature_index])
        if isinstance(node.test.test, Threshold):
            passes = value >= node.test.test.value
        else:
            passes = value == float(node.test.test.label_index)
        node = node.right if passes else node.left
    return node.leaf_index


def leaf_count(tree: TreeNode) -> int:
    if isinstance(tree, Leaf):
        return 1
    return leaf_count(tree.left) + leaf_count(tree.right)


def leaf_pair_counts(tree: TreeNode) -> np.ndarray:
    """Per-leaf comparison counts, indexed by leaf index."""
    counts = np.zeros(leaf_count(tree), dtype=int)

    def walk(node: TreeNode) -> None:
        if isinstance(node, Leaf):
            counts[node.leaf_index] = node.pair_count
        else:
            walk(node.left)
            walk(node.right)

    walk(tree)
    return counts


# ---------------------------------------------------------------------------
# Explanations
# ---------------------------------------------------------------------------

def _describe(schema: FeatureSchema, split: SplitTest) -> tuple[str, str]:
    """Left/right branch conditions as human-readable strings."""
    spec = schema.features[split.feature_index]
    if isinstance(split.test, Threshold):
        return (f"{spec.name} < {split.test.value:.6g}", f"{spec.name} >= {split.test.value:.6g}")
    assert isinstance(spec.kind, Categorical)
    label = spec.kind.labels[split.test.label_index]
    return (f"{spec.name} != {label}", f"{spec.name} = {label}")


def export_explanation(tree: TreeNode, posterior, schema: FeatureSchema) -> dict:
    """Serialize a fitted tree into a JSON-ready explanation document.

    Internal nodes carry the raw test (for lossless reconstruction) plus
    rendered branch conditions; leaves carry their posterior utility mean and
    standard deviation.  ``posterior`` may be None for an unfitted tree, in
    which case leaf statistics are omitted.
    """

    def walk(node: TreeNode) -> dict:
        if isinstance(node, Leaf):
            doc = {"kind": "leaf", "leaf_index": node.leaf_index, "pair_count": node.pair_count}
            if posterior is not None:
                doc["mean"] = float(posterior.mean[node.leaf_index])
                doc["std"] = float(np.sqrt(max(posterior.covariance[node.leaf_index, node.leaf_index], 0.0)))
            return doc
        left_label, right_label = _describe(schema, node.test)
        test = node.test.test
        if isinstance(test, Threshold):
            test_doc = {"type": "threshold", "threshold": test.value}
        else:
            test_doc = {"type": "category_equals", "label_index": test.label_index}
        return {
            "kind": "split",
            "feature": schema.features[node.test.feature_index].name,
            "feature_index": node.test.feature_index,
            "test": test_doc,
            "left_label": left_label,
            "right_label": right_label,
            "split_score": node.split_score,
            "discarded_count": node.discarded_count,
            "left": walk(node.left),
            "right": walk(node.right),
        }

    return {"leaf_count": leaf_count(tree), "root": walk(tree)}


def explanation_to_tree(doc: dict) -> TreeNode:
    """Rebuild the tree structure from an explanation document."""

    def walk(node: dict) -> TreeNode:
        if node["kind"] == "leaf":
            return Leaf(int(node["leaf_index"]), int(node["pair_count"]))
        test_doc = node["test"]
        if test_doc["type"] == "threshold":
            test: Threshold | CategoryEquals = Threshold(float(test_doc["threshold"]))
        elif test_doc["type"] == "category_equals":
            test = CategoryEquals(int(test_doc["label_index"]))
        else:
            raise ValueError(f"unknown test type {test_doc['type']!r}")
        split = SplitTest(int(node["feature_index"]), test)
        return Internal(
            split,
            walk(node["left"]),
            walk(node["right"]),
            int(node["split_score"]),
            int(node["discarded_count"]),
        )

    return walk(doc["root"])


def render_tree_text(doc: dict) -> str:
    """Render an explanation document as an indented plain-text rule list."""
    lines: list[str] = []

    def walk(node: dict, indent: int) -> None:
        pad = "  " * indent
        if node["kind"] == "leaf":
            stats = ""
            if "mean" in node:
                stats = f"  mean={node['mean']:+.5f} std={node['std']:.5f}"
            lines.append(f"{pad}leaf {node['leaf_index']} ({node['pair_count']} comparisons){stats}")
            return
        lines.append(
            f"{pad}if {node['right_label']}  [score={node['split_score']},"
            f" dropped={node['discarded_count']}]"
        )
        walk(node["right"], indent + 1)
        lines.append(f"{pad}else ({node['left_label']})")
        walk(node["left"], indent + 1)

    walk(doc["root"], 0)
    return "\n".join(lines)
