"""Shared builders for randomized test corpora.

Every helper takes an explicit ``rng`` (or seed) so individual tests stay
reproducible in isolation; nothing here touches global random state.
"""

from __future__ import annotations

import numpy as np
import pytest

from treepref.domain import (
    Categorical,
    ComparisonPair,
    Continuous,
    FeatureSchema,
    FeatureSpec,
    Instance,
    PreferenceDataset,
)

_LABEL_POOL = ("alpha", "beta", "gamma", "delta", "epsilon")


def make_schema(rng: np.random.Generator, max_features: int = 4) -> FeatureSchema:
    """A random mixed schema with 1..max_features features."""
    n = int(rng.integers(1, max_features + 1))
    specs = []
    for i in range(n):
        if rng.random() < 0.6:
            lo = float(rng.uniform(-5, 5))
            specs.append(FeatureSpec(f"f{i}", Continuous(lo, lo + float(rng.uniform(0.5, 10)))))
        else:
            k = int(rng.integers(2, len(_LABEL_POOL) + 1))
            specs.append(FeatureSpec(f"f{i}", Categorical(_LABEL_POOL[:k])))
    return FeatureSchema(tuple(specs))


def random_instance(rng: np.random.Generator, schema: FeatureSchema) -> Instance:
    values: list[float | int] = []
    for spec in schema.features:
        if isinstance(spec.kind, Continuous):
            values.append(float(rng.uniform(spec.kind.lower, spec.kind.upper)))
        else:
            values.append(int(rng.integers(len(spec.kind.labels))))
    return Instance(tuple(values))


def random_dataset(
    rng: np.random.Generator,
    schema: FeatureSchema,
    n_pairs: int,
    n_distinct: int | None = None,
) -> PreferenceDataset:
    """Random comparisons over a small pool of distinct instances.

    Reusing instances across pairs is deliberate: it exercises multiplicity
    aggregation and same-leaf filtering downstream.
    """
    if n_distinct is None:
        n_distinct = max(2, min(2 * n_pairs, 8))
    pool = [random_instance(rng, schema) for _ in range(n_distinct)]
    dataset = PreferenceDataset(schema)
    for _ in range(n_pairs):
        i, j = rng.choice(len(pool), size=2, replace=False)
        dataset.append(ComparisonPair(pool[int(i)], pool[int(j)]))
    return dataset


@pytest.fixture
def unit_interval_schema() -> FeatureSchema:
    return FeatureSchema((FeatureSpec("x", Continuous(0.0, 1.0)),))
