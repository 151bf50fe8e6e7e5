"""Search-space schema, instances, comparison records, and initial designs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "Continuous",
    "Categorical",
    "FeatureSpec",
    "FeatureSchema",
    "Instance",
    "ComparisonPair",
    "PreferenceDataset",
    "validate_instance",
    "lhs_sample_pairs",
    "schema_to_json",
    "schema_from_json",
]


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Continuous:
    """Bounded real-valued feature."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError(f"bounds must be finite, got [{self.lower}, {self.upper}]")
        if not self.lower < self.upper:
            raise ValueError(f"lower bound must be below upper, got [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class Categorical:
    """Unordered feature taking one of a fixed set of labels."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) < 2:
            raise ValueError(f"categorical feature needs at least 2 labels, got {len(self.labels)}")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"categorical labels must be distinct, got {self.labels!r}")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: Continuous | Categorical


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered, named description of one mixed continuous/categorical space.

    Feature order is positional and shared by every :class:`Instance` drawn
    from the space.
    """

    features: tuple[FeatureSpec, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"feature names must be unique, duplicated: {dupes}")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def continuous_indices(self) -> list[int]:
        return [i for i, f in enumerate(self.features) if isinstance(f.kind, Continuous)]

    def categorical_indices(self) -> list[int]:
        return [i for i, f in enumerate(self.features) if isinstance(f.kind, Categorical)]


# ---------------------------------------------------------------------------
# Instances and comparisons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Instance:
    """One point of the search space.

    Continuous features are stored as floats, categorical features as label
    indices.  Instances are value objects: hashable and compared by value, so
    they can key dictionaries and deduplicate observations.
    """

    values: tuple[float | int, ...]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class ComparisonPair:
    """A single answered comparison: ``winner`` was preferred over ``loser``."""

    winner: Instance
    loser: Instance


def validate_instance(schema: FeatureSchema, instance: Instance) -> list[str]:
    """Check one instance against a schema.

    Returns:
        A list of human-readable violations; an empty list means the instance
        is valid.  Out-of-bounds continuous values and unknown categorical
        indices are reported with the offending feature's name.
    """
    if len(instance.values) != len(schema):
        return [f"instance has {len(instance.values)} values, schema has {len(schema)} features"]
    problems: list[str] = []
    for spec, value in zip(schema.features, instance.values):
        kind = spec.kind
        if isinstance(kind, Continuous):
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not np.isfinite(value):
                problems.append(f"{spec.name}: {value!r} is not a finite number")
            elif not kind.lower <= value <= kind.upper:
                problems.append(f"{spec.name}: {value!r} outside [{kind.lower}, {kind.upper}]")
        else:
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                problems.append(f"{spec.name}: {value!r} is not a label index")
            elif not 0 <= value < len(kind.labels):
                problems.append(f"{spec.name}: index {value!r} not in 0..{len(kind.labels) - 1}")
    return problems


class PreferenceDataset:
    """Append-only collection of answered comparisons over one schema."""

    def __init__(self, schema: FeatureSchema, pairs: Sequence[ComparisonPair] = ()) -> None:
        self.schema = schema
        self.pairs: list[ComparisonPair] = []
        for pair in pairs:
            self.append(pair)

    def append(self, pair: ComparisonPair) -> None:
        for side, inst in (("winner", pair.winner), ("loser", pair.loser)):
            problems = validate_instance(self.schema, inst)
            if problems:
                raise ValueError(f"invalid {side}: " + "; ".join(problems))
        self.pairs.append(pair)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[ComparisonPair]:
        return iter(self.pairs)


# ---------------------------------------------------------------------------
# Initial design
# ---------------------------------------------------------------------------

def lhs_sample_pairs(
    schema: FeatureSchema, pair_count: int, seed: int
) -> list[tuple[Instance, Instance]]:
    """Draw an initial design of candidate comparison pairs.

    Samples ``2 * pair_count`` instances by Latin hypercube over the
    continuous features (each dimension is stratified into ``2 * pair_count``
    equal-width bins holding exactly one sample) with uniform categorical
    draws, shuffles the instances deterministically, and pairs them up
    consecutively.  Winners are not decided here; the returned pairs are
    unanswered candidates.
    """
    if pair_count < 1:
        raise ValueError(f"pair_count must be positive, got {pair_count}")
    n = 2 * pair_count
    rng = np.random.default_rng(seed)
    columns: list[np.ndarray] = []
    for spec in schema.features:
        kind = spec.kind
        if isinstance(kind, Continuous):
            unit = (rng.permutation(n) + rng.random(n)) / n
            columns.append(kind.lower + (kind.upper - kind.lower) * unit)
        else:
            columns.append(rng.integers(len(kind.labels), size=n))
    order = rng.permutation(n)
    instances = []
    for i in order:
        values: list[float | int] = []
        for spec, col in zip(schema.features, columns):
            if isinstance(spec.kind, Continuous):
                values.append(float(col[i]))
            else:
                values.append(int(col[i]))
        instances.append(Instance(tuple(values)))
    return [(instances[2 * k], instances[2 * k + 1]) for k in range(pair_count)]


# ---------------------------------------------------------------------------
# JSON wire format
# ---------------------------------------------------------------------------

def schema_to_json(schema: FeatureSchema) -> dict:
    features = []
    for spec in schema.features:
        if isinstance(spec.kind, Continuous):
            features.append(
                {"name": spec.name, "kind": "continuous", "bounds": [spec.kind.lower, spec.kind.upper]}
            )
        else:
            features.append({"name": spec.name, "kind": "categorical", "labels": list(spec.kind.labels)})
    return {"features": features}


def schema_from_json(obj: Mapping) -> FeatureSchema:
    """Parse the ``{"features": [...]}`` wire format back into a schema.

    Raises:
        ValueError: malformed document, with the offending feature named.
    """
    if not isinstance(obj, Mapping) or "features" not in obj:
        raise ValueError("schema document must be an object with a 'features' list")
    specs = []
    for i, item in enumerate(obj["features"]):
        name = item.get("name")
        if not isinstance(name, str) or not name:
            raise ValueError(f"features[{i}]: missing or empty 'name'")
        kind = item.get("kind")
        try:
            if kind == "continuous":
                bounds = item.get("bounds")
                if not isinstance(bounds, Sequence) or len(bounds) != 2:
                    raise ValueError("'bounds' must be [lower, upper]")
                specs.append(FeatureSpec(name, Continuous(float(bounds[0]), float(bounds[1]))))
            elif kind == "categorical":
                labels = item.get("labels")
                if not isinstance(labels, Sequence) or isinstance(labels, str):
                    raise ValueError("'labels' must be a list")
                specs.append(FeatureSpec(name, Categorical(tuple(str(s) for s in labels))))
            else:
                raise ValueError(f"unknown kind {kind!r}")
        except ValueError as exc:
            raise ValueError(f"feature {name!r}: {exc}") from None
    return FeatureSchema(tuple(specs))
