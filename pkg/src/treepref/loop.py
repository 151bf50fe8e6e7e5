"""The comparison-driven optimization loop: ask, answer, refit, recommend."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from .acquisition import AcquisitionConfig, random_pair, select_next_pair
from .domain import ComparisonPair, FeatureSchema, Instance, PreferenceDataset, lhs_sample_pairs
from .posterior import LatentPosterior, NoiseConfig, fit_surrogate
from .tree import TreeConfig, TreeNode, route

__all__ = [
    "Oracle",
    "SyntheticOracle",
    "OracleFailure",
    "RunConfig",
    "TraceRecord",
    "SessionTrace",
    "recommend",
    "run",
]


@runtime_checkable
class Oracle(Protocol):
    """Answers a comparison by returning the preferred of the two instances."""

    def answer(self, a: Instance, b: Instance) -> Instance: ...


class SyntheticOracle:
    """Noiseless oracle backed by a known utility function.

    Exposes ``true_utility`` and the utility's known maximum so the loop can
    record per-step regret.  Ties go to the first argument.
    """

    def __init__(self, utility: Callable[[Instance], float], max_value: float) -> None:
        self.true_utility = utility
        self.max_value = max_value

    def answer(self, a: Instance, b: Instance) -> Instance:
        return a if self.true_utility(a) >= self.true_utility(b) else b


class OracleFailure(RuntimeError):
    """Oracle raised mid-run; the partial trace is preserved on the exception."""

    def __init__(self, message: str, trace: "SessionTrace") -> None:
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class RunConfig:
    initial_pairs: int = 20
    iterations: int = 100
    tree: TreeConfig = field(default_factory=TreeConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.initial_pairs < 1:
            raise ValueError(f"initial_pairs must be >= 1, got {self.initial_pairs}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")


@dataclass
class TraceRecord:
    """One answered comparison plus the loop's bookkeeping at that step."""

    pair_a: Instance
    pair_b: Instance
    winner: Instance
    timestamp: float
    incumbent: Instance
    regret: float | None
    fit_wall_time: float

    def to_json(self) -> dict:
        return {
            "pair": {"a": list(self.pair_a.values), "b": list(self.pair_b.values)},
            "winner": list(self.winner.values),
            "timestamp": self.timestamp,
            "incumbent": list(self.incumbent.values),
            "regret": self.regret,
            "fit_wall_time": self.fit_wall_time,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TraceRecord":
        return cls(
            pair_a=Instance(tuple(obj["pair"]["a"])),
            pair_b=Instance(tuple(obj["pair"]["b"])),
            winner=Instance(tuple(obj["winner"])),
            timestamp=float(obj["timestamp"]),
            incumbent=Instance(tuple(obj["incumbent"])),
            regret=None if obj.get("regret") is None else float(obj["regret"]),
            fit_wall_time=float(obj["fit_wall_time"]),
        )


class SessionTrace:
    """Ordered record of every answered comparison in one run."""

    def __init__(self, records: Sequence[TraceRecord] = ()) -> None:
        self.records: list[TraceRecord] = list(records)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def regrets(self) -> list[float | None]:
        return [r.regret for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json()) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "SessionTrace":
        records = [TraceRecord.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]
        return cls(records)

    def deterministic_signature(self) -> str:
        """Serialized records with clock-derived fields zeroed.

        Pair choices, winners, incumbents, and regrets are reproducible from
        (seed, oracle); wall-clock fields are not, so equality of runs is
        asserted on this projection.
        """
        stripped = []
        for r in self.records:
            obj = r.to_json()
            obj["timestamp"] = 0.0
            obj["fit_wall_time"] = 0.0
            stripped.append(json.dumps(obj, sort_keys=True))
        return "\n".join(stripped)


def recommend(
    observed: Sequence[Instance],
    model: tuple[TreeNode, LatentPosterior] | None,
    true_utility: Callable[[Instance], float] | None,
) -> Instance:
    """Current best guess among the observed instances.

    With a synthetic oracle the incumbent is the observed instance of highest
    true utility.  Otherwise it is the observed instance of highest posterior
    mean under the fitted model (earliest observation wins ties); with no
    model yet, every instance ties and the earliest observation is returned.
    """
    if not observed:
        raise ValueError("cannot recommend before any instance is observed")
    if true_utility is not None:
        scores = [true_utility(x) for x in observed]
    elif model is not None:
        tree_, post = model
        scores = [float(post.mean[route(tree_, x)]) for x in observed]
    else:
        return observed[0]
    best = 0
    for i in range(1, len(observed)):
        if scores[i] > scores[best]:
            best = i
    return observed[best]


def run(
    oracle: Oracle,
    schema: FeatureSchema,
    config: RunConfig,
    acquisition: str = "qeubo",
) -> SessionTrace:
    """Run the full loop and return its trace.

    Phase one answers ``initial_pairs`` space-filling candidate pairs; phase
    two alternates surrogate refits with acquisition (``qeubo`` or the
    ``random`` baseline) for ``iterations`` rounds.  Per-record wall time
    covers fit plus acquisition; regret is recorded when the oracle is
    synthetic.  Everything except clock fields is a pure function of
    (config, oracle answers).
    """
    if acquisition not in ("qeubo", "random"):
        raise ValueError(f"unknown acquisition {acquisition!r}")
    true_utility = getattr(oracle, "true_utility", None)
    max_value = getattr(oracle, "max_value", None)
    dataset = PreferenceDataset(schema)
    observed: list[Instance] = []
    trace = SessionTrace()
    model: tuple[TreeNode, LatentPosterior] | None = None

    def record(a: Instance, b: Instance, fit_seconds: float) -> None:
        try:
            winner = oracle.answer(a, b)
        except Exception as exc:  # preserve what we have for post-mortems
            raise OracleFailure(f"oracle failed at comparison {len(trace)}: {exc}", trace) from exc
        if winner not in (a, b):
            raise OracleFailure(f"oracle returned an instance outside the pair at comparison {len(trace)}", trace)
        loser = b if winner == a else a
        dataset.append(ComparisonPair(winner, loser))
        observed.extend((a, b))
        incumbent = recommend(observed, model, true_utility)
        regret = None
        if true_utility is not None and max_value is not None:
            regret = float(max_value - true_utility(incumbent))
        trace.append(
            TraceRecord(a, b, winner, time.time(), incumbent, regret, fit_seconds)
        )

    for a, b in lhs_sample_pairs(schema, config.initial_pairs, config.seed):
        record(a, b, 0.0)

    saturation = config.tree.min_samples_split * 4
    for t in range(config.iterations):
        started = time.perf_counter()
        model = fit_surrogate(dataset, config.tree, config.noise)
        step_seed = config.acquisition.seed + t
        if acquisition == "qeubo":
            a, b = select_next_pair(
                model[0], model[1], schema, config.acquisition,
                saturation_pairs=saturation, seed=step_seed,
            )
        else:
            a, b = random_pair(schema, config.acquisition.pool_size, step_seed)
        record(a, b, time.perf_counter() - started)
    return trace
