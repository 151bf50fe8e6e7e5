"""Synthetic test functions and batch experiments for the comparison loop.

All functions are the classic minimization test problems, negated so the loop
maximizes.  Known optima are frozen from closed forms where they exist and
from high-precision numeric polish of the published best-known points
otherwise (Michalewicz, Hartmann, Schwefel).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .domain import Continuous, FeatureSchema, FeatureSpec, Instance, validate_instance
from .loop import RunConfig, SyntheticOracle, run

__all__ = [
    "BenchmarkFunction",
    "ExperimentReport",
    "benchmark_names",
    "get_benchmark",
    "evaluate_benchmark",
    "make_oracle",
    "run_benchmark_experiment",
    "write_report_csv",
    "read_report_csv",
    "plot_report",
]

_SCHWEFEL_XSTAR = 420.9687463599821
_SCHWEFEL_RESIDUAL = 1.2727566229386866e-05  # 418.9829 - x* sin(sqrt(x*)), per dimension

_HARTMANN6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_HARTMANN6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)


@dataclass(frozen=True)
class BenchmarkFunction:
    """A named objective over a box, already negated for maximization."""

    name: str
    schema: FeatureSchema
    fn: Callable[[np.ndarray], float]
    known_max_value: float
    known_max_location: Instance | None

    def evaluate(self, instance: Instance) -> float:
        problems = validate_instance(self.schema, instance)
        if problems:
            raise ValueError(f"{self.name}: " + "; ".join(problems))
        return float(self.fn(instance.as_array()))


def _box(dim: int, lower: float, upper: float) -> FeatureSchema:
    return FeatureSchema(tuple(FeatureSpec(f"x{i}", Continuous(lower, upper)) for i in range(dim)))


def _branin() -> BenchmarkFunction:
    """Branin-Hoo on [-5, 10] x [0, 15]; three global minima at 10/(8 pi)."""
    b = 5.1 / (4.0 * math.pi**2)
    c = 5.0 / math.pi

    def fn(x: np.ndarray) -> float:
        raw = (x[1] - b * x[0] ** 2 + c * x[0] - 6.0) ** 2
        raw += 10.0 * (1.0 - 1.0 / (8.0 * math.pi)) * math.cos(x[0]) + 10.0
        return -raw

    best = -10.0 / (8.0 * math.pi)
    schema = FeatureSchema(
        (FeatureSpec("x0", Continuous(-5.0, 10.0)), FeatureSpec("x1", Continuous(0.0, 15.0)))
    )
    return BenchmarkFunction("branin", schema, fn, best, Instance((math.pi, 2.275)))


def _dejong2d() -> BenchmarkFunction:
    """Sphere on [-5.12, 5.12]^2; minimum 0 at the origin."""

    def fn(x: np.ndarray) -> float:
        return -float(np.sum(x * x))

    return BenchmarkFunction("dejong2d", _box(2, -5.12, 5.12), fn, 0.0, Instance((0.0, 0.0)))


def _levy(dim: int) -> BenchmarkFunction:
    """Levy on [-10, 10]^d; minimum 0 at (1, ..., 1)."""

    def fn(x: np.ndarray) -> float:
        w = 1.0 + (x - 1.0) / 4.0
        raw = math.sin(math.pi * w[0]) ** 2
        raw += float(np.sum((w[:-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(math.pi * w[:-1] + 1.0) ** 2)))
        raw += (w[-1] - 1.0) ** 2 * (1.0 + math.sin(2.0 * math.pi * w[-1]) ** 2)
        return -raw

    return BenchmarkFunction(f"levy{dim}d", _box(dim, -10.0, 10.0), fn, 0.0, Instance((1.0,) * dim))


def _rosenbrock(dim: int) -> BenchmarkFunction:
    """Rosenbrock valley on [-5, 10]^d; minimum 0 at (1, ..., 1)."""

    def fn(x: np.ndarray) -> float:
        return -float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (x[:-1] - 1.0) ** 2))

    return BenchmarkFunction(
        f"rosenbrock{dim}d", _box(dim, -5.0, 10.0), fn, 0.0, Instance((1.0,) * dim)
    )


def _michalewicz(dim: int, best: float, location: tuple[float, ...]) -> BenchmarkFunction:
    """Michalewicz (m=10) on [0, pi]^d; steep ridges, best-known optimum frozen."""

    def fn(x: np.ndarray) -> float:
        i = np.arange(1, dim + 1)
        return float(np.sum(np.sin(x) * np.sin(i * x * x / math.pi) ** 20))

    return BenchmarkFunction(f"michalewicz{dim}d", _box(dim, 0.0, math.pi), fn, best, Instance(location))


def _hartmann6d() -> BenchmarkFunction:
    """Hartmann-6 on [0, 1]^6; single global minimum near -3.32237."""

    def fn(x: np.ndarray) -> float:
        inner = np.sum(_HARTMANN6_A * (x - _HARTMANN6_P) ** 2, axis=1)
        return float(np.sum(_HARTMANN6_ALPHA * np.exp(-inner)))

    location = Instance(
        (0.20168950909365746, 0.15001069354111374, 0.4768739729250998,
         0.2753324275220782, 0.3116516172395686, 0.6573005345536702)
    )
    return BenchmarkFunction("hartmann6d", _box(6, 0.0, 1.0), fn, 3.3223680114155147, location)


def _schwefel(dim: int) -> BenchmarkFunction:
    """Schwefel on [-500, 500]^d; deceptive, optimum near 420.9687 per axis."""

    def fn(x: np.ndarray) -> float:
        return -float(418.9829 * dim - np.sum(x * np.sin(np.sqrt(np.abs(x)))))

    return BenchmarkFunction(
        f"schwefel{dim}d",
        _box(dim, -500.0, 500.0),
        fn,
        -_SCHWEFEL_RESIDUAL * dim,
        Instance((_SCHWEFEL_XSTAR,) * dim),
    )


_REGISTRY: dict[str, Callable[[], BenchmarkFunction]] = {
    "branin": _branin,
    "dejong2d": _dejong2d,
    "levy2d": lambda: _levy(2),
    "rosenbrock4d": lambda: _rosenbrock(4),
    "michalewicz2d": lambda: _michalewicz(
        2, 1.8013034100985534, (2.202905520077128, 1.5707963267807836)
    ),
    "hartmann6d": _hartmann6d,
    "michalewicz5d": lambda: _michalewicz(
        5,
        4.687658179088149,
        (2.202905517428967, 1.5707963267976037, 1.2849915685703142,
         1.9230584717067392, 1.7204697730466065),
    ),
    "schwefel2d": lambda: _schwefel(2),
    "schwefel5d": lambda: _schwefel(5),
}


def benchmark_names() -> list[str]:
    return sorted(_REGISTRY)


def get_benchmark(function_id: str) -> BenchmarkFunction:
    try:
        return _REGISTRY[function_id]()
    except KeyError:
        raise ValueError(f"unknown benchmark {function_id!r}; choose from {benchmark_names()}") from None


def evaluate_benchmark(function_id: str, instance: Instance) -> float:
    """Evaluate one registered function; bounds and dimension are enforced."""
    return get_benchmark(function_id).evaluate(instance)


def make_oracle(benchmark: BenchmarkFunction) -> SyntheticOracle:
    return SyntheticOracle(benchmark.evaluate, benchmark.known_max_value)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    """Regret and timing curves for repeated runs of one configuration.

    ``regret_curves`` has one row per run over every answered comparison;
    ``time_curves`` has one row per run of cumulative fit-plus-acquire
    seconds over the model-driven iterations only (the space-filling phase
    does no fitting).
    """

    function_name: str
    acquisition: str
    run_seeds: list[int]
    regret_curves: list[list[float]]
    time_curves: list[list[float]]

    def mean_regret_curve(self) -> np.ndarray:
        return np.asarray(self.regret_curves).mean(axis=0)

    def std_regret_curve(self) -> np.ndarray:
        return np.asarray(self.regret_curves).std(axis=0)

    def mean_final_regret(self) -> float:
        return float(np.mean([curve[-1] for curve in self.regret_curves]))


def run_benchmark_experiment(
    function_id: str, runs: int, config: RunConfig, acquisition: str = "qeubo"
) -> ExperimentReport:
    """Repeat the loop with per-run seed offsets and collect curves.

    Run ``r`` shifts the initial-design seed by ``r`` and the acquisition
    seed stream by ``100000 * r``, so repeats differ in their questions while
    staying reproducible end to end.
    """
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    benchmark = get_benchmark(function_id)
    regret_curves: list[list[float]] = []
    time_curves: list[list[float]] = []
    seeds: list[int] = []
    for r in range(runs):
        run_config = replace(
            config,
            seed=config.seed + r,
            acquisition=replace(config.acquisition, seed=config.acquisition.seed + 100000 * r),
        )
        trace = run(make_oracle(benchmark), benchmark.schema, run_config, acquisition)
        regret_curves.append([rec.regret for rec in trace.records])
        iteration_times = [rec.fit_wall_time for rec in trace.records[config.initial_pairs:]]
        time_curves.append(list(np.cumsum(iteration_times)))
        seeds.append(run_config.seed)
    return ExperimentReport(function_id, acquisition, seeds, regret_curves, time_curves)


def write_report_csv(report: ExperimentReport, path: str | Path) -> None:
    """Write one row per (run, comparison): run, iteration, regret, cum_seconds.

    ``cum_seconds`` is blank during the space-filling phase and cumulative
    over the model-driven iterations after it.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "iteration", "regret", "cum_seconds"])
        for r, regrets in enumerate(report.regret_curves):
            times = report.time_curves[r]
            warmup = len(regrets) - len(times)
            for i, regret in enumerate(regrets):
                cum = "" if i < warmup else f"{times[i - warmup]:.6f}"
                writer.writerow([r, i, f"{regret:.10g}", cum])


def read_report_csv(path: str | Path) -> dict[int, list[tuple[int, float, float | None]]]:
    """Parse a report CSV back into per-run (iteration, regret, cum) rows."""
    rows: dict[int, list[tuple[int, float, float | None]]] = {}
    with open(path, newline="") as fh:
        for record in csv.DictReader(fh):
            cum = record["cum_seconds"]
            rows.setdefault(int(record["run"]), []).append(
                (int(record["iteration"]), float(record["regret"]), float(cum) if cum else None)
            )
    for runs in rows.values():
        runs.sort(key=lambda item: item[0])
    return rows


def plot_report(path: str | Path, out_dir: str | Path) -> list[Path]:
    """Emit regret-vs-iteration and time-vs-iteration PNGs from a report CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_report_csv(path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(path).stem

    regret = np.asarray([[r for _, r, _ in runs] for runs in rows.values()])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    mean = regret.mean(axis=0)
    ax.plot(np.arange(regret.shape[1]), mean, label="mean regret")
    ax.fill_between(
        np.arange(regret.shape[1]),
        mean - regret.std(axis=0),
        mean + regret.std(axis=0),
        alpha=0.25,
    )
    ax.set_xlabel("comparisons answered")
    ax.set_ylabel("simple regret")
    ax.set_yscale("log" if (regret > 0).all() else "linear")
    ax.legend()
    regret_path = out_dir / f"{stem}_regret.png"
    fig.savefig(regret_path, dpi=120, bbox_inches="tight")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for run_id, runs in rows.items():
        pts = [(i, c) for i, _, c in runs if c is not None]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], alpha=0.6, label=f"run {run_id}")
    ax.set_xlabel("comparisons answered")
    ax.set_ylabel("cumulative fit+acquire seconds")
    if len(rows) <= 10:
        ax.legend(fontsize=7)
    time_path = out_dir / f"{stem}_time.png"
    fig.savefig(time_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return [regret_path, time_path]
