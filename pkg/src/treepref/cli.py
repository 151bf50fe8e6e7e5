"""Command-line entry points.

    treepref bench run    synthetic benchmark experiments -> CSV
    treepref bench plot   regret / wall-time figures from a CSV
    treepref sushi synth  generate a survey-style preference corpus
    treepref sushi eval   per-user session simulation on a corpus
    treepref serve        start the HTTP session service
"""

from __future__ import annotations

from pathlib import Path

import click

from .acquisition import AcquisitionConfig
from .benchmarks import (
    benchmark_names,
    plot_report,
    run_benchmark_experiment,
    write_report_csv,
)
from .loop import RunConfig
from .posterior import NoiseConfig
from .tree import TreeConfig


@click.group()
def main() -> None:
    """Preference learning with a tree-structured utility surrogate."""


@main.group()
def bench() -> None:
    """Synthetic benchmark experiments."""


@bench.command("run")
@click.option("--function", "function_name", required=True, type=click.Choice(benchmark_names()))
@click.option("--runs", default=10, show_default=True)
@click.option("--initial-pairs", default=20, show_default=True)
@click.option("--iterations", default=100, show_default=True)
@click.option("--acquisition", default="qeubo", type=click.Choice(["qeubo", "random"]), show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--pool-size", default=64, show_default=True)
@click.option("--prioritize-within-leaf/--no-prioritize-within-leaf", default=False, show_default=True)
@click.option("--min-split-score", default=1, show_default=True)
@click.option("--min-samples-split", default=1, show_default=True)
@click.option("--max-depth", default=50, show_default=True)
@click.option("--sigma-noise", default=0.01, show_default=True)
@click.option("--sigma-prior", default=0.02, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, writable=True))
def bench_run(
    function_name: str,
    runs: int,
    initial_pairs: int,
    iterations: int,
    acquisition: str,
    seed: int,
    pool_size: int,
    prioritize_within_leaf: bool,
    min_split_score: int,
    min_samples_split: int,
    max_depth: int,
    sigma_noise: float,
    sigma_prior: float,
    out_path: str,
) -> None:
    """Repeated optimization runs against a benchmark function."""
    config = RunConfig(
        initial_pairs=initial_pairs,
        iterations=iterations,
        tree=TreeConfig(
            min_split_score=min_split_score,
            min_samples_split=min_samples_split,
            max_depth=max_depth,
        ),
        noise=NoiseConfig(sigma_noise=sigma_noise, sigma_prior=sigma_prior),
        acquisition=AcquisitionConfig(
            pool_size=pool_size, prioritize_within_leaf=prioritize_within_leaf, seed=seed
        ),
        seed=seed,
    )
    report = run_benchmark_experiment(function_name, runs, config, acquisition=acquisition)
    write_report_csv(report, out_path)
    final = report.mean_final_regret()
    click.echo(f"{function_name} {acquisition}: {runs} runs, mean final regret {final:.6g} -> {out_path}")


@bench.command("plot")
@click.option("--csv", "csv_paths", multiple=True, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", default=".", show_default=True, type=click.Path(file_okay=False))
def bench_plot(csv_paths: tuple[str, ...], out_dir: str) -> None:
    """Render regret and cumulative-time figures for one or more run CSVs."""
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    for csv_path in csv_paths:
        for path in plot_report(csv_path, out_dir):
            click.echo(f"wrote {path}")


@main.group()
def sushi() -> None:
    """Survey-style ranking corpus tools."""


@sushi.command("synth")
@click.option("--users", default=600, show_default=True)
@click.option("--items", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def sushi_synth(users: int, items: int, seed: int, out_dir: str) -> None:
    """Generate a corpus (items, users, per-user rankings) in survey format."""
    from .sushi import generate_synthetic_sushi

    generate_synthetic_sushi(out_dir, n_users=users, seed=seed, n_items=items)
    click.echo(f"wrote {users} users / {items} items to {out_dir}")


@sushi.command("eval")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--dataset", default="A", type=click.Choice(["A", "B"]), show_default=True)
@click.option("--users", default=50, show_default=True)
@click.option("--queries", default=30, show_default=True)
@click.option("--acquisition", default="qeubo", type=click.Choice(["qeubo", "random"]), show_default=True)
@click.option("--warm-start", default="off", type=click.Choice(["on", "off"]), show_default=True)
@click.option("--cohort-size", default=50, show_default=True)
@click.option("--max-depth", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, writable=True))
def sushi_eval(
    data_dir: str,
    dataset: str,
    users: int,
    queries: int,
    acquisition: str,
    warm_start: str,
    cohort_size: int,
    max_depth: int,
    seed: int,
    out_path: str,
) -> None:
    """Simulate comparison sessions for survey respondents and score them."""
    from .sushi import evaluate_users, load_sushi_data, write_sushi_csv

    data = load_sushi_data(data_dir)
    report = evaluate_users(
        data,
        dataset=dataset,
        n_users=users,
        queries=queries,
        acquisition=acquisition,
        warm_start=warm_start == "on",
        item_config=TreeConfig(max_depth=max_depth),
        seed=seed,
        cohort_size=cohort_size,
    )
    write_sushi_csv(report, out_path)
    curve = report.mean_curve()
    click.echo(
        f"dataset {dataset} {acquisition} warm={warm_start}: {len(report.user_ids)} users, "
        f"mean rho {curve[0]:.3f} -> {curve[-1]:.3f} -> {out_path}"
    )


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--data-dir", default=None, help="Session storage directory (default $TREEPREF_DATA_DIR).")
def serve(host: str, port: int, data_dir: str | None) -> None:
    """Run the HTTP session service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(data_dir), host=host, port=port)


if __name__ == "__main__":
    main()
