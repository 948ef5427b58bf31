"""`plan` command: size DG units and write the study artifacts."""

import time
from pathlib import Path

import click

from cli.common import config_options, out_option, read_network, study_errors
from cli.run_config import RunConfig, settings_epilog
from optimizer.engine import ENGINES
from planner.report import compare_report, convergence_frame, plan_frame, report_frame, voltage_frame, write_csv
from planner.study import plan
from planner.summary import generate_summary

SUMMARY_FORMAT = "%.9g"


def write_summary(path: Path, result, wall_time_s: float) -> None:
    """key=value run summary; wall time is always the last line."""
    lines = [
        f"engine={result.engine}",
        f"seed={result.seed}",
        f"evaluations={result.evaluations}",
        f"iterations={result.iterations}",
        f"stop_reason={result.stop_reason}",
        f"best_fitness={SUMMARY_FORMAT % result.best_fitness}",
        f"wall_time_s={wall_time_s:.3f}",
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@click.command("plan", epilog=settings_epilog())
@click.argument("feeder", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--engine", "engines", type=click.Choice(list(ENGINES)), multiple=True, default=("cfpso",),
    show_default=True,
    help="Optimization engine; repeat to compare engines in plan.csv, report.csv and convergence.csv"
    " (the first one writes summary.txt and the voltage files)",
)
@click.option("--seed", default=None, metavar="N|auto", help="Random seed, or 'auto' to draw and print one")
@out_option
@config_options
def command(feeder, engines, seed, out_dir, config_file, assignments):
    """Size DG capacities and write plan.csv, convergence.csv, report.csv and summary.txt."""
    network = read_network(feeder)
    with study_errors():
        run_config = RunConfig.from_sources(
            feeder, "plan", out_dir=out_dir, engines=engines, seed=seed,
            config_file=config_file, assignments=assignments,
        )
        configs = [run_config.planner_config(engine) for engine in run_config.engines]
    if seed is not None and seed.strip().lower() == "auto":
        click.echo(f"seed: {run_config.seed}")

    start = time.perf_counter()
    with study_errors():
        results = [plan(network, config) for config in configs]
    wall_time_s = time.perf_counter() - start

    primary = results[0]
    report = compare_report(primary)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(plan_frame(results), out / "plan.csv")
    write_csv(convergence_frame(results), out / "convergence.csv")
    write_csv(report_frame(results), out / "report.csv")
    write_csv(voltage_frame(network, primary.base.solution), out / "voltages_base.csv")
    write_csv(voltage_frame(network, primary.optimized.solution), out / "voltages_optimized.csv")
    write_summary(out / "summary.txt", primary, wall_time_s)

    click.echo(generate_summary(primary, report))
