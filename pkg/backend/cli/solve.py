"""`solve` command: one load flow, written as CSV."""

from pathlib import Path

import click

from cli.common import EXIT_NOT_CONVERGED, config_options, fail, out_option, read_network, study_errors
from cli.run_config import RunConfig, settings_epilog
from losses.accounting import total_loss
from planner.report import current_frame, loss_frame, voltage_frame, write_csv
from powerflow.solver import solve

NOT_CONVERGED_FOOTER = ["converged,false"]


@click.command("solve", epilog=settings_epilog(("solver",)))
@click.argument("feeder", type=click.Path(exists=True, dir_okay=False))
@out_option
@config_options
def command(feeder, out_dir, config_file, assignments):
    """Solve the load flow and write voltages.csv, currents.csv and losses.csv."""
    network = read_network(feeder)
    with study_errors():
        run_config = RunConfig.from_sources(
            feeder, "solve", out_dir=out_dir, config_file=config_file, assignments=assignments
        )
        settings = run_config.solver_settings()

    with study_errors():
        sol = solve(network, settings)
        losses = total_loss(network, sol, strict=False)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    footer = None if sol.converged else NOT_CONVERGED_FOOTER
    write_csv(voltage_frame(network, sol), out / "voltages.csv", footer)
    write_csv(current_frame(network, sol), out / "currents.csv", footer)
    write_csv(loss_frame(losses), out / "losses.csv", footer)

    if not sol.converged:
        fail(
            f"Load flow did not converge in {sol.iterations} iterations "
            f"(mismatch {sol.max_mismatch:.3e} pu); last state written to {out}",
            EXIT_NOT_CONVERGED,
        )
    click.echo(
        f"Converged in {sol.iterations} iterations; total loss {losses.total_loss_kw:.3f} kW "
        f"({losses.loss_percent:.2f}% of load)"
    )
