"""Command-line entry point for the multi-phase DG capacity planner.

Usage:
    python backend/main.py validate feeder.feeder
    python backend/main.py solve feeder.feeder --out results/
    python backend/main.py plan feeder.feeder --engine cfpso --seed 42 --out results/
"""

import logging

import click

from cli import plan, solve, validate


@click.group(name="mphase-opf")
@click.version_option(version="1.0.0", prog_name="mphase-opf")
@click.option("--verbose", is_flag=True, help="Log solver and optimizer progress")
def cli(verbose):
    """Load flow and DG planning for unbalanced radial feeders."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


cli.add_command(validate.command)
cli.add_command(solve.command)
cli.add_command(plan.command)


if __name__ == "__main__":
    cli()
