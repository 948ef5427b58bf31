"""Shared options, feeder loading and the exit-code contract."""

import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

import click

from feeder.errors import FeederParseError, NotRadial, UnresolvedReference, ValidationFailed
from feeder.model import PhasedNetwork
from feeder.parser import build, parse
from planner.study import PlanningError
from powerflow.solver import NotConverged, SingularElement

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_STUDY = 4


def fail(message: str, code: int) -> None:
    click.echo(message, err=True)
    sys.exit(code)


def read_network(path: str) -> PhasedNetwork:
    """Parse and build a feeder file, exiting with the parse or validation code on failure."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        fail(f"{path}:1:{e.start + 1} not valid UTF-8", EXIT_PARSE)
    except OSError as e:
        fail(f"{path}: {e.strerror}", EXIT_PARSE)

    try:
        return build(parse(text))
    except FeederParseError as e:
        fail(e.describe(path), EXIT_PARSE)
    except UnresolvedReference as e:
        click.echo(f"{e.referenced_by}\t{e}")
        sys.exit(EXIT_VALIDATION)
    except ValidationFailed as e:
        for violation in e.report:
            click.echo(f"{violation.element_id}\t{violation.reason}")
        sys.exit(EXIT_VALIDATION)


@contextmanager
def study_errors() -> Iterator[None]:
    """Map library failures inside a command onto exit codes."""
    try:
        yield
    except (NotRadial, SingularElement) as e:
        fail(f"Error: {e}", EXIT_VALIDATION)
    except NotConverged as e:
        fail(f"Error: {e}", EXIT_NOT_CONVERGED)
    except (PlanningError, ValueError) as e:
        fail(f"Error: {e}", EXIT_STUDY)


def out_option(f):
    return click.option(
        "--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True,
        help="Directory for CSV artifacts",
    )(f)


def config_options(f):
    f = click.option(
        "--set", "assignments", multiple=True, metavar="KEY=VALUE",
        help="Override one setting, e.g. --set solver.tolerance=1e-6 (repeatable)",
    )(f)
    return click.option(
        "--config", "config_file", type=click.Path(exists=True, dir_okay=False), default=None,
        help="key=value study configuration file",
    )(f)
