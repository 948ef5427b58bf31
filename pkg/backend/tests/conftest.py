import math
from pathlib import Path

import numpy as np
import pytest

from feeder.parser import build, parse
from powerflow.solver import SolverSettings

FIXTURES = Path(__file__).parent / "fixtures"

TIGHT = SolverSettings(tolerance=1e-10, max_iterations=500)

# extra declarations appended to four_bus
VARIANTS = {
    "capacitor": "capacitor c3 bus=n3 phases=abc kvar=[50 50 50]\n",
    "regulator": "regulator r12 segment=l12 phases=abc taps=[1.05 1.05 1.05]\n",
}


def feeder_text(name: str) -> str:
    return (FIXTURES / f"{name}.feeder").read_text(encoding="utf-8")


def load_text(text: str):
    return build(parse(text))


def load_fixture(name: str):
    return load_text(feeder_text(name))


def four_bus_variant(variant: str):
    return load_text(feeder_text("four_bus") + VARIANTS[variant])


def phasor(magnitude: float, degrees: float) -> complex:
    return magnitude * np.exp(1j * math.radians(degrees))


@pytest.fixture
def two_bus():
    return load_fixture("two_bus")


@pytest.fixture
def four_bus():
    return load_fixture("four_bus")


@pytest.fixture
def six_bus():
    return load_fixture("six_bus")


@pytest.fixture
def two_dg():
    return load_fixture("two_dg")
