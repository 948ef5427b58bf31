"""Voltage and ampacity limit checks on a solved feeder."""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from feeder.model import LineSegment, Phase, PhasedNetwork
from powerflow.solver import NotConverged, PowerFlowSolution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VoltageViolation:
    bus: str
    phase: Phase
    v_pu: float
    limit: float
    severity: str

    @property
    def deviation_pu(self) -> float:
        return abs(self.v_pu - self.limit)


@dataclass(frozen=True)
class AmpacityViolation:
    branch: str
    phase: Phase
    amps: float
    limit: float
    severity: str

    @property
    def relative_overload(self) -> float:
        return (self.amps - self.limit) / self.limit


@dataclass
class LimitReport:
    voltage_violations: List[VoltageViolation] = field(default_factory=list)
    ampacity_violations: List[AmpacityViolation] = field(default_factory=list)
    worst_v_pu: Tuple[float, float] = (1.0, 1.0)

    @property
    def is_clean(self) -> bool:
        return not self.voltage_violations and not self.ampacity_violations

    def count(self) -> int:
        return len(self.voltage_violations) + len(self.ampacity_violations)


def voltage_severity(v_pu: float, limit: float) -> str:
    """Grade a voltage excursion by its distance past the limit, in pu of nominal."""
    deviation = abs(v_pu - limit) * 100
    if deviation > 5:
        return "high"
    elif deviation > 2:
        return "medium"
    else:
        return "low"


def ampacity_severity(amps: float, limit: float) -> str:
    """Grade an overload by percent above the rating."""
    deviation = (amps - limit) / limit * 100
    if deviation > 30:
        return "high"
    elif deviation > 15:
        return "medium"
    else:
        return "low"


def check_limits(network: PhasedNetwork, sol: PowerFlowSolution) -> LimitReport:
    """Collect voltage and ampacity violations, ordered by id then phase."""
    if not sol.converged:
        raise NotConverged("limits need a converged solution")
    if not all(np.isfinite(v).all() for v in sol.bus_voltages.values()):
        raise NotConverged("limits need finite bus voltages")

    report = LimitReport()
    lowest = np.inf
    highest = -np.inf
    for bus in sorted(network.buses, key=lambda b: b.id):
        magnitudes = np.abs(sol.bus_voltages[bus.id]) / bus.nominal_voltage
        lowest = min(lowest, float(magnitudes.min()))
        highest = max(highest, float(magnitudes.max()))
        for phase, v_pu in zip(bus.phases, magnitudes):
            v_pu = float(v_pu)
            if v_pu < network.v_min_pu:
                limit = network.v_min_pu
            elif v_pu > network.v_max_pu:
                limit = network.v_max_pu
            else:
                continue
            report.voltage_violations.append(
                VoltageViolation(bus.id, phase, v_pu, limit, voltage_severity(v_pu, limit))
            )
    if network.buses:
        report.worst_v_pu = (lowest, highest)

    rated = sorted(
        (seg for seg in network.segments if isinstance(seg, LineSegment) and seg.ampacity is not None),
        key=lambda s: s.id,
    )
    for seg in rated:
        for phase, current in zip(seg.phases, sol.branch_currents[seg.id]):
            amps = float(abs(current))
            # rating is a strict upper bound
            if amps >= seg.ampacity:
                report.ampacity_violations.append(
                    AmpacityViolation(seg.id, phase, amps, seg.ampacity,
                                      ampacity_severity(amps, seg.ampacity))
                )

    if not report.is_clean:
        logger.debug(
            "%s: %d voltage and %d ampacity violations",
            network.name, len(report.voltage_violations), len(report.ampacity_violations),
        )
    return report
