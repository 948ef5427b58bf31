"""Active power loss accounting over a solved feeder."""

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from feeder.model import PhasedNetwork, Transformer
from powerflow.solver import NotConverged, PowerFlowSolution, series_impedance

logger = logging.getLogger(__name__)

# passive losses below -LOSS_EPSILON * base_kva are reported
LOSS_EPSILON = 1e-9


class UnknownBranch(KeyError):
    pass


@dataclass
class LossBreakdown:
    per_segment_kw: Dict[str, float] = field(default_factory=dict)
    line_loss_kw: float = 0.0
    transformer_loss_kw: float = 0.0
    total_loss_kw: float = 0.0
    load_power_kw: float = 0.0
    dg_power_kw: float = 0.0
    source_power_kw: float = 0.0
    loss_percent: float = 0.0

    @property
    def total_loss_mw(self) -> float:
        return self.total_loss_kw / 1000.0


def _lookup(network: PhasedNetwork, branch_id: str):
    try:
        return network.branch(branch_id)
    except KeyError:
        raise UnknownBranch(branch_id)


def segment_loss(network: PhasedNetwork, sol: PowerFlowSolution, branch_id: str) -> float:
    """Real power entering a branch minus real power leaving it, in kW.

    Uses the voltages and currents at both ends, which stays exact on
    mutually coupled lines where a per-phase I^2 R sum does not.
    """
    branch = _lookup(network, branch_id)
    from_phases = sol.bus_phases[branch.from_bus]
    to_phases = sol.bus_phases[branch.to_bus]
    v_from = sol.bus_voltages[branch.from_bus][[from_phases.index(p) for p in branch.phases]]
    v_to = sol.bus_voltages[branch.to_bus][[to_phases.index(p) for p in branch.phases]]
    entering = np.sum(v_from * np.conj(sol.sending_currents[branch_id]))
    leaving = np.sum(v_to * np.conj(sol.branch_currents[branch_id]))
    return float((entering - leaving).real) / 1000.0


def i2r_loss(network: PhasedNetwork, sol: PowerFlowSolution, branch_id: str) -> float:
    """Per-phase |I|^2 R sum in kW, ignoring mutual coupling."""
    branch = _lookup(network, branch_id)
    resistance = np.diag(series_impedance(network, branch)).real
    return float(np.sum(np.abs(sol.branch_currents[branch_id]) ** 2 * resistance)) / 1000.0


def total_loss(network: PhasedNetwork, sol: PowerFlowSolution, strict: bool = True) -> LossBreakdown:
    """Sum branch losses by kind; `strict=False` also accepts an unconverged state."""
    if strict and not sol.converged:
        raise NotConverged("loss accounting needs a converged solution")

    epsilon = LOSS_EPSILON * network.base_kva
    breakdown = LossBreakdown()
    for branch in sorted(network.branches(), key=lambda b: b.id):
        loss = segment_loss(network, sol, branch.id)
        if loss < -epsilon:
            logger.warning("Branch %s on %s shows negative loss %.3e kW", branch.id, network.name, loss)
        breakdown.per_segment_kw[branch.id] = loss
        if isinstance(branch, Transformer):
            breakdown.transformer_loss_kw += loss
        else:
            breakdown.line_loss_kw += loss

    breakdown.total_loss_kw = breakdown.line_loss_kw + breakdown.transformer_loss_kw
    breakdown.load_power_kw = sol.load_power.real / 1000.0
    breakdown.dg_power_kw = sol.dg_power.real / 1000.0
    breakdown.source_power_kw = sol.source_power.real / 1000.0
    if breakdown.load_power_kw > 0:
        breakdown.loss_percent = 100.0 * breakdown.total_loss_kw / breakdown.load_power_kw
    return breakdown


def loss_squared(loss: LossBreakdown) -> float:
    """Planner objective: total loss in MW, squared."""
    return loss.total_loss_mw ** 2
