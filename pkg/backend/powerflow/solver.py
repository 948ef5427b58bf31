"""Forward-backward sweep load flow for unbalanced multi-phase radial feeders."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from feeder.model import (
    PHASE_ANGLES,
    Bus,
    Branch,
    LineSegment,
    Phase,
    PhasedNetwork,
    PhaseSet,
)
from feeder.topology import radial_order

logger = logging.getLogger(__name__)


class PowerFlowError(Exception):
    """Base class for load-flow errors."""


class SingularElement(PowerFlowError):
    def __init__(self, branch_id: str):
        self.branch_id = branch_id
        super().__init__(f"series impedance of '{branch_id}' is singular on its phase set")


class NotConverged(PowerFlowError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-4  # per unit of each bus's nominal voltage
    max_iterations: int = 100
    flat_start: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class PowerFlowSolution:
    """Per-phase state of a solved feeder.

    Vectors follow the canonical phase order of their bus or branch.
    `branch_currents` flow through the series impedance (receiving end);
    `sending_currents` leave the parent bus and differ only across
    regulators and transformers.
    """

    bus_phases: Dict[str, PhaseSet]
    bus_voltages: Dict[str, np.ndarray]
    branch_phases: Dict[str, PhaseSet]
    branch_currents: Dict[str, np.ndarray]
    sending_currents: Dict[str, np.ndarray]
    bus_currents: Dict[str, np.ndarray]
    converged: bool
    iterations: int
    max_mismatch: float
    source_bus: str = ""
    source_power: complex = 0j
    load_power: complex = 0j
    dg_power: complex = 0j
    history: List[float] = field(default_factory=list)

    def voltage(self, bus_id: str, phase: Phase) -> complex:
        return complex(self.bus_voltages[bus_id][self.bus_phases[bus_id].index(phase)])

    def current(self, branch_id: str, phase: Phase) -> complex:
        return complex(self.branch_currents[branch_id][self.branch_phases[branch_id].index(phase)])

    def voltage_pu(self, network: PhasedNetwork) -> Dict[str, np.ndarray]:
        return {
            bus.id: np.abs(self.bus_voltages[bus.id]) / bus.nominal_voltage for bus in network.buses
        }


@dataclass
class _CompiledBranch:
    id: str
    from_bus: str
    to_bus: str
    from_idx: np.ndarray
    to_idx: np.ndarray
    z: np.ndarray
    ratio: np.ndarray


def series_impedance(network: PhasedNetwork, branch: Branch) -> np.ndarray:
    """Series impedance matrix of a branch in ohms, on its phase set."""
    if isinstance(branch, LineSegment):
        return branch.z
    n = len(branch.phases)
    # per-phase base on the secondary side
    z_base = network.bus(branch.to_bus).nominal_voltage ** 2 / (branch.rating * 1000.0 / n)
    return np.eye(n, dtype=complex) * branch.series_impedance * z_base


def branch_ratio(network: PhasedNetwork, branch: Branch) -> np.ndarray:
    """Ideal per-phase ratio V_from / V_to of a branch."""
    n = len(branch.phases)
    if isinstance(branch, LineSegment):
        ratio = np.ones(n)
        regulator = network.regulator_on(branch.id)
        if regulator is not None:
            for phase, tap in regulator.per_phase_tap.items():
                ratio[branch.phases.index(phase)] = 1.0 / tap
        return ratio
    turns = network.bus(branch.from_bus).nominal_voltage / network.bus(branch.to_bus).nominal_voltage
    return np.full(n, turns * branch.tap)


def _compile_branch(network: PhasedNetwork, branch: Branch, buses: Dict[str, Bus]) -> _CompiledBranch:
    from_bus = buses[branch.from_bus]
    to_bus = buses[branch.to_bus]
    n = len(branch.phases)
    z = series_impedance(network, branch)
    ratio = branch_ratio(network, branch)
    if z.shape != (n, n) or np.linalg.matrix_rank(z) < n:
        raise SingularElement(branch.id)
    return _CompiledBranch(
        id=branch.id,
        from_bus=branch.from_bus,
        to_bus=branch.to_bus,
        from_idx=np.array([from_bus.phases.index(p) for p in branch.phases]),
        to_idx=np.array([to_bus.phases.index(p) for p in branch.phases]),
        z=z,
        ratio=ratio,
    )


def shunt_current(model: str, s: np.ndarray, v: np.ndarray, v_nominal: float) -> np.ndarray:
    """Current drawn by a load element of the given model.

    `s` is the nominal complex power (VA) at `v_nominal` volts across `v`.
    """
    if model == "constant_PQ":
        return np.conj(s / v)
    if model == "constant_Z":
        return np.conj(s) / v_nominal ** 2 * v
    # constant_I: nominal magnitude, power-factor angle behind the present voltage
    return np.abs(s) / v_nominal * np.exp(1j * (np.angle(v) - np.angle(s)))


class _ShuntSet:
    """Loads, capacitors and DG compiled against bus phase indices."""

    def __init__(self, network: PhasedNetwork, buses: Dict[str, Bus]):
        self.bus_sizes = {b.id: len(b.phases) for b in network.buses}
        self.wye = []
        self.delta = []
        self.generators = []
        for load in network.loads:
            bus = buses[load.bus]
            if load.connection == "delta":
                pairs = load.delta_pairs()
                idx = np.array([[bus.phases.index(i), bus.phases.index(j)] for (i, j), _, _ in pairs])
                s = np.array([(kw + 1j * kvar) * 1000.0 for _, kw, kvar in pairs])
                self.delta.append((load.bus, idx, load.model, s, math.sqrt(3.0) * bus.nominal_voltage, True))
            else:
                idx = np.array([bus.phases.index(p) for p in load.phases])
                s = (np.array(load.per_phase_kw) + 1j * np.array(load.per_phase_kvar)) * 1000.0
                self.wye.append((load.bus, idx, load.model, s, bus.nominal_voltage, True))
        for cap in network.capacitors:
            if not cap.enabled:
                continue
            bus = buses[cap.bus]
            idx = np.array([bus.phases.index(p) for p in cap.phases])
            s = -1j * np.array(cap.per_phase_kvar) * 1000.0
            self.wye.append((cap.bus, idx, "constant_Z", s, bus.nominal_voltage, False))
        for dg in network.dg_units:
            bus = buses[dg.bus]
            idx = np.array([bus.phases.index(p) for p in dg.phases])
            p = np.full(len(dg.phases), dg.per_phase_kw * 1000.0)
            self.generators.append((dg.bus, idx, p))

    def evaluate(self, voltages: Dict[str, np.ndarray]) -> Tuple[Dict[str, np.ndarray], complex, complex]:
        """Currents drawn at every bus, with total load and DG complex power."""
        drawn = {bus_id: np.zeros(n, dtype=complex) for bus_id, n in self.bus_sizes.items()}
        load_power = 0j
        dg_power = 0j
        for bus_id, idx, model, s, v_nom, is_load in self.wye:
            v = voltages[bus_id][idx]
            current = shunt_current(model, s, v, v_nom)
            drawn[bus_id][idx] += current
            if is_load:
                load_power += np.sum(v * np.conj(current))
        for bus_id, idx, model, s, v_nom, _ in self.delta:
            v = voltages[bus_id]
            v_pair = v[idx[:, 0]] - v[idx[:, 1]]
            current = shunt_current(model, s, v_pair, v_nom)
            np.add.at(drawn[bus_id], idx[:, 0], current)
            np.subtract.at(drawn[bus_id], idx[:, 1], current)
            load_power += np.sum(v_pair * np.conj(current))
        for bus_id, idx, p in self.generators:
            v = voltages[bus_id][idx]
            current = np.conj(p / v)
            drawn[bus_id][idx] -= current
            dg_power += np.sum(v * np.conj(current))
        return drawn, complex(load_power), complex(dg_power)


def _backward(branches: List[_CompiledBranch], drawn: Dict[str, np.ndarray]):
    """Accumulate branch currents child-to-parent."""
    outflow = {bus_id: current.copy() for bus_id, current in drawn.items()}
    currents: Dict[str, np.ndarray] = {}
    sending: Dict[str, np.ndarray] = {}
    for br in reversed(branches):
        series = outflow[br.to_bus][br.to_idx]
        sent = series / br.ratio
        outflow[br.from_bus][br.from_idx] += sent
        currents[br.id] = series
        sending[br.id] = sent
    return currents, sending, outflow


def _forward(branches: List[_CompiledBranch], source_id: str, source_voltage: np.ndarray,
             currents: Dict[str, np.ndarray], sizes: Dict[str, int]) -> Dict[str, np.ndarray]:
    """Propagate voltages parent-to-child."""
    voltages = {source_id: source_voltage.copy()}
    for br in branches:
        v = np.zeros(sizes[br.to_bus], dtype=complex)
        v[br.to_idx] = voltages[br.from_bus][br.from_idx] / br.ratio
        if currents:
            v[br.to_idx] -= br.z @ currents[br.id]
        voltages[br.to_bus] = v
    return voltages


def source_voltages(bus: Bus) -> np.ndarray:
    """Nominal balanced phasors at the source bus."""
    return np.array([
        bus.nominal_voltage * np.exp(1j * math.radians(PHASE_ANGLES[p])) for p in bus.phases
    ])


def solve(network: PhasedNetwork, settings: Optional[SolverSettings] = None,
          initial: Optional[PowerFlowSolution] = None) -> PowerFlowSolution:
    """Solve the feeder by forward-backward sweep.

    A solve that runs out of iterations, or whose voltages collapse, comes
    back with `converged=False` and the last state instead of raising.
    """
    settings = settings or SolverSettings()
    order = radial_order(network)
    buses = {b.id: b for b in network.buses}
    source = network.source_bus()
    branches = [_compile_branch(network, br, buses) for br in order]
    shunts = _ShuntSet(network, buses)
    sizes = shunts.bus_sizes
    nominal = {b.id: b.nominal_voltage for b in network.buses}
    v_source = source_voltages(source)

    if not settings.flat_start and initial is not None:
        voltages = {bus_id: initial.bus_voltages[bus_id].copy() for bus_id in buses}
        voltages[source.id] = v_source.copy()
    else:
        voltages = _forward(branches, source.id, v_source, {}, sizes)

    converged = False
    mismatch = math.inf
    iterations = 0
    history: List[float] = []
    with np.errstate(all="ignore"):
        for iterations in range(1, settings.max_iterations + 1):
            drawn, _, _ = shunts.evaluate(voltages)
            currents, _, _ = _backward(branches, drawn)
            updated = _forward(branches, source.id, v_source, currents, sizes)
            # np.max keeps NaN; the builtin max drops it after the source's 0.0
            mismatch = float(np.max([
                np.max(np.abs(updated[b] - voltages[b])) / nominal[b] for b in updated
            ]))
            finite = all(np.isfinite(v).all() for v in updated.values())
            voltages = updated
            if not finite:
                mismatch = math.inf
            history.append(mismatch)
            if not math.isfinite(mismatch):
                logger.warning("Sweep diverged on %s after %d iterations", network.name, iterations)
                break
            logger.debug("Sweep %d on %s: mismatch %.3e pu", iterations, network.name, mismatch)
            if mismatch <= settings.tolerance:
                converged = True
                break

        # one more backward pass so currents match the final voltages
        drawn, load_power, dg_power = shunts.evaluate(voltages)
        currents, sending, outflow = _backward(branches, drawn)
        source_power = complex(np.sum(v_source * np.conj(outflow[source.id])))

    if not converged:
        logger.info(
            "Load flow on %s did not converge in %d iterations (mismatch %.3e pu)",
            network.name, iterations, mismatch,
        )

    return PowerFlowSolution(
        bus_phases={b.id: b.phases for b in network.buses},
        bus_voltages=voltages,
        branch_phases={br.id: br.phases for br in order},
        branch_currents=currents,
        sending_currents=sending,
        bus_currents=drawn,
        converged=converged,
        iterations=iterations,
        max_mismatch=mismatch,
        source_bus=source.id,
        source_power=source_power,
        load_power=load_power,
        dg_power=dg_power,
        history=history,
    )
