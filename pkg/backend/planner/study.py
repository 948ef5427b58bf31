"""DG capacity planning: penalized load-flow fitness and the study loop."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from feeder.errors import ValidationFailed
from feeder.model import PhasedNetwork
from feeder.topology import validate
from losses.accounting import LossBreakdown, loss_squared, total_loss
from optimizer.engine import ENGINES, EngineParams, default_params, resolve_seed, run
from optimizer.space import MIN_WIDTH, SearchSpace
from powerflow.limits import LimitReport, check_limits
from powerflow.solver import PowerFlowError, PowerFlowSolution, SolverSettings, solve

logger = logging.getLogger(__name__)

Capacities = Union[Sequence[float], Dict[str, float]]


class PlanningError(Exception):
    """Base class for study misconfiguration."""


class NoDGUnits(PlanningError):
    def __init__(self, network_name: str = ""):
        super().__init__(f"network '{network_name}' has no DG units to plan")


@dataclass(frozen=True)
class PlannerConfig:
    engine: str = "cfpso"
    params: Optional[EngineParams] = None
    voltage_penalty: float = 1e3
    ampacity_penalty: float = 1e3
    nonconvergence_penalty: float = 1e6
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine '{self.engine}'")
        if self.params is None:
            object.__setattr__(self, "params", default_params(self.engine))
        elif not isinstance(self.params, ENGINES[self.engine][0]):
            raise ValueError(f"engine '{self.engine}' cannot use {type(self.params).__name__}")
        for name in ("voltage_penalty", "ampacity_penalty", "nonconvergence_penalty"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class CaseResult:
    """One solved scenario with its score."""

    capacities: Dict[str, float]
    solution: PowerFlowSolution
    losses: Optional[LossBreakdown]
    limits: Optional[LimitReport]
    fitness: float

    @property
    def converged(self) -> bool:
        return self.solution.converged


@dataclass
class DGPlanResult:
    network: PhasedNetwork
    capacities: Dict[str, float]
    base: CaseResult
    optimized: CaseResult
    engine: str
    seed: int
    evaluations: int
    iterations: int
    stop_reason: str
    initial_value: float
    history: List[float] = field(default_factory=list)

    @property
    def best_fitness(self) -> float:
        return self.optimized.fitness


def penalty(limits: LimitReport, config: PlannerConfig) -> float:
    voltage = sum(v.deviation_pu ** 2 for v in limits.voltage_violations)
    ampacity = sum(a.relative_overload ** 2 for a in limits.ampacity_violations)
    return config.voltage_penalty * voltage + config.ampacity_penalty * ampacity


def evaluate_case(network: PhasedNetwork, config: PlannerConfig) -> CaseResult:
    """Solve a network as it stands and score it.

    Structural solver errors propagate; non-convergence is priced.
    """
    sol = solve(network, config.solver)
    capacities = {u.id: u.capacity_kw for u in network.dg_units}
    if not sol.converged:
        return CaseResult(capacities, sol, None, None, config.nonconvergence_penalty)
    losses = total_loss(network, sol)
    limits = check_limits(network, sol)
    return CaseResult(capacities, sol, losses, limits, loss_squared(losses) + penalty(limits, config))


def fitness(network: PhasedNetwork, capacities: Capacities, config: PlannerConfig) -> float:
    """Loss objective plus quadratic limit penalties for one capacity vector."""
    candidate = network.with_dg_capacities(capacities)
    try:
        return evaluate_case(candidate, config).fitness
    except PowerFlowError as e:
        logger.warning("Load flow failed for capacities %s: %s", capacities, e)
        return config.nonconvergence_penalty


def _is_free(p_min: float, p_max: float) -> bool:
    return p_max - p_min > MIN_WIDTH * max(1.0, abs(p_min), abs(p_max))


def plan(network: PhasedNetwork, config: Optional[PlannerConfig] = None) -> DGPlanResult:
    """Size every DG unit within its bounds to minimize penalized losses."""
    config = config or PlannerConfig()
    if not network.dg_units:
        raise NoDGUnits(network.name)
    violations = validate(network)
    if violations:
        raise ValidationFailed(violations)

    units = network.dg_units
    base = evaluate_case(network.with_dg_capacities([0.0] * len(units)), config)
    if not base.converged:
        logger.warning("Base case of %s did not converge", network.name)
    logger.info("Planning %d DG unit(s) on %s with %s; base fitness %.6g",
                len(units), network.name, config.engine, base.fitness)

    capacities = np.array([u.p_min_kw for u in units])
    free = [i for i, u in enumerate(units) if _is_free(u.p_min_kw, u.p_max_kw)]

    if free:
        space = SearchSpace.from_bounds([(units[i].p_min_kw, units[i].p_max_kw) for i in free])

        def objective(x: np.ndarray) -> float:
            trial = capacities.copy()
            trial[free] = x
            return fitness(network, trial, config)

        outcome = run(config.engine, space, config.params, objective)
        capacities[free] = outcome.best_x
        engine_run = dict(
            seed=outcome.seed,
            evaluations=outcome.evaluations,
            iterations=outcome.iterations,
            stop_reason=outcome.stop_reason,
            initial_value=outcome.initial_value,
            history=outcome.history,
        )
    else:
        logger.info("Every DG unit on %s is pinned; skipping %s", network.name, config.engine)
        engine_run = dict(
            seed=resolve_seed(config.params.rng_seed),
            evaluations=1,
            iterations=0,
            stop_reason="pinned",
            initial_value=math.nan,
            history=[],
        )

    optimized_network = network.with_dg_capacities(capacities)
    optimized = evaluate_case(optimized_network, config)
    if engine_run["stop_reason"] == "pinned":
        engine_run["initial_value"] = optimized.fitness

    zero_feasible = all(u.p_min_kw == 0 for u in units)
    if zero_feasible and base.fitness < optimized.fitness:
        logger.info("Base plan scores better than the %s result; keeping zero capacities", config.engine)
        capacities = np.zeros(len(units))
        optimized_network = network.with_dg_capacities(capacities)
        optimized = base

    logger.info("Plan for %s: %s, fitness %.6g", network.name,
                ", ".join(f"{u.id}={c:.3f} kW" for u, c in zip(units, capacities)), optimized.fitness)
    return DGPlanResult(
        network=optimized_network,
        capacities={u.id: float(c) for u, c in zip(units, capacities)},
        base=base,
        optimized=optimized,
        engine=config.engine,
        **engine_run,
    )
