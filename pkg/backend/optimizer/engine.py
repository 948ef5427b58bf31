"""Run loop shared by every optimization engine."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple, Union

import numpy as np

from optimizer.genetic import GaParams, ga_step, initialize_population
from optimizer.space import Objective, SearchSpace
from optimizer.swarm import CfPsoParams, IwPsoParams, cfpso_step, initialize_swarm, iwpso_step

logger = logging.getLogger(__name__)

EngineParams = Union[CfPsoParams, IwPsoParams, GaParams]

# improvements at or below this size count as stalled
IMPROVEMENT_EPSILON = 1e-9

ENGINES: Dict[str, Tuple[type, Callable, Callable]] = {
    "cfpso": (CfPsoParams, initialize_swarm, cfpso_step),
    "iwpso": (IwPsoParams, initialize_swarm, iwpso_step),
    "ga": (GaParams, initialize_population, ga_step),
}


@dataclass
class OptimizationResult:
    engine: str
    best_x: np.ndarray
    best_value: float
    history: List[float] = field(default_factory=list)
    evaluations: int = 0
    iterations: int = 0
    initial_value: float = float("inf")
    stop_reason: str = "max_iterations"
    seed: int = 0


def default_params(engine: str) -> EngineParams:
    if engine not in ENGINES:
        raise ValueError(f"unknown engine '{engine}' (choose from {', '.join(ENGINES)})")
    return ENGINES[engine][0]()


def resolve_seed(seed) -> int:
    """The given seed, or a fresh one drawn from OS entropy."""
    if seed is None:
        return int(np.random.SeedSequence().entropy % (2 ** 32))
    return int(seed)


def run(engine: str, space: SearchSpace, params: EngineParams, objective: Objective) -> OptimizationResult:
    """Initialize, then step until the iteration budget or the stall count runs out."""
    if engine not in ENGINES:
        raise ValueError(f"unknown engine '{engine}' (choose from {', '.join(ENGINES)})")
    params_type, initialize, step = ENGINES[engine]
    if not isinstance(params, params_type):
        raise TypeError(f"engine '{engine}' expects {params_type.__name__}, got {type(params).__name__}")

    seed = resolve_seed(params.rng_seed)
    rng = np.random.default_rng(seed)
    state = initialize(space, params, objective, rng)
    initial_value = state.global_best_value
    logger.info("Starting %s over %d dimension(s), seed %d, initial best %.6g",
                engine, space.dimension, seed, initial_value)

    stop_reason = "max_iterations"
    stalled = 0
    for _ in range(params.max_iterations):
        before = state.global_best_value
        state = step(state, space, params, objective, rng)
        if before - state.global_best_value > IMPROVEMENT_EPSILON:
            stalled = 0
        else:
            stalled += 1
        if params.stall_iterations and stalled >= params.stall_iterations:
            stop_reason = "stall"
            break

    logger.info("%s stopped after %d iteration(s) (%s): best %.6g, %d evaluations",
                engine, state.iteration, stop_reason, state.global_best_value, state.evaluations)
    return OptimizationResult(
        engine=engine,
        best_x=state.global_best.copy(),
        best_value=state.global_best_value,
        history=list(state.history),
        evaluations=state.evaluations,
        iterations=state.iteration,
        initial_value=initial_value,
        stop_reason=stop_reason,
        seed=seed,
    )
