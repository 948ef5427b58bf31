"""Real-coded genetic algorithm baseline."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from optimizer.space import Objective, SearchSpace, evaluate_batch

logger = logging.getLogger(__name__)

BLX_ALPHA = 0.5
MUTATION_SCALE = 0.1


@dataclass(frozen=True)
class GaParams:
    population_size: int = 30
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    tournament_size: int = 3
    max_generations: int = 100
    stall_generations: int = 20
    rng_seed: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be at least 1")
        if not 0 <= self.crossover_rate <= 1:
            raise ValueError("crossover_rate must be in [0, 1]")
        if not 0 <= self.mutation_rate <= 1:
            raise ValueError("mutation_rate must be in [0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be at least 1")
        if self.max_generations < 0:
            raise ValueError("max_generations must not be negative")
        if self.stall_generations < 0:
            raise ValueError("stall_generations must not be negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    # the run loop reads these names for every engine
    @property
    def max_iterations(self) -> int:
        return self.max_generations

    @property
    def stall_iterations(self) -> int:
        return self.stall_generations


@dataclass
class Population:
    members: np.ndarray
    values: np.ndarray
    iteration: int = 0
    evaluations: int = 0
    history: List[float] = field(default_factory=list)

    @property
    def elite(self) -> int:
        return int(np.argmin(self.values))

    @property
    def global_best(self) -> np.ndarray:
        return self.members[self.elite].copy()

    @property
    def global_best_value(self) -> float:
        return float(self.values[self.elite])


def initialize_population(space: SearchSpace, params: GaParams, objective: Objective,
                          rng: np.random.Generator) -> Population:
    members = rng.uniform(space.low, space.high, size=(params.population_size, space.dimension))
    values = np.array(evaluate_batch(objective, members, params.workers))
    return Population(members=members, values=values, evaluations=len(members))


def _tournament(population: Population, size: int, rng: np.random.Generator) -> np.ndarray:
    entrants = rng.integers(0, len(population.members), size=size)
    winner = entrants[np.argmin(population.values[entrants])]
    return population.members[winner]


def _blend(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    spread = np.abs(a - b) * BLX_ALPHA
    return rng.uniform(np.minimum(a, b) - spread, np.maximum(a, b) + spread)


def _mutate(child: np.ndarray, space: SearchSpace, rate: float, rng: np.random.Generator) -> np.ndarray:
    mask = rng.random(space.dimension) < rate
    noise = rng.normal(0.0, MUTATION_SCALE * space.width)
    return np.where(mask, child + noise, child)


def ga_step(state: Population, space: SearchSpace, params: GaParams, objective: Objective,
            rng: np.random.Generator) -> Population:
    """One generation: tournament, BLX-0.5 crossover, Gaussian mutation, elitism of one."""
    size = len(state.members)
    elite = state.elite
    children: List[np.ndarray] = []
    while len(children) < size - 1:
        first = _tournament(state, params.tournament_size, rng)
        second = _tournament(state, params.tournament_size, rng)
        if rng.random() < params.crossover_rate:
            pair = [_blend(first, second, rng), _blend(first, second, rng)]
        else:
            pair = [first.copy(), second.copy()]
        for child in pair:
            children.append(space.clip(_mutate(child, space, params.mutation_rate, rng)))
    children = children[: size - 1]

    values = evaluate_batch(objective, np.array(children), params.workers) if children else []
    state.members = np.vstack([state.members[elite]] + children)
    state.values = np.concatenate([[state.values[elite]], np.asarray(values, dtype=float)])
    state.iteration += 1
    state.evaluations += len(children)
    state.history.append(state.global_best_value)
    logger.debug("GA generation %d: best %.6g", state.iteration, state.global_best_value)
    return state
