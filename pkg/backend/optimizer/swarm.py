"""Particle swarm engines: constriction-factor and inertia-weight variants."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from optimizer.boundary import boundaries, get_boundary
from optimizer.space import Objective, SearchSpace, evaluate_batch

logger = logging.getLogger(__name__)

# initial velocities span this share of each dimension's width
VELOCITY_SCALE = 0.1


def constriction_factor(phi: float) -> float:
    """k = 2 / |2 - phi - sqrt(phi^2 - 4 phi)|, defined for phi > 4."""
    if not phi > 4:
        raise ValueError(f"phi = c1 + c2 must exceed 4, got {phi}")
    return 2.0 / abs(2.0 - phi - math.sqrt(phi * phi - 4.0 * phi))


def _check_common(params) -> None:
    if params.swarm_size < 1:
        raise ValueError("swarm_size must be at least 1")
    if params.max_iterations < 0:
        raise ValueError("max_iterations must not be negative")
    if params.stall_iterations < 0:
        raise ValueError("stall_iterations must not be negative")
    if params.workers < 1:
        raise ValueError("workers must be at least 1")
    if params.boundary not in boundaries:
        raise ValueError(f"unknown boundary condition '{params.boundary}'")


@dataclass(frozen=True)
class CfPsoParams:
    c1: float = 2.05
    c2: float = 2.05
    swarm_size: int = 30
    max_iterations: int = 100
    stall_iterations: int = 20
    rng_seed: Optional[int] = None
    boundary: str = "absorbing"
    random_scalars: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must not be negative")
        if not self.phi > 4:
            raise ValueError(f"phi = c1 + c2 must exceed 4, got {self.phi}")
        _check_common(self)

    @property
    def phi(self) -> float:
        return self.c1 + self.c2

    @property
    def k(self) -> float:
        return constriction_factor(self.phi)


@dataclass(frozen=True)
class IwPsoParams:
    w: float = 0.7
    c1: float = 2.0
    c2: float = 2.0
    swarm_size: int = 30
    max_iterations: int = 100
    stall_iterations: int = 20
    rng_seed: Optional[int] = None
    boundary: str = "absorbing"
    random_scalars: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.w < 0:
            raise ValueError("inertia weight must not be negative")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must not be negative")
        _check_common(self)


PsoParams = Union[CfPsoParams, IwPsoParams]


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_value: float


@dataclass
class SwarmState:
    particles: List[Particle]
    global_best: np.ndarray
    global_best_value: float
    iteration: int = 0
    evaluations: int = 0
    history: List[float] = field(default_factory=list)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.particles])


def initialize_swarm(space: SearchSpace, params: PsoParams, objective: Objective,
                     rng: np.random.Generator) -> SwarmState:
    """Uniform positions, small random velocities, one evaluation per particle."""
    shape = (params.swarm_size, space.dimension)
    positions = rng.uniform(space.low, space.high, size=shape)
    velocities = rng.uniform(-space.width, space.width, size=shape) * VELOCITY_SCALE
    values = evaluate_batch(objective, positions, params.workers)

    particles = [
        Particle(position=x, velocity=v, best_position=x.copy(), best_value=value)
        for x, v, value in zip(positions, velocities, values)
    ]
    leader = min(range(len(particles)), key=lambda i: particles[i].best_value)
    return SwarmState(
        particles=particles,
        global_best=particles[leader].best_position.copy(),
        global_best_value=particles[leader].best_value,
        evaluations=len(particles),
    )


def _draw(params: PsoParams, size: int, dimension: int, rng: np.random.Generator) -> np.ndarray:
    if params.random_scalars:
        return np.repeat(rng.random((size, 1)), dimension, axis=1)
    return rng.random((size, dimension))


VelocityRule = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _step(state: SwarmState, space: SearchSpace, params: PsoParams, objective: Objective,
          rng: np.random.Generator, velocity_rule: VelocityRule) -> SwarmState:
    size = len(state.particles)
    # all draws happen before evaluation so parallel scoring cannot reorder them
    r1 = _draw(params, size, space.dimension, rng)
    r2 = _draw(params, size, space.dimension, rng)

    velocities = np.empty((size, space.dimension))
    positions = np.empty((size, space.dimension))
    for i, p in enumerate(state.particles):
        cognitive = r1[i] * params.c1 * (p.best_position - p.position)
        social = r2[i] * params.c2 * (state.global_best - p.position)
        velocities[i] = velocity_rule(p.velocity, cognitive, social)
        positions[i] = p.position + velocities[i]
    positions, velocities = get_boundary(params.boundary)(positions, velocities, space)

    values = evaluate_batch(objective, positions, params.workers)
    for p, x, v, value in zip(state.particles, positions, velocities, values):
        p.position = x
        p.velocity = v
        if value < p.best_value:
            p.best_position = x.copy()
            p.best_value = value
            if value < state.global_best_value:
                state.global_best = x.copy()
                state.global_best_value = value

    state.iteration += 1
    state.evaluations += size
    state.history.append(state.global_best_value)
    logger.debug("PSO iteration %d: best %.6g", state.iteration, state.global_best_value)
    return state


def cfpso_step(state: SwarmState, space: SearchSpace, params: CfPsoParams, objective: Objective,
               rng: np.random.Generator) -> SwarmState:
    k = params.k
    return _step(state, space, params, objective, rng,
                 lambda v, cognitive, social: k * (v + cognitive + social))


def iwpso_step(state: SwarmState, space: SearchSpace, params: IwPsoParams, objective: Objective,
               rng: np.random.Generator) -> SwarmState:
    w = params.w
    return _step(state, space, params, objective, rng,
                 lambda v, cognitive, social: w * v + cognitive + social)
