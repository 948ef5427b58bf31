"""Boundary conditions applied when a particle leaves the search box."""

from typing import Callable, Dict, Tuple

import numpy as np

from optimizer.space import SearchSpace

BoundaryRule = Callable[[np.ndarray, np.ndarray, SearchSpace], Tuple[np.ndarray, np.ndarray]]

boundaries: Dict[str, BoundaryRule] = {}


def boundary(f: BoundaryRule) -> BoundaryRule:
    boundaries[f.__name__] = f
    return f


@boundary
def absorbing(position: np.ndarray, velocity: np.ndarray, space: SearchSpace):
    """Clamp to the wall and zero the offending velocity components."""
    outside = (position < space.low) | (position > space.high)
    return space.clip(position), np.where(outside, 0.0, velocity)


@boundary
def reflecting(position: np.ndarray, velocity: np.ndarray, space: SearchSpace):
    """Mirror back across the wall and reverse the offending velocity components."""
    low, high = space.low, space.high
    below = position < low
    above = position > high
    mirrored = np.where(below, 2 * low - position, position)
    mirrored = np.where(above, 2 * high - mirrored, mirrored)
    return space.clip(mirrored), np.where(below | above, -velocity, velocity)


def get_boundary(name: str) -> BoundaryRule:
    try:
        return boundaries[name]
    except KeyError:
        raise ValueError(f"unknown boundary condition '{name}' (choose from {', '.join(sorted(boundaries))})")
