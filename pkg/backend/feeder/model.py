"""Domain types for unbalanced multi-phase radial distribution feeders."""

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np


class Phase(str, Enum):
    A = "a"
    B = "b"
    C = "c"


PHASE_ORDER: Tuple[Phase, ...] = (Phase.A, Phase.B, Phase.C)
PhaseSet = Tuple[Phase, ...]
ComplexMatrix = Tuple[Tuple[complex, ...], ...]

# Nominal phasor angles at the source, degrees.
PHASE_ANGLES = {Phase.A: 0.0, Phase.B: -120.0, Phase.C: 120.0}

CONNECTIONS = ("wye", "delta")
LOAD_MODELS = ("constant_PQ", "constant_Z", "constant_I")

# Delta pairs in canonical order.
DELTA_PAIRS: Tuple[Tuple[Phase, Phase], ...] = (
    (Phase.A, Phase.B),
    (Phase.B, Phase.C),
    (Phase.C, Phase.A),
)


def phase_set(value: Union[str, Iterable[Phase]]) -> PhaseSet:
    """Canonical phase tuple from 'abc'-style text or an iterable of phases.

    Raises ValueError on empty, repeated or unknown phases.
    """
    if isinstance(value, str):
        try:
            items = [Phase(ch) for ch in value.lower()]
        except ValueError:
            raise ValueError(f"invalid phase set '{value}'")
    else:
        items = [Phase(p) for p in value]
    if not items:
        raise ValueError("phase set must not be empty")
    if len(set(items)) != len(items):
        raise ValueError(f"repeated phase in '{phases_text(items)}'")
    return tuple(p for p in PHASE_ORDER if p in items)


def phases_text(phases: Iterable[Phase]) -> str:
    return "".join(p.value for p in phases)


def as_matrix(rows: Sequence[Sequence[complex]]) -> ComplexMatrix:
    return tuple(tuple(complex(v) for v in row) for row in rows)


@dataclass(frozen=True)
class Bus:
    id: str
    phases: PhaseSet
    kv_ln: float
    is_source: bool = False

    @property
    def nominal_voltage(self) -> float:
        """Line-to-neutral nominal voltage in volts."""
        return self.kv_ln * 1000.0


@dataclass(frozen=True)
class LineSegment:
    id: str
    from_bus: str
    to_bus: str
    phases: PhaseSet
    z_matrix: ComplexMatrix
    ampacity: Optional[float] = None
    length_m: Optional[float] = None

    @property
    def z(self) -> np.ndarray:
        return np.array(self.z_matrix, dtype=complex)


@dataclass(frozen=True)
class Transformer:
    id: str
    from_bus: str
    to_bus: str
    phases: PhaseSet
    rating: float
    series_impedance: complex
    tap: float = 1.0


Branch = Union[LineSegment, Transformer]


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    phases: PhaseSet
    connection: str = "wye"
    model: str = "constant_PQ"
    per_phase_kw: Tuple[float, ...] = ()
    per_phase_kvar: Tuple[float, ...] = ()

    def delta_pairs(self) -> List[Tuple[Tuple[Phase, Phase], float, float]]:
        """Phase pairs of a delta load with their (kW, kvar).

        Three-phase delta entries map onto ab, bc, ca. A two-phase delta load
        connects the sum of its entries across its single pair.
        """
        if len(self.phases) == 3:
            return [
                (pair, kw, kvar)
                for pair, kw, kvar in zip(DELTA_PAIRS, self.per_phase_kw, self.per_phase_kvar)
            ]
        pair = (self.phases[0], self.phases[1])
        if pair == (Phase.A, Phase.C):
            pair = (Phase.C, Phase.A)
        return [(pair, sum(self.per_phase_kw), sum(self.per_phase_kvar))]


@dataclass(frozen=True)
class CapacitorBank:
    id: str
    bus: str
    phases: PhaseSet
    per_phase_kvar: Tuple[float, ...]
    enabled: bool = True


@dataclass(frozen=True)
class Regulator:
    id: str
    on_segment: str
    phases: PhaseSet
    taps: Tuple[float, ...]

    @property
    def per_phase_tap(self) -> Dict[Phase, float]:
        return dict(zip(self.phases, self.taps))


@dataclass(frozen=True)
class DGUnit:
    """Constant-P unity power factor generator split equally over its phases."""

    id: str
    bus: str
    phases: PhaseSet
    p_min_kw: float
    p_max_kw: float
    capacity_kw: float = 0.0
    power_factor: float = 1.0

    @property
    def per_phase_kw(self) -> float:
        return self.capacity_kw / len(self.phases)


@dataclass(frozen=True)
class PhasedNetwork:
    name: str = "feeder"
    buses: Tuple[Bus, ...] = ()
    segments: Tuple[LineSegment, ...] = ()
    transformers: Tuple[Transformer, ...] = ()
    loads: Tuple[Load, ...] = ()
    capacitors: Tuple[CapacitorBank, ...] = ()
    regulators: Tuple[Regulator, ...] = ()
    dg_units: Tuple[DGUnit, ...] = ()
    v_min_pu: float = 0.94
    v_max_pu: float = 1.06
    base_kva: float = 1000.0

    # lookups, rebuilt lazily; excluded from equality
    _index: Dict[str, Dict[str, object]] = field(
        default_factory=dict, init=False, repr=False, compare=False, hash=False
    )

    def _lookup(self, kind: str) -> Dict[str, object]:
        if kind not in self._index:
            self._index[kind] = {item.id: item for item in getattr(self, kind)}
        return self._index[kind]

    def bus(self, bus_id: str) -> Bus:
        return self._lookup("buses")[bus_id]

    def has_bus(self, bus_id: str) -> bool:
        return bus_id in self._lookup("buses")

    def branches(self) -> List[Branch]:
        return [*self.segments, *self.transformers]

    def branch(self, branch_id: str) -> Branch:
        found = self._lookup("segments").get(branch_id)
        if found is None:
            found = self._lookup("transformers").get(branch_id)
        if found is None:
            raise KeyError(branch_id)
        return found

    def segment(self, segment_id: str) -> LineSegment:
        return self._lookup("segments")[segment_id]

    def source_bus(self) -> Bus:
        sources = [b for b in self.buses if b.is_source]
        if len(sources) != 1:
            raise ValueError(f"expected exactly one source bus, found {len(sources)}")
        return sources[0]

    def regulator_on(self, segment_id: str) -> Optional[Regulator]:
        for reg in self.regulators:
            if reg.on_segment == segment_id:
                return reg
        return None

    def with_dg_capacities(self, capacities: Union[Sequence[float], Dict[str, float]]) -> "PhasedNetwork":
        """Copy with new DG capacities; every other collection is shared.

        Capacities are not checked against the unit bounds so a planner can
        price out-of-range probes.
        """
        if isinstance(capacities, dict):
            units = tuple(
                dataclasses.replace(u, capacity_kw=float(capacities.get(u.id, u.capacity_kw)))
                for u in self.dg_units
            )
        else:
            values = list(capacities)
            if len(values) != len(self.dg_units):
                raise ValueError(
                    f"expected {len(self.dg_units)} DG capacities, got {len(values)}"
                )
            units = tuple(
                dataclasses.replace(u, capacity_kw=float(v)) for u, v in zip(self.dg_units, values)
            )
        return dataclasses.replace(self, dg_units=units)

    def summary(self) -> Dict[str, int]:
        return {
            "buses": len(self.buses),
            "branches": len(self.segments) + len(self.transformers),
            "loads": len(self.loads),
            "capacitors": len(self.capacitors),
            "regulators": len(self.regulators),
            "dg_units": len(self.dg_units),
        }
