"""Network validation and radial ordering of the branch tree."""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

import networkx as nx
import numpy as np

from feeder.errors import NotRadial
from feeder.model import (
    CONNECTIONS,
    LOAD_MODELS,
    Branch,
    PhasedNetwork,
    Transformer,
    phases_text,
)

TAP_RANGE = (0.9, 1.1)
SYMMETRY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Violation:
    """One broken invariant, tied to the element that breaks it."""

    element_id: str
    reason: str


def _missing_phases(element_phases: Iterable, bus_phases: Iterable) -> str:
    missing = [p for p in element_phases if p not in bus_phases]
    return phases_text(missing)


def _check_bus_ref(network: PhasedNetwork, element_id: str, bus_id: str,
                   phases, out: List[Violation]) -> None:
    if not network.has_bus(bus_id):
        out.append(Violation(element_id, f"unknown bus '{bus_id}'"))
        return
    missing = _missing_phases(phases, network.bus(bus_id).phases)
    if missing:
        out.append(Violation(element_id, f"phase {missing} not present at bus '{bus_id}'"))


def _check_elements(network: PhasedNetwork, out: List[Violation]) -> None:
    for kind in ("buses", "segments", "transformers", "loads", "capacitors", "regulators", "dg_units"):
        seen = set()
        for item in getattr(network, kind):
            if item.id in seen:
                out.append(Violation(item.id, f"duplicate id in {kind}"))
            seen.add(item.id)
    shared = {b.id for b in network.segments} & {b.id for b in network.transformers}
    for branch_id in sorted(shared):
        out.append(Violation(branch_id, "id shared by a segment and a transformer"))

    sources = [b for b in network.buses if b.is_source]
    if not sources:
        out.append(Violation(network.name, "no source bus"))
    elif len(sources) > 1:
        for bus in sources[1:]:
            out.append(Violation(bus.id, "more than one source bus"))

    if not 0 < network.v_min_pu < network.v_max_pu:
        out.append(Violation(network.name, "voltage limits must satisfy 0 < v_min_pu < v_max_pu"))
    if network.base_kva <= 0:
        out.append(Violation(network.name, "base_kva must be positive"))

    for bus in network.buses:
        if not bus.kv_ln > 0:
            out.append(Violation(bus.id, "nominal voltage must be positive"))

    for seg in network.segments:
        _check_bus_ref(network, seg.id, seg.from_bus, seg.phases, out)
        _check_bus_ref(network, seg.id, seg.to_bus, seg.phases, out)
        n = len(seg.phases)
        try:
            z = seg.z
        except ValueError:
            z = np.zeros(0, dtype=complex)
        if z.shape != (n, n):
            out.append(Violation(seg.id, f"impedance matrix must be {n}x{n}"))
        elif not np.allclose(z, z.T, rtol=0.0, atol=SYMMETRY_TOLERANCE * max(1.0, np.abs(z).max())):
            out.append(Violation(seg.id, "impedance matrix is not symmetric"))
        if seg.ampacity is not None and not seg.ampacity > 0:
            out.append(Violation(seg.id, "ampacity must be positive"))
        if seg.length_m is not None and seg.length_m < 0:
            out.append(Violation(seg.id, "length must not be negative"))

    for tx in network.transformers:
        _check_bus_ref(network, tx.id, tx.from_bus, tx.phases, out)
        _check_bus_ref(network, tx.id, tx.to_bus, tx.phases, out)
        if not tx.rating > 0:
            out.append(Violation(tx.id, "rating must be positive"))
        if tx.series_impedance.real < 0:
            out.append(Violation(tx.id, "series resistance must not be negative"))
        if not tx.tap > 0:
            out.append(Violation(tx.id, "tap must be positive"))

    for load in network.loads:
        _check_bus_ref(network, load.id, load.bus, load.phases, out)
        n = len(load.phases)
        if len(load.per_phase_kw) != n or len(load.per_phase_kvar) != n:
            out.append(Violation(load.id, f"expected {n} per-phase kw/kvar entries"))
        if any(kw < 0 for kw in load.per_phase_kw):
            out.append(Violation(load.id, "per-phase kw must not be negative"))
        if load.connection not in CONNECTIONS:
            out.append(Violation(load.id, f"unknown connection '{load.connection}'"))
        elif load.connection == "delta" and n < 2:
            out.append(Violation(load.id, "delta connection needs at least two phases"))
        if load.model not in LOAD_MODELS:
            out.append(Violation(load.id, f"unknown load model '{load.model}'"))

    for cap in network.capacitors:
        _check_bus_ref(network, cap.id, cap.bus, cap.phases, out)
        if len(cap.per_phase_kvar) != len(cap.phases):
            out.append(Violation(cap.id, f"expected {len(cap.phases)} per-phase kvar entries"))
        if any(q < 0 for q in cap.per_phase_kvar):
            out.append(Violation(cap.id, "per-phase kvar must not be negative"))

    segment_ids = {seg.id for seg in network.segments}
    regulated = set()
    for reg in network.regulators:
        if reg.on_segment not in segment_ids:
            out.append(Violation(reg.id, f"unknown segment '{reg.on_segment}'"))
        else:
            missing = _missing_phases(reg.phases, network.segment(reg.on_segment).phases)
            if missing:
                out.append(Violation(reg.id, f"phase {missing} not present on segment '{reg.on_segment}'"))
            if reg.on_segment in regulated:
                out.append(Violation(reg.id, f"segment '{reg.on_segment}' already regulated"))
            regulated.add(reg.on_segment)
        if len(reg.taps) != len(reg.phases):
            out.append(Violation(reg.id, f"expected {len(reg.phases)} taps"))
        if any(not TAP_RANGE[0] <= t <= TAP_RANGE[1] for t in reg.taps):
            out.append(Violation(reg.id, f"tap outside [{TAP_RANGE[0]}, {TAP_RANGE[1]}]"))

    for dg in network.dg_units:
        _check_bus_ref(network, dg.id, dg.bus, dg.phases, out)
        if not 0 <= dg.p_min_kw <= dg.p_max_kw:
            out.append(Violation(dg.id, "capacity bounds must satisfy 0 <= p_min_kw <= p_max_kw"))
        elif not dg.p_min_kw <= dg.capacity_kw <= dg.p_max_kw:
            out.append(Violation(dg.id, "capacity outside [p_min_kw, p_max_kw]"))
        if dg.power_factor != 1.0:
            out.append(Violation(dg.id, "power factor must be 1.0"))


def _check_topology(network: PhasedNetwork, out: List[Violation]) -> None:
    known = [b.id for b in network.buses]
    forest = nx.utils.UnionFind(known)
    fed_by: Dict[str, Branch] = {}
    kept: List[Branch] = []

    for branch in sorted(network.branches(), key=lambda b: b.id):
        if not (network.has_bus(branch.from_bus) and network.has_bus(branch.to_bus)):
            continue  # reported as unknown bus
        if branch.from_bus == branch.to_bus or forest[branch.from_bus] == forest[branch.to_bus]:
            out.append(Violation(branch.id, "not radial"))
            continue
        forest.union(branch.from_bus, branch.to_bus)
        kept.append(branch)

    for branch in kept:
        to_bus = network.bus(branch.to_bus)
        if to_bus.is_source:
            out.append(Violation(branch.id, "branch feeds the source bus"))
            continue
        if branch.to_bus in fed_by:
            out.append(Violation(branch.id, f"bus '{branch.to_bus}' is fed by more than one branch"))
            continue
        fed_by[branch.to_bus] = branch
        unfed = _missing_phases(to_bus.phases, branch.phases)
        if unfed:
            out.append(Violation(to_bus.id, f"bus phase {unfed} not fed by '{branch.id}'"))

    sources = [b for b in network.buses if b.is_source]
    if len(sources) != 1:
        return
    root = forest[sources[0].id]
    for bus in network.buses:
        if forest[bus.id] != root:
            out.append(Violation(bus.id, "not reachable from source"))


def validate(network: PhasedNetwork) -> List[Violation]:
    """Every invariant violation of the network, ordered by element id."""
    violations: List[Violation] = []
    _check_elements(network, violations)
    _check_topology(network, violations)
    return sorted(violations, key=lambda v: (v.element_id, v.reason))


def branch_graph(network: PhasedNetwork) -> nx.DiGraph:
    """Directed bus graph with one edge per branch (parent -> child)."""
    graph = nx.DiGraph()
    graph.add_nodes_from(b.id for b in network.buses)
    for branch in network.branches():
        if graph.has_edge(branch.from_bus, branch.to_bus):
            raise NotRadial(f"parallel branches between '{branch.from_bus}' and '{branch.to_bus}'")
        graph.add_edge(branch.from_bus, branch.to_bus, branch=branch)
        graph.nodes[branch.to_bus]["via"] = branch.id
    return graph


def radial_order(network: PhasedNetwork) -> List[Branch]:
    """Branches in parent-before-child order from the source.

    Siblings are visited by branch id. Reversing the list gives a valid
    child-before-parent order.
    """
    graph = branch_graph(network)
    try:
        source = network.source_bus().id
    except ValueError as e:
        raise NotRadial(str(e))
    if not nx.is_arborescence(graph):
        raise NotRadial("branch graph is not a tree rooted at the source")
    if graph.in_degree(source) != 0:
        raise NotRadial(f"source bus '{source}' is fed by a branch")

    edges = nx.bfs_edges(
        graph, source, sort_neighbors=lambda nodes: sorted(nodes, key=lambda n: graph.nodes[n]["via"])
    )
    return [graph.edges[u, v]["branch"] for u, v in edges]


def distance_from_source(network: PhasedNetwork) -> Dict[str, Optional[float]]:
    """Metres from the source along the branch chain, None when a length is missing."""
    distance: Dict[str, Optional[float]] = {network.source_bus().id: 0.0}
    for branch in radial_order(network):
        upstream = distance[branch.from_bus]
        if isinstance(branch, Transformer):
            step: Optional[float] = 0.0
        else:
            step = branch.length_m
        if upstream is None or step is None or not math.isfinite(step):
            distance[branch.to_bus] = None
        else:
            distance[branch.to_bus] = upstream + step
    return distance
