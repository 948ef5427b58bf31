"""Scenario comparison and the CSV artifacts of load-flow and planning runs."""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import pandas as pd

from feeder.model import PhasedNetwork, phases_text
from feeder.topology import distance_from_source
from losses.accounting import LossBreakdown
from planner.study import DGPlanResult
from powerflow.limits import LimitReport
from powerflow.solver import PowerFlowSolution

FLOAT_FORMAT = "%.9g"

REPORT_METRICS = (
    "line_loss_mw",
    "transformer_loss_mw",
    "total_loss_mw",
    "load_power_mw",
    "loss_percent",
    "fitness",
    "v_min_pu",
    "v_max_pu",
    "voltage_violations",
    "ampacity_violations",
)
# report row name -> ScenarioReport attribute
REDUCTIONS = {
    "loss_reduction_kw": "reduction_kw",
    "loss_reduction_points": "reduction_points",
    "loss_reduction_percent": "reduction_percent",
}


@dataclass
class ScenarioReport:
    base: Dict[str, float] = field(default_factory=dict)
    optimized: Dict[str, float] = field(default_factory=dict)
    reduction_kw: float = 0.0
    reduction_points: float = 0.0
    reduction_percent: float = 0.0

    def to_frame(self, column: str = "optimized") -> pd.DataFrame:
        rows = [
            {"metric": m, "base": self.base.get(m, math.nan), column: self.optimized.get(m, math.nan)}
            for m in REPORT_METRICS
        ]
        rows += [
            {"metric": name, "base": math.nan, column: getattr(self, attr)}
            for name, attr in REDUCTIONS.items()
        ]
        return pd.DataFrame(rows, columns=["metric", "base", column])

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, column: str = "optimized") -> "ScenarioReport":
        values = frame.set_index("metric")
        report = cls(
            base={m: float(values.at[m, "base"]) for m in REPORT_METRICS if m in values.index},
            optimized={m: float(values.at[m, column]) for m in REPORT_METRICS if m in values.index},
        )
        for name, attr in REDUCTIONS.items():
            setattr(report, attr, float(values.at[name, column]))
        return report


def _loss_percent(losses: LossBreakdown) -> float:
    if losses.load_power_kw > 0:
        return 100.0 * losses.total_loss_kw / losses.load_power_kw
    return 0.0


def _case_metrics(losses: Optional[LossBreakdown], limits: Optional[LimitReport],
                  fitness_value: float) -> Dict[str, float]:
    metrics = {m: math.nan for m in REPORT_METRICS}
    metrics["fitness"] = fitness_value
    if losses is not None:
        metrics.update(
            line_loss_mw=losses.line_loss_kw / 1000.0,
            transformer_loss_mw=losses.transformer_loss_kw / 1000.0,
            total_loss_mw=losses.total_loss_kw / 1000.0,
            load_power_mw=losses.load_power_kw / 1000.0,
            loss_percent=_loss_percent(losses),
        )
    if limits is not None:
        metrics.update(
            v_min_pu=limits.worst_v_pu[0],
            v_max_pu=limits.worst_v_pu[1],
            voltage_violations=float(len(limits.voltage_violations)),
            ampacity_violations=float(len(limits.ampacity_violations)),
        )
    return metrics


def compare_losses(base: Optional[LossBreakdown], optimized: Optional[LossBreakdown],
                   base_limits: Optional[LimitReport] = None,
                   optimized_limits: Optional[LimitReport] = None,
                   base_fitness: float = math.nan,
                   optimized_fitness: float = math.nan) -> ScenarioReport:
    """Side-by-side loss table with the reduction from base to optimized."""
    report = ScenarioReport(
        base=_case_metrics(base, base_limits, base_fitness),
        optimized=_case_metrics(optimized, optimized_limits, optimized_fitness),
    )
    if base is None or optimized is None:
        report.reduction_kw = report.reduction_points = report.reduction_percent = math.nan
        return report
    report.reduction_kw = base.total_loss_kw - optimized.total_loss_kw
    report.reduction_points = _loss_percent(base) - _loss_percent(optimized)
    if base.total_loss_kw > 0:
        report.reduction_percent = 100.0 * report.reduction_kw / base.total_loss_kw
    return report


def compare_report(result: DGPlanResult) -> ScenarioReport:
    base, optimized = result.base, result.optimized
    return compare_losses(
        base.losses, optimized.losses, base.limits, optimized.limits, base.fitness, optimized.fitness
    )


def report_frame(results: Iterable[DGPlanResult]) -> pd.DataFrame:
    """Shared base column, then one optimized_<engine> column per engine."""
    frame = None
    for result in results:
        column = f"optimized_{result.engine}"
        part = compare_report(result).to_frame(column)
        if frame is None:
            frame = part
        else:
            frame[column] = part[column].to_numpy()
    if frame is None:
        raise ValueError("no planning results to report")
    return frame


def voltage_frame(network: PhasedNetwork, sol: PowerFlowSolution) -> pd.DataFrame:
    distance = distance_from_source(network)
    rows = []
    for bus in network.buses:
        for phase, v in zip(bus.phases, sol.bus_voltages[bus.id]):
            rows.append({
                "bus": bus.id,
                "phase": phase.value,
                "v_real": v.real,
                "v_imag": v.imag,
                "v_pu": abs(v) / bus.nominal_voltage,
                "dist_m": distance.get(bus.id),
            })
    return pd.DataFrame(rows, columns=["bus", "phase", "v_real", "v_imag", "v_pu", "dist_m"])


def current_frame(network: PhasedNetwork, sol: PowerFlowSolution) -> pd.DataFrame:
    rows = []
    for branch in sorted(network.branches(), key=lambda b: b.id):
        ampacity = getattr(branch, "ampacity", None)
        for phase, i in zip(branch.phases, sol.branch_currents[branch.id]):
            rows.append({
                "branch": branch.id,
                "phase": phase.value,
                "i_real": i.real,
                "i_imag": i.imag,
                "i_amps": abs(i),
                "ampacity": ampacity,
            })
    return pd.DataFrame(rows, columns=["branch", "phase", "i_real", "i_imag", "i_amps", "ampacity"])


def loss_frame(losses: LossBreakdown) -> pd.DataFrame:
    rows = [{"item": f"segment:{branch_id}", "kw": kw} for branch_id, kw in losses.per_segment_kw.items()]
    for item in ("line_loss_kw", "transformer_loss_kw", "total_loss_kw", "load_power_kw",
                 "dg_power_kw", "source_power_kw", "loss_percent"):
        rows.append({"item": item, "kw": getattr(losses, item)})
    return pd.DataFrame(rows, columns=["item", "kw"])


def plan_frame(results: Iterable[DGPlanResult]) -> pd.DataFrame:
    rows = [
        {
            "engine": result.engine,
            "dg": unit.id,
            "bus": unit.bus,
            "phases": phases_text(unit.phases),
            "p_min_kw": unit.p_min_kw,
            "p_max_kw": unit.p_max_kw,
            "capacity_kw": result.capacities[unit.id],
        }
        for result in results
        for unit in result.network.dg_units
    ]
    return pd.DataFrame(rows, columns=["engine", "dg","bus", "phases", "p_min_kw", "p_max_kw", "capacity_kw"])


def convergence_frame(results: Iterable[DGPlanResult]) -> pd.DataFrame:
    """Best fitness per iteration; iteration 0 is the initialization best."""
    rows = []
    for result in results:
        trace = [result.initial_value, *result.history]
        rows += [
            {"engine": result.engine, "iteration": i, "best_fitness": value}
            for i, value in enumerate(trace)
        ]
    return pd.DataFrame(rows, columns=["engine", "iteration", "best_fitness"])


def write_csv(frame: pd.DataFrame, path: Union[str, Path], footer: Optional[List[str]] = None) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    if footer:
        with path.open("a", encoding="utf-8", newline="\n") as f:
            for line in footer:
                f.write(line + "\n")
    return path

