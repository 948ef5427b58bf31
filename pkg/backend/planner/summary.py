"""Plain-text explanations of limit violations and planning studies."""

from typing import List, Optional, Union

from planner.report import ScenarioReport
from planner.study import DGPlanResult
from powerflow.limits import AmpacityViolation, LimitReport, VoltageViolation


def explain_violation(violation: Union[VoltageViolation, AmpacityViolation]) -> str:
    """Generate a one-line explanation for a limit violation."""
    if isinstance(violation, VoltageViolation):
        side = "below the minimum" if violation.v_pu < violation.limit else "above the maximum"
        return (
            f"Bus {violation.bus} phase {violation.phase.value}: "
            f"voltage is {violation.v_pu:.4f} pu, "
            f"{side} of {violation.limit:.4f} pu. "
            f"Severity: {violation.severity}."
        )
    return (
        f"Branch {violation.branch} phase {violation.phase.value}: "
        f"current is {violation.amps:.1f} A, "
        f"at or above its rating of {violation.limit:.1f} A "
        f"({violation.relative_overload * 100:.1f}% overload). "
        f"Severity: {violation.severity}."
    )


def _violation_lines(title: str, limits: Optional[LimitReport]) -> List[str]:
    if limits is None:
        return [f"{title}: load flow did not converge"]
    if limits.is_clean:
        return [f"{title}: no limit violations"]
    by_severity = {"low": 0, "medium": 0, "high": 0}
    for violation in [*limits.voltage_violations, *limits.ampacity_violations]:
        by_severity[violation.severity] += 1
    return [
        f"{title}: {limits.count()} limit violation(s)",
        f"  High: {by_severity['high']}",
        f"  Medium: {by_severity['medium']}",
        f"  Low: {by_severity['low']}",
    ]


def generate_summary(result: DGPlanResult, report: ScenarioReport) -> str:
    """Generate the study summary printed after a plan."""
    summary_lines = [
        f"DG Planning Summary ({result.network.name})",
        "=" * 50,
        f"Engine: {result.engine} (seed {result.seed}), "
        f"{result.evaluations} evaluations, {result.iterations} iterations, "
        f"stopped by {result.stop_reason}",
        "",
        "Capacities:",
    ]
    for dg_id, capacity in result.capacities.items():
        summary_lines.append(f"  {dg_id}: {capacity:.3f} kW")

    summary_lines.extend([
        "",
        f"Total loss: {report.base['total_loss_mw']:.6f} MW -> {report.optimized['total_loss_mw']:.6f} MW",
        f"Reduction: {report.reduction_kw:.3f} kW ({report.reduction_points:.3f} points of % loss)",
        "",
    ])
    summary_lines.extend(_violation_lines("Base case", result.base.limits))
    summary_lines.extend(_violation_lines("Optimized", result.optimized.limits))

    if result.optimized.limits is not None:
        for violation in [*result.optimized.limits.voltage_violations,
                          *result.optimized.limits.ampacity_violations]:
            summary_lines.append(f"  - {explain_violation(violation)}")

    return "\n".join(summary_lines)
