import dataclasses
import math

import numpy as np
import pytest

from feeder.model import Phase
from powerflow.limits import check_limits
from powerflow.solver import (
    NotConverged,
    PowerFlowSolution,
    SingularElement,
    SolverSettings,
    branch_ratio,
    series_impedance,
    shunt_current,
    solve,
)
from tests.conftest import TIGHT, four_bus_variant, load_fixture, load_text, feeder_text, phasor
from tests.oracles import nodal_solve, scalar_two_bus


def solved_cases():
    return {
        "two_bus": load_fixture("two_bus"),
        "four_bus": load_fixture("four_bus"),
        "transformer": load_fixture("transformer"),
        "capacitor": four_bus_variant("capacitor"),
        "regulator": four_bus_variant("regulator"),
        "six_bus_dg": load_fixture("six_bus").with_dg_capacities([900.0]),
        "two_dg": load_fixture("two_dg").with_dg_capacities([400.0, 250.0]),
    }


CASES = solved_cases()


def scaled_loads(network, scale):
    loads = tuple(
        dataclasses.replace(
            load,
            per_phase_kw=tuple(kw * scale for kw in load.per_phase_kw),
            per_phase_kvar=tuple(kvar * scale for kvar in load.per_phase_kvar),
        )
        for load in network.loads
    )
    return dataclasses.replace(network, loads=loads)


class TestSettings:
    def test_defaults(self):
        settings = SolverSettings()
        assert settings.tolerance == 1e-4
        assert settings.max_iterations == 100
        assert settings.flat_start

    @pytest.mark.parametrize("kwargs", [{"tolerance": 0.0}, {"tolerance": -1.0}, {"max_iterations": 0}])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            SolverSettings(**kwargs)


class TestElements:
    def test_transformer_impedance_on_secondary_base(self):
        net = load_fixture("transformer")
        z = series_impedance(net, net.branch("t23"))
        z_base = 2400.0 ** 2 / (500e3 / 3)
        assert np.allclose(z, np.eye(3) * complex(0.01, 0.06) * z_base)

    def test_transformer_ratio(self):
        net = load_fixture("transformer")
        assert np.allclose(branch_ratio(net, net.branch("t23")), [3.0, 3.0, 3.0])

    def test_regulator_ratio(self):
        net = four_bus_variant("regulator")
        assert np.allclose(branch_ratio(net, net.branch("l12")), 1 / 1.05)
        assert np.allclose(branch_ratio(net, net.branch("l23")), 1.0)

    def test_constant_pq_draws_rated_power_at_any_voltage(self):
        s = np.array([1000 + 500j])
        v = np.array([phasor(6500.0, -10.0)])
        current = shunt_current("constant_PQ", s, v, 7200.0)
        assert v * np.conj(current) == pytest.approx(s)

    def test_constant_z_scales_with_voltage_squared(self):
        s = np.array([1000 + 500j])
        v = np.array([phasor(3600.0, 30.0)])
        current = shunt_current("constant_Z", s, v, 7200.0)
        assert v * np.conj(current) == pytest.approx(s / 4)

    def test_constant_i_scales_with_voltage(self):
        s = np.array([1000 + 500j])
        v = np.array([phasor(3600.0, 30.0)])
        current = shunt_current("constant_I", s, v, 7200.0)
        assert abs(current[0]) == pytest.approx(abs(s[0]) / 7200.0)
        assert v * np.conj(current) == pytest.approx(s / 2)


class TestSweep:
    def test_two_bus_matches_closed_form(self):
        net = CASES["two_bus"]
        sol = solve(net, TIGHT)
        assert sol.converged
        expected = scalar_two_bus(7200.0 + 0j, complex(0.3, 0.6), 100e3 + 0j)
        assert abs(sol.voltage("n2", Phase.A) - expected) <= 1e-6

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_matches_nodal_solution(self, name):
        net = CASES[name]
        sol = solve(net, TIGHT)
        assert sol.converged
        reference = nodal_solve(net)
        for bus in net.buses:
            error = np.abs(sol.bus_voltages[bus.id] - reference[bus.id]) / bus.nominal_voltage
            assert error.max() <= 1e-6, bus.id

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_kirchhoff_current_law(self, name):
        net = CASES[name]
        sol = solve(net, TIGHT)
        for bus in net.buses:
            if bus.is_source:
                continue
            inflow = np.zeros(len(bus.phases), dtype=complex)
            outflow = sol.bus_currents[bus.id].copy()
            for br in net.branches():
                if bus.id not in (br.from_bus, br.to_bus):
                    continue
                idx = [bus.phases.index(p) for p in br.phases]
                if br.to_bus == bus.id:
                    inflow[idx] += sol.branch_currents[br.id]
                if br.from_bus == bus.id:
                    outflow[idx] += sol.sending_currents[br.id]
            scale = max(1.0, float(np.abs(inflow).max()))
            assert np.abs(inflow - outflow).max() <= 1e-9 * scale, bus.id

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_power_balance(self, name):
        from losses.accounting import total_loss

        net = CASES[name]
        sol = solve(net, TIGHT)
        losses = total_loss(net, sol)
        supplied = losses.source_power_kw + losses.dg_power_kw
        consumed = losses.load_power_kw + losses.total_loss_kw
        assert supplied == pytest.approx(consumed, rel=1e-9, abs=1e-9)

    def test_source_holds_nominal_phasors(self, four_bus):
        sol = solve(four_bus, TIGHT)
        expected = [phasor(2400.0, 0.0), phasor(2400.0, -120.0), phasor(2400.0, 120.0)]
        assert np.allclose(sol.bus_voltages["src"], expected)

    def test_unbalanced_load_gives_unbalanced_voltages(self, four_bus):
        sol = solve(four_bus, TIGHT)
        magnitudes = np.abs(sol.bus_voltages["n3"])
        assert magnitudes.max() - magnitudes.min() > 1.0

    def test_two_phase_bus(self, two_dg):
        sol = solve(two_dg, TIGHT)
        assert sol.bus_voltages["n6"].shape == (2,)
        assert sol.branch_currents["s36"].shape == (2,)

    def test_transformer_steps_down(self):
        sol = solve(CASES["transformer"], TIGHT)
        magnitudes = np.abs(sol.bus_voltages["n3"])
        assert np.all(magnitudes < 2400.0)
        assert np.all(magnitudes > 2300.0)
        # primary current is the secondary current divided by the turns ratio
        assert np.allclose(sol.sending_currents["t23"], sol.branch_currents["t23"] / 3.0)

    def test_regulator_boosts_downstream(self):
        plain = solve(load_fixture("four_bus"), TIGHT)
        boosted = solve(four_bus_variant("regulator"), TIGHT)
        assert np.all(np.abs(boosted.bus_voltages["n3"]) > np.abs(plain.bus_voltages["n3"]))

    def test_capacitor_raises_voltage(self):
        plain = solve(load_fixture("four_bus"), TIGHT)
        with_cap = solve(four_bus_variant("capacitor"), TIGHT)
        assert np.all(np.abs(with_cap.bus_voltages["n3"]) > np.abs(plain.bus_voltages["n3"]))

    def test_disabled_capacitor_has_no_effect(self):
        plain = solve(load_fixture("four_bus"), TIGHT)
        text = feeder_text("four_bus") + "capacitor c3 bus=n3 phases=abc kvar=[50 50 50] enabled=no\n"
        off = solve(load_text(text), TIGHT)
        assert np.allclose(off.bus_voltages["n3"], plain.bus_voltages["n3"], rtol=0, atol=1e-9)

    def test_dg_power_is_reported(self, six_bus):
        sol = solve(six_bus.with_dg_capacities([900.0]), TIGHT)
        assert sol.dg_power.real == pytest.approx(900e3)


class TestIterationControl:
    def test_tighter_tolerance_never_needs_fewer_iterations(self, four_bus):
        counts = [solve(four_bus, SolverSettings(tolerance=tol)).iterations for tol in (1e-3, 1e-6, 1e-9, 1e-12)]
        assert counts == sorted(counts)

    def test_tighter_tolerance_never_leaves_a_larger_mismatch(self, four_bus):
        tolerances = (1e-3, 1e-6, 1e-9, 1e-12)
        solutions = [solve(four_bus, SolverSettings(tolerance=tol)) for tol in tolerances]
        mismatches = [sol.max_mismatch for sol in solutions]
        assert mismatches == sorted(mismatches, reverse=True)
        for sol, tol in zip(solutions, tolerances):
            assert sol.converged
            assert sol.max_mismatch <= tol

    def test_mismatch_history(self, four_bus):
        sol = solve(four_bus, TIGHT)
        assert len(sol.history) == sol.iterations
        assert sol.history[-1] == sol.max_mismatch <= TIGHT.tolerance

    def test_warm_start_from_solution(self, four_bus):
        cold = solve(four_bus, TIGHT)
        warm = solve(four_bus, dataclasses.replace(TIGHT, flat_start=False), initial=cold)
        assert warm.converged
        assert warm.iterations <= 2
        for bus_id, v in cold.bus_voltages.items():
            assert np.allclose(warm.bus_voltages[bus_id], v, rtol=0, atol=1e-6)

    def test_flat_start_ignores_initial(self, four_bus):
        cold = solve(four_bus, TIGHT)
        again = solve(four_bus, TIGHT, initial=cold)
        assert again.iterations == cold.iterations

    def test_repeat_solves_are_identical(self, four_bus):
        a = solve(four_bus, TIGHT)
        b = solve(four_bus, TIGHT)
        for bus_id in a.bus_voltages:
            assert np.array_equal(a.bus_voltages[bus_id], b.bus_voltages[bus_id])

    def test_iteration_cap(self, four_bus):
        sol = solve(four_bus, SolverSettings(tolerance=1e-15, max_iterations=2))
        assert not sol.converged
        assert sol.iterations == 2

    def test_voltage_collapse_reports_not_converged(self):
        sol = solve(load_fixture("collapse"))
        assert isinstance(sol, PowerFlowSolution)
        assert not sol.converged

    @pytest.mark.parametrize("scale", [60.0, 70.0, 80.0, 84.86, 90.0, 100.0, 120.0])
    def test_overloaded_feeder_never_converges_to_nan(self, four_bus, scale):
        sol = solve(scaled_loads(four_bus, scale), SolverSettings(max_iterations=2000))
        finite = all(np.isfinite(v).all() for v in sol.bus_voltages.values())
        if sol.converged:
            assert finite
            assert sol.max_mismatch <= 1e-4
        if not finite:
            assert not sol.converged
            assert sol.max_mismatch == math.inf
            with pytest.raises(NotConverged):
                check_limits(four_bus, sol)

    def test_diverged_sweep_stops_at_the_first_non_finite_state(self, four_bus):
        sol = solve(scaled_loads(four_bus, 84.86), SolverSettings(max_iterations=2000))
        assert not sol.converged
        assert all(math.isfinite(m) for m in sol.history[:-1])


def test_singular_impedance():
    text = feeder_text("two_bus").replace("z=[0.3+0.6j]", "z=[0]")
    with pytest.raises(SingularElement) as info:
        solve(load_text(text))
    assert info.value.branch_id == "l1"


def test_rank_deficient_matrix():
    text = (
        "bus s phases=ab kv_ln=2.4 source=yes\n"
        "bus n phases=ab kv_ln=2.4\n"
        "line l from=s to=n phases=ab z=[1+1j 1+1j | 1+1j 1+1j]\n"
    )
    with pytest.raises(SingularElement):
        solve(load_text(text))
