import dataclasses

import numpy as np
import pytest

import planner.study as study
from feeder.errors import ValidationFailed
from losses.accounting import loss_squared, total_loss
from optimizer.engine import OptimizationResult
from optimizer.genetic import GaParams
from optimizer.swarm import CfPsoParams, IwPsoParams
from planner.study import NoDGUnits, PlannerConfig, evaluate_case, fitness, penalty, plan
from powerflow.limits import check_limits
from powerflow.solver import solve
from tests.conftest import feeder_text, load_fixture, load_text
from tests.oracles import grid_minimum

SWARM = CfPsoParams(swarm_size=20, max_iterations=60, stall_iterations=0, rng_seed=17)
GA = GaParams(population_size=40, max_generations=100, stall_generations=0, rng_seed=17)


def config_for(engine):
    params = {"cfpso": SWARM, "ga": GA,
              "iwpso": IwPsoParams(w=0.7, c1=1.5, c2=1.5, swarm_size=20, max_iterations=60,
                                   stall_iterations=0, rng_seed=17)}[engine]
    return PlannerConfig(engine=engine, params=params)


class TestConfig:
    def test_defaults(self):
        config = PlannerConfig()
        assert isinstance(config.params, CfPsoParams)
        assert (config.voltage_penalty, config.ampacity_penalty, config.nonconvergence_penalty) == (
            1e3, 1e3, 1e6
        )

    def test_params_must_match_engine(self):
        with pytest.raises(ValueError):
            PlannerConfig(engine="ga", params=CfPsoParams())

    def test_penalties_must_be_positive(self):
        with pytest.raises(ValueError):
            PlannerConfig(voltage_penalty=0.0)


class TestFitness:
    def test_zero_capacity_is_the_squared_base_loss(self, six_bus):
        sol = solve(six_bus)
        expected = loss_squared(total_loss(six_bus, sol))
        assert fitness(six_bus, [0.0], PlannerConfig()) == pytest.approx(expected, rel=1e-12)

    def test_named_capacities(self, two_dg):
        config = PlannerConfig()
        assert fitness(two_dg, {"dg1": 300.0, "dg2": 50.0}, config) == fitness(two_dg, [300.0, 50.0], config)

    def test_violations_add_penalties(self):
        net = load_text(feeder_text("two_bus") + "dg g1 bus=n2 phases=a p_min_kw=0 p_max_kw=30000\n")
        case = evaluate_case(net.with_dg_capacities([20000.0]), PlannerConfig())
        assert case.converged
        assert not case.limits.is_clean
        assert case.fitness == pytest.approx(loss_squared(case.losses) + penalty(case.limits, PlannerConfig()))
        assert case.fitness > loss_squared(case.losses)

    def test_penalty_is_quadratic_in_excursion(self):
        net = load_text(feeder_text("two_bus") + "dg g1 bus=n2 phases=a p_min_kw=0 p_max_kw=30000\n")
        case = evaluate_case(net.with_dg_capacities([20000.0]), PlannerConfig())
        voltage = sum(v.deviation_pu ** 2 for v in case.limits.voltage_violations)
        ampacity = sum(a.relative_overload ** 2 for a in case.limits.ampacity_violations)
        config = PlannerConfig(voltage_penalty=2.0, ampacity_penalty=5.0)
        assert penalty(case.limits, config) == pytest.approx(2.0 * voltage + 5.0 * ampacity)

    def test_nonconvergence_scores_the_penalty(self):
        net = load_fixture("collapse")
        assert fitness(net, [0.0], PlannerConfig()) == 1e6
        assert fitness(net, [0.0], PlannerConfig(nonconvergence_penalty=42.0)) == 42.0

    def test_solver_errors_score_the_penalty(self):
        text = feeder_text("two_bus").replace("z=[0.3+0.6j]", "z=[0]")
        net = load_text(text + "dg g1 bus=n2 phases=a p_min_kw=0 p_max_kw=100\n")
        assert fitness(net, [50.0], PlannerConfig()) == 1e6

    def test_dg_reduces_fitness(self, six_bus):
        config = PlannerConfig()
        assert fitness(six_bus, [1000.0], config) < fitness(six_bus, [0.0], config)


class TestPlan:
    def test_requires_dg_units(self, four_bus):
        with pytest.raises(NoDGUnits):
            plan(four_bus)

    def test_rejects_invalid_networks(self, six_bus):
        unit = dataclasses.replace(six_bus.dg_units[0], p_min_kw=10.0, p_max_kw=5.0)
        with pytest.raises(ValidationFailed):
            plan(dataclasses.replace(six_bus, dg_units=(unit,)))

    @pytest.mark.parametrize("engine", ["cfpso", "ga"])
    def test_single_unit_matches_grid_search(self, six_bus, engine):
        config = config_for(engine)
        axis = np.arange(0.0, 1501.0, 1.0)
        best_x, best_value = grid_minimum(lambda x: fitness(six_bus, x, config), [axis])
        result = plan(six_bus, config)
        assert result.capacities["dg1"] == pytest.approx(best_x[0], abs=15.0)
        assert result.best_fitness <= best_value * 1.01

    @pytest.mark.parametrize("engine", ["cfpso", "iwpso", "ga"])
    def test_two_units_beat_a_coarse_grid(self, two_dg, engine):
        config = config_for(engine)
        axes = [np.linspace(10.0, 3000.0, 21), np.linspace(0.0, 500.0, 21)]
        _, best_value = grid_minimum(lambda x: fitness(two_dg, x, config), axes)
        result = plan(two_dg, config)
        assert result.best_fitness <= best_value + 1e-9

    def test_plan_cuts_losses_without_violations(self, two_dg):
        result = plan(two_dg, config_for("cfpso"))
        assert result.optimized.losses.total_loss_kw < result.base.losses.total_loss_kw
        assert result.optimized.limits.is_clean
        for unit in two_dg.dg_units:
            assert unit.p_min_kw <= result.capacities[unit.id] <= unit.p_max_kw

    def test_base_case_runs_without_dg(self, two_dg):
        result = plan(two_dg, config_for("cfpso"))
        assert set(result.base.capacities.values()) == {0.0}
        assert result.base.solution.dg_power == 0

    def test_result_network_carries_the_plan(self, two_dg):
        result = plan(two_dg, config_for("cfpso"))
        assert {u.id: u.capacity_kw for u in result.network.dg_units} == result.capacities

    def test_same_seed_same_plan(self, two_dg):
        a = plan(two_dg, config_for("ga"))
        b = plan(two_dg, config_for("ga"))
        assert a.capacities == b.capacities
        assert a.history == b.history
        assert a.seed == b.seed == 17

    def test_run_statistics(self, six_bus):
        result = plan(six_bus, config_for("cfpso"))
        assert result.engine == "cfpso"
        assert result.iterations == 60
        assert result.evaluations == 20 * 61
        assert result.stop_reason == "max_iterations"
        assert len(result.history) == 60

    def test_pinned_units_skip_the_engine(self):
        text = feeder_text("six_bus").replace("p_min_kw=0 p_max_kw=1500", "p_min_kw=200 p_max_kw=200")
        result = plan(load_text(text), config_for("cfpso"))
        assert result.capacities == {"dg1": 200.0}
        assert result.stop_reason == "pinned"
        assert result.evaluations == 1
        assert result.iterations == 0
        assert result.initial_value == result.best_fitness

    def test_pinned_unit_beside_a_free_one(self):
        text = feeder_text("two_dg").replace("p_min_kw=0 p_max_kw=500", "p_min_kw=100 p_max_kw=100")
        result = plan(load_text(text), config_for("cfpso"))
        assert result.capacities["dg2"] == 100.0
        assert 10.0 <= result.capacities["dg1"] <= 3000.0

    def test_falls_back_to_zero_when_the_search_does_worse(self, monkeypatch):
        def bad_run(engine, space, params, objective):
            return OptimizationResult(engine=engine, best_x=np.array([20000.0]),
                                      best_value=objective(np.array([20000.0])), seed=1)

        monkeypatch.setattr(study, "run", bad_run)
        net = load_text(feeder_text("two_bus") + "dg g1 bus=n2 phases=a p_min_kw=0 p_max_kw=30000\n")
        result = plan(net, PlannerConfig())
        assert result.capacities == {"g1": 0.0}
        assert result.optimized is result.base
        assert result.network.dg_units[0].capacity_kw == 0.0

    def test_limits_of_the_plan_match_a_fresh_solve(self, six_bus):
        result = plan(six_bus, config_for("cfpso"))
        sol = solve(result.network)
        fresh = check_limits(result.network, sol)
        assert fresh.count() == result.optimized.limits.count()
