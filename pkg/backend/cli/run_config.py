"""Run configuration: defaults < --config file < --set flags."""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional, Tuple

from dotenv import dotenv_values

from optimizer.engine import EngineParams, default_params, resolve_seed
from optimizer.genetic import GaParams
from optimizer.swarm import CfPsoParams, IwPsoParams
from planner.study import PlannerConfig, PlanningError
from powerflow.solver import SolverSettings


class StudyConfigError(PlanningError):
    pass


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{text}'")


# key -> (section, field name, converter)
CONFIG_KEYS: Dict[str, Tuple[str, str, Callable[[str], Any]]] = {
    "solver.tolerance": ("solver", "tolerance", float),
    "solver.max_iterations": ("solver", "max_iterations", int),
    "solver.flat_start": ("solver", "flat_start", _bool),
    "pso.swarm_size": ("pso", "swarm_size", int),
    "pso.max_iterations": ("pso", "max_iterations", int),
    "pso.stall_iterations": ("pso", "stall_iterations", int),
    "pso.c1": ("pso", "c1", float),
    "pso.c2": ("pso", "c2", float),
    "pso.w": ("pso", "w", float),
    "pso.boundary": ("pso", "boundary", str),
    "pso.random_scalars": ("pso", "random_scalars", _bool),
    "pso.workers": ("pso", "workers", int),
    "ga.population_size": ("ga", "population_size", int),
    "ga.crossover_rate": ("ga", "crossover_rate", float),
    "ga.mutation_rate": ("ga", "mutation_rate", float),
    "ga.tournament_size": ("ga", "tournament_size", int),
    "ga.max_generations": ("ga", "max_generations", int),
    "ga.stall_generations": ("ga", "stall_generations", int),
    "penalty.voltage": ("penalty", "voltage_penalty", float),
    "penalty.ampacity": ("penalty", "ampacity_penalty", float),
    "penalty.nonconvergence": ("penalty", "nonconvergence_penalty", float),
}


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def setting_defaults(sections: Iterable[str] = ("solver", "pso", "ga", "penalty")) -> Dict[str, str]:
    """Default of every settable key, labelled by engine where the engines differ."""
    sources = {
        "solver": [("", SolverSettings())],
        "pso": [("cfpso", CfPsoParams()), ("iwpso", IwPsoParams())],
        "ga": [("", GaParams())],
        "penalty": [("", PlannerConfig())],
    }
    defaults = {}
    for key, (section, name, _) in CONFIG_KEYS.items():
        if section not in sections:
            continue
        found = [(label, getattr(obj, name)) for label, obj in sources[section] if hasattr(obj, name)]
        if len({_render(v) for _, v in found}) == 1:
            defaults[key] = _render(found[0][1])
        else:
            defaults[key] = ", ".join(f"{_render(v)} ({label})" for label, v in found)
    return defaults


def settings_epilog(sections: Iterable[str] = ("solver", "pso", "ga", "penalty")) -> str:
    """--help text listing every --set / --config key with its default."""
    lines = ["\b", "Settings for --config and --set, with defaults:"]
    lines += [f"  {key} = {value}" for key, value in setting_defaults(tuple(sections)).items()]
    return "\n".join(lines)


def parse_assignments(assignments: Iterable[str]) -> Dict[str, str]:
    values = {}
    for item in assignments:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise StudyConfigError(f"expected KEY=VALUE, got '{item}'")
        values[key.strip().lower()] = value.strip()
    return values


def read_config_file(path) -> Dict[str, str]:
    values = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            raise StudyConfigError(f"{path}: '{key}' has no value")
        values[key.strip().lower()] = value.strip()
    return values


def convert_settings(raw: Dict[str, str]) -> Dict[str, Any]:
    settings = {}
    for key, text in raw.items():
        if key not in CONFIG_KEYS:
            raise StudyConfigError(f"unknown setting '{key}'")
        try:
            settings[key] = CONFIG_KEYS[key][2](text)
        except ValueError:
            raise StudyConfigError(f"bad value for '{key}': '{text}'")
    return settings


def _section(settings: Dict[str, Any], section: str) -> Dict[str, Any]:
    return {
        CONFIG_KEYS[key][1]: value for key, value in settings.items() if CONFIG_KEYS[key][0] == section
    }


@dataclass
class RunConfig:
    feeder: Path
    command: str
    engines: Tuple[str, ...] = ("cfpso",)
    seed: Optional[int] = None
    out_dir: Path = Path(".")
    settings: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_sources(cls, feeder, command: str, out_dir=".", engines: Tuple[str, ...] = ("cfpso",),
                     seed: Optional[str] = None, config_file=None,
                     assignments: Iterable[str] = ()) -> "RunConfig":
        raw: Dict[str, str] = {}
        if config_file:
            raw.update(read_config_file(config_file))
        raw.update(parse_assignments(assignments))
        return cls(
            feeder=Path(feeder),
            command=command,
            engines=tuple(dict.fromkeys(engines)),
            seed=parse_seed(seed, required=command == "plan"),
            out_dir=Path(out_dir),
            settings=convert_settings(raw),
        )

    def solver_settings(self) -> SolverSettings:
        try:
            return SolverSettings(**_section(self.settings, "solver"))
        except ValueError as e:
            raise StudyConfigError(str(e))

    def engine_params(self, engine: str) -> EngineParams:
        defaults = default_params(engine)
        names = {f.name for f in dataclasses.fields(defaults)}
        pso = _section(self.settings, "pso")
        if isinstance(defaults, GaParams):
            # worker count is shared by every engine
            updates = {**_section(self.settings, "ga"), **{k: v for k, v in pso.items() if k == "workers"}}
        else:
            updates = {k: v for k, v in pso.items() if k in names}
        updates["rng_seed"] = self.seed
        try:
            return dataclasses.replace(defaults, **updates)
        except ValueError as e:
            raise StudyConfigError(f"{engine}: {e}")

    def planner_config(self, engine: str) -> PlannerConfig:
        try:
            return PlannerConfig(
                engine=engine,
                params=self.engine_params(engine),
                solver=self.solver_settings(),
                **_section(self.settings, "penalty"),
            )
        except ValueError as e:
            raise StudyConfigError(str(e))


def parse_seed(text: Optional[str], required: bool) -> Optional[int]:
    """`auto` draws a fresh seed; plans must name one or ask for `auto`."""
    if text is None:
        if required:
            raise StudyConfigError("plan needs --seed N or --seed auto")
        return None
    if text.strip().lower() == "auto":
        return resolve_seed(None)
    try:
        seed = int(text)
    except ValueError:
        raise StudyConfigError(f"bad seed '{text}'")
    if seed < 0:
        raise StudyConfigError("seed must not be negative")
    return seed
