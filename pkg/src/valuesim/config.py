"""Run configuration: one TOML file with [population], [stage1], [stage2],
and [backend] sections. Every field has a default; `--print-defaults` on the
command line emits the full annotated file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from .backend import BackendConfig
from .errors import ConfigError
from .persona import Complexity, PopulationCondition, PopulationSpec
from .values import HigherOrderCategory, category_from_name


@dataclass
class Stage1Config:
    rounds: int = 25
    max_turns: int = 6
    survey_interval: int = 5
    context_budget_tokens: int = 400

    def validate(self) -> None:
        if self.rounds < 1:
            raise ConfigError("stage1.rounds must be >= 1")
        if self.max_turns < 1:
            raise ConfigError("stage1.max_turns must be >= 1")
        if self.survey_interval < 1:
            raise ConfigError("stage1.survey_interval must be >= 1")
        if self.context_budget_tokens < 1:
            raise ConfigError("stage1.context_budget_tokens must be >= 1")


@dataclass
class Stage2Config:
    comment_k: int = 3

    def validate(self) -> None:
        if self.comment_k < 0:
            raise ConfigError("stage2.comment_k must be >= 0")


@dataclass
class RunConfig:
    seed: int = 0
    run_id: str = ""
    population: PopulationSpec = field(
        default_factory=lambda: PopulationSpec(
            n=4,
            condition=PopulationCondition.NO_VALUE,
            complexity=Complexity.NONE,
        )
    )
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    backend: BackendConfig = field(default_factory=BackendConfig)

    def validate(self, check_api_key: bool = True) -> None:
        from .errors import InfeasibleSpecError

        try:
            self.population.validate()
        except InfeasibleSpecError as exc:
            raise ConfigError(str(exc)) from exc
        self.stage1.validate()
        self.stage2.validate()
        try:
            self.backend.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if (
            check_api_key
            and self.backend.kind == "remote"
            and not os.environ.get(self.backend.api_key_env)
        ):
            raise ConfigError(
                f"remote backend configured but env var {self.backend.api_key_env!r} is unset"
            )

    def effective_run_id(self) -> str:
        if self.run_id:
            return self.run_id
        pop = self.population
        parts = [f"n{pop.n}", pop.condition.value]
        if pop.homogeneous_category is not None:
            parts.append(pop.homogeneous_category.value)
        parts.append(pop.complexity.value)
        parts.append(f"seed{self.seed}")
        return "_".join(parts)

    def to_dict(self) -> dict:
        pop = {
            "size": self.population.n,
            "condition": self.population.condition.value,
            "complexity": self.population.complexity.value,
        }
        if self.population.homogeneous_category is not None:
            pop["homogeneous_category"] = self.population.homogeneous_category.value
        return {
            "seed": self.seed,
            "run_id": self.run_id,
            "population": pop,
            "stage1": {
                "rounds": self.stage1.rounds,
                "max_turns": self.stage1.max_turns,
                "survey_interval": self.stage1.survey_interval,
                "context_budget_tokens": self.stage1.context_budget_tokens,
            },
            "stage2": {"comment_k": self.stage2.comment_k},
            "backend": self.backend.redacted(),
        }

    @classmethod
    def from_dict(cls, raw: dict, check_api_key: bool = True) -> "RunConfig":
        return _config_from_tables(raw, check_api_key=check_api_key)


_POP_KEYS = {"size", "condition", "complexity", "homogeneous_category"}
_STAGE1_KEYS = {"rounds", "max_turns", "survey_interval", "context_budget_tokens"}
_STAGE2_KEYS = {"comment_k"}
_BACKEND_KEYS = {
    "kind", "endpoint_url", "model_name", "api_key_env", "timeout_ms",
    "max_retries", "max_concurrent_requests", "backoff_base_ms",
    "temperature", "max_tokens", "seed",
}
_TOP_KEYS = {"seed", "run_id", "population", "stage1", "stage2", "backend"}


def _reject_unknown(table: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _config_from_tables(raw: dict, check_api_key: bool = True) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    _reject_unknown(raw, _TOP_KEYS, "config")
    cfg = RunConfig()
    cfg.seed = int(raw.get("seed", cfg.seed))
    cfg.run_id = str(raw.get("run_id", ""))

    pop = raw.get("population", {})
    _reject_unknown(pop, _POP_KEYS, "[population]")
    condition_name = pop.get("condition", "NoValue")
    try:
        condition = PopulationCondition(condition_name)
    except ValueError:
        raise ConfigError(f"unknown population condition {condition_name!r}") from None
    complexity_name = pop.get("complexity", "None")
    try:
        complexity = Complexity(complexity_name)
    except ValueError:
        raise ConfigError(f"unknown complexity {complexity_name!r}") from None
    category = None
    if "homogeneous_category" in pop:
        try:
            category = category_from_name(pop["homogeneous_category"])
        except KeyError:
            raise ConfigError(
                f"unknown higher-order category {pop['homogeneous_category']!r}"
            ) from None
    cfg.population = PopulationSpec(
        n=int(pop.get("size", 4)),
        condition=condition,
        complexity=complexity,
        homogeneous_category=category,
    )

    s1 = raw.get("stage1", {})
    _reject_unknown(s1, _STAGE1_KEYS, "[stage1]")
    cfg.stage1 = Stage1Config(
        rounds=int(s1.get("rounds", 25)),
        max_turns=int(s1.get("max_turns", 6)),
        survey_interval=int(s1.get("survey_interval", 5)),
        context_budget_tokens=int(s1.get("context_budget_tokens", 400)),
    )

    s2 = raw.get("stage2", {})
    _reject_unknown(s2, _STAGE2_KEYS, "[stage2]")
    cfg.stage2 = Stage2Config(comment_k=int(s2.get("comment_k", 3)))

    be = raw.get("backend", {})
    _reject_unknown(be, _BACKEND_KEYS, "[backend]")
    defaults = BackendConfig()
    cfg.backend = BackendConfig(
        kind=str(be.get("kind", defaults.kind)),
        endpoint_url=str(be.get("endpoint_url", defaults.endpoint_url)),
        model_name=str(be.get("model_name", defaults.model_name)),
        api_key_env=str(be.get("api_key_env", defaults.api_key_env)),
        timeout_ms=int(be.get("timeout_ms", defaults.timeout_ms)),
        max_retries=int(be.get("max_retries", defaults.max_retries)),
        max_concurrent_requests=int(
            be.get("max_concurrent_requests", defaults.max_concurrent_requests)
        ),
        backoff_base_ms=int(be.get("backoff_base_ms", defaults.backoff_base_ms)),
        temperature=float(be.get("temperature", defaults.temperature)),
        max_tokens=int(be.get("max_tokens", defaults.max_tokens)),
        seed=int(be.get("seed", cfg.seed)),
    )
    cfg.validate(check_api_key=check_api_key)
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    return _config_from_tables(raw)


DEFAULT_TOML = """\
# Simulation run configuration. Every key is optional; values shown are the
# defaults.

seed = 0
# run_id = ""            # default: derived from population + seed

[population]
size = 4
condition = "NoValue"    # NoValue | Homogeneous | DiverseBalanced
complexity = "None"      # Single | Multi | None
# homogeneous_category = "Conservation"   # required when condition = "Homogeneous"

[stage1]
rounds = 25
max_turns = 6
survey_interval = 5
context_budget_tokens = 400

[stage2]
comment_k = 3

[backend]
kind = "mock"            # mock | remote
endpoint_url = ""        # required for remote
model_name = "llama-3.1-70b"
api_key_env = "VALUESIM_API_KEY"   # env var NAME holding the key (remote only)
timeout_ms = 30000
max_retries = 3
max_concurrent_requests = 4
backoff_base_ms = 250
temperature = 0.7
max_tokens = 512
# seed = 0               # mock backend seed; defaults to the top-level seed
"""
