"""Seeded n-player Diner's Dilemma simulator with metanorm punishment and
Fermi pairwise-imitation strategy dynamics."""

from .model import (
    AgentSeed,
    AgentState,
    BackendConfig,
    BackendModeError,
    ConfigError,
    ConfigValidationError,
    DEFAULT_MENU,
    DilemmaConditionError,
    GroupSpec,
    ImitationOutcome,
    ImitationParams,
    IterationRecord,
    MealChoice,
    MenuConfig,
    PartitionError,
    PunishmentEvent,
    PunishmentLevel,
    PunishmentMode,
    PunishmentParams,
    SimulationConfig,
    Strategy,
    STRATEGY_ORDER,
    UtilityBasis,
    census_of,
    paper_preset,
    validate_config,
)
from .config_io import load_config, save_config
from .engine import run_group_round, settle_bill
from .imitation import fermi_probability, imitation_step, select_role_model
from .runner import RunResult, RunStatus, run_replications, run_simulation
from .backends import RuleOracle, LlmBackend

__version__ = "0.1.0"

__all__ = [
    "AgentSeed",
    "AgentState",
    "BackendConfig",
    "BackendModeError",
    "ConfigError",
    "ConfigValidationError",
    "DEFAULT_MENU",
    "DilemmaConditionError",
    "GroupSpec",
    "ImitationOutcome",
    "ImitationParams",
    "IterationRecord",
    "LlmBackend",
    "MealChoice",
    "MenuConfig",
    "PartitionError",
    "PunishmentEvent",
    "PunishmentLevel",
    "PunishmentMode",
    "PunishmentParams",
    "RuleOracle",
    "RunResult",
    "RunStatus",
    "SimulationConfig",
    "Strategy",
    "STRATEGY_ORDER",
    "UtilityBasis",
    "census_of",
    "fermi_probability",
    "imitation_step",
    "load_config",
    "paper_preset",
    "run_group_round",
    "run_replications",
    "run_simulation",
    "save_config",
    "select_role_model",
    "settle_bill",
    "validate_config",
]
