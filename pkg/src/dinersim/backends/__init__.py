from .base import (
    BackendError,
    Decision,
    DecisionBackend,
    DecisionContext,
    DecisionKind,
    ParseError,
    PromptRenderError,
    RosterEntry,
    SchemaError,
    TransportError,
    UnsupportedModeError,
    check_decision,
)
from .oracle import RuleOracle
from .llm import LlmBackend
from .accuracy import AccuracyReport, Scenario, build_scenario_suite, evaluate_accuracy

__all__ = [
    "AccuracyReport",
    "BackendError",
    "Decision",
    "DecisionBackend",
    "DecisionContext",
    "DecisionKind",
    "LlmBackend",
    "ParseError",
    "PromptRenderError",
    "RosterEntry",
    "RuleOracle",
    "Scenario",
    "SchemaError",
    "TransportError",
    "UnsupportedModeError",
    "build_scenario_suite",
    "check_decision",
    "evaluate_accuracy",
]
