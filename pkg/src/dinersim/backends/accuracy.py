"""Backend accuracy measurement against the rule oracle.

The scenario suite enumerates decision contexts with oracle-known answers:
every strategy, every decision kind, both punished-flag states where the
flag matters, and several lifestyle variants so lifestyle-driven bias shows
up as a separate row in the report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..model import PunishmentMode, Strategy, STRATEGY_DESCRIPTIONS, STRATEGY_ORDER
from .base import (
    BackendError,
    DecisionBackend,
    DecisionContext,
    DecisionKind,
    RosterEntry,
)
from .oracle import oracle_decide

# Lifestyle variants exercised by the default suite.
SUITE_LIFESTYLES: tuple[tuple[str, str], ...] = (
    ("morning_runner", "Takes a high-intensity run in the morning and needs high nutrition for it."),
    ("newspaper_reader", "Reads the newspaper front to back over a slow breakfast."),
    ("photographer", "Carries a camera everywhere and plans weekends around golden-hour light."),
)

_SUITE_ROSTER_NAMES = ("Bo Lindqvist", "Carmen Diaz", "Farid Khan")
_TARGET_NAME = "Farid Khan"


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    lifestyle_tag: str
    ctx: DecisionContext
    expected_choice: str


@dataclass
class CellStats:
    matched: int = 0
    total: int = 0

    @property
    def accuracy(self) -> float:
        return self.matched / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {"matched": self.matched, "total": self.total, "accuracy": self.accuracy}


@dataclass
class AccuracyReport:
    backend_name: str
    total: int = 0
    matched: int = 0
    by_kind: dict[str, CellStats] = field(default_factory=dict)
    by_strategy: dict[str, CellStats] = field(default_factory=dict)
    by_lifestyle: dict[str, CellStats] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return self.matched / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "backend": self.backend_name,
            "total": self.total,
            "matched": self.matched,
            "accuracy": self.accuracy,
            "by_kind": {k: v.to_dict() for k, v in self.by_kind.items()},
            "by_strategy": {k: v.to_dict() for k, v in self.by_strategy.items()},
            "by_lifestyle": {k: v.to_dict() for k, v in self.by_lifestyle.items()},
            "failures": self.failures,
        }


def _suite_context(
    kind: DecisionKind,
    strategy: Strategy,
    r1_punished: bool,
    lifestyle: str,
    p: float,
    k: float,
) -> DecisionContext:
    if kind is DecisionKind.ORDER:
        roster = tuple(RosterEntry(name=n) for n in _SUITE_ROSTER_NAMES)
        extras = {"menu_description": (
            "budget meal (price 10, worth 12 to you) or premium meal (price 30, "
            "worth 22 to you); the table has agreed to split the total bill equally"
        )}
    else:
        actions = {
            DecisionKind.PUNISH_DEFECTOR: {
                "Bo Lindqvist": "ordered the budget meal",
                "Carmen Diaz": "ordered the budget meal",
                "Farid Khan": "ordered the premium meal",
            },
            DecisionKind.PUNISH_NON_PUNISHER: {
                "Bo Lindqvist": "ordered the premium meal",
                "Carmen Diaz": "ordered the budget meal; scolded Bo Lindqvist",
                "Farid Khan": "ordered the budget meal",
            },
            DecisionKind.PUNISH_META_NON_PUNISHER: {
                "Bo Lindqvist": "ordered the premium meal",
                "Carmen Diaz": "ordered the budget meal",
                "Farid Khan": "ordered the budget meal; scolded Bo Lindqvist",
            },
        }[kind]
        evidence = {
            DecisionKind.PUNISH_DEFECTOR: (
                f"{_TARGET_NAME} ordered the premium meal and pushed part of its cost onto the table."
            ),
            DecisionKind.PUNISH_NON_PUNISHER: (
                f"{_TARGET_NAME} saw Bo Lindqvist order premium and did not scold them."
            ),
            DecisionKind.PUNISH_META_NON_PUNISHER: (
                f"{_TARGET_NAME} let Carmen Diaz off without a scolding for ignoring defection."
            ),
        }[kind]
        roster = tuple(RosterEntry(name=n, visible_action=actions[n]) for n in _SUITE_ROSTER_NAMES)
        extras = {"target_name": _TARGET_NAME, "evidence": evidence}
    return DecisionContext(
        kind=kind,
        iteration=1,
        location="pub",
        actor_name="Alex Rivera",
        actor_strategy=strategy,
        actor_strategy_description=STRATEGY_DESCRIPTIONS[strategy],
        actor_lifestyle=lifestyle,
        actor_r1_punished=r1_punished,
        roster=roster,
        punishment_mode=PunishmentMode.EXPLICIT,
        punishment_p=p,
        punishment_k=k,
        **extras,
    )


def build_scenario_suite(p: float = 6.0, k: float = 1.0) -> list[Scenario]:
    """All strategies x all decision kinds x flag states x lifestyle variants."""
    scenarios = []
    for kind in DecisionKind:
        for strategy in STRATEGY_ORDER:
            flag_states = (False, True) if strategy is Strategy.RELUCTANT_COOPERATOR else (False,)
            for r1_punished in flag_states:
                for tag, lifestyle in SUITE_LIFESTYLES:
                    ctx = _suite_context(kind, strategy, r1_punished, lifestyle, p, k)
                    scenarios.append(
                        Scenario(
                            scenario_id=(
                                f"{kind.value}-{strategy.value}-"
                                f"{'punished' if r1_punished else 'fresh'}-{tag}"
                            ),
                            lifestyle_tag=tag,
                            ctx=ctx,
                            expected_choice=oracle_decide(ctx).choice,
                        )
                    )
    return scenarios


def evaluate_accuracy(backend: DecisionBackend, suite: Sequence[Scenario]) -> AccuracyReport:
    """Score a backend against the suite; a backend error counts as a miss."""
    report = AccuracyReport(backend_name=backend.name)
    for scenario in suite:
        try:
            decision = backend.decide(scenario.ctx)
            got = decision.choice
            matched = got == scenario.expected_choice
        except BackendError as exc:
            got = None
            matched = False
            report.failures.append(f"{scenario.scenario_id}: {exc}")
        report.total += 1
        report.matched += int(matched)
        for table, key in (
            (report.by_kind, scenario.ctx.kind.value),
            (report.by_strategy, scenario.ctx.actor_strategy.value),
            (report.by_lifestyle, scenario.lifestyle_tag),
        ):
            cell = table.setdefault(key, CellStats())
            cell.total += 1
            cell.matched += int(matched)
        if not matched and got is not None:
            report.failures.append(
                f"{scenario.scenario_id}: expected {scenario.expected_choice}, got {got}"
            )
    return report


def save_suite(suite: Sequence[Scenario], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([_scenario_to_dict(s) for s in suite], indent=2) + "\n",
        encoding="utf-8",
    )


def load_suite(path: str | Path) -> list[Scenario]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [_scenario_from_dict(item) for item in data]


def _scenario_to_dict(scenario: Scenario) -> dict:
    ctx = scenario.ctx
    return {
        "scenario_id": scenario.scenario_id,
        "lifestyle_tag": scenario.lifestyle_tag,
        "expected_choice": scenario.expected_choice,
        "ctx": {
            "kind": ctx.kind.value,
            "iteration": ctx.iteration,
            "location": ctx.location,
            "actor_name": ctx.actor_name,
            "actor_strategy": ctx.actor_strategy.value,
            "actor_strategy_description": ctx.actor_strategy_description,
            "actor_lifestyle": ctx.actor_lifestyle,
            "actor_r1_punished": ctx.actor_r1_punished,
            "roster": [
                {"name": r.name, "visible_action": r.visible_action} for r in ctx.roster
            ],
            "punishment_mode": ctx.punishment_mode.value,
            "punishment_p": ctx.punishment_p,
            "punishment_k": ctx.punishment_k,
            "menu_description": ctx.menu_description,
            "target_name": ctx.target_name,
            "evidence": ctx.evidence,
        },
    }


def _scenario_from_dict(item: dict) -> Scenario:
    ctx_data = item["ctx"]
    ctx = DecisionContext(
        kind=DecisionKind(ctx_data["kind"]),
        iteration=ctx_data["iteration"],
        location=ctx_data["location"],
        actor_name=ctx_data["actor_name"],
        actor_strategy=Strategy(ctx_data["actor_strategy"]),
        actor_strategy_description=ctx_data["actor_strategy_description"],
        actor_lifestyle=ctx_data["actor_lifestyle"],
        actor_r1_punished=ctx_data["actor_r1_punished"],
        roster=tuple(
            RosterEntry(name=r["name"], visible_action=r.get("visible_action"))
            for r in ctx_data["roster"]
        ),
        punishment_mode=PunishmentMode(ctx_data["punishment_mode"]),
        punishment_p=ctx_data["punishment_p"],
        punishment_k=ctx_data["punishment_k"],
        menu_description=ctx_data.get("menu_description"),
        target_name=ctx_data.get("target_name"),
        evidence=ctx_data.get("evidence"),
    )
    return Scenario(
        scenario_id=item["scenario_id"],
        lifestyle_tag=item["lifestyle_tag"],
        ctx=ctx,
        expected_choice=item["expected_choice"],
    )
