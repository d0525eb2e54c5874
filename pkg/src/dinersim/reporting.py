"""Durable run outputs: line-delimited event log, census CSV, trend SVG,
and batch convergence statistics.

Every writer is a deterministic function of the run content: no timestamps,
no environment-dependent formatting, so equal runs produce byte-identical
files. The event log is lossless: reloading reconstructs the run's
IterationRecords exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .config_io import config_to_dict
from .model import (
    GroupRound,
    ImitationOutcome,
    IterationRecord,
    MealChoice,
    PunishmentEvent,
    PunishmentLevel,
    Strategy,
    STRATEGY_ORDER,
    census_of,
)
from .runner import BatchRow, RunResult, RunStatus

SCHEMA_VERSION = 1

# Fixed strategy -> colour mapping, also documented in each SVG header so
# charts from different runs are comparable.
STRATEGY_COLORS: dict[Strategy, str] = {
    Strategy.MORALIST: "#1f77b4",
    Strategy.COOPERATOR_PUNISHER: "#2ca02c",
    Strategy.EASY_GOING_COOPERATOR: "#ff7f0e",
    Strategy.RELUCTANT_COOPERATOR: "#d62728",
}


class EmptySeries(ValueError):
    """A chart needs at least one census row."""


def _census_counts(census: dict[Strategy, int]) -> dict[str, int]:
    return {s.value: census.get(s, 0) for s in STRATEGY_ORDER}


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def event_log_lines(result: RunResult) -> Iterable[str]:
    """Yield the event log line by line, in canonical order.

    Kinds: header, orders (one per group), punishment, utilities, imitation,
    census. Field order within each line is fixed; see the README for the
    field-by-field schema.
    """
    initial = census_of(seed.strategy for seed in result.config.agents)
    yield _dump(
        {
            "kind": "header",
            "schema": SCHEMA_VERSION,
            "run_id": result.handle.run_id,
            "seed": result.handle.seed,
            "status": result.handle.status.value,
            "iterations_executed": result.handle.iterations_executed,
            "initial_census": _census_counts(initial),
            "config": config_to_dict(result.config),
        }
    )
    for record in result.records:
        for group in record.groups:
            yield _dump(
                {
                    "kind": "orders",
                    "iteration": record.iteration,
                    "group": group.group_id,
                    "location": group.location,
                    "choices": {a: c.value for a, c in group.orders.items()},
                    "bill_total": group.bill_total,
                    "meal_payoffs": group.meal_payoffs,
                }
            )
        for event in record.punishment_events:
            yield _dump(
                {
                    "kind": "punishment",
                    "iteration": event.iteration,
                    "punisher": event.punisher_id,
                    "target": event.target_id,
                    "level": event.level.value,
                    "cost_to_punisher": event.cost_to_punisher,
                    "cost_to_target": event.cost_to_target,
                }
            )
        yield _dump(
            {
                "kind": "utilities",
                "iteration": record.iteration,
                "values": record.iteration_utilities,
            }
        )
        for outcome in record.imitation_outcomes:
            yield _dump(
                {
                    "kind": "imitation",
                    "iteration": record.iteration,
                    "focal": outcome.focal_id,
                    "role_model": outcome.role_model_id,
                    "payoff_diff": outcome.payoff_diff,
                    "probability": outcome.probability,
                    "uniform_draw": outcome.uniform_draw,
                    "adopted": outcome.adopted,
                }
            )
        yield _dump(
            {
                "kind": "census",
                "iteration": record.iteration,
                "counts": _census_counts(record.strategy_census),
            }
        )


def write_event_log(result: RunResult, path: str | Path) -> Path:
    """Write the log; a failed write removes the partial file."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            for line in event_log_lines(result):
                handle.write(line + "\n")
    except OSError:
        path.unlink(missing_ok=True)
        raise
    return path


@dataclass
class LoadedRun:
    header: dict
    records: list[IterationRecord]

    @property
    def initial_census(self) -> dict[Strategy, int]:
        return {Strategy(k): v for k, v in self.header["initial_census"].items()}


def load_event_log(path: str | Path) -> LoadedRun:
    """Rebuild IterationRecords from a log file, losslessly."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"event log {path} is empty")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise ValueError(f"event log {path} does not start with a header line")
    if header.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported event log schema {header.get('schema')!r}")

    by_iteration: dict[int, dict] = {}

    def bucket(iteration: int) -> dict:
        return by_iteration.setdefault(
            iteration,
            {"groups": [], "events": [], "utilities": {}, "imitation": [], "census": {}},
        )

    for line in lines[1:]:
        item = json.loads(line)
        kind = item["kind"]
        slot = bucket(item["iteration"])
        if kind == "orders":
            slot["groups"].append(
                GroupRound(
                    group_id=item["group"],
                    location=item["location"],
                    orders={a: MealChoice(c) for a, c in item["choices"].items()},
                    bill_total=item["bill_total"],
                    meal_payoffs=item["meal_payoffs"],
                )
            )
        elif kind == "punishment":
            slot["events"].append(
                PunishmentEvent(
                    iteration=item["iteration"],
                    punisher_id=item["punisher"],
                    target_id=item["target"],
                    level=PunishmentLevel(item["level"]),
                    cost_to_punisher=item["cost_to_punisher"],
                    cost_to_target=item["cost_to_target"],
                )
            )
        elif kind == "utilities":
            slot["utilities"] = item["values"]
        elif kind == "imitation":
            slot["imitation"].append(
                ImitationOutcome(
                    focal_id=item["focal"],
                    role_model_id=item["role_model"],
                    payoff_diff=item["payoff_diff"],
                    probability=item["probability"],
                    uniform_draw=item["uniform_draw"],
                    adopted=item["adopted"],
                )
            )
        elif kind == "census":
            slot["census"] = {Strategy(k): v for k, v in item["counts"].items()}
        else:
            raise ValueError(f"unknown event kind {kind!r} in {path}")

    records = [
        IterationRecord(
            iteration=iteration,
            groups=tuple(slot["groups"]),
            punishment_events=tuple(slot["events"]),
            iteration_utilities=slot["utilities"],
            imitation_outcomes=tuple(slot["imitation"]),
            strategy_census=slot["census"],
        )
        for iteration, slot in sorted(by_iteration.items())
    ]
    return LoadedRun(header=header, records=records)


def census_series(
    initial_census: dict[Strategy, int], records: Sequence[IterationRecord]
) -> list[dict[Strategy, float]]:
    """Population-share rows for iterations 0..T (row 0 is the initial census)."""
    rows = []
    for census in [initial_census] + [r.strategy_census for r in records]:
        total = sum(census.values())
        rows.append({s: census.get(s, 0) / total for s in STRATEGY_ORDER})
    return rows


def write_census_csv(
    initial_census: dict[Strategy, int],
    records: Sequence[IterationRecord],
    path: str | Path,
) -> Path:
    """CSV columns: iteration, M, P, E, R1 as 6-decimal population fractions."""
    path = Path(path)
    rows = census_series(initial_census, records)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration"] + [s.value for s in STRATEGY_ORDER])
        for iteration, row in enumerate(rows):
            writer.writerow([iteration] + [f"{row[s]:.6f}" for s in STRATEGY_ORDER])
    return path


# SVG geometry. The affine mapping from data to pixels is fixed and part of
# the output contract:
#   x(t) = PLOT_LEFT + t * (PLOT_RIGHT - PLOT_LEFT) / max(T, 1)
#   y(f) = PLOT_BOTTOM - f * (PLOT_BOTTOM - PLOT_TOP)
# where t is the iteration (0..T) and f the population share in [0, 1].
SVG_WIDTH = 640
SVG_HEIGHT = 400
PLOT_LEFT = 60.0
PLOT_RIGHT = 490.0
PLOT_TOP = 40.0
PLOT_BOTTOM = 350.0


def svg_x(iteration: int, max_iteration: int) -> float:
    return PLOT_LEFT + iteration * (PLOT_RIGHT - PLOT_LEFT) / max(max_iteration, 1)


def svg_y(fraction: float) -> float:
    return PLOT_BOTTOM - fraction * (PLOT_BOTTOM - PLOT_TOP)


def render_trend_svg(series: Sequence[dict[Strategy, float]], title: str) -> str:
    """Strategy-share trend chart as a standalone, byte-deterministic SVG.

    One polyline per strategy in the fixed colour mapping, x axis in
    iterations, y axis population share in [0, 1].
    """
    if not series:
        raise EmptySeries("cannot render a trend for an empty census series")
    max_iteration = len(series) - 1
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        "<!-- strategy colours: "
        + ", ".join(f"{s.value}={STRATEGY_COLORS[s]}" for s in STRATEGY_ORDER)
        + " -->",
        "<!-- mapping: x(t) = "
        f"{PLOT_LEFT:g} + t * {(PLOT_RIGHT - PLOT_LEFT):g}/max(T,1); "
        f"y(f) = {PLOT_BOTTOM:g} - f * {(PLOT_BOTTOM - PLOT_TOP):g} -->",
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{SVG_WIDTH / 2:.2f}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{_escape(title)}</text>',
    ]

    # Horizontal gridlines and y tick labels every 0.25.
    for quarter in range(5):
        fraction = quarter / 4
        y = svg_y(fraction)
        parts.append(
            f'<line x1="{PLOT_LEFT:.2f}" y1="{y:.2f}" x2="{PLOT_RIGHT:.2f}" y2="{y:.2f}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{PLOT_LEFT - 8:.2f}" y="{y + 4:.2f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{fraction:.2f}</text>'
        )

    # Axes.
    parts.append(
        f'<line x1="{PLOT_LEFT:.2f}" y1="{PLOT_BOTTOM:.2f}" x2="{PLOT_RIGHT:.2f}" '
        f'y2="{PLOT_BOTTOM:.2f}" stroke="#000000" stroke-width="1.5"/>'
    )
    parts.append(
        f'<line x1="{PLOT_LEFT:.2f}" y1="{PLOT_TOP:.2f}" x2="{PLOT_LEFT:.2f}" '
        f'y2="{PLOT_BOTTOM:.2f}" stroke="#000000" stroke-width="1.5"/>'
    )

    # X ticks at each iteration (thinned if there are many).
    tick_step = max(1, (max_iteration or 1) // 10)
    for t in range(0, max_iteration + 1, tick_step):
        x = svg_x(t, max_iteration)
        parts.append(
            f'<line x1="{x:.2f}" y1="{PLOT_BOTTOM:.2f}" x2="{x:.2f}" '
            f'y2="{PLOT_BOTTOM + 5:.2f}" stroke="#000000" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{PLOT_BOTTOM + 18:.2f}" text-anchor="middle" font-size="11" '
            f'font-family="sans-serif">{t}</text>'
        )
    parts.append(
        f'<text x="{(PLOT_LEFT + PLOT_RIGHT) / 2:.2f}" y="{SVG_HEIGHT - 12}" '
        'text-anchor="middle" font-size="12" font-family="sans-serif">iteration</text>'
    )
    parts.append(
        f'<text x="16" y="{(PLOT_TOP + PLOT_BOTTOM) / 2:.2f}" text-anchor="middle" '
        'font-size="12" font-family="sans-serif" '
        f'transform="rotate(-90 16 {(PLOT_TOP + PLOT_BOTTOM) / 2:.2f})">population share</text>'
    )

    # One polyline per strategy plus its legend entry.
    legend_x = PLOT_RIGHT + 24
    for index, strategy in enumerate(STRATEGY_ORDER):
        color = STRATEGY_COLORS[strategy]
        points = " ".join(
            f"{svg_x(t, max_iteration):.2f},{svg_y(row[strategy]):.2f}"
            for t, row in enumerate(series)
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"/>'
        )
        ly = PLOT_TOP + 16 + index * 22
        parts.append(
            f'<line x1="{legend_x:.2f}" y1="{ly:.2f}" x2="{legend_x + 22:.2f}" y2="{ly:.2f}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{legend_x + 28:.2f}" y="{ly + 4:.2f}" text-anchor="start" font-size="12" '
            f'font-family="sans-serif">{strategy.value}</text>'
        )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_trend_svg(
    initial_census: dict[Strategy, int],
    records: Sequence[IterationRecord],
    title: str,
    path: str | Path,
) -> Path:
    path = Path(path)
    path.write_text(render_trend_svg(census_series(initial_census, records), title), encoding="utf-8")
    return path


def convergence_stats(rows: Sequence[BatchRow]) -> dict:
    """Aggregate a replication batch: convergence rates and mean final shares.

    Counts are exact; shares are arithmetic means of final-census fractions
    over non-aborted runs.
    """
    if not rows:
        raise ValueError("need at least one run to aggregate")
    scored = [r for r in rows if r.status is not RunStatus.ABORTED]
    runs = len(scored)
    per_strategy = {}
    for strategy in STRATEGY_ORDER:
        converged = sum(
            1
            for r in scored
            if r.final_census.get(strategy, 0) == sum(r.final_census.values())
        )
        shares = [
            r.final_census.get(strategy, 0) / sum(r.final_census.values()) for r in scored
        ]
        per_strategy[strategy.value] = {
            "converged_runs": converged,
            "converged_fraction": converged / runs if runs else 0.0,
            "mean_final_share": sum(shares) / runs if runs else 0.0,
        }
    converged_rows = [r for r in scored if r.convergence_iteration is not None]
    return {
        "runs": len(rows),
        "aborted_runs": len(rows) - runs,
        "converged_runs": len(converged_rows),
        "converged_fraction": len(converged_rows) / runs if runs else 0.0,
        "mean_convergence_iteration": (
            sum(r.convergence_iteration for r in converged_rows) / len(converged_rows)
            if converged_rows
            else None
        ),
        "per_strategy": per_strategy,
    }


def write_batch_summary_csv(rows: Sequence[BatchRow], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["seed", "run_id", "status", "iterations_executed", "convergence_iteration"]
            + [f"final_{s.value}" for s in STRATEGY_ORDER]
            + ["log_path"]
        )
        for row in rows:
            total = sum(row.final_census.values())
            writer.writerow(
                [
                    row.seed,
                    row.run_id,
                    row.status.value,
                    row.iterations_executed,
                    row.convergence_iteration if row.convergence_iteration is not None else "",
                ]
                + [f"{row.final_census.get(s, 0) / total:.6f}" for s in STRATEGY_ORDER]
                + [row.log_path or ""]
            )
    return path


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )
