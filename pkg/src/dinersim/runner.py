"""Full-simulation orchestration: iteration loop, location rotation,
replication batches, and seed management.

One root seed per run spawns independent substreams per purpose (imitation
draws, backend retry jitter), so order collection never consumes imitation
randomness and LLM retries cannot perturb the dynamics on replay.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends.base import BackendError, DecisionBackend
from .config_io import config_to_dict
from .engine import run_group_round
from .imitation import imitation_step
from .model import (
    AgentState,
    GroupRound,
    IterationRecord,
    SimulationConfig,
    Strategy,
    census_of,
    validate_config,
)

log = logging.getLogger(__name__)


class RunStatus(str, Enum):
    RUNNING = "running"
    CONVERGED = "converged"
    COMPLETED = "completed"
    ABORTED = "aborted"


@dataclass
class RunHandle:
    run_id: str
    seed: int
    status: RunStatus
    iterations_executed: int


@dataclass
class RunResult:
    handle: RunHandle
    config: SimulationConfig
    records: list[IterationRecord]
    final_census: dict[Strategy, int]
    final_agents: list[AgentState]
    convergence_iteration: int | None
    error: str | None = None


def run_id_for(config: SimulationConfig) -> str:
    """Stable identifier from the config content hash plus the seed."""
    without_seed = config_to_dict(config)
    seed = without_seed.pop("seed")
    digest = hashlib.sha256(
        json.dumps(without_seed, sort_keys=True).encode("utf-8")
    ).hexdigest()
    return f"{digest[:10]}-s{seed}"


def derive_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(imitation_rng, backend_jitter_rng) split from one root seed."""
    imitation_ss, jitter_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(imitation_ss), np.random.default_rng(jitter_ss)


def assign_locations(
    n_groups: int, locations: Sequence[str], iteration: int
) -> list[str]:
    """Cyclic rotation: groups swap locations every iteration.

    Iteration 1 gives group i location i; each following iteration shifts the
    assignment by one. Locations are cosmetic under the rule oracle.
    """
    return [locations[(i + iteration - 1) % len(locations)] for i in range(n_groups)]


def run_simulation(
    config: SimulationConfig,
    backend: DecisionBackend,
    *,
    early_stop: bool = False,
) -> RunResult:
    """Run one seeded simulation to completion, convergence, or abort.

    Each iteration rotates group locations, runs the dilemma pipeline per
    group, then performs one population-wide imitation sweep and records the
    census. With ``early_stop`` the run stops after recording the iteration
    in which the census first became homogeneous; by default all iterations
    run regardless. Backend failures abort the run but keep partial records.
    """
    validate_config(config)
    imitation_rng, jitter_rng = derive_streams(config.seed)
    run_backend = backend.for_run(jitter_rng)

    states = [AgentState.from_seed(seed) for seed in config.agents]
    by_id = {s.agent_id: s for s in states}
    groups = [(g.group_id, [by_id[m] for m in g.members]) for g in config.groups]

    handle = RunHandle(
        run_id=run_id_for(config), seed=config.seed, status=RunStatus.RUNNING,
        iterations_executed=0,
    )
    records: list[IterationRecord] = []
    convergence_iteration: int | None = None

    for iteration in range(1, config.iterations + 1):
        locations = assign_locations(len(groups), config.locations, iteration)
        try:
            group_rounds = [
                run_group_round(
                    members,
                    group_id=group_id,
                    location=location,
                    iteration=iteration,
                    menu=config.menu,
                    params=config.punishment,
                    backend=run_backend,
                    error_policy=config.backend.error_policy,
                )
                for (group_id, members), location in zip(groups, locations)
            ]
        except BackendError as exc:
            log.error("run %s aborted at iteration %d: %s", handle.run_id, iteration, exc)
            handle.status = RunStatus.ABORTED
            return RunResult(
                handle=handle,
                config=config,
                records=records,
                final_census=census_of(s.strategy for s in states),
                final_agents=states,
                convergence_iteration=convergence_iteration,
                error=str(exc),
            )

        outcomes = imitation_step(states, config.imitation, imitation_rng)
        census = census_of(s.strategy for s in states)
        records.append(
            IterationRecord(
                iteration=iteration,
                groups=tuple(
                    GroupRound(
                        group_id=r.group_id,
                        location=r.location,
                        orders=dict(r.order_sheet.choices),
                        bill_total=r.bill_total,
                        meal_payoffs=dict(r.meal_payoffs),
                    )
                    for r in group_rounds
                ),
                punishment_events=tuple(e for r in group_rounds for e in r.ledger.events),
                iteration_utilities={
                    agent_id: utility
                    for r in group_rounds
                    for agent_id, utility in r.iteration_utilities.items()
                },
                imitation_outcomes=tuple(outcomes),
                strategy_census=census,
            )
        )
        handle.iterations_executed = iteration
        if convergence_iteration is None and max(census.values()) == len(states):
            convergence_iteration = iteration
            if early_stop:
                break

    final_census = census_of(s.strategy for s in states)
    homogeneous = bool(states) and max(final_census.values()) == len(states)
    handle.status = RunStatus.CONVERGED if homogeneous else RunStatus.COMPLETED
    return RunResult(
        handle=handle,
        config=config,
        records=records,
        final_census=final_census,
        final_agents=states,
        convergence_iteration=convergence_iteration,
    )


@dataclass
class BatchRow:
    seed: int
    run_id: str
    status: RunStatus
    iterations_executed: int
    convergence_iteration: int | None
    final_census: dict[Strategy, int]
    log_path: str | None = None
    error: str | None = None


@dataclass
class BatchSummary:
    rows: list[BatchRow]

    @property
    def completed(self) -> int:
        return sum(1 for r in self.rows if r.status is not RunStatus.ABORTED)

    @property
    def aborted(self) -> int:
        return sum(1 for r in self.rows if r.status is RunStatus.ABORTED)


def run_replications(
    config: SimulationConfig,
    backend: DecisionBackend,
    seeds: Sequence[int],
    *,
    jobs: int = 1,
    early_stop: bool = False,
    out_dir: str | Path | None = None,
) -> tuple[BatchSummary, list[RunResult]]:
    """Run one independent simulation per seed.

    Results are assembled in seed-list order no matter how runs are
    scheduled, so identical inputs yield identical summaries. A duplicated
    seed is allowed but warned about; an aborted run is reported in its row
    rather than failing the batch. With ``out_dir`` each run's event log is
    written to ``<out_dir>/<run_id>/events.jsonl`` and the path recorded in
    its summary row.
    """
    if len(set(seeds)) != len(seeds):
        warnings.warn("duplicate seeds in replication batch; trajectories will repeat", stacklevel=2)

    def one(seed: int) -> tuple[RunResult, str | None]:
        result = run_simulation(replace(config, seed=seed), backend, early_stop=early_stop)
        log_path = None
        if out_dir is not None:
            from .reporting import write_event_log  # local import avoids a cycle

            run_dir = Path(out_dir) / result.handle.run_id
            run_dir.mkdir(parents=True, exist_ok=True)
            log_path = str(write_event_log(result, run_dir / "events.jsonl"))
        return result, log_path

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, seeds))
    else:
        outcomes = [one(seed) for seed in seeds]

    results = [result for result, _ in outcomes]
    rows = [
        BatchRow(
            seed=result.handle.seed,
            run_id=result.handle.run_id,
            status=result.handle.status,
            iterations_executed=result.handle.iterations_executed,
            convergence_iteration=result.convergence_iteration,
            final_census=result.final_census,
            log_path=log_path,
            error=result.error,
        )
        for result, log_path in outcomes
    ]
    return BatchSummary(rows=rows), results
