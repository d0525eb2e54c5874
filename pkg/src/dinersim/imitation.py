"""Pairwise imitation: payoff comparison against a random role model.

Adoption probability follows the Fermi rule 1 / (1 + exp(-beta * (pi_B -
pi_A))) where A is the focal agent and B the role model. Every agent makes
exactly one attempt per iteration, in canonical order; adoptions are computed
against pre-update strategies and applied simultaneously afterwards, so
within-step cascades cannot occur.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .model import AgentState, ImitationOutcome, ImitationParams, Strategy, UtilityBasis


class PopulationTooSmall(ValueError):
    """Role-model selection needs at least two agents."""


def fermi_probability(payoff_a: float, payoff_b: float, beta: float) -> float:
    """Probability that A adopts B's strategy given their payoffs.

    Numerically stable for arbitrarily large |beta * (payoff_b - payoff_a)|:
    saturates to 0 or 1 instead of overflowing.
    """
    x = beta * (payoff_b - payoff_a)
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def select_role_model(
    focal_id: str, population_ids: Sequence[str], rng: np.random.Generator
) -> str:
    """Uniform draw over every other agent in the population (both groups)."""
    others = [agent_id for agent_id in population_ids if agent_id != focal_id]
    if not others:
        raise PopulationTooSmall(
            f"cannot pick a role model for {focal_id!r} in a population of "
            f"{len(population_ids)}"
        )
    return others[int(rng.integers(len(others)))]


def imitation_step(
    population: Sequence[AgentState],
    params: ImitationParams,
    rng: np.random.Generator,
) -> list[ImitationOutcome]:
    """One synchronous imitation sweep over the whole population.

    Consumes exactly two draws per agent (role-model index, then the uniform
    acceptance draw) so the stream is identical on replay. Adopting the R1
    label always resets the punished flag: the label is copied, not the role
    model's private history.
    """
    if len(population) < 2:
        raise PopulationTooSmall("imitation needs at least two agents")
    ids = [a.agent_id for a in population]
    payoff = {
        a.agent_id: (
            a.iteration_utility
            if params.utility_basis is UtilityBasis.PER_ITERATION
            else a.cumulative_utility
        )
        for a in population
    }
    pre_update = {a.agent_id: a.strategy for a in population}

    outcomes = []
    adoptions: list[tuple[AgentState, Strategy]] = []
    for focal in population:
        role_model_id = select_role_model(focal.agent_id, ids, rng)
        diff = payoff[role_model_id] - payoff[focal.agent_id]
        probability = fermi_probability(payoff[focal.agent_id], payoff[role_model_id], params.beta)
        draw = float(rng.random())
        adopted = draw < probability
        outcomes.append(
            ImitationOutcome(
                focal_id=focal.agent_id,
                role_model_id=role_model_id,
                payoff_diff=diff,
                probability=probability,
                uniform_draw=draw,
                adopted=adopted,
            )
        )
        if adopted:
            adoptions.append((focal, pre_update[role_model_id]))

    for agent, strategy in adoptions:
        agent.strategy = strategy
        agent.r1_punished = False
    return outcomes
