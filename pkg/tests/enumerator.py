"""Independent exhaustive payoff enumerator used as a reference oracle.

Applies the stage definitions directly with index-based sets, deliberately
sharing no code with the engine: meal payoffs from an equal bill split, then
defection punishments from punishing strategies, non-punisher classification,
moralist metanorm enforcement over two levels, and per-event cost accounting.
"""

from __future__ import annotations

DEFAULT_MENU_TUPLE = (10.0, 12.0, 30.0, 22.0)  # budget cost/value, premium cost/value

PUNISHES_DEFECTION = {"P", "M"}
PUNISHES_METANORM = {"M"}


def implied_order(label: str, punished: bool = False) -> str:
    return "premium" if label == "R1" and not punished else "budget"


def enumerate_utilities(
    labels: list[str],
    orders: list[str],
    p: float,
    k: float,
    menu: tuple[float, float, float, float] = DEFAULT_MENU_TUPLE,
) -> list[float]:
    budget_cost, budget_value, premium_cost, premium_value = menu
    n = len(labels)
    ids = range(n)

    total = sum(premium_cost if o == "premium" else budget_cost for o in orders)
    meal = [
        (premium_value if orders[i] == "premium" else budget_value) - total / n for i in ids
    ]

    defectors = {i for i in ids if orders[i] == "premium"}

    events: set[tuple[int, int, str]] = set()
    for b in ids:
        if b in defectors or labels[b] not in PUNISHES_DEFECTION:
            continue
        for d in defectors:
            events.add((b, d, "defection"))

    np1 = {
        a
        for a in ids
        if a not in defectors
        and defectors
        and any((a, d, "defection") not in events for d in defectors)
    }
    for b in ids:
        if b in defectors or b in np1 or labels[b] not in PUNISHES_METANORM:
            continue
        for t in np1:
            events.add((b, t, "non_punisher"))

    np2 = {
        a
        for a in ids
        if a not in defectors
        and a not in np1
        and np1
        and any((a, t, "non_punisher") not in events for t in np1)
    }
    for b in ids:
        if b in defectors or b in np1 or b in np2 or labels[b] not in PUNISHES_METANORM:
            continue
        for t in np2:
            events.add((b, t, "meta_non_punisher"))

    utilities = []
    for i in ids:
        utility = meal[i]
        for punisher, target, _level in events:
            if punisher == i:
                utility -= k
            if target == i:
                utility -= p
        utilities.append(utility)
    return utilities
