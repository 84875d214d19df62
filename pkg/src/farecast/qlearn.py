"""Tabular Q-learning over days-to-departure states.

State is the quote's days_to_departure (no price bins). Buying at state s
costs that day's price, normalized by the route's training-mean price so
routes share one value scale; waiting moves to the series' next observed
state. Waiting is impossible at state 0 and past a series' last quote, so
those transitions are never trained or consulted. Training sweeps each
series in reverse day order, which makes a single pass with gamma=1,
alpha=1 coincide with exact backward induction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import EmptySeries, FarecastError, PriceSeries
from .policy import PurchaseDecision
from .util import derive_seed


@dataclass
class QTable:
    d_max: int
    buy: np.ndarray   # value of buying at state s
    wait: np.ndarray  # value of waiting at state s; index 0 is never consulted
    gamma: float
    alpha: float
    route_means: dict[str, float] = field(default_factory=dict)

    def q_buy(self, state: int) -> float:
        return float(self.buy[state]) if state <= self.d_max else 0.0

    def q_wait(self, state: int) -> float:
        if state == 0:
            raise FarecastError("waiting at departure day is undefined")
        return float(self.wait[state]) if state <= self.d_max else 0.0

    def to_dict(self) -> dict:
        return {
            "d_max": self.d_max,
            "buy": self.buy.tolist(),
            "wait": self.wait.tolist(),
            "gamma": self.gamma,
            "alpha": self.alpha,
            "route_means": dict(sorted(self.route_means.items())),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "QTable":
        return cls(
            d_max=int(raw["d_max"]),
            buy=np.asarray(raw["buy"], dtype=float),
            wait=np.asarray(raw["wait"], dtype=float),
            gamma=float(raw["gamma"]),
            alpha=float(raw["alpha"]),
            route_means={k: float(v) for k, v in raw.get("route_means", {}).items()},
        )


def save_qtable(table: QTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table.to_dict(), fh, sort_keys=True)
        fh.write("\n")


def load_qtable(path: str | Path) -> QTable:
    with open(path, "r", encoding="utf-8") as fh:
        return QTable.from_dict(json.load(fh))


def _route_means(train_series: Sequence[PriceSeries]) -> dict[str, float]:
    sums: dict[str, list[float]] = {}
    for s in train_series:
        sums.setdefault(s.key.route_id, []).extend(s.prices)
    return {route: math.fsum(prices) / len(prices) for route, prices in sums.items()}


def q_train(
    train_series: Sequence[PriceSeries],
    episodes: int = 200,
    gamma: float = 1.0,
    alpha: float = 0.1,
    seed: int = 0,
) -> QTable:
    """Sweep the training series ``episodes`` times in seeded shuffled order.

    Within a series, days are visited from last to first: the buy value of
    the current state is pulled toward the (negative) normalized price, and
    the wait value toward the discounted best action at the next observed
    state. The last quote of a series gets no wait update.
    """
    if not train_series:
        raise EmptySeries("Q-learning needs at least one training series")
    if not 0.0 < gamma <= 1.0 or not 0.0 < alpha <= 1.0:
        raise FarecastError("gamma and alpha must lie in (0, 1]")
    means = _route_means(train_series)
    d_max = max(
        (s.key.departure_date - s.first_query_date).days for s in train_series
    )
    buy = np.zeros(d_max + 1)
    wait = np.zeros(d_max + 1)

    prepared = []
    for s in train_series:
        states = [(s.key.departure_date - q.query_date).days for q in s.quotes]
        prices = [q.price / means[s.key.route_id] for q in s.quotes]
        prepared.append((states, prices))

    rng = np.random.default_rng(derive_seed(seed, "qlearn"))
    for _ in range(episodes):
        for series_idx in rng.permutation(len(prepared)):
            states, prices = prepared[series_idx]
            for t in reversed(range(len(states))):
                s_t = states[t]
                buy[s_t] = (1.0 - alpha) * buy[s_t] + alpha * (-prices[t])
                if t + 1 < len(states):
                    s_next = states[t + 1]
                    if s_next == 0:
                        best_next = buy[s_next]  # waiting at departure is not an option
                    else:
                        best_next = max(buy[s_next], wait[s_next])
                    wait[s_t] = (1.0 - alpha) * wait[s_t] + alpha * gamma * best_next
    return QTable(d_max=d_max, buy=buy, wait=wait, gamma=gamma, alpha=alpha,
                  route_means=means)


def q_policy(table: QTable, s: PriceSeries) -> PurchaseDecision:
    """Buy at the first day whose buy value is at least its wait value.

    States the table never saw score 0 for both actions, so the tie rule
    (ties favor buying) buys there. If no day triggers, the final quote is
    a forced buy.
    """
    if len(s) == 0:
        raise EmptySeries(f"series {s.key} is empty")
    for q in s.quotes:
        state = (s.key.departure_date - q.query_date).days
        if state == 0:
            break  # departure day: the loop ends here anyway; forced buy below
        if table.q_buy(state) >= table.q_wait(state):
            return PurchaseDecision(key=s.key, buy_query_date=q.query_date,
                                    paid_price=q.price, forced=False)
    last = s.quotes[-1]
    return PurchaseDecision(key=s.key, buy_query_date=last.query_date,
                            paid_price=last.price, forced=True)
