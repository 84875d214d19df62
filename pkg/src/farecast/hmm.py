"""Gaussian-emission hidden Markov models as per-route stochastic templates.

One model is trained per specific route on that route's training series,
with prices normalized by the route's training-mean price. A route with no
history gets its flight dummies assigned by maximum-likelihood
classification of its observation prefix against the 8-model bank; the
prefix is normalized by its own running mean, so no future information
leaks into the assignment, and a frozen specific-route classifier makes the
buy/wait call on the resulting feature rows.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    EmptySeries,
    FarecastError,
    FeatureRow,
    N_ROUTES,
    PriceSeries,
    SeriesKey,
)
from .features import corpus_anchor, extract_rows
from .learners import TrainedModel, predict
from .policy import PurchaseDecision, decide_classification
from .util import derive_seed

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-6


class DegenerateRoute(FarecastError):
    """All observed prices identical; raised nowhere, logged as a warning."""


@dataclass
class HmmModel:
    route_index: int
    n_states: int
    initial: np.ndarray     # (K,)
    transition: np.ndarray  # (K, K), row-stochastic
    means: np.ndarray       # (K,) emission means over normalized prices
    variances: np.ndarray   # (K,) floored at VAR_FLOOR
    norm_mean: float = 1.0  # route training-mean price used for normalization
    degenerate: bool = False

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        if abs(self.initial.sum() - 1.0) > 1e-9:
            raise FarecastError("initial distribution does not sum to 1")
        if np.abs(self.transition.sum(axis=1) - 1.0).max() > 1e-9:
            raise FarecastError("transition rows do not sum to 1")
        if (self.variances < VAR_FLOOR - 1e-15).any():
            raise FarecastError("variance below floor")

    def raw_emission_means(self) -> np.ndarray:
        """Emission means mapped back to price units."""
        return self.means * self.norm_mean

    def to_dict(self) -> dict:
        return {
            "route_index": self.route_index,
            "n_states": self.n_states,
            "initial": self.initial.tolist(),
            "transition": self.transition.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "norm_mean": self.norm_mean,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "HmmModel":
        return cls(
            route_index=int(raw["route_index"]),
            n_states=int(raw["n_states"]),
            initial=np.asarray(raw["initial"], dtype=float),
            transition=np.asarray(raw["transition"], dtype=float),
            means=np.asarray(raw["means"], dtype=float),
            variances=np.asarray(raw["variances"], dtype=float),
            norm_mean=float(raw.get("norm_mean", 1.0)),
            degenerate=bool(raw.get("degenerate", False)),
        )


def save_model(model: HmmModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path) -> HmmModel:
    with open(path, "r", encoding="utf-8") as fh:
        return HmmModel.from_dict(json.load(fh))


@dataclass(frozen=True)
class EquivalenceSequence:
    """A series prefix comparable across routes that share the calendar frame."""

    key: SeriesKey
    first_observed_date: date
    cutoff_query_date: date
    observations: tuple[float, ...]

    def __post_init__(self):
        if not self.observations:
            raise EmptySeries(f"empty observation prefix for {self.key}")
        if self.cutoff_query_date > self.key.departure_date:
            raise FarecastError("cutoff after departure")


def equivalence_sequence(s: PriceSeries, cutoff_idx: int,
                         full_mean: bool = False) -> EquivalenceSequence:
    """Observation prefix of ``s`` through ``cutoff_idx``, mean-normalized.

    Default normalization uses the prefix's own mean (causal). ``full_mean``
    divides by the whole series' mean instead, for the once-per-series
    comparison variant that is allowed to peek.
    """
    prices = s.prices[: cutoff_idx + 1]
    if not prices:
        raise EmptySeries(f"empty observation prefix for {s.key}")
    denom = math.fsum(s.prices) / len(s) if full_mean else math.fsum(prices) / len(prices)
    return EquivalenceSequence(
        key=s.key,
        first_observed_date=s.first_query_date,
        cutoff_query_date=s.quotes[cutoff_idx].query_date,
        observations=tuple(p / denom for p in prices),
    )


# -- forward algorithm -------------------------------------------------------


def _log_emission(model: HmmModel, obs: np.ndarray) -> np.ndarray:
    """(T, K) log N(o_t; mu_k, var_k)."""
    var = model.variances
    diff = obs[:, None] - model.means[None, :]
    return -0.5 * (np.log(2.0 * np.pi * var)[None, :] + diff * diff / var[None, :])


def forward_loglik(model: HmmModel, observations: Sequence[float]) -> float:
    """Scaled forward pass; exact in log-space, no underflow for long prefixes."""
    obs = np.asarray(observations, dtype=float)
    if obs.size == 0:
        raise EmptySeries("cannot score an empty sequence")
    logb = _log_emission(model, obs)
    loglik = 0.0
    alpha = model.initial
    for t in range(len(obs)):
        shift = logb[t].max()
        weighted = alpha * np.exp(logb[t] - shift)
        total = weighted.sum()
        if total == 0.0:  # unreachable observation under this model
            return float("-inf")
        loglik += math.log(total) + shift
        alpha = (weighted / total) @ model.transition
    return float(loglik)


def hmm_loglik(model: HmmModel, seq: EquivalenceSequence) -> float:
    return forward_loglik(model, seq.observations)


def sample(model: HmmModel, length: int, seed: int) -> np.ndarray:
    """Draw one observation sequence from the model."""
    rng = np.random.default_rng(seed)
    obs = np.empty(length)
    state = rng.choice(model.n_states, p=model.initial)
    for t in range(length):
        obs[t] = rng.normal(model.means[state], np.sqrt(model.variances[state]))
        if t + 1 < length:
            state = rng.choice(model.n_states, p=model.transition[state])
    return obs


# -- Baum-Welch ---------------------------------------------------------------


def _kmeans_1d(values: np.ndarray, k: int, seed: int, iters: int = 50) -> np.ndarray:
    """Seeded Lloyd's in one dimension; returns sorted cluster means."""
    rng = np.random.default_rng(seed)
    uniq = np.unique(values)
    if len(uniq) >= k:
        centers = np.sort(rng.choice(uniq, size=k, replace=False))
    else:
        centers = np.sort(rng.choice(values, size=k, replace=True))
    for _ in range(iters):
        assign = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = values[assign == j]
            if len(members):
                new_centers[j] = members.mean()
        if np.allclose(new_centers, centers):
            break
        centers = new_centers
    return np.sort(centers)


@dataclass
class BaumWelchResult:
    model: HmmModel
    loglik_history: list[float] = field(default_factory=list)
    converged: bool = False


def baum_welch(
    sequences: Sequence[Sequence[float]],
    n_states: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
    route_index: int = -1,
    norm_mean: float = 1.0,
) -> BaumWelchResult:
    """EM over multiple observation sequences.

    Initialization: emission means from seeded 1-D K-Means over the pooled
    observations (sorted, so state identity is stable per seed), pooled
    variance, uniform initial and transition probabilities. The recorded
    history entry i is the total log-likelihood under the parameters of
    iteration i, before that iteration's update.
    """
    seqs = [np.asarray(s, dtype=float) for s in sequences if len(s)]
    if not seqs:
        raise EmptySeries("Baum-Welch needs at least one non-empty sequence")
    pooled = np.concatenate(seqs)
    k = n_states
    centers = _kmeans_1d(pooled, k, seed=seed)
    pooled_var = max(float(pooled.var()), VAR_FLOOR)
    model = HmmModel(
        route_index=route_index,
        n_states=k,
        initial=np.full(k, 1.0 / k),
        transition=np.full((k, k), 1.0 / k),
        means=centers,
        variances=np.full(k, pooled_var),
        norm_mean=norm_mean,
    )

    history: list[float] = []
    converged = False
    for _ in range(max_iter):
        total_ll = 0.0
        init_acc = np.zeros(k)
        trans_acc = np.zeros((k, k))
        gamma_acc = np.zeros(k)
        mean_acc = np.zeros(k)
        sq_acc = np.zeros(k)

        for obs in seqs:
            T = len(obs)
            logb = _log_emission(model, obs)
            shift = logb.max(axis=1)
            b = np.exp(logb - shift[:, None])  # (T, K), each row max 1

            # Scaled forward.
            alpha = np.empty((T, k))
            c = np.empty(T)
            a = model.initial * b[0]
            c[0] = a.sum()
            alpha[0] = a / c[0]
            for t in range(1, T):
                a = (alpha[t - 1] @ model.transition) * b[t]
                c[t] = a.sum()
                alpha[t] = a / c[t]
            total_ll += float(np.log(c).sum() + shift.sum())

            # Scaled backward under the same shifts and scalers.
            beta = np.empty((T, k))
            beta[T - 1] = 1.0
            for t in range(T - 2, -1, -1):
                beta[t] = (model.transition @ (b[t + 1] * beta[t + 1])) / c[t + 1]

            gamma = alpha * beta
            gamma /= gamma.sum(axis=1, keepdims=True)
            init_acc += gamma[0]
            gamma_acc += gamma.sum(axis=0)
            mean_acc += gamma.T @ obs
            sq_acc += gamma.T @ (obs * obs)
            for t in range(T - 1):
                xi = (alpha[t][:, None] * model.transition
                      * (b[t + 1] * beta[t + 1])[None, :]) / c[t + 1]
                trans_acc += xi / xi.sum()

        if history and total_ll - history[-1] < tol and total_ll >= history[-1] - 1e-12:
            history.append(total_ll)
            converged = True
            break
        history.append(total_ll)

        # M-step.
        new_means = mean_acc / gamma_acc
        new_vars = np.maximum(sq_acc / gamma_acc - new_means**2, VAR_FLOOR)
        new_trans = trans_acc / trans_acc.sum(axis=1, keepdims=True)
        model = HmmModel(
            route_index=route_index,
            n_states=k,
            initial=init_acc / init_acc.sum(),
            transition=new_trans,
            means=new_means,
            variances=new_vars,
            norm_mean=norm_mean,
        )
    else:
        logger.info("Baum-Welch hit max_iter=%d", max_iter)
    return BaumWelchResult(model=model, loglik_history=history, converged=converged)


def hmm_fit(
    route_series: Sequence[PriceSeries],
    n_states: int = 4,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
    route_index: int = -1,
) -> HmmModel:
    """Train one route's template on its training series.

    Observations are all the route's prices divided by their overall mean.
    If every price is identical the model degenerates to a single state
    (with a warning) rather than failing: such a route is trivially
    predictable and must not break bank training.
    """
    if not route_series:
        raise EmptySeries("hmm_fit needs at least one series")
    all_prices = [p for s in route_series for p in s.prices]
    norm_mean = math.fsum(all_prices) / len(all_prices)
    sequences = [[p / norm_mean for p in s.prices] for s in route_series]

    pooled = np.concatenate([np.asarray(s) for s in sequences])
    if np.all(pooled == pooled[0]):
        logger.warning(
            "route %d: all prices identical, returning a degenerate single-state model",
            route_index,
        )
        return HmmModel(
            route_index=route_index,
            n_states=1,
            initial=np.array([1.0]),
            transition=np.array([[1.0]]),
            means=np.array([float(pooled[0])]),
            variances=np.array([VAR_FLOOR]),
            norm_mean=norm_mean,
            degenerate=True,
        )
    result = baum_welch(sequences, n_states=n_states, max_iter=max_iter, tol=tol,
                        seed=seed, route_index=route_index, norm_mean=norm_mean)
    return result.model


def fit_bank(
    train_series: Sequence[PriceSeries],
    route_order: Sequence[str],
    n_states: int = 4,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> list[HmmModel]:
    """One template per route, in the given route order."""
    by_route: dict[str, list[PriceSeries]] = {r: [] for r in route_order}
    for s in train_series:
        if s.key.route_id in by_route:
            by_route[s.key.route_id].append(s)
    bank = []
    for idx, route_id in enumerate(route_order):
        if not by_route[route_id]:
            raise EmptySeries(f"route {route_id} has no training series")
        bank.append(
            hmm_fit(by_route[route_id], n_states=n_states, max_iter=max_iter,
                    tol=tol, seed=derive_seed(seed, "hmm", idx), route_index=idx)
        )
    return bank


def classify_sequence(bank: Sequence[HmmModel], seq: EquivalenceSequence) -> int:
    """Maximum-likelihood template index; ties resolve to the lowest index."""
    if len(bank) != N_ROUTES:
        raise FarecastError(f"bank holds {len(bank)} models, expected {N_ROUTES}")
    logliks = [hmm_loglik(m, seq) for m in bank]
    return int(np.argmax(logliks))


# -- generalized problem ------------------------------------------------------


@dataclass
class GeneralizedResult:
    decisions: dict[SeriesKey, PurchaseDecision]
    assignments: dict[SeriesKey, tuple[int, ...]]  # template index per row
    rows: dict[SeriesKey, tuple[FeatureRow, ...]]


def generalized_predict(
    bank: Sequence[HmmModel],
    frozen_model: TrainedModel,
    gen_series: Sequence[PriceSeries],
    anchor: Optional[date] = None,
    per_series: bool = False,
) -> GeneralizedResult:
    """Decide buy/wait for routes without history.

    Row t of a series is tagged with the dummies of the template that best
    explains the price prefix through t (normalized by the prefix mean, so
    the assignment at t uses nothing later than t). ``per_series`` instead
    classifies each series once from its full observation sequence. The
    frozen classifier then predicts on the tagged rows and the standard
    decision rule runs per series.
    """
    if frozen_model.spec.task != "classification":
        raise FarecastError("the frozen model must be a classification model")
    if anchor is None:
        anchor = corpus_anchor(gen_series)

    decisions: dict[SeriesKey, PurchaseDecision] = {}
    assignments: dict[SeriesKey, tuple[int, ...]] = {}
    tagged_rows: dict[SeriesKey, tuple[FeatureRow, ...]] = {}
    for s in gen_series:
        base_rows = extract_rows(s, route_index=None, anchor=anchor)
        if per_series:
            template = classify_sequence(bank, equivalence_sequence(s, len(s) - 1,
                                                                    full_mean=True))
            per_row = [template] * len(s)
        else:
            per_row = [
                classify_sequence(bank, equivalence_sequence(s, t))
                for t in range(len(s))
            ]
        rows = tuple(r.with_dummies(idx) for r, idx in zip(base_rows, per_row))
        predicted = predict(frozen_model, rows)
        decisions[s.key] = decide_classification(s, list(predicted))
        assignments[s.key] = tuple(per_row)
        tagged_rows[s.key] = rows
    return GeneralizedResult(decisions=decisions, assignments=assignments,
                             rows=tagged_rows)
