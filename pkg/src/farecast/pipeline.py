"""End-to-end wiring: series to datasets, training, backtests, reports.

Route indices (the dummy positions) come from the natural-sorted unique
route ids of the training corpus; the same ordering is used everywhere a
bank, blend, or report enumerates routes. Preprocessing (outlier removal,
then oversampling) applies to classification training data only; labels for
regression are untouched real prices and resampling would only distort the
loss.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date
from typing import Mapping, Optional, Sequence

from .core import Dataset, FarecastError, PriceSeries, SeriesKey
from .features import corpus_anchor, extract_rows, label_rows
from .learners import LearnerSpec, TrainedModel, blend_predict, fit, predict
from .metrics import BacktestMetrics, aggregate, backtest_report
from .policy import PurchaseDecision, decide_classification, decide_regression
from .preprocess import oversample, remove_outliers
from .util import derive_seed, natural_key

logger = logging.getLogger(__name__)


def route_order(series: Sequence[PriceSeries]) -> list[str]:
    """Unique route ids in natural order; defines the dummy index per route."""
    return sorted({s.key.route_id for s in series}, key=natural_key)


def build_dataset(
    series: Sequence[PriceSeries],
    routes: Sequence[str],
    anchor: date,
    role: str,
) -> Dataset:
    """Labeled feature rows for every quote of every series."""
    index = {route_id: i for i, route_id in enumerate(routes)}
    rows = []
    for s in series:
        if s.key.route_id not in index:
            raise FarecastError(f"series {s.key} belongs to no known route")
        extracted = extract_rows(s, route_index=index[s.key.route_id], anchor=anchor)
        rows.extend(label_rows(extracted, s))
    return Dataset(rows=tuple(rows), role=role)


@dataclass(frozen=True)
class PreprocessConfig:
    oversample: bool = True
    outlier_removal: str = "none"  # none | kmeans | em

    def __post_init__(self):
        if self.outlier_removal not in ("none", "kmeans", "em"):
            raise FarecastError(f"unknown outlier removal {self.outlier_removal!r}")

    def to_dict(self) -> dict:
        return {"oversample": self.oversample, "outlier_removal": self.outlier_removal}


def apply_preprocessing(train: Dataset, cfg: PreprocessConfig, seed: int) -> Dataset:
    """Outlier removal first (on original rows), then minority oversampling."""
    out = train
    if cfg.outlier_removal != "none":
        out, removed = remove_outliers(out, method=cfg.outlier_removal)
        logger.info("outlier removal dropped %d rows", len(removed))
    if cfg.oversample:
        out = oversample(out, seed=derive_seed(seed, "oversample"))
    return out


def preprocess_for(spec: LearnerSpec, train: Dataset, cfg: PreprocessConfig,
                   seed: int) -> Dataset:
    if spec.task != "classification":
        return train
    return apply_preprocessing(train, cfg, seed)


def run_policy(
    model: TrainedModel,
    test_series: Sequence[PriceSeries],
    routes: Sequence[str],
    anchor: date,
    jobs: int = 1,
) -> dict[SeriesKey, PurchaseDecision]:
    """Predict per series and apply the buy/wait decision rule."""
    index = {route_id: i for i, route_id in enumerate(routes)}

    def decide(s: PriceSeries) -> tuple[SeriesKey, PurchaseDecision]:
        rows = extract_rows(s, route_index=index[s.key.route_id], anchor=anchor)
        predictions = list(predict(model, rows))
        if model.spec.task == "classification":
            return s.key, decide_classification(s, predictions)
        return s.key, decide_regression(s, predictions)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(decide, test_series))
    else:
        pairs = [decide(s) for s in test_series]
    return dict(pairs)


def run_uniform_generalized(
    blend_model: TrainedModel,
    gen_series: Sequence[PriceSeries],
    anchor: Optional[date] = None,
) -> dict[SeriesKey, PurchaseDecision]:
    """No-history variant of uniform blending.

    Generalized rows carry no route identity, so each member votes on the
    rows re-tagged with its own dummy index.
    """
    if blend_model.spec.kind != "uniform_blend":
        raise FarecastError("uniform generalization needs a uniform_blend model")
    if anchor is None:
        anchor = corpus_anchor(gen_series)
    members = blend_model.parameters["core"]
    decisions = {}
    for s in gen_series:
        rows = extract_rows(s, route_index=None, anchor=anchor)
        votes = blend_predict(members, rows, own_dummies=True)
        decisions[s.key] = decide_classification(s, list(votes))
    return decisions


def score_decisions(
    decisions: Mapping[SeriesKey, PurchaseDecision],
    series: Sequence[PriceSeries],
) -> tuple[list[BacktestMetrics], float, float]:
    """(per-route metrics, mean normalized, population variance)."""
    series_map = {s.key: s for s in series}
    per_route = backtest_report(decisions, series_map)
    mean, var = aggregate(per_route)
    return per_route, mean, var


def train_specific(
    spec: LearnerSpec,
    train_series: Sequence[PriceSeries],
    routes: Sequence[str],
    anchor: date,
    prep: PreprocessConfig,
    seed: int,
) -> TrainedModel:
    """Build the training dataset, preprocess it, and fit one model."""
    train_ds = build_dataset(train_series, routes, anchor, role="train")
    prepared = preprocess_for(spec, train_ds, prep, seed)
    if len(prepared) != len(train_ds):
        logger.info("preprocessing: %d rows in, %d out", len(train_ds), len(prepared))
    return fit(spec, prepared, seed=derive_seed(seed, "fit"))
