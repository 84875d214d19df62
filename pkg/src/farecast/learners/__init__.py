"""Uniform fit/predict facade over the model zoo.

Every learner trains from a Dataset of FeatureRows and returns a
TrainedModel whose predictions depend only on (parameters, input). Scale-
sensitive kinds (least squares, logistic, the MLP, KNN) get the continuous
block standardized by a scaler fit on the training rows; tree-based kinds
see raw features. Models serialize to a versioned JSON document.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..core import Dataset, FarecastError, FeatureRow, N_ROUTES
from ..features import (
    FeatureMismatch,
    Standardizer,
    labels_class,
    labels_reg,
    to_matrix,
)
from ..util import derive_seed
from .boosting import AdaBoostClassifier, AdaBoostRegressor
from .forest import RandomForest
from .knn import Knn
from .linear import LeastSquares, Logistic
from .mlp import Mlp3
from .tree import Cart

logger = logging.getLogger(__name__)

KINDS = (
    "least_squares",
    "logistic",
    "mlp3",
    "cart",
    "adaboost_cart",
    "random_forest",
    "knn",
    "uniform_blend",
)
TASKS = ("regression", "classification")
_STANDARDIZED = {"least_squares", "logistic", "mlp3", "knn"}

MODEL_FORMAT = "farecast-model"
MODEL_VERSION = 1


class IncompatibleSpec(FarecastError):
    pass


class DegenerateData(FarecastError):
    pass


class WrongMemberCount(FarecastError):
    pass


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    task: str
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise IncompatibleSpec(f"unknown learner kind {self.kind!r}")
        if self.task not in TASKS:
            raise IncompatibleSpec(f"unknown task {self.task!r}")
        if self.kind == "least_squares" and self.task != "regression":
            raise IncompatibleSpec("least_squares is regression-only")
        if self.kind == "logistic" and self.task != "classification":
            raise IncompatibleSpec("logistic is classification-only")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "task": self.task, "hyperparams": dict(self.hyperparams)}

    @classmethod
    def from_dict(cls, raw: dict) -> "LearnerSpec":
        return cls(kind=raw["kind"], task=raw["task"],
                   hyperparams=dict(raw.get("hyperparams", {})))


@dataclass
class TrainedModel:
    spec: LearnerSpec
    parameters: dict  # n_features, standardizer (or None), core payload
    train_summary: dict


def _hp(spec: LearnerSpec, name: str, default, alias: Optional[str] = None):
    hp = spec.hyperparams
    if name in hp:
        return hp[name]
    if alias is not None and alias in hp:
        return hp[alias]
    return default


def _design(spec: LearnerSpec, rows: Sequence[FeatureRow]):
    X = to_matrix(rows)
    if spec.task == "classification":
        y = labels_class(rows)
        if len(np.unique(y)) < 2:
            raise DegenerateData("classification training data has a single class")
    else:
        y = labels_reg(rows)
    standardizer = None
    if spec.kind in _STANDARDIZED:
        standardizer = Standardizer.fit(X)
        X = standardizer.transform(X)
    return X, y, standardizer


def fit(spec: LearnerSpec, train: Dataset, seed: int) -> TrainedModel:
    """Train one model; deterministic in (spec, data, seed)."""
    if len(train) == 0:
        raise DegenerateData("empty training set")
    if spec.kind == "uniform_blend":
        return _fit_blend(spec, train, seed)

    rows = train.rows
    X, y, standardizer = _design(spec, rows)
    n_features = to_matrix(rows).shape[1]
    summary: dict

    if spec.kind == "least_squares":
        core = LeastSquares(standardize=False).fit(X, y)
        rmse = float(np.sqrt(np.mean((core.predict(X) - y) ** 2)))
        summary = {"train_rmse": rmse}
    elif spec.kind == "logistic":
        core = Logistic(
            grad_tol=_hp(spec, "grad_tol", 1e-6),
            max_iter=int(_hp(spec, "max_iter", 1000)),
        ).fit(X, y)
        summary = {
            "final_loss": core.loss_history[-1],
            "iterations": len(core.loss_history),
            "converged": core.converged,
        }
    elif spec.kind == "mlp3":
        core = Mlp3(
            task=spec.task,
            hidden=int(_hp(spec, "hidden", 16)),
            lr=float(_hp(spec, "lr", 0.01)),
            epochs=int(_hp(spec, "epochs", 200)),
            batch_size=int(_hp(spec, "batch_size", 32)),
        ).fit(X, y, seed=seed)
        summary = {"final_loss": core.loss_history[-1], "epochs": core.epochs}
    elif spec.kind == "cart":
        core = Cart(
            task=spec.task,
            max_depth=_hp(spec, "max_depth", 8),
            min_leaf=int(_hp(spec, "min_leaf", 1)),
        ).fit(X, y)
        summary = {"n_nodes": len(core.feature)}
    elif spec.kind == "adaboost_cart":
        n_rounds = int(_hp(spec, "n_rounds", 100, alias="T"))
        weak_depth = int(_hp(spec, "weak_depth", 3))
        min_leaf = int(_hp(spec, "min_leaf", 1))
        if spec.task == "classification":
            core = AdaBoostClassifier(n_rounds=n_rounds, weak_depth=weak_depth,
                                      min_leaf=min_leaf).fit(X, y)
            summary = {
                "rounds_used": len(core.trees),
                "epsilons": list(core.epsilons),
                "bounds": list(core.bounds),
                "train_errors": list(core.train_errors),
                "stopped_early": core.stopped_early,
            }
        else:
            core = AdaBoostRegressor(n_rounds=n_rounds, weak_depth=weak_depth,
                                     min_leaf=min_leaf).fit(X, y)
            summary = {
                "rounds_used": len(core.trees),
                "avg_losses": list(core.avg_losses),
                "stopped_early": core.stopped_early,
            }
    elif spec.kind == "random_forest":
        core = RandomForest(
            task=spec.task,
            n_trees=int(_hp(spec, "n_trees", 100, alias="B")),
            max_depth=_hp(spec, "max_depth", None),
            min_leaf=int(_hp(spec, "min_leaf", 1)),
            bootstrap=_hp(spec, "bootstrap", "resample"),
            subsample=bool(_hp(spec, "subsample", True)),
        ).fit(X, y, seed=seed)
        summary = {"n_trees": core.n_trees}
    elif spec.kind == "knn":
        core = Knn(task=spec.task, k=int(_hp(spec, "k", 5))).fit(X, y)
        summary = {"n_train": len(train)}
    else:  # pragma: no cover - guarded by LearnerSpec validation
        raise IncompatibleSpec(spec.kind)

    return TrainedModel(
        spec=spec,
        parameters={"n_features": n_features, "standardizer": standardizer, "core": core},
        train_summary=summary,
    )


def _fit_blend(spec: LearnerSpec, train: Dataset, seed: int) -> TrainedModel:
    member_kind = _hp(spec, "member_kind",
                      "adaboost_cart" if spec.task == "classification" else "cart")
    member_params = dict(_hp(spec, "member_params", {}))
    by_route: dict[int, list[FeatureRow]] = {r: [] for r in range(N_ROUTES)}
    for row in train.rows:
        if row.flight_dummies is None:
            raise FeatureMismatch("blend training rows need flight dummies")
        by_route[int(np.argmax(row.flight_dummies))].append(row)
    missing = [r for r, rows in by_route.items() if not rows]
    if missing:
        raise DegenerateData(f"no training rows for route index(es) {missing}")

    members = []
    member_spec = LearnerSpec(kind=member_kind, task=spec.task, hyperparams=member_params)
    for r in range(N_ROUTES):
        member = fit(member_spec, Dataset(rows=tuple(by_route[r]), role=train.role),
                     seed=derive_seed(seed, "member", r))
        members.append(member)
    return TrainedModel(
        spec=spec,
        parameters={"n_features": to_matrix(train.rows).shape[1],
                    "standardizer": None, "core": members},
        train_summary={"member_kind": member_kind,
                       "per_member": [m.train_summary for m in members]},
    )


def _core_matrix(model: TrainedModel, rows: Sequence[FeatureRow]) -> np.ndarray:
    X = to_matrix(rows)
    if X.shape[1] != model.parameters["n_features"]:
        raise FeatureMismatch(
            f"model expects {model.parameters['n_features']} features, rows have {X.shape[1]}"
        )
    standardizer = model.parameters["standardizer"]
    if standardizer is not None:
        X = standardizer.transform(X)
    return X


def predict(model: TrainedModel, rows: Sequence[FeatureRow]) -> np.ndarray:
    """Hard labels {0,1} for classification, real values for regression."""
    if model.spec.kind == "uniform_blend":
        members = model.parameters["core"]
        if model.spec.task == "classification":
            return blend_predict(members, rows)
        return np.mean([predict(m, rows) for m in members], axis=0)
    X = _core_matrix(model, rows)
    return model.parameters["core"].predict(X)


def predict_scores(model: TrainedModel, rows: Sequence[FeatureRow]) -> np.ndarray:
    """Classification: a score in [0,1] with 0.5 the decision point.

    Regression models return their predictions unchanged.
    """
    if model.spec.kind == "uniform_blend":
        members = model.parameters["core"]
        if model.spec.task == "classification":
            votes = np.zeros(len(rows))
            for m in members:
                votes += predict(m, rows)
            return votes / len(members)
        return predict(model, rows)
    if model.spec.task == "regression":
        return predict(model, rows)
    X = _core_matrix(model, rows)
    core = model.parameters["core"]
    if isinstance(core, (Logistic, Mlp3, AdaBoostClassifier)):
        return core.predict_proba(X)
    if isinstance(core, Cart):
        return core.predict_value(X)
    if isinstance(core, (RandomForest, Knn)):
        return core.predict_scores(X)
    raise IncompatibleSpec(f"no score path for {model.spec.kind}")  # pragma: no cover


def blend_predict(members: Sequence[TrainedModel], rows: Sequence[FeatureRow],
                  own_dummies: bool = False) -> np.ndarray:
    """Majority vote of the 8 per-route members: 1 iff more than 4 vote 1.

    With ``own_dummies`` each member sees the rows re-tagged with its own
    route's dummy vector (the no-history variant, where rows carry no
    meaningful route identity).
    """
    if len(members) != N_ROUTES:
        raise WrongMemberCount(f"expected {N_ROUTES} members, got {len(members)}")
    for m in members:
        if m.spec.task != "classification":
            raise IncompatibleSpec("blend members must be classification models")
    votes = np.zeros(len(rows))
    for r, member in enumerate(members):
        member_rows = [row.with_dummies(r) for row in rows] if own_dummies else rows
        votes += predict(member, member_rows)
    return (votes > N_ROUTES // 2).astype(int)


# -- serialization ---------------------------------------------------------

_CORE_CLASSES = {
    "least_squares": LeastSquares,
    "logistic": Logistic,
    "mlp3": Mlp3,
    "cart": Cart,
    "random_forest": RandomForest,
    "knn": Knn,
}


def model_to_dict(model: TrainedModel) -> dict:
    if model.spec.kind == "uniform_blend":
        core_payload = {"members": [model_to_dict(m) for m in model.parameters["core"]]}
    else:
        core_payload = model.parameters["core"].to_jsonable()
    standardizer = model.parameters["standardizer"]
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": model.spec.to_dict(),
        "n_features": model.parameters["n_features"],
        "standardizer": standardizer.to_dict() if standardizer is not None else None,
        "core": core_payload,
        "train_summary": model.train_summary,
    }


def model_from_dict(raw: dict) -> TrainedModel:
    if raw.get("format") != MODEL_FORMAT:
        raise FarecastError("not a model document")
    if raw.get("version") != MODEL_VERSION:
        raise FarecastError(f"unsupported model version {raw.get('version')!r}")
    spec = LearnerSpec.from_dict(raw["spec"])
    if spec.kind == "uniform_blend":
        core = [model_from_dict(m) for m in raw["core"]["members"]]
    elif spec.kind == "adaboost_cart":
        cls = AdaBoostClassifier if spec.task == "classification" else AdaBoostRegressor
        core = cls.from_jsonable(raw["core"])
    else:
        core = _CORE_CLASSES[spec.kind].from_jsonable(raw["core"])
    standardizer = (Standardizer.from_dict(raw["standardizer"])
                    if raw.get("standardizer") is not None else None)
    return TrainedModel(
        spec=spec,
        parameters={"n_features": raw["n_features"], "standardizer": standardizer,
                    "core": core},
        train_summary=dict(raw.get("train_summary", {})),
    )


def save_model(model: TrainedModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True)
        fh.write("\n")


def load_model(path: str | Path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
