"""Boosted trees: discrete AdaBoost (classification) and a weighted-median
regression variant with loss-proportional reweighting.

Classification tracks, per round, the weak learner's weighted error, the
ensemble's training error, and the exponential-loss bound prod 2*sqrt(e(1-e)).
The bound must upper-bound training error after every round; that is asserted
by the test suite, not silently assumed here.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tree import Cart

logger = logging.getLogger(__name__)


@dataclass
class AdaBoostClassifier:
    n_rounds: int = 100
    weak_depth: int = 1
    min_leaf: int = 1
    trees: list[Cart] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    # per accepted round
    epsilons: list[float] = field(default_factory=list)
    bounds: list[float] = field(default_factory=list)
    train_errors: list[float] = field(default_factory=list)
    stopped_early: Optional[str] = None
    majority: int = 0  # fallback when no weak learner is accepted

    def fit(self, X: np.ndarray, y: np.ndarray,
            sample_weight: Optional[np.ndarray] = None) -> "AdaBoostClassifier":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        n = len(y)
        sign = 2.0 * y - 1.0
        w = np.ones(n) / n if sample_weight is None else np.asarray(sample_weight, dtype=float)
        w = w / w.sum()
        w0 = w.copy()  # training error is measured against the starting weights
        presorted = np.argsort(X, axis=0, kind="stable")

        self.trees, self.alphas = [], []
        self.epsilons, self.bounds, self.train_errors = [], [], []
        self.stopped_early = None
        self.majority = int(float((w0 * y).sum()) > 0.5)  # ties go to wait
        margin = np.zeros(n)
        bound = 1.0
        for t in range(self.n_rounds):
            tree = Cart(task="classification", max_depth=self.weak_depth,
                        min_leaf=self.min_leaf)
            tree.fit(X, y, sample_weight=w, presorted=presorted)
            h = 2.0 * tree.predict(X) - 1.0
            miss = h != sign
            eps = float(w[miss].sum())
            if eps >= 0.5:
                self.stopped_early = f"round {t}: weak error {eps:.4f} >= 0.5"
                logger.info("boosting stopped: %s", self.stopped_early)
                break
            if eps == 0.0:
                # A perfect weak learner; the ensemble collapses to it.
                self.trees, self.alphas = [tree], [1.0]
                self.epsilons.append(0.0)
                self.bounds.append(0.0)
                margin = h
                self.train_errors.append(float(w0[np.sign(margin) != sign].sum()))
                self.stopped_early = f"round {t}: weak error 0"
                break
            alpha = 0.5 * np.log((1.0 - eps) / eps)
            self.trees.append(tree)
            self.alphas.append(float(alpha))
            w = w * np.exp(-alpha * sign * h)
            w = w / w.sum()

            margin = margin + alpha * h
            bound *= 2.0 * np.sqrt(eps * (1.0 - eps))
            self.epsilons.append(eps)
            self.bounds.append(float(bound))
            # sign(0) counts as wait; a zero margin on a buy row is an error.
            predicted = np.where(margin > 0.0, 1.0, -1.0)
            self.train_errors.append(float(w0[predicted != sign].sum()))
        return self

    def decision_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        margin = np.zeros(len(X))
        for tree, alpha in zip(self.trees, self.alphas):
            margin += alpha * (2.0 * tree.predict(X) - 1.0)
        return margin

    def predict(self, X: np.ndarray) -> np.ndarray:
        if not self.trees:
            return np.full(len(X), self.majority, dtype=int)
        return (self.decision_margin(X) > 0.0).astype(int)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Margin mapped affinely onto [0, 1]; 0.5 is the decision point."""
        if not self.trees:
            return np.full(len(X), float(self.majority))
        total = sum(self.alphas)
        return (self.decision_margin(X) / total + 1.0) / 2.0

    def to_jsonable(self) -> dict:
        return {
            "n_rounds": self.n_rounds,
            "weak_depth": self.weak_depth,
            "min_leaf": self.min_leaf,
            "trees": [t.to_jsonable() for t in self.trees],
            "alphas": list(self.alphas),
            "majority": self.majority,
        }

    @classmethod
    def from_jsonable(cls, raw: dict) -> "AdaBoostClassifier":
        model = cls(n_rounds=raw["n_rounds"], weak_depth=raw["weak_depth"],
                    min_leaf=raw["min_leaf"])
        model.trees = [Cart.from_jsonable(t) for t in raw["trees"]]
        model.alphas = [float(a) for a in raw["alphas"]]
        model.majority = int(raw["majority"])
        return model


@dataclass
class AdaBoostRegressor:
    """Median-combination boosting for regression.

    Per round: fit a weighted CART, compute each row's linear loss
    |residual| / max|residual|, average it under the current weights, and
    reweight rows by beta^(1 - loss) with beta = avg / (1 - avg), so
    well-fit rows shrink. Prediction is the weighted median of the member
    predictions under the log(1/beta) model weights.
    """

    n_rounds: int = 100
    weak_depth: int = 8
    min_leaf: int = 1
    trees: list[Cart] = field(default_factory=list)
    log_inv_betas: list[float] = field(default_factory=list)
    avg_losses: list[float] = field(default_factory=list)
    stopped_early: Optional[str] = None

    def fit(self, X: np.ndarray, y: np.ndarray,
            sample_weight: Optional[np.ndarray] = None) -> "AdaBoostRegressor":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = len(y)
        w = np.ones(n) / n if sample_weight is None else np.asarray(sample_weight, dtype=float)
        w = w / w.sum()
        presorted = np.argsort(X, axis=0, kind="stable")

        self.trees, self.log_inv_betas, self.avg_losses = [], [], []
        self.stopped_early = None
        for t in range(self.n_rounds):
            tree = Cart(task="regression", max_depth=self.weak_depth,
                        min_leaf=self.min_leaf)
            tree.fit(X, y, sample_weight=w, presorted=presorted)
            abs_err = np.abs(tree.predict(X) - y)
            worst = float(abs_err.max())
            if worst == 0.0:
                self.trees, self.log_inv_betas = [tree], [1.0]
                self.avg_losses.append(0.0)
                self.stopped_early = f"round {t}: exact fit"
                break
            loss = abs_err / worst
            avg = float((w * loss).sum())
            if avg >= 0.5:
                self.stopped_early = f"round {t}: average loss {avg:.4f} >= 0.5"
                logger.info("regression boosting stopped: %s", self.stopped_early)
                break
            beta = avg / (1.0 - avg)
            self.trees.append(tree)
            self.log_inv_betas.append(float(np.log(1.0 / beta)))
            self.avg_losses.append(avg)
            w = w * beta ** (1.0 - loss)
            w = w / w.sum()
        if not self.trees:
            # Nothing accepted: keep a single unweighted tree as fallback.
            tree = Cart(task="regression", max_depth=self.weak_depth,
                        min_leaf=self.min_leaf)
            tree.fit(X, y, presorted=presorted)
            self.trees, self.log_inv_betas = [tree], [1.0]
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        preds = np.column_stack([t.predict(X) for t in self.trees])
        weights = np.asarray(self.log_inv_betas)
        order = np.argsort(preds, axis=1, kind="stable")
        sorted_preds = np.take_along_axis(preds, order, axis=1)
        cum = np.cumsum(weights[order], axis=1)
        # First member where cumulative weight reaches half the total.
        half = 0.5 * cum[:, -1:]
        pick = (cum >= half).argmax(axis=1)
        return sorted_preds[np.arange(len(X)), pick]

    def to_jsonable(self) -> dict:
        return {
            "n_rounds": self.n_rounds,
            "weak_depth": self.weak_depth,
            "min_leaf": self.min_leaf,
            "trees": [t.to_jsonable() for t in self.trees],
            "log_inv_betas": list(self.log_inv_betas),
        }

    @classmethod
    def from_jsonable(cls, raw: dict) -> "AdaBoostRegressor":
        model = cls(n_rounds=raw["n_rounds"], weak_depth=raw["weak_depth"],
                    min_leaf=raw["min_leaf"])
        model.trees = [Cart.from_jsonable(t) for t in raw["trees"]]
        model.log_inv_betas = [float(b) for b in raw["log_inv_betas"]]
        return model
