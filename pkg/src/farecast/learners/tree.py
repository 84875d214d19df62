"""Weighted CART: greedy binary splits on one feature at a time.

Classification nodes minimize weighted Gini impurity, regression nodes
weighted squared error. A node becomes a leaf when it is pure, too small,
at max depth, or when no split strictly reduces impurity. Ties between
candidate splits resolve to the lowest feature index, then the lowest
threshold, so fits are reproducible without a seed.

`presorted` (a column-wise argsort of X) lets boosting reuse one sort across
rounds; only the sample weights change between rounds, never X.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Strict-improvement guard: splits must beat the parent impurity by more
# than accumulated float noise, otherwise the node stays a leaf.
_EPS = 1e-12


@dataclass
class Cart:
    task: str  # regression | classification
    max_depth: Optional[int] = None
    min_leaf: int = 1
    mtry: Optional[int] = None

    # Flat node storage; index 0 is the root. Leaves have feature -1.
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")

    # -- fitting ---------------------------------------------------------

    def fit(
        self,
        X: np.ndarray,
        y: np.ndarray,
        sample_weight: Optional[np.ndarray] = None,
        rng: Optional[np.random.Generator] = None,
        presorted: Optional[np.ndarray] = None,
    ) -> "Cart":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, d = X.shape
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if self.mtry is not None and rng is None:
            raise ValueError("feature subsampling needs an rng")
        if presorted is None:
            presorted = np.argsort(X, axis=0, kind="stable")

        self.feature, self.threshold = [], []
        self.left, self.right, self.value = [], [], []
        depth_cap = self.max_depth if self.max_depth is not None else 30

        # (node_id, member mask, depth); preorder so node ids are stable.
        root_mask = np.ones(n, dtype=bool)
        stack = [(self._new_node(), root_mask, 0)]
        while stack:
            node_id, mask, depth = stack.pop()
            idx = np.flatnonzero(mask)
            wv = w[idx]
            yv = y[idx]
            w_total = wv.sum()
            self.value[node_id] = float((wv * yv).sum() / w_total) if w_total > 0 else float(yv.mean())

            if depth >= depth_cap or len(idx) < 2 * self.min_leaf:
                continue
            impurity = self._impurity(yv, wv, w_total)
            if impurity <= _EPS:
                continue

            split = self._best_split(X, y, w, mask, presorted, rng, impurity)
            if split is None:
                continue
            f, thr = split
            self.feature[node_id] = f
            self.threshold[node_id] = thr
            left_mask = mask & (X[:, f] <= thr)
            right_mask = mask & (X[:, f] > thr)
            self.left[node_id] = self._new_node()
            self.right[node_id] = self._new_node()
            stack.append((self.right[node_id], right_mask, depth + 1))
            stack.append((self.left[node_id], left_mask, depth + 1))
        return self

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _impurity(self, yv: np.ndarray, wv: np.ndarray, w_total: float) -> float:
        s = float((wv * yv).sum())
        if self.task == "classification":
            # Weighted Gini of a {0,1} node: 2 p (1-p) scaled by total weight.
            return 2.0 * s * (w_total - s) / w_total
        q = float((wv * yv * yv).sum())
        return q - s * s / w_total

    def _best_split(self, X, y, w, mask, presorted, rng, parent_impurity):
        d = X.shape[1]
        if self.mtry is not None and self.mtry < d:
            candidates = np.sort(rng.choice(d, size=self.mtry, replace=False))
        else:
            candidates = np.arange(d)

        best = (parent_impurity - _EPS, -1, 0.0)  # (score to beat, feature, threshold)
        for f in candidates:
            order = presorted[:, f]
            sel = order[mask[order]]
            xv = X[sel, f]
            if xv[0] == xv[-1]:
                continue
            wv = w[sel]
            sv = wv * y[sel]
            w_left = np.cumsum(wv)[:-1]
            s_left = np.cumsum(sv)[:-1]
            w_all, s_all = w_left[-1] + wv[-1], s_left[-1] + sv[-1]
            w_right = w_all - w_left
            s_right = s_all - s_left

            m = len(sel)
            counts = np.arange(1, m)
            valid = (xv[:-1] < xv[1:]) & (w_left > 0) & (w_right > 0)
            if self.min_leaf > 1:
                valid &= (counts >= self.min_leaf) & (m - counts >= self.min_leaf)
            if not valid.any():
                continue

            if self.task == "classification":
                with np.errstate(divide="ignore", invalid="ignore"):
                    score = (2.0 * s_left * (w_left - s_left) / w_left
                             + 2.0 * s_right * (w_right - s_right) / w_right)
            else:
                qv = wv * y[sel] * y[sel]
                q_left = np.cumsum(qv)[:-1]
                q_right = (q_left[-1] + qv[-1]) - q_left
                with np.errstate(divide="ignore", invalid="ignore"):
                    score = (q_left - s_left * s_left / w_left) + (q_right - s_right * s_right / w_right)
            score = np.where(valid, score, np.inf)
            i = int(np.argmin(score))
            if score[i] < best[0]:
                best = (float(score[i]), int(f), float((xv[i] + xv[i + 1]) / 2.0))
        if best[1] < 0:
            return None
        return best[1], best[2]

    # -- prediction ------------------------------------------------------

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        """Raw leaf values: class-1 weight fraction, or the weighted mean target."""
        X = np.asarray(X, dtype=float)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)

        node = np.zeros(len(X), dtype=int)
        active = feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, feature[cur]] <= threshold[cur]
            node[rows] = np.where(go_left, left[cur], right[cur])
            active = feature[node] >= 0
        return value[node]

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Labels for classification (leaf ties go to 0), values for regression."""
        raw = self.predict_value(X)
        if self.task == "classification":
            return (raw > 0.5).astype(int)
        return raw

    # -- serialization ---------------------------------------------------

    def to_jsonable(self) -> dict:
        return {
            "task": self.task,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "mtry": self.mtry,
            "feature": list(self.feature),
            "threshold": list(self.threshold),
            "left": list(self.left),
            "right": list(self.right),
            "value": list(self.value),
        }

    @classmethod
    def from_jsonable(cls, raw: dict) -> "Cart":
        tree = cls(task=raw["task"], max_depth=raw["max_depth"],
                   min_leaf=raw["min_leaf"], mtry=raw["mtry"])
        tree.feature = [int(v) for v in raw["feature"]]
        tree.threshold = [float(v) for v in raw["threshold"]]
        tree.left = [int(v) for v in raw["left"]]
        tree.right = [int(v) for v in raw["right"]]
        tree.value = [float(v) for v in raw["value"]]
        return tree
