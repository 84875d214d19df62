"""Grid search over LearnerSpecs with series-grouped k-fold cross-validation.

Folds are dealt over series, not rows: both labels are functions of a whole
series (its global minimum), so letting one series straddle folds would leak
its own future into validation. Any preprocessing is re-fit inside each
training fold; validation rows are never resampled or filtered.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Dataset, FarecastError, SeriesKey
from .learners import LearnerSpec, fit, predict
from .features import labels_class, labels_reg
from .util import derive_seed

logger = logging.getLogger(__name__)


class TooFewSeries(FarecastError):
    pass


class AllCellsFailed(FarecastError):
    pass


@dataclass
class CvCell:
    spec: LearnerSpec
    fold_losses: list[float]
    mean_loss: Optional[float]
    var_loss: Optional[float]
    failed: bool
    error: Optional[str]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "fold_losses": list(self.fold_losses),
            "mean_loss": self.mean_loss,
            "var_loss": self.var_loss,
            "failed": self.failed,
            "error": self.error,
        }


def cv_folds(n: int, k: int = 5, seed: int = 0) -> list[list[int]]:
    """Partition 0..n-1 into k folds whose sizes differ by at most one."""
    if n < k:
        raise TooFewSeries(f"{n} series cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    return [sorted(int(i) for i in order[f::k]) for f in range(k)]


def _series_groups(train: Dataset) -> list[list[int]]:
    """Row indices grouped by series key, in first-appearance order."""
    groups: dict[SeriesKey, list[int]] = {}
    for i, row in enumerate(train.rows):
        groups.setdefault(row.key, []).append(i)
    return list(groups.values())


def _loss(spec: LearnerSpec, model, val_rows) -> float:
    pred = predict(model, val_rows)
    if spec.task == "classification":
        return float(np.mean(pred != labels_class(val_rows)))
    return float(np.sqrt(np.mean((pred - labels_reg(val_rows)) ** 2)))


def grid_search(
    spec_grid: Sequence[LearnerSpec],
    train: Dataset,
    seed: int,
    k: int = 5,
    preprocess: Optional[Callable[[Dataset, int], Dataset]] = None,
    jobs: int = 1,
) -> tuple[LearnerSpec, list[CvCell]]:
    """Pick the spec minimizing mean CV loss (error rate / RMSE).

    Ties go to the earliest spec in grid order. A spec whose fit fails on
    any fold is excluded; if every spec fails, AllCellsFailed carries the
    first error.
    """
    if not spec_grid:
        raise FarecastError("empty spec grid")
    groups = _series_groups(train)
    folds = cv_folds(len(groups), k=k, seed=seed)

    # Materialize per-fold train/validation datasets once; cells share them.
    fold_data = []
    for f, fold in enumerate(folds):
        in_fold = set(fold)
        train_idx = [i for g, grp in enumerate(groups) if g not in in_fold for i in grp]
        val_idx = [i for g in fold for i in groups[g]]
        fold_train = Dataset(rows=tuple(train.rows[i] for i in train_idx), role="train")
        if preprocess is not None:
            fold_train = preprocess(fold_train, derive_seed(seed, "fold-prep", f))
        val_rows = tuple(train.rows[i] for i in val_idx)
        fold_data.append((fold_train, val_rows))

    def run_cell(args: tuple[int, int]) -> tuple[int, int, Optional[float], Optional[str]]:
        spec_idx, f = args
        spec = spec_grid[spec_idx]
        fold_train, val_rows = fold_data[f]
        try:
            model = fit(spec, fold_train, seed=derive_seed(seed, "fold-fit", f))
            return spec_idx, f, _loss(spec, model, val_rows), None
        except (FarecastError, ValueError, np.linalg.LinAlgError) as exc:
            return spec_idx, f, None, f"{type(exc).__name__}: {exc}"

    cells_args = [(s, f) for s in range(len(spec_grid)) for f in range(k)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, cells_args))
    else:
        results = [run_cell(a) for a in cells_args]

    by_spec: dict[int, dict[int, tuple[Optional[float], Optional[str]]]] = {}
    for spec_idx, f, loss, err in results:
        by_spec.setdefault(spec_idx, {})[f] = (loss, err)

    table: list[CvCell] = []
    for spec_idx, spec in enumerate(spec_grid):
        losses, first_error = [], None
        for f in range(k):
            loss, err = by_spec[spec_idx][f]
            if err is not None and first_error is None:
                first_error = err
            if loss is not None:
                losses.append(loss)
        failed = first_error is not None
        if failed:
            logger.warning("grid cell %d (%s) failed: %s", spec_idx, spec.kind, first_error)
            table.append(CvCell(spec=spec, fold_losses=losses, mean_loss=None,
                                var_loss=None, failed=True, error=first_error))
        else:
            mean = float(np.mean(losses))
            var = float(np.var(losses))
            table.append(CvCell(spec=spec, fold_losses=losses, mean_loss=mean,
                                var_loss=var, failed=False, error=None))

    viable = [c for c in table if not c.failed]
    if not viable:
        raise AllCellsFailed(table[0].error or "all grid cells failed")
    best = min(viable, key=lambda c: c.mean_loss)  # min() keeps the first on ties
    return best.spec, table


def default_grid(kind: str, task: str) -> list[LearnerSpec]:
    """The stock hyperparameter grids, one list per learner kind."""
    if kind == "cart":
        cells = [{"max_depth": d} for d in (3, 5, 8, 12)]
    elif kind == "adaboost_cart":
        cells = [{"n_rounds": t, "weak_depth": d}
                 for t in (50, 100, 200) for d in (1, 2, 3)]
    elif kind == "random_forest":
        cells = [{"n_trees": b} for b in (50, 100)]
    elif kind == "knn":
        cells = [{"k": k} for k in (3, 5, 7, 11)]
    elif kind == "mlp3":
        cells = [{"hidden": h, "lr": lr} for h in (8, 16, 32) for lr in (0.01, 0.001)]
    else:
        cells = [{}]
    return [LearnerSpec(kind=kind, task=task, hyperparams=hp) for hp in cells]
