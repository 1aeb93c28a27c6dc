"""Sequential model-based hyperparameter optimization.

Minimizes a black-box objective (by default stratified k-fold CV
misclassification error of the detection forest) over the forest's
hyperparameter space. A regression forest fit to past trials supplies a
mean and spread estimate at unseen points; the next trial is the candidate
maximizing expected improvement over the best objective seen so far.

Deterministic given (space, budget, seed): one generator drives the
initial design and every candidate batch, and the surrogate forests are
seeded from the same seed.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import forest as rf
from .features import FeatureMatrix

DIM_NAMES = ("num_trees", "max_depth", "min_node_size", "mtry_fraction", "sample_fraction")
INT_DIMS = frozenset(("num_trees", "max_depth", "min_node_size"))

SURROGATE_HP = rf.HyperParams(
    num_trees=100, max_depth=12, min_node_size=1, mtry_fraction=0.8, sample_fraction=1.0
)

DEFAULT_BUDGET = 50
DEFAULT_INIT = 10
DEFAULT_CANDIDATES = 500
DEFAULT_FOLDS = 5

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class TuneError(Exception):
    pass


class TooFewRowsPerClass(TuneError):
    pass


class TooFewTrials(TuneError):
    pass


class BudgetTooSmall(TuneError):
    pass


@dataclass(frozen=True)
class ParamSpace:
    num_trees: tuple[int, int] = (50, 500)
    max_depth: tuple[int, int] = (2, 30)
    min_node_size: tuple[int, int] = (1, 50)
    mtry_fraction: tuple[float, float] = (0.1, 1.0)
    sample_fraction: tuple[float, float] = (0.5, 1.0)

    def __post_init__(self):
        for name in DIM_NAMES:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} > upper bound {hi}")
        # Bounds must themselves be legal hyperparameter values.
        lo_hp = {n: getattr(self, n)[0] for n in DIM_NAMES}
        hi_hp = {n: getattr(self, n)[1] for n in DIM_NAMES}
        rf.HyperParams(**lo_hp)
        rf.HyperParams(**hi_hp)

    def sample(self, rng: np.random.Generator) -> rf.HyperParams:
        """One uniform draw; integer dims inclusive of both bounds."""
        kwargs = {}
        for name in DIM_NAMES:
            lo, hi = getattr(self, name)
            if name in INT_DIMS:
                kwargs[name] = int(rng.integers(lo, hi + 1))
            else:
                kwargs[name] = float(rng.uniform(lo, hi))
        return rf.HyperParams(**kwargs)

    def normalize(self, hp: rf.HyperParams) -> np.ndarray:
        """Map a hyperparameter point to [0, 1]^5 in DIM_NAMES order."""
        out = np.empty(len(DIM_NAMES), dtype=np.float64)
        for i, name in enumerate(DIM_NAMES):
            lo, hi = getattr(self, name)
            v = getattr(hp, name)
            out[i] = 0.0 if hi == lo else (v - lo) / (hi - lo)
        return out

    def to_dict(self) -> dict:
        return {name: list(getattr(self, name)) for name in DIM_NAMES}


@dataclass
class Trial:
    index: int
    hp: rf.HyperParams
    objective: float
    elapsed_seconds: float
    ei: float | None = None  # None for initial-design trials


@dataclass
class TuneResult:
    best_hp: rf.HyperParams
    best_objective: float
    trials: list[Trial]
    best_so_far: list[float]
    seed: int
    space: ParamSpace

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "space": self.space.to_dict(),
            "best_objective": self.best_objective,
            "best_hyperparams": self.best_hp.to_dict(),
            "trials": [
                {
                    "index": t.index,
                    "hyperparams": t.hp.to_dict(),
                    "objective": t.objective,
                    "ei": t.ei,
                    "elapsed_seconds": t.elapsed_seconds,
                }
                for t in self.trials
            ],
            "best_so_far": self.best_so_far,
        }


# -- objectives ---------------------------------------------------------------


def stratified_folds(labels: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Class-balanced fold assignment; per-class fold sizes differ by <= 1."""
    if k < 2:
        raise ValueError("k must be >= 2")
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        if idx.shape[0] < k:
            raise TooFewRowsPerClass(
                f"class {cls} has {idx.shape[0]} rows, need at least k={k}")
        perm = rng.permutation(idx)
        for f in range(k):
            folds[f].extend(perm[f::k].tolist())
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def cv_objective(matrix: FeatureMatrix, hp: rf.HyperParams,
                 k: int = DEFAULT_FOLDS, seed: int = 0) -> float:
    """Mean misclassification error over stratified k folds."""
    if matrix.labels is None:
        raise ValueError("cv_objective needs a labeled matrix")
    rng = np.random.default_rng(seed)
    folds = stratified_folds(matrix.labels, k, rng)
    all_rows = np.arange(len(matrix))
    errors = []
    for f in range(k):
        test = folds[f]
        train_mask = np.ones(len(matrix), dtype=bool)
        train_mask[test] = False
        train_rows = all_rows[train_mask]
        sub = FeatureMatrix(
            rows=matrix.rows[train_rows],
            usernames=[matrix.usernames[i] for i in train_rows],
            labels=matrix.labels[train_rows],
            feature_spec_version=matrix.feature_spec_version,
        )
        model = rf.train(sub, hp, seed=seed)
        preds = np.array(
            [1 if model.predict_proba(matrix.rows[r]) >= 0.5 else 0 for r in test],
            dtype=np.int64,
        )
        errors.append(float(np.mean(preds != matrix.labels[test])))
    return float(np.mean(errors))


def oob_objective(matrix: FeatureMatrix, hp: rf.HyperParams, seed: int = 0) -> float:
    """Cheaper alternative objective: out-of-bag error of one forest."""
    model = rf.train(matrix, hp, seed=seed)
    return rf.oob_error(model, matrix)


# -- surrogate ----------------------------------------------------------------


@dataclass
class SurrogateModel:
    model: rf.RandomForest
    space: ParamSpace

    def predict(self, x_norm: np.ndarray) -> tuple[float, float]:
        return self.model.predict_stats(x_norm)

    def predict_hp(self, hp: rf.HyperParams) -> tuple[float, float]:
        return self.predict(self.space.normalize(hp))


def fit_surrogate(trials: list[Trial], space: ParamSpace, seed: int = 0) -> SurrogateModel:
    if len(trials) < 2:
        raise TooFewTrials(f"surrogate needs >= 2 trials, have {len(trials)}")
    X = np.array([space.normalize(t.hp) for t in trials], dtype=np.float64)
    y = np.array([t.objective for t in trials], dtype=np.float64)
    ds = rf.ArrayDataset(rows=X, labels=y)
    model = rf.train(ds, SURROGATE_HP, seed=seed, task=rf.REGRESSION)
    return SurrogateModel(model=model, space=space)


def expected_improvement(mu: float, sigma: float, best: float) -> float:
    """EI for minimization; degenerates to max(best - mu, 0) at sigma = 0."""
    if sigma <= 0.0:
        return max(best - mu, 0.0)
    z = (best - mu) / sigma
    phi_cdf = 0.5 * (1.0 + math.erf(z / SQRT2))
    phi_pdf = math.exp(-0.5 * z * z) * INV_SQRT_2PI
    return max(0.0, (best - mu) * phi_cdf + sigma * phi_pdf)


def propose(surrogate: SurrogateModel, space: ParamSpace, rng: np.random.Generator,
            best: float, n_candidates: int = DEFAULT_CANDIDATES) -> tuple[rf.HyperParams, float]:
    """Best-of-n candidate by EI; ties keep the earliest draw."""
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    best_hp = None
    best_ei = -1.0
    for _ in range(n_candidates):
        cand = space.sample(rng)
        ei = expected_improvement(*surrogate.predict(space.normalize(cand)), best)
        if ei > best_ei:
            best_hp, best_ei = cand, ei
    return best_hp, best_ei


# -- driver -------------------------------------------------------------------


def sample_initial(space: ParamSpace, n: int, rng: np.random.Generator) -> list[rf.HyperParams]:
    if n < 1:
        raise ValueError("initial design needs n >= 1")
    return [space.sample(rng) for _ in range(n)]


def minimize(objective_fn: Callable[[rf.HyperParams], float], space: ParamSpace,
             budget: int = DEFAULT_BUDGET, init: int = DEFAULT_INIT, seed: int = 0,
             n_candidates: int = DEFAULT_CANDIDATES) -> TuneResult:
    if init < 1:
        raise ValueError("init must be >= 1")
    if budget < init:
        raise BudgetTooSmall(f"budget {budget} is smaller than the initial design {init}")
    rng = np.random.default_rng(seed)
    trials: list[Trial] = []

    def run(hp: rf.HyperParams, ei: float | None):
        t0 = time.perf_counter()
        obj = objective_fn(hp)
        trials.append(Trial(
            index=len(trials), hp=hp, objective=float(obj),
            elapsed_seconds=time.perf_counter() - t0, ei=ei,
        ))

    for hp in sample_initial(space, init, rng):
        run(hp, None)
    while len(trials) < budget:
        surrogate = fit_surrogate(trials, space, seed=seed)
        best = min(t.objective for t in trials)
        hp, ei = propose(surrogate, space, rng, best, n_candidates)
        run(hp, ei)

    objectives = [t.objective for t in trials]
    best_idx = int(np.argmin(objectives))  # earliest trial wins ties
    best_so_far = []
    running = math.inf
    for obj in objectives:
        running = min(running, obj)
        best_so_far.append(running)
    return TuneResult(
        best_hp=trials[best_idx].hp,
        best_objective=objectives[best_idx],
        trials=trials,
        best_so_far=best_so_far,
        seed=seed,
        space=space,
    )


def tune(matrix: FeatureMatrix, space: ParamSpace | None = None,
         budget: int = DEFAULT_BUDGET, init: int = DEFAULT_INIT,
         k: int = DEFAULT_FOLDS, seed: int = 0,
         n_candidates: int = DEFAULT_CANDIDATES, objective: str = "cv") -> TuneResult:
    """Tune the detection forest on a labeled feature matrix."""
    space = space or ParamSpace()
    if objective == "cv":
        objective_fn = lambda hp: cv_objective(matrix, hp, k=k, seed=seed)
    elif objective == "oob":
        objective_fn = lambda hp: oob_objective(matrix, hp, seed=seed)
    else:
        raise ValueError(f"unknown objective {objective!r}; use 'cv' or 'oob'")
    return minimize(objective_fn, space, budget=budget, init=init, seed=seed,
                    n_candidates=n_candidates)


# -- exports ------------------------------------------------------------------


def trials_to_csv(result: TuneResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", *DIM_NAMES, "objective", "ei", "best_so_far", "elapsed_seconds"])
        for t, bsf in zip(result.trials, result.best_so_far):
            writer.writerow([
                t.index,
                *[getattr(t.hp, name) for name in DIM_NAMES],
                f"{t.objective:.6f}",
                "" if t.ei is None else f"{t.ei:.6f}",
                f"{bsf:.6f}",
                f"{t.elapsed_seconds:.3f}",
            ])


def result_to_json(result: TuneResult, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(result.to_json_dict(), indent=2, sort_keys=True), encoding="utf-8")
