"""Training loop, fine-tuning cross-validation and grid search."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import model as M
from .analysis import EvaluationReport, evaluate
from .dataset import LOG_SECONDS, TARGET_SPACES, from_model_space, kfold, make_rng, split, to_model_space
from .features import MinMaxRanges, fit_minmax

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    target_space: str = LOG_SECONDS

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.target_space not in TARGET_SPACES:
            raise ValueError(f"target_space must be one of {TARGET_SPACES}")


class TrainingDiverged(RuntimeError):
    def __init__(self, msg: str, report: "TrainReport"):
        super().__init__(msg)
        self.report = report


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)  # index 0 is NaN: no update before epoch 1
    test_mse: list[float] = field(default_factory=list)  # index 0 evaluates the initial parameters
    best_epoch: int = 0
    best_test_mse: float = math.inf
    best_eval: EvaluationReport | None = None

    def to_text(self) -> str:
        lines = [f"# best_epoch={self.best_epoch} best_test_mse={self.best_test_mse!r}", "epoch,train_loss,test_mse"]
        lines += [f"{i},{tl!r},{te!r}" for i, (tl, te) in enumerate(zip(self.train_loss, self.test_mse))]
        return "\n".join(lines) + "\n"


class Adam:
    def __init__(self, params: M.Params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = M.zeros_like_params(params)
        self.v = M.zeros_like_params(params)
        self.t = 0

    def step(self, params: M.Params, grads: M.Params) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- feature scaling + predictor ------------------------------------------------------------


@dataclass(frozen=True)
class FeatureScaler:
    """Min-max ranges fitted on a training set: one for globals, one for node rows."""

    global_ranges: MinMaxRanges
    node_ranges: MinMaxRanges

    @classmethod
    def fit(cls, samples: Sequence) -> "FeatureScaler":
        g = np.stack([s.global_vec for s in samples])
        nodes = np.concatenate([s.graph.node_features for s in samples])
        return cls(fit_minmax(g), fit_minmax(nodes))

    def to_aux(self) -> dict:
        return {
            "scaler/global_min": self.global_ranges.mins,
            "scaler/global_max": self.global_ranges.maxs,
            "scaler/node_min": self.node_ranges.mins,
            "scaler/node_max": self.node_ranges.maxs,
        }

    @classmethod
    def from_aux(cls, aux: dict) -> "FeatureScaler":
        return cls(
            MinMaxRanges(aux["scaler/global_min"], aux["scaler/global_max"]),
            MinMaxRanges(aux["scaler/node_min"], aux["scaler/node_max"]),
        )


@dataclass
class _Prepared:
    x: np.ndarray
    edges: np.ndarray
    table: tuple
    g: np.ndarray
    y: float


def _prepare(samples: Sequence, scaler: FeatureScaler, space: str, labeled: bool = True) -> list[_Prepared]:
    out = []
    for s in samples:
        x = scaler.node_ranges.apply(s.graph.node_features)
        edges = s.graph.edges
        y = float(to_model_space(s.target_seconds, space)) if labeled else math.nan
        out.append(_Prepared(x, edges, M.neighbour_table(len(x), edges), scaler.global_ranges.apply(s.global_vec), y))
    return out


def _pack(items: Sequence[_Prepared]) -> M.GraphBatch:
    return M.pack(
        [(p.x, p.edges) for p in items],
        np.stack([p.g for p in items]),
        y=np.array([p.y for p in items]),
        tables=[p.table for p in items],
    )


def _predict_prepared(params, config, items: Sequence[_Prepared], chunk: int = 512) -> np.ndarray:
    out = [M.predict_batch(params, config, _pack(items[i : i + chunk])) for i in range(0, len(items), chunk)]
    return np.concatenate(out) if out else np.empty(0)


@dataclass
class Prediction:
    circuit_id: str
    backend_id: str
    predicted_time: float


@dataclass
class Predictor:
    """Trained parameters together with the scaling they expect."""

    config: M.ModelConfig
    params: M.Params
    scaler: FeatureScaler
    target_space: str = LOG_SECONDS
    global_mean: np.ndarray | None = None  # raw training-set mean of the global rows

    def predict_model_space(self, samples: Sequence) -> np.ndarray:
        return _predict_prepared(self.params, self.config, _prepare(samples, self.scaler, self.target_space, False))

    def predict_seconds(self, samples: Sequence) -> np.ndarray:
        return from_model_space(self.predict_model_space(samples), self.target_space)

    def predict(self, samples: Sequence) -> list[Prediction]:
        secs = self.predict_seconds(samples)
        return [Prediction(s.circuit_id, s.backend_id, float(t)) for s, t in zip(samples, secs)]

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        m = dict(meta or {})
        m["target_space"] = self.target_space
        aux = self.scaler.to_aux()
        if self.global_mean is not None:
            aux["baseline/global_mean"] = self.global_mean
        M.save_params(self.params, self.config, path, aux=aux, meta=m)

    @classmethod
    def load(cls, path: str | Path, expected: M.ModelConfig | None = None) -> "Predictor":
        w = M.load_params(path, expected)
        return cls(w.config, w.params, FeatureScaler.from_aux(w.aux), w.meta.get("target_space", LOG_SECONDS),
                   w.aux.get("baseline/global_mean"))


# -- training ---------------------------------------------------------------------------------


def train(
    train_samples: Sequence,
    test_samples: Sequence | None = None,
    config: TrainConfig = TrainConfig(),
    model_config: M.ModelConfig = M.ModelConfig(),
    init: Predictor | None = None,
) -> tuple[Predictor, TrainReport]:
    """Mini-batch Adam on MSE for ``config.epochs`` epochs, keeping the best test-MSE snapshot.

    When ``test_samples`` is None the samples are split 9:1 with ``config.seed``.
    Starting from ``init`` reuses its parameters and feature scaling.
    """
    if test_samples is None:
        train_samples, test_samples = split(list(train_samples), 0.9, config.seed)
    if not train_samples or not test_samples:
        raise ValueError("need non-empty train and test sets")
    if init is not None:
        model_config = init.config
        scaler = init.scaler
        params = M.copy_params(init.params)
        global_mean = init.global_mean
    else:
        scaler = FeatureScaler.fit(train_samples)
        params = M.init_params(model_config)
        global_mean = np.mean([s.global_vec for s in train_samples], axis=0)
    space = config.target_space
    tr = _prepare(train_samples, scaler, space)
    te = _prepare(test_samples, scaler, space)
    y_te = np.array([p.y for p in te])

    def test_mse(p):
        return float(np.mean((_predict_prepared(p, model_config, te) - y_te) ** 2))

    report = TrainReport()
    report.train_loss.append(math.nan)
    report.test_mse.append(test_mse(params))
    report.best_test_mse = report.test_mse[0]
    best = M.copy_params(params)

    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    rng = make_rng(config.seed)
    n = len(tr)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = _pack([tr[i] for i in idx])
            try:
                loss, grads = M.loss_and_grad(params, model_config, batch)
            except M.ModelError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", report) from exc
            opt.step(params, grads)
            total += loss * len(idx)
        report.train_loss.append(total / n)
        mse = test_mse(params)
        if not math.isfinite(mse):
            raise TrainingDiverged(f"epoch {epoch}: non-finite test MSE", report)
        report.test_mse.append(mse)
        if mse < report.best_test_mse:
            report.best_test_mse = mse
            report.best_epoch = epoch
            best = M.copy_params(params)
        if epoch % 50 == 0:
            log.debug("epoch %d train %.4g test %.4g", epoch, report.train_loss[-1], mse)

    pred = _predict_prepared(best, model_config, te)
    if len(y_te) >= 2 and np.var(y_te) > 0:
        report.best_eval = evaluate(y_te, pred, space=space)
    return Predictor(model_config, best, scaler, space, global_mean), report


# -- fine-tuning cross-validation ---------------------------------------------------------------


@dataclass
class FoldResult:
    fold: int
    test_ids: list[str]
    best_epoch: int
    best_mse: float
    r_squared: float
    nmse: float


@dataclass
class CVReport:
    folds: list[FoldResult]

    @property
    def mean_mse(self) -> float:
        return float(np.mean([f.best_mse for f in self.folds]))

    @property
    def mean_r_squared(self) -> float:
        return float(np.mean([f.r_squared for f in self.folds]))

    @property
    def mean_nmse(self) -> float:
        return float(np.mean([f.nmse for f in self.folds]))

    def to_text(self) -> str:
        lines = ["fold,best_epoch,best_mse,r_squared,nmse,n_test"]
        lines += [
            f"{f.fold},{f.best_epoch},{f.best_mse!r},{f.r_squared!r},{f.nmse!r},{len(f.test_ids)}" for f in self.folds
        ]
        lines.append(f"mean,,{self.mean_mse!r},{self.mean_r_squared!r},{self.mean_nmse!r},")
        return "\n".join(lines) + "\n"


class FoldFailed(RuntimeError):
    pass


def fine_tune_cv(pretrained: Predictor, samples: Sequence, k: int = 10, config: TrainConfig = TrainConfig()) -> CVReport:
    """k-fold fine-tuning from ``pretrained``; each fold keeps its lowest test MSE.

    Every fold starts from the same pretrained weights and scaling. R² and NMSE are taken
    at the best-MSE snapshot of each fold; when a fold's test targets have no spread
    they are NaN.
    """
    results = []
    for i, (tr, te) in enumerate(kfold(list(samples), k, config.seed)):
        try:
            pred, rep = train(tr, te, config, init=pretrained)
        except TrainingDiverged as exc:
            raise FoldFailed(f"fold {i}: {exc}") from exc
        ev = rep.best_eval
        results.append(
            FoldResult(
                i,
                [s.sample_id for s in te],
                rep.best_epoch,
                rep.best_test_mse,
                ev.r_squared if ev else math.nan,
                ev.nmse if ev else math.nan,
            )
        )
    return CVReport(results)


# -- grid search ----------------------------------------------------------------------------------


@dataclass
class GridResult:
    config: TrainConfig
    best_test_mse: float


class BudgetExceeded(ValueError):
    pass


def grid_points(grid: dict[str, Iterable], base: TrainConfig) -> list[TrainConfig]:
    if not grid:
        raise ValueError("empty grid")
    names = list(grid)
    valid = set(asdict(base))
    for name in names:
        if name not in valid:
            raise ValueError(f"{name!r} is not a TrainConfig field")
    values = [list(grid[n]) for n in names]
    if any(not v for v in values):
        raise ValueError("every grid axis needs at least one value")
    return [replace(base, **dict(zip(names, combo))) for combo in itertools.product(*values)]


def grid_search(
    grid: dict[str, Iterable],
    train_samples: Sequence,
    test_samples: Sequence,
    budget_epochs: int,
    base: TrainConfig = TrainConfig(),
    model_config: M.ModelConfig = M.ModelConfig(),
) -> tuple[TrainConfig, list[GridResult]]:
    """Exhaustive search by held-out MSE; ties go to the earlier grid point.

    ``budget_epochs`` caps the summed epochs of all runs; an over-budget grid is refused
    before any training starts.
    """
    points = grid_points(grid, base)
    cost = sum(p.epochs for p in points)
    if cost > budget_epochs:
        raise BudgetExceeded(f"grid needs {cost} epochs, budget is {budget_epochs}")
    results = []
    for p in points:
        _, rep = train(train_samples, test_samples, p, model_config)
        results.append(GridResult(p, rep.best_test_mse))
    best = min(range(len(results)), key=lambda i: (results[i].best_test_mse, i))
    return results[best].config, results
