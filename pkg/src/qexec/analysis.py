"""Evaluation metrics, rank correlation and Shapley feature importance."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .model import graph_embedding, head_predict, pack


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvaluationReport:
    mse: float
    r_squared: float
    nmse: float
    n: int
    space: str = "log-seconds"


def evaluate(actual, predicted, space: str = "log-seconds") -> EvaluationReport:
    """MSE, R² and NMSE over the same sample set and mean."""
    y = np.asarray(actual, dtype=np.float64)
    yhat = np.asarray(predicted, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValueError("actual and predicted must be 1-d and equally long")
    if len(y) < 2:
        raise UndefinedMetricError("need at least two samples")
    resid = y - yhat
    dev = y - y.mean()
    sse = float(resid @ resid)
    sst = float(dev @ dev)
    if sst == 0.0:
        raise UndefinedMetricError("actual values have zero variance; R² and NMSE are undefined")
    n = len(y)
    # NMSE = MSE / var(y) = SSE / SST; deriving R² from the same ratio keeps the identity tight
    nmse = sse / sst
    return EvaluationReport(sse / n, 1.0 - nmse, nmse, n, space)


def spearman(x, y) -> tuple[float, float]:
    """Spearman's rho on average ranks with a two-sided t-approximation p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and equally long")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 pairs")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedMetricError("rank correlation is undefined for constant input")
    rx = stats.rankdata(x)
    ry = stats.rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    rho = float(rx @ ry / math.sqrt((rx @ rx) * (ry @ ry)))
    rho = min(1.0, max(-1.0, rho))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * stats.t.sf(abs(t), n - 2))


# -- Shapley values --------------------------------------------------------------------------

ValueFn = Callable[[np.ndarray], np.ndarray]  # (m, d) feature rows -> (m,) predictions


def exact_shapley(f: ValueFn, x: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    """Exact interventional Shapley values by subset enumeration.

    Features where ``x`` equals ``baseline`` cannot change the output and get 0;
    only the remaining ones are enumerated, so keep them to a dozen or so.
    """
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    active = np.flatnonzero(x != baseline)
    d = len(active)
    phi = np.zeros(len(x))
    if d == 0:
        return phi
    masks = np.array(list(itertools.product([0, 1], repeat=d)), dtype=bool)
    rows = np.repeat(baseline[None, :], len(masks), axis=0)
    for j, feat in enumerate(active):
        rows[masks[:, j], feat] = x[feat]
    values = np.asarray(f(rows), dtype=np.float64)
    index = {tuple(m): i for i, m in enumerate(masks)}
    fact = [math.factorial(i) for i in range(d + 1)]
    for j, feat in enumerate(active):
        total = 0.0
        for i, m in enumerate(masks):
            if m[j]:
                continue
            with_j = list(m)
            with_j[j] = True
            s = int(m.sum())
            weight = fact[s] * fact[d - s - 1] / fact[d]
            total += weight * (values[index[tuple(with_j)]] - values[i])
        phi[feat] = total
    return phi


def permutation_shapley(
    f: ValueFn, x: np.ndarray, baseline: np.ndarray, n_permutations: int, rng: np.random.Generator
) -> np.ndarray:
    """Monte Carlo Shapley values from random feature orderings.

    Each ordering's marginal contributions telescope to f(x) - f(baseline), so the
    estimate satisfies efficiency up to rounding for any number of permutations.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    active = np.flatnonzero(x != baseline)
    d = len(active)
    phi = np.zeros(len(x))
    if d == 0:
        return phi
    for _ in range(n_permutations):
        order = active[rng.permutation(d)]
        rows = np.repeat(baseline[None, :], d + 1, axis=0)
        for step, feat in enumerate(order, start=1):
            rows[step:, feat] = x[feat]
        values = np.asarray(f(rows), dtype=np.float64)
        phi[order] += np.diff(values)
    return phi / n_permutations


@dataclass
class ImportanceReport:
    feature_names: list[str]
    mean_abs: np.ndarray
    attributions: np.ndarray  # (samples, features)
    baseline_value: np.ndarray  # f(baseline) per sample

    @property
    def ranking(self) -> list[str]:
        order = sorted(range(len(self.feature_names)), key=lambda i: (-self.mean_abs[i], i))
        return [self.feature_names[i] for i in order]

    def top(self, k: int = 10) -> list[tuple[str, float]]:
        idx = {n: i for i, n in enumerate(self.feature_names)}
        return [(n, float(self.mean_abs[idx[n]])) for n in self.ranking[:k]]

    def to_text(self) -> str:
        idx = {n: i for i, n in enumerate(self.feature_names)}
        lines = ["rank,feature,mean_abs_shap"]
        lines += [f"{r + 1},{n},{self.mean_abs[idx[n]]!r}" for r, n in enumerate(self.ranking)]
        return "\n".join(lines) + "\n"


def shapley_importance(
    value_fns: Sequence[ValueFn],
    rows: np.ndarray,
    baseline: np.ndarray,
    feature_names: Sequence[str],
    n_permutations: int = 100,
    seed: int = 0,
    exact: bool = False,
) -> ImportanceReport:
    """Mean |Shapley value| per feature over samples.

    ``value_fns[i]`` evaluates sample i with its feature row replaced; sample i draws
    permutations from ``PCG64(seed)`` spawned with key i, so samples are independent
    of evaluation order.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if len(rows) == 0:
        raise ValueError("need at least one sample")
    attributions = np.zeros_like(rows)
    base_vals = np.zeros(len(rows))
    for i, (f, x) in enumerate(zip(value_fns, rows)):
        if exact:
            attributions[i] = exact_shapley(f, x, baseline)
        else:
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,))))
            attributions[i] = permutation_shapley(f, x, baseline, n_permutations, rng)
        base_vals[i] = float(np.asarray(f(baseline[None, :]))[0])
    return ImportanceReport(list(feature_names), np.abs(attributions).mean(axis=0), attributions, base_vals)


def global_value_fns(predictor, samples: Sequence) -> tuple[list[ValueFn], np.ndarray]:
    """Per-sample functions of the scaled global row, graph branch held fixed."""
    scaler = predictor.scaler
    batch = pack(
        [(scaler.node_ranges.apply(s.graph.node_features), s.graph.edges) for s in samples],
        np.stack([scaler.global_ranges.apply(s.global_vec) for s in samples]),
    )
    pooled = graph_embedding(predictor.params, predictor.config, batch)

    def make(p):
        return lambda g: head_predict(predictor.params, predictor.config, np.repeat(p[None, :], len(g), axis=0), g)

    return [make(p) for p in pooled], batch.g


def shap_importance(predictor, samples: Sequence, baseline_raw, feature_names: Sequence[str],
                    n_permutations: int = 100, seed: int = 0, exact: bool = False) -> ImportanceReport:
    """Shapley importance of the global features of a trained predictor.

    The graph branch of each sample is held fixed and the baseline is given in raw
    feature units (typically the training-set mean). Attributions are in the
    predictor's modelling space.
    """
    fns, rows = global_value_fns(predictor, samples)
    baseline = predictor.scaler.global_ranges.apply(np.asarray(baseline_raw, dtype=np.float64))
    return shapley_importance(fns, rows, baseline, feature_names, n_permutations, seed, exact)
