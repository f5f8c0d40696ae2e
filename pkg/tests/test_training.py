from __future__ import annotations

import math

import numpy as np
import pytest

from qexec import model as M
from qexec import training as T
from qexec.dataset import LabeledSample, label_samples
from qexec.synthetic import make_corpus
from qexec.training import (
    BudgetExceeded,
    FeatureScaler,
    Predictor,
    TrainConfig,
    fine_tune_cv,
    grid_points,
    grid_search,
    train,
)

SMALL = M.ModelConfig(gt_hidden=16, global_fc_dims=(16, 16), head_dims=(32, 16, 8, 1))


def corpus_samples(n, seed=5, backends=("a",)):
    c = make_corpus(n, backends=backends, seed=seed, qubits=(2, 4), gates=(2, 8))
    return label_samples(c.circuits, c.calibrations, c.records)


@pytest.fixture(scope="module")
def small_samples():
    return corpus_samples(40)


def test_linear_target_learned():
    samples = corpus_samples(120)
    for s in samples:
        pooled = s.graph.node_features.mean(axis=0)
        s.target_seconds = float(np.exp(0.5 * pooled[0] + 0.3 * pooled[1] + 0.02 * pooled[177] + 0.001 * pooled[173]))
    _, rep = train(samples[:108], samples[108:], TrainConfig(epochs=500, batch_size=32), SMALL)
    assert rep.best_test_mse < 1e-3


def test_report_tracks_minimum(small_samples):
    _, rep = train(small_samples[:30], small_samples[30:], TrainConfig(epochs=15, batch_size=8), SMALL)
    assert len(rep.test_mse) == 16 and len(rep.train_loss) == 16 and math.isnan(rep.train_loss[0])
    assert rep.best_test_mse == min(rep.test_mse)
    assert rep.test_mse[rep.best_epoch] == rep.best_test_mse
    lines = rep.to_text().splitlines()
    assert lines[1] == "epoch,train_loss,test_mse" and len(lines) == 18


def test_returns_best_snapshot_not_last(small_samples):
    cfg = TrainConfig(epochs=20, batch_size=8, learning_rate=0.05)
    pred, rep = train(small_samples[:30], small_samples[30:], cfg, SMALL)
    y = np.log([s.target_seconds for s in small_samples[30:]])
    mse = float(np.mean((pred.predict_model_space(small_samples[30:]) - y) ** 2))
    assert mse == pytest.approx(rep.best_test_mse, rel=1e-12)


def test_deterministic(small_samples):
    cfg = TrainConfig(epochs=5, batch_size=8, seed=3)
    p1, r1 = train(small_samples[:30], small_samples[30:], cfg, SMALL)
    p2, r2 = train(small_samples[:30], small_samples[30:], cfg, SMALL)
    assert r1.to_text() == r2.to_text()
    assert all(np.array_equal(p1.params[k], p2.params[k]) for k in p1.params)


def test_no_improvement_returns_init(small_samples):
    tr, te = small_samples[:30], small_samples[30:]
    init, _ = train(tr, te, TrainConfig(epochs=2, batch_size=8), SMALL)
    # targets equal to the model's own output: MSE 0 at epoch 0 cannot be beaten
    perfect = [LabeledSample(s.circuit_id, s.backend_id, s.global_vec, s.graph, float(t))
               for s, t in zip(tr + te, init.predict_seconds(tr + te))]
    out, rep = train(perfect[:30], perfect[30:], TrainConfig(epochs=5, batch_size=8), init=init)
    assert rep.best_epoch == 0
    assert all(np.array_equal(out.params[k], init.params[k]) for k in init.params)


def test_one_sample_capacity():
    (s,) = corpus_samples(1)
    _, rep = train([s], [s], TrainConfig(epochs=500, batch_size=1), SMALL)
    assert rep.best_test_mse < 1e-6 and min(rep.train_loss[1:]) < 1e-6


def test_split_derived_when_no_test_set(small_samples):
    _, rep = train(small_samples, None, TrainConfig(epochs=1, batch_size=16), SMALL)
    assert rep.best_eval is None or rep.best_eval.n == 4


def test_divergence_reported(small_samples):
    cfg = TrainConfig(epochs=3, batch_size=8, learning_rate=1e30)
    with pytest.raises(T.TrainingDiverged) as exc:
        train(small_samples[:30], small_samples[30:], cfg, SMALL)
    assert exc.value.report.test_mse


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(target_space="hours")


def test_predictor_save_load(tmp_path, small_samples):
    pred, _ = train(small_samples[:30], small_samples[30:], TrainConfig(epochs=1, batch_size=16), SMALL)
    pred.save(tmp_path / "m.qxw")
    back = Predictor.load(tmp_path / "m.qxw")
    np.testing.assert_array_equal(back.predict_seconds(small_samples), pred.predict_seconds(small_samples))
    np.testing.assert_array_equal(back.global_mean, np.mean([s.global_vec for s in small_samples[:30]], axis=0))
    assert all(p.predicted_time > 0 for p in back.predict(small_samples))


def test_scaler_fit_on_training_only(small_samples):
    sc = FeatureScaler.fit(small_samples[:10])
    g = np.stack([s.global_vec for s in small_samples[:10]])
    np.testing.assert_array_equal(sc.global_ranges.mins, g.min(axis=0))
    back = FeatureScaler.from_aux(sc.to_aux())
    np.testing.assert_array_equal(back.node_ranges.maxs, sc.node_ranges.maxs)


# -- cross-validation ---------------------------------------------------------------------------


def test_cv_leave_one_out(small_samples):
    pre, _ = train(small_samples[:30], small_samples[30:], TrainConfig(epochs=1, batch_size=16), SMALL)
    cv = fine_tune_cv(pre, small_samples[:12], k=12, config=TrainConfig(epochs=1, batch_size=16))
    assert len(cv.folds) == 12 and all(len(f.test_ids) == 1 for f in cv.folds)
    assert cv.mean_mse == pytest.approx(sum(f.best_mse for f in cv.folds) / 12, rel=1e-15)
    assert all(math.isnan(f.r_squared) for f in cv.folds)


def test_cv_ten_folds_of_34():
    samples = corpus_samples(340, seed=9)
    pre, _ = train(samples[:30], samples[30:40], TrainConfig(epochs=1, batch_size=64), SMALL)
    cv = fine_tune_cv(pre, samples, k=10, config=TrainConfig(epochs=1, batch_size=128))
    assert [len(f.test_ids) for f in cv.folds] == [34] * 10
    assert len({i for f in cv.folds for i in f.test_ids}) == 340
    assert cv.mean_r_squared == pytest.approx(np.mean([f.r_squared for f in cv.folds]), rel=1e-15)
    last = cv.to_text().splitlines()[-1].split(",")
    assert last[0] == "mean" and float(last[2]) == cv.mean_mse


def test_cv_starts_every_fold_from_pretrained(small_samples, monkeypatch):
    pre, _ = train(small_samples[:30], small_samples[30:], TrainConfig(epochs=1, batch_size=16), SMALL)
    seen = []
    real = T.train

    def spy(tr, te, config, model_config=M.ModelConfig(), init=None):
        seen.append(init)
        return real(tr, te, config, model_config, init)

    monkeypatch.setattr(T, "train", spy)
    fine_tune_cv(pre, small_samples[:20], k=4, config=TrainConfig(epochs=1, batch_size=16))
    assert len(seen) == 4 and all(s is pre for s in seen)


def test_cv_fold_failure_propagates(small_samples):
    pre, _ = train(small_samples[:30], small_samples[30:], TrainConfig(epochs=1, batch_size=16), SMALL)
    with pytest.raises(T.FoldFailed):
        fine_tune_cv(pre, small_samples[:20], k=4, config=TrainConfig(epochs=2, batch_size=4, learning_rate=1e30))


# -- grid search ------------------------------------------------------------------------------


def test_grid_points_enumeration_order():
    pts = grid_points({"learning_rate": [1e-2, 1e-3], "batch_size": [8, 16]}, TrainConfig(epochs=3))
    assert [(p.learning_rate, p.batch_size) for p in pts] == [(1e-2, 8), (1e-2, 16), (1e-3, 8), (1e-3, 16)]
    with pytest.raises(ValueError):
        grid_points({"momentum": [1]}, TrainConfig())
    with pytest.raises(ValueError):
        grid_points({}, TrainConfig())


def _fake_train(scores):
    def fake(tr, te, config, model_config=None, init=None):
        rep = T.TrainReport(best_test_mse=scores[config.learning_rate])
        return None, rep

    return fake


def test_grid_argmin_and_tie(monkeypatch):
    monkeypatch.setattr(T, "train", _fake_train({1e-2: 0.5, 1e-3: 0.2}))
    best, res = grid_search({"learning_rate": [1e-2, 1e-3]}, [], [], budget_epochs=10, base=TrainConfig(epochs=5))
    assert best.learning_rate == 1e-3 and len(res) == 2
    monkeypatch.setattr(T, "train", _fake_train({1e-2: 0.2, 1e-3: 0.2}))
    best, _ = grid_search({"learning_rate": [1e-2, 1e-3]}, [], [], budget_epochs=10, base=TrainConfig(epochs=5))
    assert best.learning_rate == 1e-2


def test_grid_singleton(small_samples):
    best, res = grid_search({"epochs": [2]}, small_samples[:30], small_samples[30:], budget_epochs=2,
                            base=TrainConfig(batch_size=16), model_config=SMALL)
    assert best.epochs == 2 and len(res) == 1


def test_grid_budget_refused(monkeypatch):
    called = []
    monkeypatch.setattr(T, "train", lambda *a, **k: called.append(1))
    with pytest.raises(BudgetExceeded):
        grid_search({"learning_rate": [1e-2, 1e-3]}, [], [], budget_epochs=999, base=TrainConfig())
    assert not called
