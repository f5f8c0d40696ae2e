"""
Pretrain, fine-tune and explain
===============================

Synthetic timings stand in for simulator and hardware measurements. A model is
pretrained on one backend, fine-tuned on a few samples from another, and its
global features are ranked by mean absolute Shapley value.

Runs in well under a minute with the short schedules below; the acceptance suite
uses 500 pretraining epochs.
"""

# %%
import numpy as np

from qexec import TrainConfig, fine_tune_cv, label_samples, split, train
from qexec.analysis import evaluate, shap_importance
from qexec.circuit import default_global_registry
from qexec.features import global_feature_names
from qexec.synthetic import make_corpus

corpus = make_corpus(260, seed=1, qubits=(2, 5), gates=(2, 10))
alpha = [r for r in corpus.records if r.backend_id == "fake_alpha"][:200]
beta = [r for r in corpus.records if r.backend_id == "fake_beta"][200:]
pre = label_samples(corpus.circuits, corpus.calibrations, alpha)
scarce = label_samples(corpus.circuits, corpus.calibrations, beta)
print(len(pre), "pretraining samples,", len(scarce), "fine-tuning samples")

# %%
# Targets are modelled in log-seconds. The returned predictor is the snapshot
# with the lowest held-out error, not the last epoch.
tr, te = split(pre, 0.9, seed=0)
predictor, report = train(tr, te, TrainConfig(epochs=60, batch_size=64))
print(f"best epoch {report.best_epoch}, held-out R^2 {report.best_eval.r_squared:.3f}")

# %%
# Cross-validated fine-tuning; every fold starts from the pretrained weights.
cv = fine_tune_cv(predictor, scarce, k=5, config=TrainConfig(epochs=30, batch_size=64))
print(f"fine-tune mean fold R^2 {cv.mean_r_squared:.3f}")

# %%
# Without fine-tuning, how well does the pretrained model transfer?
y = np.log([s.target_seconds for s in scarce])
print(f"zero-shot R^2 on the other backend {evaluate(y, predictor.predict_model_space(scarce)).r_squared:.3f}")

# %%
# Shapley importance of the global features, baseline = training-set mean.
names = global_feature_names(default_global_registry())
imp = shap_importance(predictor, te, predictor.global_mean, names, n_permutations=20, seed=0)
for name, value in imp.top(10):
    print(f"{name:24s} {value:.4f}")
