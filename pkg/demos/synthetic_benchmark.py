"""
Synthetic benchmark: composite score versus a small transformer
===============================================================

A scaled-down run that finishes in seconds.
"""

from nvi_engine import stats, synth
from nvi_engine.model.train import TrainConfig, instability_score, predict, train
from nvi_engine.model.transformer import ModelConfig, param_count

ds = synth.gen_dataset(300, seed=42)
print("splits:", {k: int(v.size) for k, v in ds.splits.items()})

# the composite needs no training: lower score means more instability
_, y_test, _ = ds.arrays("test")
print("composite AUC on test: %.3f" % stats.roc_auc(-ds.composite_scores("test"), y_test))

# 60 s at 100 Hz, cut into 60 patches of one second
cfg = ModelConfig(d_model=32, heads=2, layers=1, ffn_dim=64, seq_len=60, patch=100, head_dim=16, seed=0)
print(param_count(cfg), "parameters")
res = train(ds.model_arrays("train"), ds.model_arrays("val"), cfg, TrainConfig(max_epochs=10, patience=5))
print("best val AUC %.3f at epoch %d" % (res.best_val_auc, res.best_epoch))

X, y, _ = ds.model_arrays("test")
_, logit = predict(res.model, X)
rep = stats.evaluate(instability_score(logit), y, iters=500)
print("transformer test AUC %.3f [%.3f, %.3f]" % (rep.auc, rep.auc_ci_low, rep.auc_ci_high))
