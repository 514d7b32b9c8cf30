"""
Training the scan classifier at desk scale
==========================================

Ten toy scans of 8 to 16 slices each. COVID scans carry small bright lesions
inside the lung fields, NON_COVID scans do not. The classifier is configured
with a padded length of 16 and 64x64 inputs so it trains on a CPU in seconds,
then it is scored on ten held-out scans.
"""

import numpy as np
import torch

from lungscan.data import Label
from lungscan.metrics import ConfusionCounts, classification_report
from lungscan.racnet import RACNetConfig, TrainConfig, build_model, fit, predict, prepare_scan, train_step
from lungscan.synthetic import make_dataset

torch.set_num_threads(1)

cfg = RACNetConfig(t=16, rnn_units=32, dense_units=32, feature_dim=16, input_h=64, input_w=64, cnn_widths=(8, 16))
train = [prepare_scan(v, m, cfg) for v, m in make_dataset(10, 16, seed=1, prefix="tr")]
test = [prepare_scan(v, m, cfg) for v, m in make_dataset(10, 16, seed=2, prefix="te")]
print("train lengths", [s.slices.shape[0] for s in train])
print("aligned plan for the first scan", train[0].plan.selected)

model = build_model(cfg, seed=0)
losses = fit(model, train, TrainConfig(seed=0, batch_size=5, lr=1e-4, steps=200))
print(f"loss: first 10 steps {np.mean(losses[:10]):.4f}, last 10 steps {np.mean(losses[-10:]):.4f}")

probs = predict(model, test)
y_true = [s.label for s in test]
y_pred = [Label(int(np.argmax(p))) for p in probs]
report = classification_report(ConfusionCounts.from_predictions(y_true, y_pred, list(Label)))
print("held-out macro F1", report["macro_f1"])
for name, row in report["classes"].items():
    print(f"  {name:9s} P {row['precision']:6.2f}  S {row['sensitivity']:6.2f}  F1 {row['f1']:6.2f}")

# weights tied to unused positions do not move: train one more step on two short scans
W = model.dense.weight
frozen = model.frozen_columns([s.plan for s in train[:2]])
before = W[:, frozen].detach().clone()

opt = torch.optim.Adam(model.parameters(), lr=1e-4)
train_step(model, opt, train[:2])
print("frozen columns", int(frozen.sum()), "unchanged:", torch.equal(W[:, frozen], before))
