"""
Predicted PC scores shrink toward zero
======================================

Scores of new observations are systematically smaller than the scores of
the data the PCA was fitted on. Dividing by the estimated shrinkage factor
puts them back on the training scale.
"""

import numpy as np
from hdspectra import adjust_scores, estimate_spikes, fit_pca, predict_scores, sample_scores

rng = np.random.default_rng(11)
p, n = 1250, 250
lam = np.concatenate([[60.0], np.linspace(4.0, 0.5, p - 1)])

X = rng.standard_normal((n, p)) * np.sqrt(lam)
X_new = rng.standard_normal((n, p)) * np.sqrt(lam)

model = fit_pca(X, 1)
train = sample_scores(model, X).scores[:, 0]
pred = predict_scores(model, X_new)

rows = []
for method in ("sp", "d"):
    rho = estimate_spikes(model.spectrum(), 1, method)[0].shrinkage
    adj = adjust_scores(pred, [rho]).scores[:, 0]
    rows.append((method, rho, np.std(adj) / np.std(train)))

print(f"sd(predicted) / sd(training): {np.std(pred.scores[:, 0]) / np.std(train):.3f}")
for method, rho, ratio in rows:
    print(f"  after dividing by rho-hat ({method}, {rho:.3f}): {ratio:.3f}")
