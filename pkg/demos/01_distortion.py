"""
How sample eigenvalues overshoot, and how to undo it
====================================================

A single data set with two population spikes sitting on a bulk that is far
from flat. We compare the three estimators on it.
"""

import numpy as np
from hdspectra import (DiscreteDistribution, PsiModel, SampleSpectrum, estimate_all,
                       fit_psi_model)

rng = np.random.default_rng(3)
p, n = 2000, 400

# bulk: variances spread evenly between 0.5 and 8
bulk = np.linspace(8.0, 0.5, p - 2)
lam = np.concatenate([[60.0, 35.0], bulk])

# population side: where should the sample spikes land?
truth = PsiModel(DiscreteDistribution.from_atoms(bulk), p / n)
print("S_psi (distant-spike boundary):", round(truth.s_psi, 3))
for l in lam[:2]:
    print(f"  lambda = {l:6.1f}  ->  psi(lambda) = {truth(l):8.3f}")

# draw the data and look at the top of the sample spectrum
X = rng.standard_normal((n, p)) * np.sqrt(lam)
X -= X.mean(axis=0)
d = np.linalg.eigvalsh(X @ X.T / n)[::-1]
sample = SampleSpectrum.from_eigenvalues(d, n, p)
print("top sample eigenvalues:", np.round(sample.d[:4], 2))

# SP assumes a flat bulk; d and lambda do not
fit = fit_psi_model(sample, 2)
for method in ("sp", "lambda", "d"):
    est = estimate_all(sample, 2, method, fit.psi_model)
    print(f"{method:>6}: lambda-hat {np.round(est.lambda_hats, 2)}, "
          f"cos2 {np.round(est.column('cos2_angle'), 3)}, shrinkage {np.round(est.column('shrinkage'), 3)}")
