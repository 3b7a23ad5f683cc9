"""
Counting distant spikes
=======================

Start from a generous bound and shrink it until every retained sample
eigenvalue clears the estimated image boundary psi-hat(S_psi).
"""

import numpy as np
from hdspectra import build_population, draw_sample, estimate_num_spikes, fit_pca, load_study
from hdspectra.simulation import rep_rng

cfg = load_study("study1_quarter")
truth = build_population(cfg.population)
print("population spikes:", np.round(truth.spikes, 2), " distant:", truth.distant)

X = draw_sample(cfg.population, truth, rep_rng(cfg.population.seed, 0))
sample = fit_pca(X, 5).spectrum()
print("leading sample eigenvalues:", np.round(sample.d[:6], 2))

trace = estimate_num_spikes(sample, m_max=5)
for it in trace.iterations:
    print(f"  m={it.m}: psi-hat(S_psi)={it.psi_at_s_psi:.3f}  first at or below: {it.first_violation_index}")
print("estimated number of distant spikes:", trace.final_m)

# over several draws: one too many is the usual miss, too few is rare
counts = []
for rep in range(10):
    X = draw_sample(cfg.population, truth, rep_rng(cfg.population.seed, rep))
    counts.append(estimate_num_spikes(fit_pca(X, 5).spectrum(), 5).final_m)
print("counts over 10 draws:", counts)
