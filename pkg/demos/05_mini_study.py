"""
A small Monte-Carlo study
=========================

Three groups with AR(1) noise, at one tenth of the full size. Bias and
coefficient of variation (in percent) for each method.
"""

from hdspectra import load_study, run_study

cfg = load_study("study1_tenth")
report = run_study(cfg, reps=10)
print(report.table())

# the same thing from the shell:
#   hdspectra simulate study1_tenth --reps 10 --out-dir out/
