"""Estimators for distant spikes and the quantities that depend on them.

Three variants share one interface:

* ``"d"``: sample-side functionals f and g evaluated at d_k, no LSD needed.
* ``"lambda"``: invert an estimated psi and plug the spike into psi'.
* ``"sp"``: classical spiked-population closed forms with every non-spike
  equal to ``zeta`` (the mean non-spiked sample eigenvalue).

Each spike gets its population value, the squared cosine between sample
and population eigenvectors, the squared correlation between sample and
population PC scores, and the shrinkage factor lambda_k / d_k of the
sample scores.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, MissingModel, NotDistantSpike, SeparationError, TieError
from .spectrum import f_g_eval, psi_eval, psi_inverse, sp_inverse

METHODS = ("d", "lambda", "sp")
TIE_RTOL = 1e-10
CLAMP_TOL = 1e-9
SHRINK_TOL = 1e-6


@dataclass(frozen=True)
class SpikeEstimate:
    """Estimates for the k-th spike (1-based). Non-distant spikes carry only ``k`` and ``d``."""

    k: int
    d: float
    distant: bool
    lambda_hat: float | None = None
    cos2_angle: float | None = None
    corr2_score: float | None = None
    shrinkage: float | None = None
    clamped: tuple = ()

    def as_row(self):
        return {
            "k": self.k, "d": self.d, "distant": self.distant, "lambda_hat": self.lambda_hat,
            "cos2_angle": self.cos2_angle, "corr2_score": self.corr2_score,
            "shrinkage": self.shrinkage,
        }


@dataclass(frozen=True)
class SpikeEstimates:
    method: str
    estimates: tuple

    def __len__(self):
        return len(self.estimates)

    def __getitem__(self, i):
        return self.estimates[i]

    def column(self, name):
        """One field across spikes as a float array, nan where absent."""
        return np.array([np.nan if getattr(e, name) is None else getattr(e, name) for e in self.estimates])

    @property
    def lambda_hats(self):
        return self.column("lambda_hat")

    @property
    def all_distant(self):
        return all(e.distant for e in self.estimates)


@dataclass(frozen=True)
class SpBaselineModel:
    """Spiked-population model: all non-spikes equal ``zeta``."""

    zeta: float
    gamma: float

    def __post_init__(self):
        if not self.zeta > 0:
            raise DomainError("zeta must be positive")
        if self.gamma < 0:
            raise DomainError("gamma must be non-negative")

    @classmethod
    def from_sample(cls, sample, m):
        # zeros from a rank-deficient sample are part of the non-spiked ESD
        return cls(float(np.mean(sample.d[m:])), sample.gamma)

    @property
    def distant_threshold(self):
        return self.zeta * (1.0 + np.sqrt(self.gamma)) ** 2

    def psi(self, beta):
        a = beta / self.zeta
        return beta * (1.0 + self.gamma / (a - 1.0))

    def inverse(self, d):
        if self.gamma == 0:
            return float(d)
        return sp_inverse(d, self.gamma, self.zeta)

    def cos2(self, beta):
        if self.gamma == 0:
            return 1.0
        a = beta / self.zeta
        return (1.0 - self.gamma / (a - 1.0) ** 2) / (1.0 + self.gamma / (a - 1.0))

    def corr2(self, beta):
        if self.gamma == 0:
            return 1.0
        a = beta / self.zeta
        return 1.0 - self.gamma / (a - 1.0) ** 2


def _check_leading(sample, m, count=None):
    m = int(m)
    if m < 1:
        raise DomainError("need at least one spike (m >= 1)")
    if m >= sample.p:
        raise DomainError("need m < p")
    count = m if count is None else int(count)
    if not 1 <= count <= m:
        raise DomainError("count must lie in 1..m")
    d = sample.d
    for k in range(count):
        if d[k] - d[k + 1] < TIE_RTOL * d[k]:
            raise TieError(f"d_{k + 1} and d_{k + 2} are tied; spikes must have multiplicity one")
    return m, count


def _check_method(method, psi_model):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method == "lambda" and psi_model is None:
        raise MissingModel("the lambda method needs a fitted psi model")


def _unit(value, name, flags):
    """Clamp a [0,1] quantity that strays by round-off, reject anything worse."""
    if -CLAMP_TOL <= value < 0.0:
        return 0.0, flags + (name,)
    if 1.0 < value <= 1.0 + CLAMP_TOL:
        return 1.0, flags + (name,)
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name}={value:.12g} lies outside [0, 1]")
    return float(value), flags


def estimate_shrinkage(lambda_hat, d_k):
    """Shrinkage factor of the k-th sample PC score, ``lambda_hat / d_k`` capped at 1."""
    lambda_hat, d_k = float(lambda_hat), float(d_k)
    if not lambda_hat > 0 or not d_k > 0:
        raise DomainError("lambda_hat and d_k must be positive")
    if lambda_hat > d_k * (1.0 + SHRINK_TOL):
        raise DomainError(f"lambda_hat={lambda_hat:.6g} exceeds d_k={d_k:.6g}")
    return min(lambda_hat / d_k, 1.0)


def estimate_spikes(sample, m, method="d", psi_model=None, count=None):
    """Estimate the population spikes behind the leading sample eigenvalues.

    ``m`` is the number of spikes (the top ``m`` eigenvalues are excluded
    from the non-spike sums); ``count`` limits the output to the first few.
    A spike whose sample eigenvalue cannot be inverted is reported with
    ``distant=False``.
    """
    _check_method(method, psi_model)
    m, count = _check_leading(sample, m, count)
    sp = SpBaselineModel.from_sample(sample, m) if method == "sp" else None
    out = []
    for k in range(count):
        dk = float(sample.d[k])
        lam = None
        if method == "d":
            try:
                f, _ = f_g_eval(sample, m, dk)
            except SeparationError:
                f = np.nan
            lam = f if np.isfinite(f) and f > 0 else None
        elif method == "lambda":
            try:
                lam = psi_inverse(psi_model, dk)
            except NotDistantSpike:
                lam = None
        else:
            val = sp.inverse(dk)
            lam = float(val) if np.isfinite(val) else None
        if lam is None:
            out.append(SpikeEstimate(k + 1, dk, False))
            continue
        out.append(SpikeEstimate(k + 1, dk, True, lambda_hat=float(lam),
                                 shrinkage=estimate_shrinkage(min(lam, dk), dk)))
    return SpikeEstimates(method, tuple(out))


def estimate_angles(sample, m, method, psi_model=None, lambda_hats=None):
    """Fill in squared eigenvector cosines for the distant spikes."""
    _check_method(method, psi_model)
    if lambda_hats is None:
        lambda_hats = estimate_spikes(sample, m, method, psi_model)
    sp = SpBaselineModel.from_sample(sample, m) if method == "sp" else None
    out = []
    for e in lambda_hats.estimates:
        if not e.distant:
            out.append(e)
            continue
        if method == "d":
            _, val = f_g_eval(sample, m, e.d)
        elif method == "lambda":
            if psi_model.no_distortion:
                val = 1.0
            else:
                psi, d1 = psi_eval(psi_model, e.lambda_hat)
                val = e.lambda_hat * d1 / psi
        else:
            val = sp.cos2(e.lambda_hat)
        c, flags = _unit(val, "cos2_angle", e.clamped)
        out.append(replace(e, cos2_angle=c, clamped=flags))
    return SpikeEstimates(method, tuple(out))


def estimate_correlations(sample, m, method, psi_model=None, lambda_hats=None):
    """Fill in squared correlations between sample and population PC scores."""
    _check_method(method, psi_model)
    if lambda_hats is None:
        lambda_hats = estimate_spikes(sample, m, method, psi_model)
    sp = SpBaselineModel.from_sample(sample, m) if method == "sp" else None
    out = []
    for e in lambda_hats.estimates:
        if not e.distant:
            out.append(e)
            continue
        if method == "d":
            f, g = f_g_eval(sample, m, e.d)
            val = e.d * g / f
        elif method == "lambda":
            val = 1.0 if psi_model.no_distortion else psi_eval(psi_model, e.lambda_hat)[1]
        else:
            val = sp.corr2(e.lambda_hat)
        c, flags = _unit(val, "corr2_score", e.clamped)
        out.append(replace(e, corr2_score=c, clamped=flags))
    return SpikeEstimates(method, tuple(out))


def estimate_all(sample, m, method="d", psi_model=None, count=None):
    """Spikes, angles, correlations and shrinkage in one call."""
    est = estimate_spikes(sample, m, method, psi_model, count)
    est = estimate_angles(sample, m, method, psi_model, est)
    return estimate_correlations(sample, m, method, psi_model, est)


def quadratic_form_limit(lambda_k, psi_model, E_k, s1, s2):
    """Almost-sure limit of ``s1' e_k e_k' s2`` for a distant spike.

    ``E_k`` is the population eigenvector of the spike ``lambda_k``; the
    sample projector concentrates on ``lambda psi'/psi`` times the
    population one.
    """
    psi, d1 = psi_eval(psi_model, lambda_k)
    E_k = np.asarray(E_k, dtype=float)
    return float(lambda_k * d1 / psi * (np.dot(s1, E_k) * np.dot(E_k, s2)))
