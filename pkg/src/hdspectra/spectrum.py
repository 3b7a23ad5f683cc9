"""Spectral primitives over discrete spectral distributions.

The population side is summarised by the spike-forward map

    psi(a) = a + gamma * a * sum_k w_k t_k / (a - t_k),

built from a weighted atom list ``{t_k: w_k}`` of non-spiked population
eigenvalues. Its derivative vanishes at a unique point ``S_psi`` above the
largest atom; population spikes above ``S_psi`` are "distant" and are
pushed to ``psi(spike)`` in the sample spectrum.

The sample side uses ``f`` (the inverse of psi evaluated from sample
eigenvalues alone) and ``g`` (the squared eigenvector-cosine functional),
plus the companion Stieltjes transform of the Gram-matrix spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DomainError, NotDistantSpike, SeparationError

MAX_NEWTON_ITER = 200
SEPARATION_TOL = 1e-3


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Weighted point masses on the positive half-line."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.locations, dtype=float)).ravel()
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).ravel()
        if loc.size == 0 or loc.shape != w.shape:
            raise DomainError("locations and weights must be non-empty and of equal length")
        if not np.all(np.isfinite(loc)) or np.any(loc <= 0):
            raise DomainError("atom locations must be finite and positive")
        if np.any(np.diff(loc) <= 0):
            raise DomainError("atom locations must be strictly increasing")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be positive and sum to one")
        object.__setattr__(self, "locations", _frozen(loc))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def from_atoms(cls, locations, weights=None):
        """Build a distribution from unsorted, possibly repeated atoms.

        Zero-weight atoms are dropped, repeated locations merged and the
        weights renormalised. With ``weights=None`` every atom gets equal
        mass, which turns a list of eigenvalues into its ESD.
        """
        loc = np.asarray(locations, dtype=float).ravel()
        w = np.ones_like(loc) if weights is None else np.asarray(weights, dtype=float).ravel()
        if loc.shape != w.shape:
            raise DomainError("locations and weights must be of equal length")
        if np.any(w < 0):
            raise DomainError("weights must be non-negative")
        keep = w > 0
        loc, w = loc[keep], w[keep]
        uniq, inv = np.unique(loc, return_inverse=True)
        merged = np.bincount(inv, weights=w, minlength=uniq.size)
        return cls(uniq, merged / merged.sum())

    @classmethod
    def point_mass(cls, location):
        return cls([float(location)], [1.0])

    def __len__(self):
        return self.locations.size

    def __repr__(self):
        return f"DiscreteDistribution(atoms={len(self)}, mean={self.mean:.6g}, max={self.max:.6g})"

    @property
    def max(self):
        return float(self.locations[-1])

    @property
    def min(self):
        return float(self.locations[0])

    @property
    def mean(self):
        return float(self.weights @ self.locations)

    @property
    def std(self):
        return float(np.sqrt(max(self.weights @ (self.locations - self.mean) ** 2, 0.0)))

    def cdf(self, x):
        cum = np.cumsum(self.weights)
        idx = np.searchsorted(self.locations, np.asarray(x, dtype=float), side="right")
        out = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
        return np.minimum(out, 1.0)

    def quantile(self, u):
        """Left-continuous inverse of the CDF: ``inf{x : F(x) >= u}``."""
        cum = np.cumsum(self.weights)
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(cum, u - 1e-12, side="left")
        return self.locations[np.minimum(idx, len(self) - 1)]

    def scaled(self, c):
        return DiscreteDistribution(self.locations * c, self.weights)


@dataclass(frozen=True, eq=False)
class SampleSpectrum:
    """Descending sample-covariance eigenvalues with the sample size.

    ``d`` always has length ``p``; when ``p > n`` the trailing ``p - n``
    entries are exact zeros so that ``1/(p - m)`` weightings match the ESD
    of the ``p x p`` sample covariance.
    """

    d: np.ndarray
    n: int

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.d, dtype=float)).ravel()
        n = int(self.n)
        if n <= 0 or d.size == 0:
            raise DomainError("need n > 0 and at least one eigenvalue")
        if np.any(d < 0) or np.any(np.diff(d) > 0):
            raise DomainError("eigenvalues must be non-negative and non-increasing")
        if np.count_nonzero(d > 0) > min(n, d.size):
            raise DomainError("more positive eigenvalues than min(n, p)")
        object.__setattr__(self, "d", _frozen(d))
        object.__setattr__(self, "n", n)

    @classmethod
    def from_eigenvalues(cls, values, n, p=None, rel_tol=1e-10):
        """Sort, clean and zero-pad raw eigenvalues.

        ``values`` may hold all ``p`` eigenvalues or only the leading ones
        (for example the ``n`` Gram-matrix eigenvalues); missing trailing
        entries up to ``p`` are zero. Round-off negatives and entries
        beyond rank ``min(n, p)`` that are below ``rel_tol * d_1`` are set
        to zero.
        """
        v = np.sort(np.asarray(values, dtype=float).ravel())[::-1]
        p = v.size if p is None else int(p)
        if v.size > p:
            tail = v[p:]
            if np.any(np.abs(tail) > rel_tol * max(v[0], 1.0)):
                raise DomainError("more eigenvalues than p supplied")
            v = v[:p]
        if v.size and v[-1] < -rel_tol * max(v[0], 1.0):
            raise DomainError("eigenvalues must be non-negative")
        v = np.maximum(v, 0.0)
        rank = min(int(n), p)
        if v.size > rank:
            if np.any(v[rank:] > rel_tol * max(v[0], 1.0)):
                raise DomainError("more positive eigenvalues than min(n, p)")
            v[rank:] = 0.0
        return cls(np.concatenate([v, np.zeros(p - v.size)]), n)

    @property
    def p(self):
        return self.d.size

    @property
    def gamma(self):
        return self.p / self.n

    @property
    def gram_eigenvalues(self):
        """The ``n`` eigenvalues of ``X X^T / n``, descending."""
        if self.p >= self.n:
            return self.d[: self.n]
        return np.concatenate([self.d, np.zeros(self.n - self.p)])

    def __repr__(self):
        return f"SampleSpectrum(n={self.n}, p={self.p}, d1={self.d[0]:.6g})"


def _psi_terms(t, w, gamma, alpha):
    # returns psi, psi', psi'' at each alpha
    a = np.asarray(alpha, dtype=float)[..., None]
    r = t / (a - t)
    psi = a[..., 0] * (1.0 + gamma * (r @ w))
    d1 = 1.0 - gamma * ((r * r) @ w)
    d2 = 2.0 * gamma * ((r * r / (a - t)) @ w)
    return psi, d1, d2


def _find_s_psi(dist, gamma):
    t, w = dist.locations, dist.weights
    top = dist.max

    def f(a):
        return float(_psi_terms(t, w, gamma, a)[1])

    a = 1.5 * top
    for _ in range(MAX_NEWTON_ITER):
        _, d1, d2 = (float(v) for v in _psi_terms(t, w, gamma, a))
        if abs(d1) < 1e-13:
            return a
        step = d1 / d2
        nxt = a - step
        if nxt <= top * (1 + 1e-9) or not np.isfinite(nxt):
            break
        if abs(step) <= 1e-15 * nxt:
            return nxt
        a = nxt
    lo, hi = top * (1 + 1e-9), top * 1e6
    while f(hi) < 0:
        hi *= 1e3
        if not np.isfinite(hi):
            raise ConvergenceError("could not bracket the root of psi'")
    if f(lo) >= 0:
        return lo
    try:
        return optimize.brentq(f, lo, hi, xtol=1e-14 * top, rtol=4 * np.finfo(float).eps, maxiter=1000)
    except RuntimeError as exc:
        raise ConvergenceError(str(exc)) from exc


@dataclass(frozen=True, eq=False)
class PsiModel:
    """The psi map for a given non-spike distribution and dimension ratio.

    ``s_psi`` and ``psi_at_s_psi`` are computed once on construction. With
    ``gamma == 0`` there is no high-dimensional distortion: psi is the
    identity, ``s_psi`` is ``inf`` and ``no_distortion`` is True.
    """

    nonspikes: DiscreteDistribution
    gamma: float
    s_psi: float = field(init=False)
    psi_at_s_psi: float = field(init=False)

    def __post_init__(self):
        if self.gamma < 0:
            raise DomainError("gamma must be non-negative")
        if self.gamma == 0:
            s, ps = np.inf, np.inf
        else:
            s = _find_s_psi(self.nonspikes, self.gamma)
            ps = float(_psi_terms(self.nonspikes.locations, self.nonspikes.weights, self.gamma, s)[0])
        object.__setattr__(self, "s_psi", float(s))
        object.__setattr__(self, "psi_at_s_psi", float(ps))

    @property
    def no_distortion(self):
        return self.gamma == 0

    @property
    def distant_threshold(self):
        """Smallest sample eigenvalue limit that a distant spike can produce."""
        return self.nonspikes.max if self.no_distortion else self.psi_at_s_psi

    def __call__(self, alpha):
        return psi_eval(self, alpha)[0]

    def __repr__(self):
        return f"PsiModel(gamma={self.gamma:.6g}, atoms={len(self.nonspikes)}, s_psi={self.s_psi:.6g})"


def psi_eval(model, alpha):
    """Evaluate ``(psi(alpha), psi'(alpha))``; alpha may be an array."""
    a = np.asarray(alpha, dtype=float)
    if np.any(a <= model.nonspikes.max):
        raise DomainError(f"alpha must exceed the largest non-spike {model.nonspikes.max:.6g}")
    psi, d1, _ = _psi_terms(model.nonspikes.locations, model.nonspikes.weights, model.gamma, a)
    if a.ndim == 0:
        return float(psi), float(d1)
    return psi, d1


def s_psi_root(model):
    """Root of psi' above the largest non-spike, by safeguarded Newton."""
    if model.gamma <= 0:
        raise DomainError("S_psi is undefined for gamma == 0")
    return _find_s_psi(model.nonspikes, model.gamma)


def sp_inverse(d, gamma, zeta=1.0):
    """Closed-form psi inverse when all non-spikes equal ``zeta``.

    Returns nan when ``d`` lies below the image boundary
    ``zeta * (1 + sqrt(gamma))**2``.
    """
    dp = np.asarray(d, dtype=float) / zeta
    b = dp + 1.0 - gamma
    disc = b * b - 4.0 * dp
    with np.errstate(invalid="ignore"):
        root = 0.5 * (b + np.sqrt(disc))
    ok = (disc >= 0) & (root > 1.0 + np.sqrt(gamma))
    out = np.where(ok, zeta * root, np.nan)
    return float(out) if out.ndim == 0 else out


def psi_inverse(model, d):
    """Left inverse of psi on ``(S_psi, inf)``.

    Raises NotDistantSpike when ``d`` is not above ``psi(S_psi)``.
    """
    d = float(d)
    thr = model.distant_threshold
    if not d > thr:
        raise NotDistantSpike(f"d={d:.6g} is not above psi(S_psi)={thr:.6g}", threshold=thr)
    if model.no_distortion:
        return d
    t, w, g, s = model.nonspikes.locations, model.nonspikes.weights, model.gamma, model.s_psi
    lam = sp_inverse(d, g, model.nonspikes.mean)
    if not (np.isfinite(lam) and s < lam < d):
        lam = d
    for _ in range(MAX_NEWTON_ITER):
        psi, d1, _ = (float(v) for v in _psi_terms(t, w, g, lam))
        resid = psi - d
        if abs(resid) <= 1e-13 * d:
            return lam
        nxt = lam - resid / d1
        if not (np.isfinite(nxt) and nxt > s):
            break
        if abs(nxt - lam) <= 1e-15 * lam:
            return nxt
        lam = nxt

    def h(a):
        return float(_psi_terms(t, w, g, a)[0]) - d

    try:
        return optimize.brentq(h, s, d, xtol=1e-14 * d, rtol=4 * np.finfo(float).eps, maxiter=1000)
    except (RuntimeError, ValueError) as exc:
        raise ConvergenceError(str(exc)) from exc


def f_g_eval(sample, m, x, sep_tol=SEPARATION_TOL):
    """Sample-side functionals ``f(x)`` and ``g(x)`` with the top ``m`` excluded.

    ``f`` estimates the population spike behind a sample eigenvalue ``x``;
    ``g`` estimates the squared cosine between the sample and population
    eigenvectors. Zero eigenvalues drop out of both sums.
    """
    m = int(m)
    if m < 0 or m >= sample.p:
        raise DomainError("need 0 <= m < p")
    x = float(x)
    rest = sample.d[m:]
    if x - rest[0] < sep_tol * max(x, 1.0):
        raise SeparationError(f"x={x:.6g} is too close to the sample eigenvalue {rest[0]:.6g}")
    c = sample.gamma / (sample.p - m)
    gap = x - rest
    s1 = np.sum(rest / gap)
    s2 = np.sum(rest / gap**2)
    f = x / (1.0 + c * s1)
    g = 1.0 / (1.0 + c * f * s2)
    return float(f), float(g)


def companion_stieltjes(gram_eigs, m, z):
    """Companion Stieltjes transform of the Gram spectrum, top ``m`` excluded.

    ``v(z) = 1/(n - m) * sum_{i > m} 1 / (d_i - z)`` over the ``n``
    Gram-matrix eigenvalues sorted in descending order.
    """
    e = np.sort(np.asarray(gram_eigs, dtype=float).ravel())[::-1]
    m = int(m)
    if m < 0 or m >= e.size:
        raise DomainError("need 0 <= m < n")
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag == 0):
        raise DomainError("z must have a non-zero imaginary part")
    v = np.mean(1.0 / (e[m:] - z[..., None]), axis=-1)
    return complex(v) if v.ndim == 0 else v
