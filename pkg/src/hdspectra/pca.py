"""Sample PCA through the n x n Gram matrix, for data with n much smaller than p."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, DomainError, RankError
from .spectrum import SampleSpectrum

RANK_RTOL = 1e-10


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Fitted PCA: all ``min(n, p)`` eigenvalues and the top ``r`` eigenvectors.

    ``eigenvectors`` is ``p x r`` with unit columns.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    center: np.ndarray
    scale: np.ndarray | None
    n: int
    p: int

    @property
    def r(self):
        return self.eigenvectors.shape[1]

    def transform(self, data):
        X = np.atleast_2d(np.asarray(data, dtype=float))
        if X.shape[1] != self.p:
            raise DimensionError(f"expected rows of length {self.p}, got {X.shape[1]}")
        X = X - self.center
        if self.scale is not None:
            X = X / self.scale
        return X

    def spectrum(self):
        """Sample spectrum of the fitted data, zero-padded to length p."""
        return SampleSpectrum.from_eigenvalues(self.eigenvalues, self.n, self.p)


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """PC scores, one column per component."""

    scores: np.ndarray
    normalized: bool = False

    @property
    def r(self):
        return self.scores.shape[1]


def _fix_signs(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def fit_pca(data, r, standardize=False):
    """Centre (and optionally standardise) the columns and fit ``r`` components.

    Eigenvalues come from ``X X^T / n`` and match those of ``X^T X / n``;
    eigenvectors are mapped back with ``e = X^T u / sqrt(n d)``. Each
    eigenvector's largest-magnitude coordinate is made positive.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise DimensionError("data must be a 2-d array")
    n, p = X.shape
    if n < 2:
        raise DataError("need at least two observations")
    if not np.all(np.isfinite(X)):
        raise DataError("data contain non-finite values")
    r = int(r)
    if r < 1 or r > min(n, p):
        raise RankError(f"r must lie in 1..{min(n, p)}")
    center = X.mean(axis=0)
    Xc = X - center
    scale = None
    if standardize:
        scale = Xc.std(axis=0)
        if np.any(scale <= 0):
            raise DataError("zero-variance column cannot be standardised")
        Xc = Xc / scale
    if n <= p:
        w, U = np.linalg.eigh(Xc @ Xc.T / n)
        w, U = w[::-1], U[:, ::-1]
        w = np.where(w < 0, 0.0, w)
        rank = int(np.sum(w > RANK_RTOL * max(w[0], np.finfo(float).tiny)))
        if r > rank:
            raise RankError(f"requested {r} components but numerical rank is {rank}")
        E = Xc.T @ U[:, :r] / np.sqrt(n * w[:r])
    else:
        w, V = np.linalg.eigh(Xc.T @ Xc / n)
        w, V = w[::-1], V[:, ::-1]
        w = np.where(w < 0, 0.0, w)
        rank = int(np.sum(w > RANK_RTOL * max(w[0], np.finfo(float).tiny)))
        if r > rank:
            raise RankError(f"requested {r} components but numerical rank is {rank}")
        E = V[:, :r]
    E = _fix_signs(E / np.linalg.norm(E, axis=0))
    return PcaModel(_ro(w[: min(n, p)]), _ro(E), _ro(center), None if scale is None else _ro(scale), n, p)


def sample_scores(model, data, normalized=False):
    """Scores of the training data; ``normalized`` divides column k by sqrt(n d_k)."""
    S = model.transform(data) @ model.eigenvectors
    if normalized:
        S = S / np.sqrt(model.n * model.eigenvalues[: model.r])
    return ScoreSet(S, normalized)


def predict_scores(model, new_data):
    """Out-of-sample scores ``(x - center)' e_k``."""
    return ScoreSet(model.transform(new_data) @ model.eigenvectors, False)


def adjust_scores(predicted, shrinkage):
    """Undo the shrinkage of predicted scores by dividing by rho_k."""
    rho = np.atleast_1d(np.asarray(shrinkage, dtype=float))
    if rho.size != predicted.r:
        raise DimensionError("need one shrinkage factor per component")
    if np.any(~(rho > 0)) or np.any(rho > 1.0 + 1e-6):
        raise DomainError("shrinkage factors must lie in (0, 1]")
    return ScoreSet(predicted.scores / rho, predicted.normalized)
