"""Population spectral distribution recovery by Marchenko-Pastur inversion.

The companion Stieltjes transform ``v`` of the bulk Gram spectrum is
evaluated on a grid of points ``z_j`` in the upper half-plane. A discrete
population distribution ``sum_k w_k delta(t_k)`` is then chosen on the
probability simplex to make the Marchenko-Pastur residuals

    e_j = 1/v(z_j) + z_j - gamma * sum_k w_k t_k / (1 + t_k v(z_j))

small under an L-infinity, L1 or L2 loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import DataError, DomainError, SolverError
from .simplex import simplex
from .spectrum import DiscreteDistribution, PsiModel, companion_stieltjes

LOSSES = ("linf", "l1", "l2")
MIN_BULK = 10


@dataclass(frozen=True)
class GridConfig:
    """Grid sizes and shape.

    Imaginary heights are multiples of the mean bulk eigenvalue. Points
    close to the real axis see the sample noise of individual eigenvalues
    and let the L-infinity fit park spurious mass near the top of the
    support grid, which inflates psi-hat(S_psi); heights of a few mean
    eigenvalues avoid that.
    """

    n_t: int = 100
    n_re: int = 100
    imag_factors: tuple = (2.0, 4.0)
    re_range: tuple = (0.5, 1.1)


@dataclass(frozen=True, eq=False)
class InversionGrid:
    z_points: np.ndarray
    t_points: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z_points, dtype=complex).ravel()
        t = np.asarray(self.t_points, dtype=float).ravel()
        if np.any(z.imag <= 0):
            raise DomainError("grid points must lie in the upper half-plane")
        if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise DomainError("support grid must be positive and strictly increasing")
        if z.size < t.size:
            raise DomainError("need at least as many z points as support points")
        object.__setattr__(self, "z_points", z)
        object.__setattr__(self, "t_points", t)

    @property
    def shape(self):
        return self.z_points.size, self.t_points.size

    def scaled(self, c):
        return InversionGrid(self.z_points * c, self.t_points * c)


@dataclass(frozen=True, eq=False)
class LsdSolution:
    """Weights on the support grid plus the data needed to audit the fit."""

    t_points: np.ndarray
    weights: np.ndarray
    loss_value: float
    loss_kind: str
    z_points: np.ndarray = None
    v_values: np.ndarray = None
    residuals: np.ndarray = None

    @property
    def distribution(self):
        return DiscreteDistribution.from_atoms(self.t_points, self.weights)

    def to_dict(self):
        """JSON-ready diagnostic record."""

        def cplx(a):
            return [[float(x.real), float(x.imag)] for x in np.asarray(a)]

        return {
            "loss_kind": self.loss_kind,
            "loss_value": float(self.loss_value),
            "t_points": [float(x) for x in self.t_points],
            "weights": [float(x) for x in self.weights],
            "z_points": cplx(self.z_points) if self.z_points is not None else None,
            "v_values": cplx(self.v_values) if self.v_values is not None else None,
            "residuals": cplx(self.residuals) if self.residuals is not None else None,
        }


def _bulk(sample, m):
    m = int(m)
    if m < 0 or m >= min(sample.n, sample.p):
        raise DataError("need 0 <= m < min(n, p)")
    rest = sample.d[m:]
    pos = rest[rest > 0]
    if rest.size < MIN_BULK or pos.size < MIN_BULK:
        raise DataError(f"need at least {MIN_BULK} non-spiked eigenvalues, have {pos.size}")
    return rest, pos


def build_grid(sample, m, config=GridConfig()):
    """Evaluation and support grids bracketing the non-spiked spectrum."""
    rest, pos = _bulk(sample, m)
    dmin, dtop, dbar = pos.min(), rest[0], rest.mean()
    lo = max(dmin / (1.0 + np.sqrt(sample.gamma)) ** 2, 1e-8 * dbar)
    t = np.linspace(lo, dtop, config.n_t) if config.n_t > 1 else np.array([dtop])
    re = np.linspace(config.re_range[0] * dmin, config.re_range[1] * dtop, config.n_re)
    im = np.asarray(config.imag_factors, dtype=float) * dbar
    z = (re[None, :] + 1j * im[:, None]).ravel()
    return InversionGrid(z, t)


def _residual_parts(sample, m, grid):
    v = companion_stieltjes(sample.gram_eigenvalues, m, grid.z_points)
    t = grid.t_points
    a = 1.0 / v + grid.z_points
    B = sample.gamma * t[None, :] / (1.0 + t[None, :] * v[:, None])
    return v, a, B


def _loss(e, kind):
    if kind == "linf":
        return float(max(np.abs(e.real).max(), np.abs(e.imag).max()))
    if kind == "l1":
        return float(np.abs(e).sum())
    return float((np.abs(e) ** 2).sum())


def _solve_linf(a, B, lp_solver):
    J, K = B.shape
    # variables (w_1..w_K, u); each residual part bounded by u from both sides
    Br = np.vstack([B.real, B.imag])
    ar = np.concatenate([a.real, a.imag])
    ones = np.ones((2 * J, 1))
    A_ub = np.block([[-Br, -ones], [Br, -ones]])
    b_ub = np.concatenate([-ar, ar])
    c = np.zeros(K + 1)
    c[-1] = 1.0
    if lp_solver == "highs":
        res = optimize.linprog(
            c, A_ub=A_ub, b_ub=b_ub, A_eq=np.append(np.ones(K), 0.0)[None, :], b_eq=[1.0],
            bounds=(0, None), method="highs",
        )
        if res.status != 0:
            raise SolverError(f"HiGHS failed: {res.message}")
        x = res.x
    elif lp_solver == "simplex":
        simplex_row = np.append(np.ones(K), 0.0)[None, :]
        A = np.vstack([A_ub, simplex_row, -simplex_row])
        b = np.concatenate([b_ub, [1.0, -1.0]])
        # the dual has K + 1 rows and a feasible origin
        x = simplex(b, -A.T, c).duals
    else:
        raise ValueError(f"unknown LP solver {lp_solver!r}")
    return x[:K]


def _solve_convex(a, B, kind):
    import cvxpy as cp

    J, K = B.shape
    w = cp.Variable(K, nonneg=True)
    re = a.real - B.real @ w
    im = a.imag - B.imag @ w
    if kind == "l1":
        objective = cp.sum(cp.norm(cp.vstack([re, im]), 2, axis=0))
    else:
        objective = cp.sum_squares(re) + cp.sum_squares(im)
    prob = cp.Problem(cp.Minimize(objective), [cp.sum(w) == 1])
    prob.solve(solver=cp.CLARABEL)
    if w.value is None or prob.status not in ("optimal", "optimal_inaccurate"):
        raise SolverError(f"convex solver status {prob.status}")
    return np.asarray(w.value)


def solve_weights(sample, m, grid, loss_kind="linf", lp_solver="highs"):
    """Fit simplex weights on ``grid.t_points`` to the bulk sample spectrum.

    The top ``m`` Gram eigenvalues are left out of the Stieltjes transform.
    ``loss_kind="linf"`` is solved as a linear program, either by HiGHS or
    by the package's own dense simplex (``lp_solver="simplex"``); the L1
    and L2 losses go through a conic solver.
    """
    if loss_kind not in LOSSES:
        raise ValueError(f"unknown loss {loss_kind!r}")
    v, a, B = _residual_parts(sample, m, grid)
    K = grid.t_points.size
    if K == 1:
        w = np.ones(1)
    elif loss_kind == "linf":
        w = _solve_linf(a, B, lp_solver)
    else:
        w = _solve_convex(a, B, loss_kind)
    w = np.maximum(w, 0.0)
    w[w < 1e-12 * w.max()] = 0.0
    w = w / w.sum()
    e = a - B @ w
    return LsdSolution(grid.t_points, w, _loss(e, loss_kind), loss_kind, grid.z_points, v, e)


def evaluate_loss(sample, m, grid, weights, loss_kind="linf"):
    """Loss of arbitrary weights on the grid (for diagnostics and tests)."""
    _, a, B = _residual_parts(sample, m, grid)
    return _loss(a - B @ np.asarray(weights, dtype=float), loss_kind)


def silverman_bandwidth(dist, n_points):
    return 1.06 * dist.std * n_points ** (-0.2)


def smooth_lsd(solution, bandwidth=None):
    """Gaussian-kernel smoothing of the fitted weights on the same grid."""
    t, w = solution.t_points, solution.weights
    if bandwidth is None:
        bandwidth = silverman_bandwidth(solution.distribution, t.size)
    if bandwidth <= 0:
        return solution.distribution
    kern = np.exp(-0.5 * ((t[:, None] - t[None, :]) / bandwidth) ** 2)
    ws = kern @ w
    return DiscreteDistribution.from_atoms(t, ws / ws.sum())


def nonspike_quantiles(H_hat, p, m):
    """Mid-point quantiles of ``H_hat`` as estimates of the ``p - m`` non-spikes."""
    count = int(p) - int(m)
    if count <= 0:
        raise DomainError("need p > m")
    j = np.arange(1, count + 1)
    return H_hat.quantile((count - j + 0.5) / count)


def psi_model_from_lsd(H_hat, gamma):
    return PsiModel(H_hat, float(gamma))


@dataclass(frozen=True, eq=False)
class LsdFit:
    """Everything produced by one pass of the LSD-based psi estimation."""

    m: int
    solution: LsdSolution
    H_hat: DiscreteDistribution
    nonspikes: np.ndarray
    psi_model: PsiModel


def fit_psi_model(sample, m, loss_kind="linf", smooth=False, bandwidth=None,
                  grid_config=GridConfig(), lp_solver="highs"):
    """Estimate the population LSD with the top ``m`` excluded and build psi-hat.

    Non-spikes are the mid-point quantiles of the (optionally smoothed)
    estimate; psi-hat puts equal mass on each of them. Smoothing is off by
    default: a Silverman bandwidth on a skewed estimate moves mass outwards
    and biases psi-hat upwards.
    """
    grid = build_grid(sample, m, grid_config)
    sol = solve_weights(sample, m, grid, loss_kind, lp_solver)
    H_hat = smooth_lsd(sol, bandwidth) if smooth else sol.distribution
    lam = nonspike_quantiles(H_hat, sample.p, m)
    model = psi_model_from_lsd(DiscreteDistribution.from_atoms(lam), sample.gamma)
    return LsdFit(int(m), sol, H_hat, lam, model)
