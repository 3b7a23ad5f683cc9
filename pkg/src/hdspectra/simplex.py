"""Dense revised simplex for small linear programs.

Solves ``minimize c @ x  s.t.  A @ x <= b,  x >= 0``. Negative entries in
``b`` are handled with a single auxiliary variable (phase one), so any
feasible problem is accepted. The basis is refactorised from scratch at
every iteration, which keeps long pivot sequences numerically clean; the
cost is O(m^3) per pivot, so the solver is meant for problems with few
constraints (hand it the dual of a tall problem).

Pivoting uses the most negative reduced cost and switches to Bland's rule
after a run of degenerate pivots; ``rule="bland"`` uses Bland's rule
throughout. Floating point Bland can still cycle on heavily degenerate
vertices, so the right-hand side is shifted by a tiny deterministic amount
while pivoting. Reduced costs do not depend on ``b``, so the final basis is
re-checked against the unshifted ``b`` and is exactly optimal whenever it
stays feasible there.

The optimal multipliers are returned as ``duals``: ``y >= 0`` with
``A.T @ y >= -c`` and ``-b @ y`` equal to the optimum. For tall problems
solve ``minimize b @ y  s.t.  -A.T @ y <= c`` instead and read the primal
solution off its ``duals``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import SolverError


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    nit: int
    duals: np.ndarray


class _Revised:
    def __init__(self, A, b, with_aux, rule, tol, max_iter):
        m, n = A.shape
        cols = [A, np.eye(m)]
        if with_aux:
            cols.append(-np.ones((m, 1)))
        self.M = np.hstack(cols)
        self.b = b
        self.m, self.n = m, n
        self.basis = np.arange(n, n + m)
        self.rule, self.tol, self.max_iter = rule, tol, max_iter
        self.nit = 0

    def _factor(self):
        try:
            return lu_factor(self.M[:, self.basis], check_finite=False)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SolverError("singular basis") from exc

    def primal(self, lu=None):
        return lu_solve(lu if lu is not None else self._factor(), self.b, check_finite=False)

    def pivot(self, row, col):
        self.basis[row] = col
        self.nit += 1

    def optimise(self, cost, allowed):
        tol = self.tol
        degenerate_run = 0
        bland = self.rule == "bland"
        while True:
            if self.nit >= self.max_iter:
                raise SolverError("simplex iteration limit reached")
            lu = self._factor()
            xb = lu_solve(lu, self.b, check_finite=False)
            y = lu_solve(lu, cost[self.basis], trans=1, check_finite=False)
            red = cost[:allowed] - self.M[:, :allowed].T @ y
            red[self.basis[self.basis < allowed]] = 0.0
            scale = max(1.0, np.abs(cost[:allowed]).max())
            cand = np.flatnonzero(red < -tol * scale)
            if cand.size == 0:
                return xb, y
            col = cand[0] if bland else cand[np.argmin(red[cand])]
            direction = lu_solve(lu, self.M[:, col], check_finite=False)
            pos = np.flatnonzero(direction > tol)
            if pos.size == 0:
                raise SolverError("linear program is unbounded")
            ratios = np.maximum(xb[pos], 0.0) / direction[pos]
            best = ratios.min()
            ties = pos[ratios <= best + tol * max(1.0, best)]
            row = ties[np.argmin(self.basis[ties])]
            if best <= tol:
                degenerate_run += 1
                if degenerate_run > 20:
                    bland = True
            else:
                degenerate_run = 0
                bland = self.rule == "bland"
            self.pivot(row, col)


def simplex(c, A, b, rule="dantzig", tol=1e-9, max_iter=None, perturb=1e-7):
    """Minimise ``c @ x`` subject to ``A @ x <= b`` and ``x >= 0``.

    ``perturb`` is the relative size of the anti-degeneracy shift of ``b``
    (0 disables it).
    """
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("shape mismatch between c, A and b")
    if rule not in ("bland", "dantzig"):
        raise ValueError(f"unknown pivot rule {rule!r}")
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    bscale = max(1.0, np.abs(b).max()) if m else 1.0
    need_aux = m > 0 and b.min() < -tol * bscale
    shift = perturb * np.maximum(1.0, np.abs(b)) * (1.0 + np.random.default_rng(12345).random(m))
    lp = _Revised(A, b + shift, need_aux, rule, tol, max_iter)
    aux = n + m
    if need_aux:
        lp.pivot(int(np.argmin(b)), aux)
        phase1 = np.zeros(n + m + 1)
        phase1[aux] = 1.0
        xb, _ = lp.optimise(phase1, n + m + 1)
        level = xb[lp.basis == aux]
        if level.size and level[0] > tol * bscale:
            raise SolverError("linear program is infeasible")
        hit = np.flatnonzero(lp.basis == aux)
        if hit.size:
            # drive the auxiliary variable out of the basis at zero level
            lu = lp._factor()
            row = hit[0]
            e = np.zeros(m)
            e[row] = 1.0
            rowvec = lu_solve(lu, e, trans=1, check_finite=False) @ lp.M[:, : n + m]
            rowvec[lp.basis[lp.basis < n + m]] = 0.0
            nz = np.flatnonzero(np.abs(rowvec) > tol)
            if nz.size == 0:
                raise SolverError("redundant constraint left the auxiliary variable basic")
            lp.pivot(row, nz[0])
        lp.M = lp.M[:, : n + m]
    cost = np.concatenate([c, np.zeros(m)])
    xb, y = lp.optimise(cost, n + m)
    lp.b = b
    exact = lp.primal()
    if exact.min() >= -tol * bscale:
        xb = exact
    sol = np.zeros(n + m)
    sol[lp.basis] = xb
    x = np.maximum(sol[:n], 0.0)
    return LPResult(x=x, fun=float(c @ x), nit=lp.nit, duals=np.maximum(-y, 0.0))
