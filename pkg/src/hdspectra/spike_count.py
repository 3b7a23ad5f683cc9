"""Number of distant spikes by shrinking a generous upper bound.

Start from ``m = m_max``. Fit the non-spike LSD with the top ``m`` sample
eigenvalues excluded, build psi-hat and its image boundary psi-hat(S_psi).
If every one of ``d_1..d_m`` lies above the boundary, stop; otherwise let
``i*`` be the first index at or below it, set ``m = i* - 1`` and refit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IterationError
from .lsd import GridConfig, fit_psi_model


@dataclass(frozen=True)
class CountIteration:
    m: int
    s_psi: float
    psi_at_s_psi: float
    first_violation_index: int | None


@dataclass(frozen=True)
class SpikeCountTrace:
    iterations: tuple
    final_m: int
    m_max: int
    final_fit: object = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "m_max": self.m_max,
            "final_m": self.final_m,
            "iterations": [
                {"m": it.m, "s_psi": it.s_psi, "psi_at_s_psi": it.psi_at_s_psi,
                 "first_violation_index": it.first_violation_index}
                for it in self.iterations
            ],
        }


def estimate_num_spikes(sample, m_max, loss_kind="linf", grid_config=GridConfig(),
                        smooth=False, lp_solver="highs"):
    """Run the shrinking spike-count iteration and return its trace.

    Every round refits the LSD from scratch. ``final_fit`` holds the fit at
    the accepted ``m`` (None when the count reaches zero) so the spike
    estimators can reuse it.
    """
    m_max = int(m_max)
    if not 1 <= m_max or not 2 * m_max < min(sample.n, sample.p):
        raise DomainError("need 1 <= m_max < min(n, p) / 2")
    d = sample.d
    m = m_max
    rounds = []
    fit = None
    for _ in range(m_max + 1):
        if m == 0:
            fit = None
            break
        fit = fit_psi_model(sample, m, loss_kind=loss_kind, smooth=smooth,
                            grid_config=grid_config, lp_solver=lp_solver)
        model = fit.psi_model
        thr = model.psi_at_s_psi
        bad = np.flatnonzero(d[:m] <= thr)
        first = int(bad[0]) + 1 if bad.size else None
        rounds.append(CountIteration(m, float(model.s_psi), float(thr), first))
        if first is None:
            break
        assert first - 1 < m
        m = first - 1
    else:
        raise IterationError("spike count did not terminate")
    return SpikeCountTrace(tuple(rounds), m, m_max, fit)
