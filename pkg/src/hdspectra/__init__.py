"""Estimation of distant spikes, eigenvector angles, PC-score correlations
and score shrinkage for high-dimensional PCA when the non-spiked
population eigenvalues are not all equal."""

__version__ = "0.1.0"

from .errors import (BudgetError, ConvergenceError, DataError, DimensionError, DomainError,
                     HDSpectraError, IterationError, MissingModel, NotDistantSpike, RankError,
                     SeparationError, SolverError, TieError)
from .spectrum import (DiscreteDistribution, PsiModel, SampleSpectrum, companion_stieltjes,
                       f_g_eval, psi_eval, psi_inverse, s_psi_root, sp_inverse)
from .lsd import (GridConfig, InversionGrid, LsdFit, LsdSolution, build_grid, fit_psi_model,
                  nonspike_quantiles, psi_model_from_lsd, smooth_lsd, solve_weights)
from .estimators import (SpBaselineModel, SpikeEstimate, SpikeEstimates, estimate_all,
                         estimate_angles, estimate_correlations, estimate_shrinkage,
                         estimate_spikes, quadratic_form_limit)
from .spike_count import SpikeCountTrace, estimate_num_spikes
from .pca import PcaModel, ScoreSet, adjust_scores, fit_pca, predict_scores, sample_scores
from .simulation import (GroundTruth, PopulationSpec, StudyConfig, StudyReport, build_population,
                         draw_sample, load_study, loocv_shrinkage_mse, run_study)
