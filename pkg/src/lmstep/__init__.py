"""Latent Markov models for multivariate categorical panel data.

Estimation by full-likelihood EM or by the three-step route (pooled
latent-class fit, expected state indicators, weighted-logit latent-process
fit), with an iterated refinement of the latter, a scenario-based Monte Carlo
harness and bootstrap/reporting utilities.
"""

from .backend import BACKEND
from .em import FitOptions, FitResult, LCFit, fit_basic_lm_fml, fit_cov_lm_fml, fit_lc_pooled, random_start
from .errors import (ConvergenceError, DataFormatError, DegenerateLikelihoodError,
                     LmStepError, SeparationError)
from .model import (emission_prob, forward_backward, initial_probs, posterior_moments,
                    state_marginals, state_marginals_cov, transition_probs)
from .panel import MISSING, CovariatePanel, ResponsePanel
from .params import (DIFFERENCE, PAIRWISE, PHI_FLOOR, CovariateLatentParams,
                     DifferenceTransitions, LatentChainParams, MeasurementParams,
                     ModelParams, PairwiseTransitions, PosteriorMoments, StateMarginals)
from .report import bootstrap_se, item_mean_score, order_states, section_mean_score
from .simulate import (MonteCarloReport, Scenario, align_states, gen_covariates_ar1,
                       gen_panel, param_vector, permute_states, preset_names,
                       run_monte_carlo, scenario_preset)
from .threestep import ThreeStepOptions, fit_3s, fit_3s_imp, step2_moments, step3_basic, step3_cov

__version__ = "0.1.0"
