"""MAP state-path estimation for Bayesian hidden Markov models.

Transition matrices carry Dirichlet priors and normal emissions are either
known or carry a Normal-Inverse-chi2 prior.  Paths are compared by
``log_joint``, the log of p(x, y) with every parameter integrated out.
"""
from .errors import (BayesVitError, DomainError, InfeasiblePathError, InfeasibleTemperatureError,
                     InstanceTooLargeError, ModeInfeasibleError)
from .hmm import HmmParams, PseudoHmm, backward_sample, forward_backward, generate_data, viterbi
from .kernels import backend_name
from .model import (DirichletPrior, FixedEmissions, NixEmissions, NixPrior, log_joint,
                    log_tempered_joint, path_stats, posterior_modes)
from .numerics import Rng, digamma, log_gamma
from .segmenters import (METHODS, RunTrace, SaSchedule, SegmenterConfig, bayes_em, icm, seg_em,
                         seg_mm, simulated_annealing, variational_bayes)

__version__ = "0.1.0"

__all__ = [
    "BayesVitError", "DomainError", "InfeasiblePathError", "InfeasibleTemperatureError",
    "InstanceTooLargeError", "ModeInfeasibleError", "HmmParams", "PseudoHmm", "backward_sample",
    "forward_backward", "generate_data", "viterbi", "backend_name", "DirichletPrior",
    "FixedEmissions", "NixEmissions", "NixPrior", "log_joint", "log_tempered_joint", "path_stats",
    "posterior_modes", "Rng", "digamma", "log_gamma", "METHODS", "RunTrace", "SaSchedule",
    "SegmenterConfig", "bayes_em", "icm", "seg_em", "seg_mm", "simulated_annealing",
    "variational_bayes",
]
