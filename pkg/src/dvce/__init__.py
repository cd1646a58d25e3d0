"""Diffusion-based visual counterfactual explanations at desk scale:
DDPM forward/reverse processes, classifier guidance through the denoised
estimate with adaptive normalization and cone projection, two baseline
methods, and a quantitative evaluation pipeline, all on synthetic data
with analytic ground truth.
"""

__version__ = "0.1.0"

from .baselines import blended_vce, project_lp_ball, svce
from .classifier import (AdvTrainConfig, BayesGmmClassifier, ClassifierModel,
                         NetClassifier, adversarial_train, train_classifier)
from .denoiser import (AnalyticGmmDenoiser, DenoiserOutput, EpsilonModel,
                       GaussianMixture, TrainConfig, TrainedDenoiser, f_dn,
                       gmm_posterior_x0_mean, predict_epsilon,
                       reverse_mean_mu_theta, train_denoiser)
from .datasets import ToyDataset, make_gmm2d, make_shapes16
from .evaluation import (EvalReport, closeness, crossover_evaluation,
                         frechet_gaussian, validity)
from .guidance import (GuidanceConfig, adaptive_mean, cone_project,
                       distance_subgradient, guidance_update, raw_guided_mean)
from .numerics import (Adam, Rng, SmallNet, finite_difference_gradient,
                       sample_standard_normal)
from .sampler import (VceResult, generate_dvce, late_start_init,
                      sample_unconditional, sample_unconditional_batch)
from .schedule import (NoiseSchedule, build_linear_schedule, forward_sample,
                       q_posterior_mean)
