"""User-level Gaussian differential privacy for panel regression."""

from .dpcore import BudgetLedger, PrivacyBudget, compose, gaussian_mechanism, make_rng, noise_scale
from .errors import (DegenerateCovarianceError, GDPPanelError, InsufficientUsersError,
                     InvalidInputError, InvalidRestrictionError, ParseError)
from .inference import (CovEstimate, combine_two_group, confidence_intervals, dp_covariance,
                        dp_covariance_grouped, wald_test)
from .regression import (LocalFits, PanelDataset, UserBlock, dp_beta, dp_theta_two_group,
                         local_fits, local_ols, mean_of_locals, summary_stat_dp_beta, thresholds)
from .trimmean import GeneralBudget, TrimMeanConfig, TrimMeanOutput, dp_treat_mean, dp_trim_mean, dp_trim_mean_general

__version__ = "0.1.0"
