"""Case-control logistic regression with external summary data via empirical likelihood."""
from .baselines import MleResult, fit_prospective_mle
from .errors import (CcelError, ConstraintInfeasibleError, DiagnosticsError,
                     IdentifiabilityError, InvalidInputError, NonConvergenceError,
                     ProtocolError, SchemaError, SeparationError, SingularBlockError)
from .inference import (AsymptoticBlocks, CovarianceEstimate, algorithm1,
                        assemble_blocks, covariance, estimate_vhat, sigma_hat,
                        summary_rows, wald_ci)
from .model import (CaseControlSample, ConstraintSpec, ExternalSummary, HValue,
                    ThetaFull, eval_H, logistic_prob, tilt)
from .solver import (BoundaryWarning, FitResult, IdentifiabilityWarning, SolverConfig,
                     fit_known_mu, fit_mele, init_theta, profile_objective, solve_nu)

__version__ = "0.1.0"
