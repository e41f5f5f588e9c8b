"""Kernel Bayes' rule: posterior inference with kernel mean embeddings."""

__version__ = "0.1.0"

from .embeddings import (  # noqa: E402
    JointSample,
    WeightedSample,
    conditional_mean_weights,
    empirical_mean_embedding,
    kbr_prior_weights,
    rkhs_sq_distance,
)
from .errors import ConfigError, DegenerateWeightsError, InputError, KernelBayesError, NumericError  # noqa: E402
from .kbr import (  # noqa: E402
    PosteriorOperator,
    build_posterior_operator,
    posterior_expectation,
    posterior_weights,
    preimage,
)
from .kernels import GaussianRBF, Product, Trace, evaluate, gram_matrix, kernel_from_spec, kernel_vector  # noqa: E402
from .linalg import RegularizationSchedule, incomplete_cholesky, solve_regularized, solve_woodbury  # noqa: E402
from .modelsel import kbr_cross_validate, make_cv_plan, median_bandwidth  # noqa: E402
from .baselines import AbcConfig, KdeConfig, abc_rejection, kde_iw_posterior  # noqa: E402
from .statespace import (  # noqa: E402
    ekf_filter,
    filter_init,
    filter_point_estimate,
    filter_step,
    filter_train,
    run_kbr_filter,
    select_filter_params,
)
from .oracles import (  # noqa: E402
    GaussianJointConfig,
    RotationDynamicsConfig,
    gaussian_conjugate_posterior_mean,
    simulate_rotation,
    write_samples_csv,
    write_trajectory_csv,
)
from .experiments import ExperimentConfig, default_config, load_config, run_experiment, write_outputs  # noqa: E402
