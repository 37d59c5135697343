"""Fast-adapting neural radar detectors.

Simulates pulse-compression radar environments (coherent Weibull clutter,
band-limited interference, Gaussian noise), pretrains a small sigmoid
detector network across many environments via joint transfer learning or
MAML, adapts it to a new environment with a few full-batch gradient steps,
and benchmarks the result against the ideal Gaussian detector through
Monte Carlo ROC estimation.
"""

from .evaluation import (
    AdaptationCurve,
    ROCCurve,
    adaptation_curve,
    binomial_ci,
    estimate_roc,
    network_scores,
    pd_at_pfa,
    roc_at_pfa_grid,
    threshold_for_pfa,
)
from .experiment import ConfigError, ExperimentConfig, MissingPrerequisiteError
from .gaussian_detector import (
    GaussianDetector,
    build_ideal_detector,
    closed_form_roc,
    closed_form_threshold,
    score,
)
from .mlp import (
    MLPParams,
    axpy_params,
    embed_input,
    flatten_params,
    forward,
    hessian_vector_product,
    init_params,
    load_checkpoint,
    loss,
    loss_grad,
    param_count,
    save_checkpoint,
    unflatten_params,
)
from .signal_env import (
    Dataset,
    EnvironmentSpec,
    LabeledSample,
    Waveform,
    clutter_cov,
    derive_seed,
    generate_batch,
    generate_clutter,
    generate_dataset,
    generate_pool,
    generate_sample,
    interference_cov,
    lfm_waveform,
    noise_cov,
    sample_clutter_coeff,
    training_environment_grid,
    weibull_scale_from_median,
)
from .training import (
    TaskBatch,
    TrainConfig,
    TrainTrace,
    adapt,
    maml_inner_update,
    maml_meta_gradient,
    maml_meta_step,
    pretrain_maml,
    pretrain_transfer,
    train_scratch,
)

__version__ = "0.1.0"
