"""Classifier-weighted mixture models.

A mixture of diagonal Gaussians whose weights are not constants but functions
of position: each component carries its own whitening map, and a shared
classifier network turns the whitened coordinate into the mixture weights.
The density stays available in closed form, sampling stays ancestral
(base draw, then label, then affine push), and expectations of functions of a
sample admit a conditioned estimator that marginalizes the label out instead
of sampling it — lower variance, and differentiable end to end.

Training follows maximum likelihood: EM on the constant-weight mixture, an
exact warm start into the classifier-weighted form, then minibatch ascent
with an adaptive-moment optimizer.
"""

from .classifier import MlpClassifier, log_softmax, make_constant_classifier, softmax
from .components import LOG_VAR_BOUND, DiagGaussianComponent, stack_components
from .data import (
    DatasetFormatError,
    DensityDataset,
    ImageDensity,
    ImageFormatError,
    SYNTHETIC_KINDS,
    ZeroMassError,
    from_csv,
    load_image_density,
    make_synthetic,
    regenerate,
    sample_from_image,
    split,
    write_pgm,
)
from .estimators import (
    CATALOG,
    EstimatorReport,
    TestFunction,
    bench_table,
    crude_mc,
    rb_expectation,
    rb_expectation_grad,
    reinforce_grad,
    make_test_function,
    variance_bench,
)
from .gmm import VAR_FLOOR, Gmm, em_fit, gmm_parameter_count, init_cwm_from_gmm
from .mathutils import LOG_TWO_PI, log_sum_exp, std_normal_logpdf
from .model import CwmGrads, CwmModel, SampleTrace
from .modelio import (
    FORMAT_VERSION,
    ModelIOError,
    ModelParseError,
    ModelShapeError,
    ModelVersionError,
    export_density_grid,
    load_model,
    save_model,
)
from .rng import RngHandle
from .training import (
    AdamState,
    TrainConfig,
    TrainReport,
    adam_step,
    count_parameters,
    fit_cwm,
    nll_batch_grad,
)

__version__ = "0.1.0"
