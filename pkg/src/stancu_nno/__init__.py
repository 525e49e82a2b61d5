"""Stancu-type sigmoidal neural network operators with perturbed sampling nodes."""
from .kernel import (
    ActivationKernel,
    ConfigurationError,
    SigmoidalGenerator,
    discrete_moment,
    eval_generator,
    eval_kernel_1d,
    eval_kernel_nd,
    register_generator,
    tail_mass,
)
from .operator import (
    AnalyticSource,
    DomainBox,
    IndexSet,
    OperatorSpec,
    ResolutionError,
    SampledSource,
    SampleCoverageError,
    StancuParams,
    boundedness_constant,
    evaluate,
    evaluate_grid,
    index_set,
    node_bounds,
    node_shift_constant,
    perturbed_node,
)
from .analysis import (
    ConvergenceSeries,
    ErrorReport,
    ModulusEstimate,
    convergence_series,
    estimate_modulus,
    max_error,
    theoretical_bound,
)
from .signals import EcgModel, SampledSignal, denoise, ecg_truth, rmse, sample_noisy

__version__ = "0.1.0"
