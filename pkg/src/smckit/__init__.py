"""Sequential Monte Carlo for declarative state-space models.

A small modelling language is compiled into a node graph, and a family
of filters runs against that graph: a bootstrap particle filter, a
fully adapted auxiliary filter, a Liu-West filter for joint state and
parameter tracking, and an ensemble Kalman filter.  Linear-Gaussian
models can instead be handed to an exact Kalman recursion, and a
particle marginal Metropolis-Hastings sampler targets static
parameters with any of the filters as its likelihood estimator.
"""

from .errors import (
    CompileError,
    ConfigError,
    ContractViolationError,
    DegenerateWeightsError,
    NumericalError,
    ParameterDomainError,
    ParseError,
    SmckitError,
    UnknownDistributionError,
)
from .filters import (
    FilterResult,
    auxiliary_filter,
    bootstrap_filter,
    ensemble_kalman_filter,
    liu_west_filter,
)
from .graph import ModelGraph, compile_model
from .kalman import GaussianSSM, KalmanResult, extract_gaussian, kalman_filter
from .pmmh import PmmhChain, PmmhConfig, pmmh_run
from .rng import RngState

__version__ = "0.1.0"

__all__ = [
    "CompileError",
    "ConfigError",
    "ContractViolationError",
    "DegenerateWeightsError",
    "FilterResult",
    "GaussianSSM",
    "KalmanResult",
    "ModelGraph",
    "NumericalError",
    "ParameterDomainError",
    "ParseError",
    "PmmhChain",
    "PmmhConfig",
    "RngState",
    "SmckitError",
    "UnknownDistributionError",
    "auxiliary_filter",
    "bootstrap_filter",
    "compile_model",
    "ensemble_kalman_filter",
    "extract_gaussian",
    "kalman_filter",
    "liu_west_filter",
    "pmmh_run",
    "__version__",
]
