"""Leakage-minimizing privacy mappings under an average-distortion budget."""

from .dist_core import (
    Alphabet,
    ConditionalMapping,
    DistortionMatrix,
    JointDistribution,
    compose_output_joint,
    entropy,
    expected_distortion,
    hamming_distortion,
    leakage,
    mutual_information,
)
from .estimators import PrivacyMapper, QuantizedPrivacyMapper
from .exceptions import (
    AlphabetMismatchError,
    ConfigError,
    DataFormatError,
    InfeasibleDistortionError,
    InfeasibleMappingError,
    InvalidDistributionError,
    PreconditionError,
    PrivfError,
    ProblemTooLargeError,
    UnknownLabelError,
)
from .prior_est import SampleTable, empirical_joint, mismatch_bounds, sample_complexity_bound, smoothed_joint
from .quantize import Quantizer, cluster, solve_quantized
from .solver import (
    SolverOptions,
    SolveResult,
    TradeoffCurve,
    brute_force_oracle,
    perfect_privacy_distortion,
    solve_privacy_mapping,
    sweep_curve,
)

__version__ = "0.1.0"

__all__ = [
    "Alphabet", "ConditionalMapping", "DistortionMatrix", "JointDistribution",
    "compose_output_joint", "entropy", "expected_distortion", "hamming_distortion", "leakage",
    "mutual_information", "PrivacyMapper", "QuantizedPrivacyMapper",
    "AlphabetMismatchError", "ConfigError", "DataFormatError", "InfeasibleDistortionError",
    "InfeasibleMappingError", "InvalidDistributionError", "PreconditionError", "PrivfError",
    "ProblemTooLargeError", "UnknownLabelError",
    "SampleTable", "empirical_joint", "mismatch_bounds", "sample_complexity_bound", "smoothed_joint",
    "Quantizer", "cluster", "solve_quantized",
    "SolverOptions", "SolveResult", "TradeoffCurve", "brute_force_oracle",
    "perfect_privacy_distortion", "solve_privacy_mapping", "sweep_curve",
]
