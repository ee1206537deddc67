"""Normal forms and effective stability near elliptic equilibria."""
from .errors import (ConsistencyError, DimensionError, DomainError, EllipstabError, HypothesisViolation,
                     NormalizationError, PeriodError, ResonanceError, StepSizeError, ThresholdError)
from .poly import Polynomial, complexify, decomplexify, lie_transform, poisson_bracket
from .diophantine import FrequencyVector, PeriodicVector, delta, dirichlet_approx, find_resonance, psi
from .bnf import BNFResult, birkhoff_normal_form, bnf_constants
from .steepness import SteepnessCertificate, certify_stably_steep, certify_steep, taylor_steepness_constants
from .averaging import NormalFormDatum, normalize

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError", "DimensionError", "DomainError", "EllipstabError", "HypothesisViolation",
    "NormalizationError", "PeriodError", "ResonanceError", "StepSizeError", "ThresholdError",
    "Polynomial", "complexify", "decomplexify", "lie_transform", "poisson_bracket",
    "FrequencyVector", "PeriodicVector", "delta", "dirichlet_approx", "find_resonance", "psi",
    "BNFResult", "birkhoff_normal_form", "bnf_constants",
    "SteepnessCertificate", "certify_stably_steep", "certify_steep", "taylor_steepness_constants",
    "NormalFormDatum", "normalize", "__version__",
]
