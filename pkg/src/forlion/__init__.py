"""D-optimal designs with mixed continuous and discrete factors for
generalized linear models and multinomial logit models."""

from __future__ import annotations

__version__ = "0.1.0"

from .cubature import CubatureResult, adaptive_cubature
from .design import (
    ApproximateDesign,
    ExactDesign,
    design_info,
    log_det,
    merge_design,
    relative_efficiency,
    sensitivity,
)
from .engine import ForLionConfig, ForLionResult, ew_forlion_optimize, forlion_optimize
from .errors import (
    DegenerateProbabilityError,
    ForLionError,
    FormulaError,
    InfeasibleParameterError,
    NumericalError,
    SingularDesignError,
    ValidationError,
)
from .expectation import (
    BoxPrior,
    CubatureBudgetWarning,
    ParameterSample,
    ew_info_integral,
    ew_info_sample,
    read_parameter_sample,
    write_parameter_sample,
)
from .formula import PredictorFormula, eval_predictor, parse_formula
from .liftone import LiftOneProblem, liftone_optimize, maximize_along_path
from .model import ModelSpec
from .providers import IntegralEWProvider, LocalProvider, SampleEWProvider, make_provider
from .rounding import RoundingConfig, RoundingReport, round_design
from .space import DesignSpace, Factor

__all__ = [
    "ApproximateDesign", "BoxPrior", "CubatureBudgetWarning", "CubatureResult", "DegenerateProbabilityError",
    "DesignSpace", "ExactDesign", "Factor", "ForLionConfig", "ForLionError", "ForLionResult", "FormulaError",
    "InfeasibleParameterError", "IntegralEWProvider", "LiftOneProblem", "LocalProvider", "ModelSpec",
    "NumericalError", "ParameterSample", "PredictorFormula", "RoundingConfig", "RoundingReport",
    "SampleEWProvider", "SingularDesignError", "ValidationError", "adaptive_cubature", "design_info",
    "eval_predictor", "ew_forlion_optimize", "ew_info_integral", "ew_info_sample", "forlion_optimize",
    "liftone_optimize", "log_det", "make_provider", "maximize_along_path", "merge_design", "parse_formula",
    "read_parameter_sample", "relative_efficiency", "round_design", "sensitivity", "write_parameter_sample",
]
