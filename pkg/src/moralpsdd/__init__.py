"""Blameworthiness from data: constrained PSDDs, learned utilities and HK-style blame."""

from .errors import (
    DataError, FitError, MoralPsddError, NBoundError, ParseError, QueryError,
    SupportTooLargeError, UnsatisfiableTheoryError, UtilityError, ZeroProbabilityError,
    ZeroSupportError,
)
from .logic import Scenario, parse_formula, parse_scenario
from .sdd import compile_scenario, enumerate_models, model_count
from .psdd import conditional, evaluate, fit_parameters, marginal, mpe
from .utility import UtilitySpec, learn_utility, linear_utility
from .blame import BlameQuery, ContextDistribution, blameworthiness, cost, delta, prob_do, run_query
from .data import builtin_scenario, generate_lung_cancer, load_dataset

__version__ = "0.1.0"
