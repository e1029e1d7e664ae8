"""Periodic Ornstein-Uhlenbeck processes driven by Lévy noise.

Closed-form characteristic functions, evolution systems of measures, the
transition semigroup on exponential test functions, and numerical checks of
gradient, Poincaré and Harnack inequalities.
"""

__version__ = "0.1.0"

from .errors import (ConstantsUnavailable, InfiniteRho, InvalidLevyMeasure, LevyOUError,  # noqa: E402
                     NotExponentiallyStable)
from .evolution import EvolutionFamily, PeriodicCoefficients, stability_envelope  # noqa: E402
from .fourier import FourierSeries  # noqa: E402
from .levy import AtomList, LevyTriple, PowerLawDensity, levy_symbol, validate_measure  # noqa: E402
from .solution import Scenario, char_fn, simulate_paths, transition_exponent  # noqa: E402

__all__ = [
    "AtomList", "ConstantsUnavailable", "EvolutionFamily", "FourierSeries", "InfiniteRho",
    "InvalidLevyMeasure", "LevyOUError", "LevyTriple", "NotExponentiallyStable",
    "PeriodicCoefficients", "PowerLawDensity", "Scenario", "char_fn", "levy_symbol",
    "simulate_paths", "stability_envelope", "transition_exponent", "validate_measure",
    "__version__",
]
