"""Spectra of vibrationally dressed molecular ensembles in a driven cavity.

Analytic transmission, steady populations and fluorescence from
adiabatically eliminated vibrational modes, cross-checked by a
truncated-Hilbert-space master-equation oracle.
"""

from .params import (DerivedParams, KernelPolicy, ModelParams, at_detuning,
                     derive, figure2_defaults)
from .response import (FirstMoments, PolaritonModes, SpectrumSeries,
                       default_detuning_grid, default_emission_grid,
                       detect_peaks, estimate_n, polariton_modes,
                       steady_first_moments, steady_first_moments_2nd,
                       transmission)
from .moments import (FluctuationInputs, SecondMoments, fluctuation_inputs,
                      p1_closed_form, p1_closed_form_2nd, population_sweep,
                      solve_m1, solve_m2, total_population)
from .fluorescence import (CorrelationSolution, build_ms,
                           fluorescence_spectrum, solve_correlations)

__version__ = "0.1.0"

__all__ = [
    "DerivedParams", "KernelPolicy", "ModelParams", "at_detuning", "derive",
    "figure2_defaults",
    "FirstMoments", "PolaritonModes", "SpectrumSeries",
    "default_detuning_grid", "default_emission_grid", "detect_peaks",
    "estimate_n", "polariton_modes", "steady_first_moments",
    "steady_first_moments_2nd", "transmission",
    "FluctuationInputs", "SecondMoments", "fluctuation_inputs",
    "p1_closed_form", "p1_closed_form_2nd", "population_sweep", "solve_m1",
    "solve_m2", "total_population",
    "CorrelationSolution", "build_ms", "fluorescence_spectrum",
    "solve_correlations",
    "__version__",
]
