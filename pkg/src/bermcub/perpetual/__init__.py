"""Perpetual Bermudan values by fixed-point iteration."""
from .dgrid import (DResult, Grid, GridFunction, averaging_operator, exercise_region,
                    grid_margin, iterate_D, mask_transitions)
from .harmonic import HarmonicSpline1D, KResult, gaussian_expectation, iterate_K_1d
from .polyfix import (PolyFixResult, PolyState, det_m2_expansion, gaussian_convolve_poly,
                      polyfix_det_m2, polyfix_H)

__all__ = [
    "DResult", "Grid", "GridFunction", "averaging_operator", "exercise_region",
    "grid_margin", "iterate_D", "mask_transitions", "HarmonicSpline1D", "KResult",
    "gaussian_expectation", "iterate_K_1d", "PolyFixResult", "PolyState",
    "det_m2_expansion", "gaussian_convolve_poly", "polyfix_det_m2", "polyfix_H",
]
