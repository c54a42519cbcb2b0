"""Linear stability, Hopf normal forms and simulation for two-species
reaction-diffusion systems with a memory delay in the cross-diffusion
term and an optional gestation delay in the reaction."""

from .model import (DerivativeTable, Linearization, ModelParams, SteadyState,
                    Variant, derivative_table, linearize, load_model_params,
                    reaction_rhs, steady_state)
from .normalform import (CenterManifoldH, CoeffSet, EigenData,
                         NormalFormResult, b_coefficients,
                         b_coefficients_memory_only, center_manifold_h,
                         coeff_set, eigen_data, normal_form)
from .simulator import (Grid, HistoryBuffer, PeriodDiagnostics, Trajectory,
                        diagnose, homogeneous_reduction_check, make_grid, run,
                        spatial_rhs)
from .spectral import (ConditionReport, HopfPoint, SpectralSlice, Verdict,
                       char_residual, classify_conditions, critical_delays,
                       d21_thresholds, hopf_curve_scan, hopf_frequency,
                       hopf_point, slice_at, stability_verdict, transversality)

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "Variant", "SteadyState", "Linearization",
    "DerivativeTable", "steady_state", "linearize", "derivative_table",
    "reaction_rhs", "load_model_params",
    "SpectralSlice", "HopfPoint", "ConditionReport", "Verdict",
    "char_residual", "slice_at", "hopf_frequency", "critical_delays",
    "d21_thresholds", "classify_conditions", "transversality",
    "stability_verdict", "hopf_curve_scan", "hopf_point",
    "EigenData", "CoeffSet", "CenterManifoldH", "NormalFormResult",
    "eigen_data", "coeff_set", "center_manifold_h", "b_coefficients",
    "b_coefficients_memory_only", "normal_form",
    "Grid", "HistoryBuffer", "Trajectory", "PeriodDiagnostics",
    "make_grid", "run", "spatial_rhs", "diagnose",
    "homogeneous_reduction_check",
    "__version__",
]
