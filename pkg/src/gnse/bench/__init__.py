"""Manufactured-solution benchmarks, error measures and the command line."""
from .manufactured import (BETA, BENCH_DELTA, ExactFields, ExponentSet, ManufacturedCase,
                           exact_fields, exponents, gamma_for_case, mean_of_power,
                           pressure_mean_constant)
from .measures import (ErrorNorms, compatibility_defect, dual_modular_diagnostic, eoc,
                       error_norms, stability_quantity)
from .study import (CSV_HEADER, EocTable, LevelResult, emit_csv, infsup_probe, make_problem,
                    rates_curves, read_csv, run_study, schur_pencil, solve_sequence)

__all__ = [
    "BETA", "BENCH_DELTA", "ExactFields", "ExponentSet", "ManufacturedCase", "exact_fields",
    "exponents", "gamma_for_case", "mean_of_power", "pressure_mean_constant",
    "ErrorNorms", "compatibility_defect", "dual_modular_diagnostic", "eoc", "error_norms",
    "stability_quantity",
    "CSV_HEADER", "EocTable", "LevelResult", "emit_csv", "infsup_probe", "make_problem",
    "rates_curves", "read_csv", "run_study", "schur_pencil", "solve_sequence",
]
