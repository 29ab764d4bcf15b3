"""Finite-volume solver for the 1D Euler equations with gravity.

Entropy-stable, fully well-balanced Godunov-type scheme around an
approximate Riemann solver with gravity source averages, for a cubic
family of equations of state (ideal, van der Waals, Redlich-Kwong,
Peng-Robinson) and bilinear tabulated EOS data.
"""

from .eos import (
    CubicEosParams,
    EosConvergenceError,
    EosDomainError,
    TabulatedEos,
    load_eos_table,
    make_cubic_eos,
    save_eos_table,
    table_from_cubic,
    tabulated_lookup,
)

__all__ = [
    "CubicEosParams",
    "EosConvergenceError",
    "EosDomainError",
    "TabulatedEos",
    "load_eos_table",
    "make_cubic_eos",
    "save_eos_table",
    "table_from_cubic",
    "tabulated_lookup",
]

__version__ = "0.1.0"
