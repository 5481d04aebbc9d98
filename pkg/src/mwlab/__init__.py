"""Finite dyadic models of matrix-weighted commutator estimates for fractional integrals.

Modules
-------
grid, field
    Dyadic grids, matrix/vector fields and deterministic generators.
reducing
    Reducing matrices for averaged weighted norms.
characteristics
    A_{p,q} characteristics and weighted BMO-type quantities.
operators
    Fractional integral, averaging, commutator and block-conjugated operators.
norms
    Weighted Lebesgue and Orlicz norms, operator-norm estimation, sparse families.
verify, cli
    Experiment suites and the command-line entry point.
"""
from .errors import ConvergenceError, DegeneracyError, InvariantError, MWLabError, ParameterError
from .field import ExponentTriple, MatrixField, VectorField
from .grid import Cube, CubeSet, GridSpec

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "Cube", "CubeSet", "DegeneracyError", "ExponentTriple", "GridSpec",
    "InvariantError", "MWLabError", "MatrixField", "ParameterError", "VectorField",
]
