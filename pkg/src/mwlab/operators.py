"""Dense operators on piecewise-constant vector fields.

A vector field is an ``(N, n)`` array of cell values.  An operator stores one
block per cell pair so that ``(Tf)_i = sum_j T_ij f_j`` gives the cell average
of the continuous operator applied to ``f`` on cell ``i``.  Blocks that are
multiples of the identity are stored as an ``(N, N)`` scalar array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import DegeneracyError, InvariantError, ParameterError
from .field import ExponentTriple, MatrixField
from .grid import CubeSet, GridSpec, as_cells

OP_KINDS = ("ialpha", "averaging", "commutator", "conjugated", "truncated", "product", "identity",
            "block")
QUAD_ORDER = 24
QUAD_TARGET = 1e-6


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Block operator; ``blocks`` is ``(N, N)`` (scalar times identity) or ``(N, N, n, n)``."""

    grid: GridSpec
    n: int
    blocks: np.ndarray = field(repr=False)
    kind: str = "product"
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=float)
        N = self.grid.n_cells
        if blocks.shape not in ((N, N), (N, N, self.n, self.n)):
            raise ParameterError(f"operator blocks have shape {blocks.shape}, expected N={N}, n={self.n}")
        if not np.all(np.isfinite(blocks)):
            raise ParameterError("operator has non-finite entries")
        if self.kind not in OP_KINDS:
            raise ParameterError(f"unknown operator kind {self.kind!r}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def scalar(self) -> bool:
        return self.blocks.ndim == 2

    @property
    def entries(self) -> np.ndarray:
        """Blocks as a ``(N, N, n, n)`` array."""
        if self.scalar:
            return np.einsum("ij,ab->ijab", self.blocks, np.eye(self.n))
        return self.blocks

    def dense(self) -> np.ndarray:
        """``(N n, N n)`` matrix acting on cell-major flattened fields."""
        if self.scalar:
            return np.kron(self.blocks, np.eye(self.n))
        N, n = self.grid.n_cells, self.n
        return self.blocks.transpose(0, 2, 1, 3).reshape(N * n, N * n)

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if self.scalar:
            return self.blocks @ f
        return np.einsum("ijab,jb->ia", self.blocks, f)

    def transpose(self) -> OperatorMatrix:
        if self.scalar:
            return OperatorMatrix(self.grid, self.n, self.blocks.T.copy(), self.kind, dict(self.meta))
        return OperatorMatrix(self.grid, self.n, self.blocks.transpose(1, 0, 3, 2).copy(), self.kind,
                              dict(self.meta))

    def with_n(self, n: int) -> OperatorMatrix:
        if not self.scalar:
            raise ParameterError("only scalar-block operators can change block size")
        return OperatorMatrix(self.grid, n, self.blocks, self.kind, dict(self.meta))

    def __eq__(self, other):
        return (isinstance(other, OperatorMatrix) and self.grid == other.grid
                and self.n == other.n and np.array_equal(self.entries, other.entries))


def identity_operator(grid: GridSpec, n: int = 1) -> OperatorMatrix:
    return OperatorMatrix(grid, n, np.eye(grid.n_cells), "identity")


# -- fractional integral kernel ----------------------------------------------

def _G1(t, alpha):
    return np.abs(t) ** (alpha + 1.0) / (alpha * (alpha + 1.0))


@lru_cache(maxsize=None)
def _legendre(order: int):
    return roots_legendre(order)


def kernel_profile_1d(m, alpha: float) -> np.ndarray:
    """``c(m) = int_{-1}^{1} (1 - |u|) |m + u|^{alpha - 1} du`` for integer offsets ``m``.

    Small offsets use the second difference of the double antiderivative; far
    offsets, where that difference cancels, use Gauss-Legendre on the smooth
    integrand.
    """
    m = np.abs(np.asarray(m, dtype=float))
    out = _G1(m + 1, alpha) - 2.0 * _G1(m, alpha) + _G1(m - 1, alpha)
    far = m >= 8
    if np.any(far):
        x, w = _legendre(QUAD_ORDER)
        u = 0.5 * (x + 1.0)                       # nodes on [0, 1]
        mf = m[far][:, None]
        vals = (1.0 - u) * ((mf + u) ** (alpha - 1.0) + (mf - u) ** (alpha - 1.0))
        out = out.copy()
        out[far] = 0.5 * (vals * w).sum(axis=1)
    return out


def _weight2(s):
    return (1.0 - np.abs(s[..., 0])) * (1.0 - np.abs(s[..., 1]))


def _tensor_square(m, lo, alpha, order):
    """Tensor Gauss over the unit square ``lo + [0,1]^2``, no singularity inside."""
    x, w = _legendre(order)
    u = 0.5 * (x + 1.0)
    s = np.stack(np.meshgrid(lo[0] + u, lo[1] + u, indexing="ij"), axis=-1)
    r = np.linalg.norm(m + s, axis=-1)
    return 0.25 * float(np.sum(np.outer(w, w) * _weight2(s) * r ** (alpha - 2.0)))


def _duffy_square(m, corner, signs, alpha, order):
    """Unit square with the kernel singularity at ``corner``; Duffy map per triangle,
    Gauss-Jacobi in the radial variable absorbs ``u^{alpha-1}``."""
    xj, wj = roots_jacobi(order, 0.0, alpha - 1.0)
    u = 0.5 * (xj + 1.0)
    wu = wj * 0.5 ** alpha                        # int_0^1 g(u) u^{alpha-1} du
    xl, wl = _legendre(order)
    v = 0.5 * (xl + 1.0)
    wv = 0.5 * wl
    total = 0.0
    U, Vv = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    for a, b in ((U, U * Vv), (U * Vv, U)):
        s = np.stack([corner[0] + signs[0] * a, corner[1] + signs[1] * b], axis=-1)
        # |m + s| = u * sqrt(1 + v^2); the Jacobian u and u^{alpha-2} give u^{alpha-1}
        radial = (1.0 + Vv * Vv) ** (0.5 * (alpha - 2.0))
        total += float(np.sum(W * _weight2(s) * radial))
    return total


def _profile_2d_single(m, alpha, order):
    m = np.asarray(m, dtype=float)
    total = 0.0
    for lo in ((-1.0, -1.0), (-1.0, 0.0), (0.0, -1.0), (0.0, 0.0)):
        lo = np.asarray(lo)
        corners = [lo + np.array(c) for c in ((0, 0), (1, 0), (0, 1), (1, 1))]
        sing = [c for c in corners if np.allclose(c, -m)]
        if sing:
            c = sing[0]
            signs = np.where(c > lo, -1.0, 1.0)   # point into the square
            total += _duffy_square(m, c, signs, alpha, order)
        else:
            total += _tensor_square(m, lo, alpha, order)
    return total


def kernel_profile_2d(offsets, alpha: float, order: int = QUAD_ORDER):
    """``c(m) = int_{[-1,1]^2} (1-|s1|)(1-|s2|) |m + s|^{alpha - 2} ds`` and an error estimate.

    The estimate is the largest change when the node count is doubled.
    """
    offsets = np.asarray(offsets, dtype=float).reshape(-1, 2)
    key = np.sort(np.abs(offsets), axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    vals = np.empty(len(uniq))
    err = 0.0
    for k, m in enumerate(uniq):
        a = _profile_2d_single(m, alpha, order)
        b = _profile_2d_single(m, alpha, 2 * order)
        vals[k] = b
        err = max(err, abs(a - b) / abs(b))
    return vals[inv.ravel()], err


def build_ialpha(grid: GridSpec, e: ExponentTriple | float, n: int = 1) -> OperatorMatrix:
    """Cell-averaged fractional integral: ``kappa_ij = |Q_i|^{-1} int_{Q_i} int_{Q_j} |x-y|^{alpha-d}``."""
    alpha = e.alpha if isinstance(e, ExponentTriple) else float(e)
    if not 0.0 < alpha < grid.d:
        raise ParameterError(f"fractional integral needs 0 < alpha < d, got alpha={alpha}")
    coords = grid.cell_coords()
    diff = coords[:, None, :] - coords[None, :, :]
    h = grid.h
    meta = {"alpha": alpha}
    if grid.d == 1:
        kappa = h ** alpha * kernel_profile_1d(diff[..., 0], alpha)
        meta["quadrature_error"] = 0.0
    else:
        vals, err = kernel_profile_2d(diff.reshape(-1, 2), alpha)
        kappa = h ** alpha * vals.reshape(diff.shape[:2])
        meta["quadrature_error"] = err
        if err > QUAD_TARGET:
            raise InvariantError(f"kernel quadrature error {err:.2e} above target {QUAD_TARGET}")
    return OperatorMatrix(grid, n, kappa, "ialpha", meta)


def single_cube_kappa(alpha: float, d: int = 1) -> float:
    """``kappa`` of the unit cube against itself (``L = 0``)."""
    if d == 1:
        return float(kernel_profile_1d(np.array([0.0]), alpha)[0])
    return float(kernel_profile_2d(np.zeros((1, 2)), alpha)[0][0])


def refinement_sum(op: OperatorMatrix) -> float:
    """``|Q|^{-1} sum_ij |Q_i| kappa_ij``: the unit-cube entry rebuilt from a refined grid."""
    return float(op.blocks.sum() * op.grid.cell_measure)


# -- averaging, commutators, conjugation --------------------------------------

def build_averaging(S, e: ExponentTriple, grid: GridSpec | None = None, n: int = 1) -> OperatorMatrix:
    """``A_S f = chi_S |S|^{alpha/d - 1} int_S f``."""
    if grid is None:
        if not isinstance(S, CubeSet):
            raise ParameterError("grid required unless S is a CubeSet")
        grid = S.grid
    cells = as_cells(S, grid)
    if cells.size == 0:
        raise ParameterError("averaging set is empty")
    mu = grid.cell_measure
    measure = cells.size * mu
    blocks = np.zeros((grid.n_cells, grid.n_cells))
    blocks[np.ix_(cells, cells)] = measure ** (e.alpha / e.d - 1.0) * mu
    return OperatorMatrix(grid, n, blocks, "averaging", {"measure": measure})


def _check_compatible(T: OperatorMatrix, F: MatrixField):
    if F.grid.standard != T.grid.standard or F.n_cells != T.grid.n_cells:
        raise ParameterError("operator and field live on different grids")
    if not T.scalar and F.n != T.n:
        raise ParameterError(f"block size {T.n} does not match field size {F.n}")


def build_commutator(T: OperatorMatrix, B: MatrixField) -> OperatorMatrix:
    """``[M_B, T]``: blocks ``B_i T_ij - T_ij B_j``."""
    _check_compatible(T, B)
    Bv = B.values
    if T.scalar:
        blocks = T.blocks[:, :, None, None] * (Bv[:, None] - Bv[None, :])
    else:
        blocks = (np.einsum("iab,ijbc->ijac", Bv, T.blocks)
                  - np.einsum("ijab,jbc->ijac", T.blocks, Bv))
    return OperatorMatrix(T.grid, B.n, blocks, "commutator", {"from": T.kind})


def conjugate(T: OperatorMatrix, V: MatrixField, U: MatrixField, e: ExponentTriple) -> OperatorMatrix:
    """``V^{1/q} T U^{-1/q}``: blocks ``V_i^{1/q} T_ij U_j^{-1/q}``."""
    _check_compatible(T, V)
    _check_compatible(T, U)
    Vq = V.power_values(1.0 / e.q)
    Uq = U.power_values(-1.0 / e.q)
    if T.scalar:
        blocks = T.blocks[:, :, None, None] * np.einsum("iab,jbc->ijac", Vq, Uq)
    else:
        blocks = np.einsum("iab,ijbc,jcd->ijad", Vq, T.blocks, Uq)
    return OperatorMatrix(T.grid, V.n, blocks, "conjugated", {"from": T.kind})


def truncate(T: OperatorMatrix, S) -> OperatorMatrix:
    """``chi_S T chi_S``."""
    cells = as_cells(S, T.grid)
    mask = np.zeros(T.grid.n_cells, dtype=bool)
    mask[cells] = True
    keep = mask[:, None] & mask[None, :]
    blocks = T.blocks * (keep if T.scalar else keep[:, :, None, None])
    return OperatorMatrix(T.grid, T.n, blocks, "truncated", {"from": T.kind, "cells": int(cells.size)})


# -- block weight -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockWeight:
    """Cellwise ``Phi = [[V^{1/q}, V^{1/q} B], [0, U^{1/q}]]`` and ``W = (Phi^T Phi)^{q/2}``."""

    Phi: np.ndarray = field(repr=False)
    Phi_inv: np.ndarray = field(repr=False)
    W: MatrixField = field(repr=False)
    n: int = 1

    def conjugated(self, T: OperatorMatrix) -> OperatorMatrix:
        """``Phi T Phi^{-1}`` for a scalar-block ``T``."""
        if not T.scalar:
            raise ParameterError("block conjugation expects a scalar-block operator")
        blocks = T.blocks[:, :, None, None] * np.einsum("iab,jbc->ijac", self.Phi, self.Phi_inv)
        return OperatorMatrix(T.grid, 2 * self.n, blocks, "block", {"from": T.kind})

    def upper_right(self, T: OperatorMatrix) -> np.ndarray:
        n = self.n
        return self.conjugated(T).blocks[:, :, :n, n:]


def build_block_weight(U: MatrixField, V: MatrixField, B: MatrixField, e: ExponentTriple,
                       check_tol: float = 1e-10) -> BlockWeight:
    n = U.n
    N = U.n_cells
    Vq, Uq = V.power_values(1.0 / e.q), U.power_values(1.0 / e.q)
    Vm, Um = V.power_values(-1.0 / e.q), U.power_values(-1.0 / e.q)
    Bv = B.values
    Phi = np.zeros((N, 2 * n, 2 * n))
    Phi[:, :n, :n] = Vq
    Phi[:, :n, n:] = Vq @ Bv
    Phi[:, n:, n:] = Uq
    Phi_inv = np.zeros_like(Phi)
    Phi_inv[:, :n, :n] = Vm
    Phi_inv[:, :n, n:] = -Bv @ Um
    Phi_inv[:, n:, n:] = Um
    defect = np.abs(Phi @ Phi_inv - np.eye(2 * n)).max()
    if defect > check_tol * max(1.0, np.abs(Phi).max() * np.abs(Phi_inv).max()):
        raise DegeneracyError(f"Phi Phi^-1 deviates from identity by {defect:.2e}")
    gram = np.einsum("iba,ibc->iac", Phi, Phi)
    gram = 0.5 * (gram + gram.transpose(0, 2, 1))
    lam, vec = np.linalg.eigh(gram)
    if lam.min() <= 0:
        raise DegeneracyError("Phi^T Phi is not positive definite")
    Wv = np.einsum("cij,cj,ckj->cik", vec, lam ** (0.5 * e.q), vec)
    return BlockWeight(Phi, Phi_inv, MatrixField(U.grid, Wv, "weight"), n)


# -- truncation sets ----------------------------------------------------------

def cell_bounds(U: MatrixField, V: MatrixField) -> np.ndarray:
    """Per cell ``max(||U||, ||U^{-1}||, ||V||, ||V^{-1}||)`` from eigenvalues."""
    lu, lv = U.eig[0], V.eig[0]
    return np.max(np.stack([lu.max(1), 1 / lu.min(1), lv.max(1), 1 / lv.min(1)]), axis=0)


def truncation_set(U: MatrixField, V: MatrixField, M: float, region=None) -> CubeSet:
    """Cells of ``region`` (default: everything) where all four norms are ``< M``."""
    if M <= 0:
        raise ParameterError("threshold M must be positive")
    cells = as_cells(region, U.grid)
    bound = cell_bounds(U, V)[cells]
    return CubeSet(U.grid.standard, cells[bound < M])


def least_majority_threshold(U: MatrixField, V: MatrixField, region=None) -> float:
    """Smallest ``M`` with ``2|E_M| > |region|``."""
    cells = as_cells(region, U.grid)
    bound = np.sort(cell_bounds(U, V)[cells])
    k = cells.size // 2 + 1
    return float(np.nextafter(bound[k - 1], math.inf))
