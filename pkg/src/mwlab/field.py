"""Piecewise-constant matrix weights, symbols and vector fields.

All fields are constant on the finest cells of a standard grid.  Matrices are
real symmetric; weights are additionally positive definite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegeneracyError, ParameterError
from .grid import GridSpec

TRIPLE_TOL = 1e-12
EIG_FLOOR = 1e-10
WEIGHT_FAMILIES = ("constant", "scalar-power", "rotating-diagonal", "log-bounded-random")
SYMBOL_FAMILIES = ("constant", "random", "smooth", "log", "step")
VECTOR_FAMILIES = ("random", "constant", "spike")


@dataclass(frozen=True)
class ExponentTriple:
    """Exponents ``(p, q, alpha, d)`` tied by ``alpha/d + 1/q = 1/p``."""

    p: float
    q: float
    alpha: float
    d: int

    def __post_init__(self):
        p, q, alpha, d = float(self.p), float(self.q), float(self.alpha), int(self.d)
        if not (1.0 < p <= q < math.inf):
            raise ParameterError(f"need 1 < p <= q < inf, got p={p}, q={q}")
        if not 0.0 <= alpha < d:
            raise ParameterError(f"need 0 <= alpha < d, got alpha={alpha}, d={d}")
        if abs(alpha / d + 1.0 / q - 1.0 / p) > TRIPLE_TOL:
            raise ParameterError(
                f"alpha/d + 1/q != 1/p for alpha={alpha}, d={d}, p={p}, q={q}"
            )
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "d", d)

    @classmethod
    def from_pq(cls, p: float, q: float, d: int) -> ExponentTriple:
        return cls(p, q, d * (1.0 / p - 1.0 / q), d)

    @classmethod
    def from_alpha_q(cls, alpha: float, q: float, d: int) -> ExponentTriple:
        return cls(1.0 / (alpha / d + 1.0 / q), q, alpha, d)

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0)

    def dual(self) -> ExponentTriple:
        """The triple ``(q', p')`` with the same ``alpha`` and ``d``."""
        return ExponentTriple(self.q_conj, self.p_conj, self.alpha, self.d)

    def as_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "alpha": self.alpha, "d": self.d}


@dataclass(frozen=True, eq=False)
class MatrixField:
    """One ``n x n`` symmetric matrix per finest cell.

    ``kind`` is ``"weight"`` (positive definite) or ``"symbol"``.
    """

    grid: GridSpec
    values: np.ndarray = field(repr=False)
    kind: str = "weight"
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None, None]
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ParameterError(f"field values must have shape (N, n, n), got {values.shape}")
        if values.shape[0] != self.grid.n_cells:
            raise ParameterError(
                f"field has {values.shape[0]} cells, grid has {self.grid.n_cells}"
            )
        if not np.all(np.isfinite(values)):
            raise ParameterError("field contains non-finite entries")
        if self.kind not in ("weight", "symbol"):
            raise ParameterError(f"unknown field kind {self.kind!r}")
        asym = np.abs(values - values.transpose(0, 2, 1)).max(initial=0.0)
        if asym > 1e-10 * max(1.0, np.abs(values).max(initial=0.0)):
            raise ParameterError(f"field is not symmetric (max asymmetry {asym:.3g})")
        values = 0.5 * (values + values.transpose(0, 2, 1))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.kind == "weight":
            lam = self.eig[0]
            bad = np.flatnonzero(lam.min(axis=1) <= 0.0)
            if bad.size:
                raise DegeneracyError(
                    f"weight is not positive definite on cell {int(bad[0])} "
                    f"(min eigenvalue {lam[bad[0]].min():.3g})"
                )

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.values)

    @property
    def eig_bounds(self) -> tuple[float, float]:
        lam = self.eig[0]
        return float(lam.min()), float(lam.max())

    def power_values(self, exponent: float) -> np.ndarray:
        """Cellwise ``W^exponent`` as a raw array."""
        if exponent == 1.0:
            return self.values
        lam, vec = self.eig
        if lam.min() <= 0.0:
            cell = int(np.flatnonzero(lam.min(axis=1) <= 0.0)[0])
            raise DegeneracyError(f"cannot take a real power of a non-SPD matrix on cell {cell}")
        return np.einsum("cij,cj,ckj->cik", vec, lam**exponent, vec)

    def restrict(self, cells) -> np.ndarray:
        return self.values[np.asarray(cells)]

    def with_values(self, values, kind=None) -> MatrixField:
        return MatrixField(self.grid, values, kind or self.kind)

    def __eq__(self, other):
        return (
            isinstance(other, MatrixField)
            and self.grid == other.grid
            and self.kind == other.kind
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != self.grid.n_cells:
            raise ParameterError(f"vector field must have shape (N, n), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ParameterError("vector field contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def __eq__(self, other):
        return (
            isinstance(other, VectorField)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )


def matrix_power(W: MatrixField, exponent: float) -> MatrixField:
    """Cellwise real power of a weight through its eigendecomposition."""
    if W.kind != "weight":
        raise ParameterError("matrix_power needs a weight field")
    if exponent == 1.0:
        return W
    return MatrixField(W.grid, W.power_values(exponent), "weight")


def dual_weight(W: MatrixField, e: ExponentTriple) -> MatrixField:
    """``W^{-p'/q}``, the weight paired with ``W`` under duality."""
    return matrix_power(W, -e.p_conj / e.q)


def scalar_field(grid: GridSpec, values) -> MatrixField:
    """Scalar weight (``n = 1``) from one positive value per cell."""
    return MatrixField(grid, np.asarray(values, dtype=float).reshape(-1, 1, 1), "weight")


def constant_field(grid: GridSpec, matrix, kind="weight") -> MatrixField:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    return MatrixField(grid, np.broadcast_to(matrix, (grid.n_cells,) + matrix.shape), kind)


def identity_field(grid: GridSpec, n: int) -> MatrixField:
    return constant_field(grid, np.eye(n))


# -- instance generators -----------------------------------------------------

def _cell_quadrature(grid: GridSpec, order: int):
    """Gauss-Legendre nodes inside every cell: points ``(N, m, d)`` and weights ``(m,)``."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    mesh = np.meshgrid(*([x] * grid.d), indexing="ij")
    local = np.stack([m.ravel() for m in mesh], axis=1)
    wmesh = np.meshgrid(*([w] * grid.d), indexing="ij")
    weights = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)
    corners = grid.cell_coords() * grid.h
    points = corners[:, None, :] + local[None, :, :] * grid.h
    return points, weights


def _beta_threshold(d: int, exponents) -> float | None:
    if exponents is None:
        return None
    if not isinstance(exponents, ExponentTriple):
        exponents = ExponentTriple(*exponents)
    return d * min(exponents.q / exponents.p_conj, 1.0)


def _floor_eigenvalues(values: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    lam, vec = np.linalg.eigh(values)
    lam = np.maximum(lam, floor)
    return np.einsum("cij,cj,ckj->cik", vec, lam, vec)


def _random_orthogonal(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    z = rng.standard_normal((size, n, n))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]


def _rotation(theta: np.ndarray, n: int) -> np.ndarray:
    """Rotation by ``theta`` in the plane of the first two coordinates."""
    R = np.broadcast_to(np.eye(n), theta.shape + (n, n)).copy()
    if n >= 2:
        c, s = np.cos(theta), np.sin(theta)
        R[..., 0, 0] = c
        R[..., 0, 1] = -s
        R[..., 1, 0] = s
        R[..., 1, 1] = c
    return R


def generate_weight(seed: int, grid: GridSpec, n: int, family: str, params: dict | None = None
                    ) -> MatrixField:
    """Deterministic random weight from one of ``WEIGHT_FAMILIES``.

    Parameters
    ----------
    seed : int
        Seed of the ``numpy`` generator; equal seeds give identical fields.
    grid : GridSpec
    n : int
        Matrix size.
    family : str
        ``constant``: one SPD matrix everywhere (``params["matrix"]`` or random).
        ``scalar-power``: ``|x - x0|^beta`` times the identity, cell-averaged.
        ``rotating-diagonal``: ``R(x) diag(|x - x0|^beta_i) R(x)^T`` with the
        rotation angle ``omega . x``, cell-averaged.
        ``log-bounded-random``: random eigenvectors, log-eigenvalues uniform
        in ``[-M, M]``.
    params : dict, optional
        Family parameters.  ``exponents`` (an ExponentTriple or ``(p, q, alpha, d)``)
        enables the power-range warning in ``meta["warnings"]``.
    """
    params = dict(params or {})
    if family not in WEIGHT_FAMILIES:
        raise ParameterError(f"unknown weight family {family!r}")
    rng = np.random.default_rng(seed)
    N = grid.n_cells
    warnings_ = []
    threshold = _beta_threshold(grid.d, params.pop("exponents", None))
    order = int(params.pop("quad_order", 8))

    if family == "constant":
        if "matrix" in params:
            mat = np.atleast_2d(np.asarray(params.pop("matrix"), dtype=float))
        else:
            Q = _random_orthogonal(rng, n, 1)[0]
            mat = Q @ np.diag(np.exp(rng.uniform(-1.0, 1.0, n))) @ Q.T
        values = np.broadcast_to(mat, (N, n, n)).copy()
    elif family == "log-bounded-random":
        M = float(params.pop("M", 1.0))
        Q = _random_orthogonal(rng, n, N)
        lam = np.exp(rng.uniform(-M, M, (N, n)))
        values = np.einsum("cij,cj,ckj->cik", Q, lam, Q)
    else:
        x0 = np.asarray(params.pop("x0", rng.uniform(0.0, 1.0, grid.d)), dtype=float)
        if family == "scalar-power":
            betas = np.full(n, float(params.pop("beta", 0.5)))
        else:
            default = np.linspace(0.5, -0.3, n) if n > 1 else np.array([0.5])
            betas = np.asarray(params.pop("beta", default), dtype=float).reshape(-1)
            if betas.size != n:
                raise ParameterError(f"need {n} powers, got {betas.size}")
        if threshold is not None:
            for b in betas:
                if abs(b) >= threshold:
                    warnings_.append(
                        f"power {b:g} reaches the guard |beta| >= {threshold:g}; "
                        "membership is decided by the computed characteristic"
                    )
        points, weights = _cell_quadrature(grid, order)
        r = np.linalg.norm(points - x0, axis=-1)
        r = np.maximum(r, 1e-300)
        diag = r[..., None] ** betas  # (N, m, n)
        if family == "scalar-power":
            avg = np.einsum("cm,m->c", diag[..., 0], weights)
            values = avg[:, None, None] * np.eye(n)
        else:
            omega = np.asarray(params.pop("omega", np.full(grid.d, np.pi)), dtype=float)
            theta = points @ omega
            R = _rotation(theta, n)
            mats = np.einsum("cmij,cmj,cmkj->cmik", R, diag, R)
            values = np.einsum("cmik,m->cik", mats, weights)
    if params:
        raise ParameterError(f"unused parameters for family {family!r}: {sorted(params)}")
    values = _floor_eigenvalues(values)
    W = MatrixField(grid, values, "weight")
    lo, hi = W.eig_bounds
    W.meta.update(seed=seed, family=family, warnings=warnings_, eig_min=lo, eig_max=hi)
    return W


def generate_symbol(seed: int, grid: GridSpec, n: int, family: str = "random",
                    params: dict | None = None) -> MatrixField:
    """Deterministic symmetric matrix symbol ``B``."""
    params = dict(params or {})
    if family not in SYMBOL_FAMILIES:
        raise ParameterError(f"unknown symbol family {family!r}")
    rng = np.random.default_rng(seed)
    N = grid.n_cells
    scale = float(params.pop("scale", 1.0))

    def sym(a):
        return 0.5 * (a + np.swapaxes(a, -1, -2))

    centers = grid.cell_centers()
    if family == "constant":
        values = np.broadcast_to(sym(rng.standard_normal((n, n))), (N, n, n)).copy()
    elif family == "random":
        values = sym(rng.standard_normal((N, n, n)))
    elif family == "smooth":
        modes = int(params.pop("modes", 3))
        values = np.zeros((N, n, n))
        for k in range(1, modes + 1):
            C = sym(rng.standard_normal((n, n))) / k
            phase = rng.uniform(0, 2 * np.pi, grid.d)
            values += np.sin(2 * np.pi * k * centers + phase).sum(axis=1)[:, None, None] * C
    elif family == "log":
        x0 = np.asarray(params.pop("x0", rng.uniform(0.0, 1.0, grid.d)), dtype=float)
        C = sym(rng.standard_normal((n, n)))
        r = np.maximum(np.linalg.norm(centers - x0, axis=1), 0.5 * grid.h)
        values = np.log(r)[:, None, None] * C
    else:
        C = sym(rng.standard_normal((n, n)))
        values = np.where((centers[:, 0] >= 0.5)[:, None, None], C, -C)
    if params:
        raise ParameterError(f"unused parameters for symbol family {family!r}: {sorted(params)}")
    B = MatrixField(grid, scale * values, "symbol")
    B.meta.update(seed=seed, family=family)
    return B


def generate_vector(seed: int, grid: GridSpec, n: int, family: str = "random",
                    params: dict | None = None) -> VectorField:
    params = dict(params or {})
    if family not in VECTOR_FAMILIES:
        raise ParameterError(f"unknown vector family {family!r}")
    rng = np.random.default_rng(seed)
    N = grid.n_cells
    if family == "random":
        values = rng.standard_normal((N, n))
    elif family == "constant":
        values = np.broadcast_to(rng.standard_normal(n), (N, n)).copy()
    else:
        cell = int(params.pop("cell", rng.integers(N)))
        values = np.zeros((N, n))
        values[cell] = rng.standard_normal(n)
    if params:
        raise ParameterError(f"unused parameters for vector family {family!r}: {sorted(params)}")
    f = VectorField(grid, values)
    f.meta.update(seed=seed, family=family)
    return f
