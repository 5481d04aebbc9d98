"""Norms on cell-vector spaces: weighted Lebesgue norms, mixed operator norms,
Orlicz (Luxemburg) norms, bump constants, Orlicz maximal functions, the dyadic
domination sum and the sparse stopping-time family.

Lebesgue norms use the cell measure, so ``||f||_r = (sum_i mu |f_i|^r)^{1/r}``
with ``|.|`` Euclidean within a cell.  Orlicz averages over a set of equal cells
are plain means.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .characteristics import Characteristic, bmo_kernel, resolve_regions
from .errors import ConvergenceError, InvariantError, ParameterError
from .field import ExponentTriple, MatrixField, VectorField
from .grid import Cube, CubeSet, GridSpec, enumerate_cubes, shifted_grids
from .operators import OperatorMatrix, build_commutator, build_ialpha, conjugate

OPNORM_RESTARTS = 32
OPNORM_TOL = 1e-9
OPNORM_MAX_ITER = 10_000
ORACLE_MAX_DIM = 8
ORACLE_SAMPLES = 1_000_000
LUX_RTOL = 1e-10


# -- weighted Lebesgue norms --------------------------------------------------

def _values(f) -> np.ndarray:
    v = f.values if isinstance(f, VectorField) else np.asarray(f, dtype=float)
    return v[:, None] if v.ndim == 1 else v


def weighted_norm(f, W: MatrixField | None, r: float, exponent: float, grid: GridSpec | None = None
                  ) -> float:
    """``(sum_i mu |W_i^exponent f_i|^r)^{1/r}``; ``W=None`` means the identity.

    ``exponent`` is ``1/q`` for ``L^q(W)`` and ``L^p(W^{p/q})`` and ``-1/q`` for the
    dual spaces.
    """
    if r < 1:
        raise ParameterError(f"norm exponent r={r} must be >= 1")
    grid = grid or (f.grid if isinstance(f, VectorField) else W.grid)
    v = _values(f)
    if W is not None:
        v = np.einsum("iab,ib->ia", W.power_values(exponent), v)
    g = np.linalg.norm(v, axis=1)
    return float(np.sum(grid.cell_measure * g ** r) ** (1.0 / r))


def _group_norms(X: np.ndarray, n: int) -> np.ndarray:
    """Euclidean norm of each cell block; ``X`` is ``(N n, R)`` -> ``(N, R)``."""
    return np.linalg.norm(X.reshape(-1, n, X.shape[1]), axis=1)


def _mixed_from(g: np.ndarray, r: float) -> np.ndarray:
    """Column-wise ``l^r`` norm of the cell norms ``g``, scaled against overflow."""
    scale = g.max(axis=0)
    safe = np.where(scale > 0, scale, 1.0)
    return np.where(scale > 0, safe * np.sum((g / safe) ** r, axis=0) ** (1.0 / r), 0.0)


def _mixed(X: np.ndarray, n: int, r: float) -> np.ndarray:
    return _mixed_from(_group_norms(X, n), r)


def _duality_factor(g: np.ndarray, r: float) -> np.ndarray:
    scale = g.max(axis=0)
    safe = np.where(scale > 0, scale, 1.0)
    gs = g / safe
    return np.where(gs > 0, np.power(np.where(gs > 0, gs, 1.0), r - 2.0), 0.0)


def _duality_map(X: np.ndarray, n: int, r: float) -> np.ndarray:
    """Per-cell ``|x_i|^{r-2} x_i``, the gradient direction of ``||x||_r^r / r``."""
    factor = _duality_factor(_group_norms(X, n), r)
    return (X.reshape(-1, n, X.shape[1]) * factor[:, None, :]).reshape(X.shape)


# -- operator norms -----------------------------------------------------------

@dataclass
class OpNormEstimate:
    """Restart-based estimate of ``||T||_{L^p(U^{p/q}) -> L^q(V)}``.

    ``lower`` is certified by ``witness``; ``upper_proxy`` is the reported estimate.
    """

    lower: float
    upper_proxy: float
    witness: VectorField = field(repr=False)
    method: str
    restarts: int = 1
    iterations: int = 0
    converged: int = 1
    flagged: bool = False
    values: np.ndarray = field(default=None, repr=False)

    @property
    def estimate(self) -> float:
        return self.upper_proxy

    def to_dict(self) -> dict:
        return {
            "lower": self.lower, "estimate": self.upper_proxy, "method": self.method,
            "restarts": self.restarts, "iterations": self.iterations,
            "converged": self.converged, "flagged": self.flagged,
            "witness": self.witness.values.tolist(),
        }


def _weighted_matrix(T: OperatorMatrix, U, V, e) -> np.ndarray:
    if U is None and V is None:
        return T.dense()
    if U is None or V is None:
        raise ParameterError("give both weights or neither")
    return conjugate(T if not T.scalar else T.with_n(U.n), V, U, e).dense()


def evaluate_ratio(T: OperatorMatrix, U, V, e: ExponentTriple, f) -> float:
    """``||V^{1/q} T f||_q / ||U^{1/q} f||_p`` evaluated from scratch."""
    v = _values(f)
    Tf = T.apply(v)
    num = weighted_norm(Tf, V, e.q, 1.0 / e.q, T.grid)
    den = weighted_norm(v, U, e.p, 1.0 / e.q, T.grid)
    return num / den if den > 0 else 0.0


def _witness(g: np.ndarray, U, e, grid, n) -> VectorField:
    g = g.reshape(-1, n)
    if U is not None:
        g = np.einsum("iab,ib->ia", U.power_values(-1.0 / e.q), g)
    return VectorField(grid, g)


def opnorm(T: OperatorMatrix, U: MatrixField | None, V: MatrixField | None, e: ExponentTriple,
           restarts: int = OPNORM_RESTARTS, seed: int = 0, tol: float = OPNORM_TOL,
           max_iter: int = OPNORM_MAX_ITER) -> OpNormEstimate:
    """Mixed-norm estimate of ``T`` from ``L^p(U^{p/q})`` to ``L^q(V)``.

    The problem is conjugated to the unweighted ``l^p -> l^q`` norm of
    ``K = V^{1/q} T U^{-1/q}`` (Euclidean within cells).  ``p = q = 2`` is the
    largest singular value; otherwise a dual-exponent fixed-point ascent runs
    from ``restarts`` starts (top singular vector, strongest single columns,
    seeded Gaussians), vectorized as matrix columns.
    """
    n = U.n if U is not None else T.n
    grid = T.grid
    K = _weighted_matrix(T, U, V, e)
    scale = grid.cell_measure ** (1.0 / e.q - 1.0 / e.p)
    dim = K.shape[1]
    if not np.any(K):
        g = np.zeros(dim)
        g[0] = 1.0
        return OpNormEstimate(0.0, 0.0, _witness(g, U, e, grid, n), "zero", 1, 0, 1)
    Uk, sv, Vt = np.linalg.svd(K)
    if e.p == 2.0 and e.q == 2.0:
        est = scale * float(sv[0])
        return OpNormEstimate(est, est, _witness(Vt[0], U, e, grid, n), "svd", 1, 0, 1)

    R = max(int(restarts), 1)
    starts = [Vt[0]]
    n_cols = min(max(R // 4, 1), dim, R - 1)
    for j in np.argsort(-np.linalg.norm(K, axis=0), kind="stable")[:n_cols]:
        s = np.zeros(dim)
        s[j] = 1.0
        starts.append(s)
    rng = np.random.default_rng(seed)
    while len(starts) < R:
        starts.append(rng.standard_normal(dim))
    X = np.stack(starts[:R], axis=1)
    X /= _mixed(X, n, e.p)
    pc = e.p_conj
    best = np.zeros(R)
    best_X = X.copy()
    prev = np.full(R, -np.inf)
    done = np.zeros(R, dtype=bool)
    iterations = np.zeros(R, dtype=int)
    N = K.shape[0] // n
    for it in range(max_iter):
        act = np.flatnonzero(~done)
        Xa = X[:, act]
        Y = K @ Xa
        gY = _group_norms(Y, n)
        vals = _mixed_from(gY, e.q)
        improved = vals > best[act]
        best[act[improved]] = vals[improved]
        best_X[:, act[improved]] = Xa[:, improved]
        rel = np.abs(vals - prev[act]) / np.maximum(vals, 1e-300)
        newly = rel < tol
        iterations[act[newly]] = it
        done[act[newly]] = True
        if done.all():
            break
        prev[act] = vals
        keep = ~newly
        act, Y, gY = act[keep], Y[:, keep], gY[:, keep]
        Z = K.T @ (Y.reshape(N, n, -1) * _duality_factor(gY, e.q)[:, None, :]).reshape(Y.shape)
        gZ = _group_norms(Z, n)
        fZ = _duality_factor(gZ, pc)
        norms = _mixed_from(fZ * gZ, e.p)
        ok = norms > 0
        Xn = (Z.reshape(-1, n, Z.shape[1]) * fZ[:, None, :]).reshape(Z.shape)
        X[:, act[ok]] = Xn[:, ok] / norms[ok]
    iterations[~done] = max_iter
    k = int(np.argmax(best))
    g = best_X[:, k]
    raw = float(_mixed((K @ g)[:, None], n, e.q)[0] / _mixed(g[:, None], n, e.p)[0])
    lower = scale * raw
    flagged = not done.any()
    return OpNormEstimate(lower, scale * float(best.max()), _witness(g, U, e, grid, n), "power", R,
                          int(iterations.max()), int(done.sum()), flagged, scale * best)


def opnorm_oracle(T: OperatorMatrix, U: MatrixField | None, V: MatrixField | None,
                  e: ExponentTriple, samples: int = ORACLE_SAMPLES, seed: int = 0,
                  polish: int = 4) -> float:
    """Brute-force surrogate for small problems: random directions plus local polish."""
    n = U.n if U is not None else T.n
    K = _weighted_matrix(T, U, V, e)
    dim = K.shape[1]
    if dim > ORACLE_MAX_DIM:
        raise ParameterError(f"oracle refuses dimension {dim} > {ORACLE_MAX_DIM}")
    scale = T.grid.cell_measure ** (1.0 / e.q - 1.0 / e.p)
    rng = np.random.default_rng(seed)

    def ratio(X):
        den = _mixed(X, n, e.p)
        return np.where(den > 0, _mixed(K @ X, n, e.q) / np.where(den > 0, den, 1.0), 0.0)

    chunk = 100_000
    pool_x, pool_v = [], []
    for start in range(0, samples, chunk):
        X = rng.standard_normal((dim, min(chunk, samples - start)))
        v = ratio(X)
        top = np.argsort(-v)[:polish]
        pool_x.append(X[:, top])
        pool_v.append(v[top])
    X = np.concatenate(pool_x, axis=1)
    v = np.concatenate(pool_v)
    best = float(v.max())
    for j in np.argsort(-v)[:polish]:
        x0 = X[:, j] / np.linalg.norm(X[:, j])
        res = optimize.minimize(lambda x: -ratio(x[:, None])[0], x0, method="Powell",
                                options={"xtol": 1e-10, "ftol": 1e-14, "maxfev": 20_000})
        best = max(best, float(-res.fun))
    return scale * best


# -- Young functions ----------------------------------------------------------

def _solve_increasing(fn, target: np.ndarray, guess: np.ndarray, iters: int = 40) -> np.ndarray:
    """Solve ``fn(s) = target`` for increasing ``fn`` on ``(0, inf)``.

    Newton steps on ``log fn(e^l) = log target`` with a finite-difference slope;
    entries that do not settle fall back to log-bisection.
    """
    target = np.asarray(target, dtype=float)
    lt = np.log(target)
    ell = np.log(np.maximum(guess, 1e-300))
    eps = 1e-7
    with np.errstate(divide="ignore", invalid="ignore"):
        return _solve_increasing_inner(fn, target, lt, ell, eps, iters)


def _solve_increasing_inner(fn, target, lt, ell, eps, iters):
    for _ in range(iters):
        f0 = np.log(fn(np.exp(ell)))
        resid = f0 - lt
        if np.all(np.abs(resid) < 1e-14):
            return np.exp(ell)
        slope = (np.log(fn(np.exp(ell + eps))) - f0) / eps
        step = np.where(slope > 0, resid / np.where(slope > 0, slope, 1.0), np.sign(resid))
        ell = ell - np.clip(step, -2.0, 2.0)
    bad = np.abs(np.log(fn(np.exp(ell))) - lt) >= 1e-12
    if bad.any():
        lo = ell[bad] - 8.0
        hi = ell[bad] + 8.0
        tb = target[bad]
        for _ in range(200):
            low_bad = fn(np.exp(lo)) > tb
            high_bad = fn(np.exp(hi)) < tb
            lo = np.where(low_bad, lo - 16.0, lo)
            hi = np.where(high_bad, hi + 16.0, hi)
            if not (low_bad.any() or high_bad.any()):
                break
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = fn(np.exp(mid)) < tb
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        ell[bad] = 0.5 * (lo + hi)
    return np.exp(ell)


@dataclass(frozen=True)
class YoungFunction:
    """``power``: ``t^r``; ``power-log``: ``t^r log(e + t)^delta``; ``complement``: Legendre
    transform of ``base``."""

    family: str
    r: float = 2.0
    delta: float = 0.0
    base: YoungFunction | None = None

    def __post_init__(self):
        if self.family not in ("power", "power-log", "complement"):
            raise ParameterError(f"unknown Young family {self.family!r}")
        if self.family == "complement":
            if self.base is None or self.base.family == "complement":
                raise ParameterError("complement needs a power or power-log base")
            return
        if not self.r > 1.0:
            raise ParameterError(f"Young function exponent r={self.r} must exceed 1")
        if self.family == "power-log":
            t = np.logspace(-6, 8, 2001)
            v = self(t)
            slope = np.diff(v) / np.diff(t)
            if np.any(np.diff(slope) < -1e-9 * np.abs(slope[1:])) or np.any(v[1:] <= v[:-1]):
                raise ParameterError(f"power-log({self.r}, {self.delta}) is not convex increasing")

    @classmethod
    def power(cls, r: float) -> YoungFunction:
        return cls("power", float(r))

    @classmethod
    def power_log(cls, r: float, delta: float) -> YoungFunction:
        return cls("power-log", float(r), float(delta))

    @classmethod
    def parse(cls, text: str) -> YoungFunction:
        """``power:R`` or ``powerlog:R,DELTA``; a trailing ``~`` takes the complement."""
        comp = text.endswith("~")
        body = text[:-1] if comp else text
        try:
            name, _, args = body.partition(":")
            nums = [float(a) for a in args.split(",")]
            if name == "power" and len(nums) == 1:
                phi = cls.power(nums[0])
            elif name == "powerlog" and len(nums) == 2:
                phi = cls.power_log(*nums)
            else:
                raise ValueError
        except ValueError as exc:
            raise ParameterError(f"cannot parse Young function {text!r}") from exc
        return phi.complement() if comp else phi

    def label(self) -> str:
        if self.family == "power":
            return f"power:{self.r:g}"
        if self.family == "power-log":
            return f"powerlog:{self.r:g},{self.delta:g}"
        return self.base.label() + "~"

    def complement(self) -> YoungFunction:
        if self.family == "complement":
            return self.base            # convex base: the double complement is the base
        return YoungFunction("complement", base=self)

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        if self.family == "power":
            return t ** self.r
        if self.family == "power-log":
            return t ** self.r * np.log(np.e + t) ** self.delta
        b = self.base
        if b.family == "power":
            rc = b.r / (b.r - 1.0)
            return (b.r - 1.0) * (t / b.r) ** rc
        s = self._maximizer(t)
        return np.maximum(t * s - b(s), 0.0)

    def derivative(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        if self.family == "power":
            return self.r * t ** (self.r - 1.0)
        if self.family == "power-log":
            ell = np.log(np.e + t)
            return (self.r * t ** (self.r - 1.0) * ell ** self.delta
                    + self.delta * t ** self.r * ell ** (self.delta - 1.0) / (np.e + t))
        return self._maximizer(t)

    def _maximizer(self, t):
        """``s`` with ``base'(s) = t``, the point where the Legendre supremum is attained."""
        b = self.base
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        if pos.any():
            guess = (t[pos] / b.r) ** (1.0 / (b.r - 1.0))
            out[pos] = _solve_increasing(b.derivative, t[pos], guess)
        return out

    def inverse(self, y):
        """``Phi^{-1}(y)``."""
        y = np.asarray(y, dtype=float)
        if self.family == "power":
            return y ** (1.0 / self.r)
        if self.family == "complement" and self.base.family == "power":
            b = self.base
            rc = b.r / (b.r - 1.0)
            return b.r * (y / (b.r - 1.0)) ** (1.0 / rc)
        out = np.zeros_like(y)
        pos = y > 0
        if pos.any():
            out[pos] = _solve_increasing(self, y[pos], np.maximum(y[pos], 1e-12) ** 0.5)
        return out

    def log_value(self, u):
        """``log Phi(e^u)`` without overflow (``power`` and ``power-log`` only)."""
        u = np.asarray(u, dtype=float)
        if self.family == "power":
            return self.r * u
        if self.family == "power-log":
            return self.r * u + self.delta * np.log(np.logaddexp(1.0, u))
        b = self.base
        if b.family == "power":
            rc = b.r / (b.r - 1.0)
            return math.log(b.r - 1.0) + rc * (u - math.log(b.r))
        return np.log(self(np.exp(u)))


def young_gap(phi: YoungFunction, s, t) -> np.ndarray:
    """``Phi(s) + Phi~(t) - s t`` on a lattice; nonnegative for a complementary pair."""
    S, Tt = np.meshgrid(np.asarray(s, float), np.asarray(t, float), indexing="ij")
    return phi(S) + phi.complement()(Tt) - S * Tt


# -- Luxemburg norms ----------------------------------------------------------

def luxemburg(values, phi: YoungFunction, cells=None, rtol: float = LUX_RTOL):
    """``inf{lam > 0 : avg Phi(|f|/lam) <= 1}`` over axis 0 (one norm per column).

    The returned value is the feasible end of the final bisection bracket, so
    ``avg Phi(|f|/lam) <= 1`` holds for it.
    """
    v = np.abs(np.asarray(values, dtype=float))
    if cells is not None:
        v = v[np.asarray(cells)]
    tail = v.shape[1:]
    v = v.reshape(v.shape[0], -1)
    m = v.shape[0]
    top = v.max(axis=0)
    out = np.zeros(v.shape[1])
    live = top > 0
    if live.any():
        G = v[:, live] / top[live]
        if not np.all(np.isfinite(G)):
            raise ParameterError("non-finite values in Luxemburg norm")
        lo = np.full(G.shape[1], 1.0 / float(phi.inverse(np.array([float(m)]))[0]))
        hi = np.full(G.shape[1], 1.0 / float(phi.inverse(np.array([1.0]))[0]))
        lo = np.minimum(lo, hi)
        for _ in range(200):
            active = hi > lo * (1.0 + rtol)
            if not active.any():
                break
            mid = np.sqrt(lo * hi)
            ok = np.mean(phi(G / mid), axis=0) <= 1.0
            hi = np.where(active & ok, mid, hi)
            lo = np.where(active & ~ok, mid, lo)
        else:
            raise ConvergenceError("Luxemburg bisection did not close")
        out[live] = top[live] * hi
    return float(out[0]) if not tail else out.reshape(tail)


def luxemburg_star(values, phi: YoungFunction, cells=None) -> float:
    """``inf_s {s + s avg Phi(|f|/s)}``, minimized over ``log s`` (the function is unimodal)."""
    v = np.abs(np.asarray(values, dtype=float)).ravel()
    if cells is not None:
        v = v[np.asarray(cells)]
    lam = luxemburg(v, phi)
    if lam == 0:
        return 0.0

    def obj(logs):
        s = math.exp(logs)
        return s + s * float(np.mean(phi(v / s)))

    lo, hi = math.log(lam) - 40.0, math.log(2.0 * lam)
    grid = np.linspace(lo, hi, 161)
    vals = np.array([obj(x) for x in grid])
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(obj, bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-12})
    return float(min(res.fun, vals.min(), obj(math.log(lam))))


# -- bump constants -----------------------------------------------------------

def _cells(region):
    return region.cells if isinstance(region, Cube) else region.members


def _bump_values(K: np.ndarray, regions: list, C: YoungFunction, D: YoungFunction):
    """Per region ``||| K ||_{C_x}||_{D_y}`` and ``||| K ||_{D_y}||_{C_x}``; regions of equal
    size are evaluated together."""
    k1 = np.zeros(len(regions))
    k2 = np.zeros(len(regions))
    groups: dict[int, list[int]] = {}
    for i, reg in enumerate(regions):
        groups.setdefault(len(_cells(reg)), []).append(i)
    for m, idx in groups.items():
        blocks = np.stack([K[np.ix_(_cells(regions[i]), _cells(regions[i]))] for i in idx])
        # blocks[c, x, y]
        inner_x = luxemburg(blocks.transpose(1, 0, 2).reshape(m, -1), C).reshape(len(idx), m)
        k1[idx] = luxemburg(inner_x.T, D)
        inner_y = luxemburg(blocks.transpose(2, 0, 1).reshape(m, -1), D).reshape(len(idx), m)
        k2[idx] = luxemburg(inner_y.T, C)
    return k1, k2


def orlicz_bump_constants(U, V, B, e: ExponentTriple, C: YoungFunction, D: YoungFunction,
                          over=None, max_level=None) -> tuple[Characteristic, Characteristic]:
    """``kappa_1 = sup_Q ||| K ||_{C_x,Q}||_{D_y,Q}`` and ``kappa_2`` with the order swapped,
    ``K(x, y) = ||V^{1/q}(x)(B(x) - B(y))U^{-1/q}(y)||``."""
    K = bmo_kernel(U, V, B, e)
    regions = resolve_regions(U.grid, over, max_level)
    k1, k2 = _bump_values(K, regions, C, D)
    out = []
    for vals, kind in ((k1, "kappa-1"), (k2, "kappa-2")):
        i = int(np.argmax(vals))
        out.append(Characteristic(float(vals[i]), kind, e, regions[i], vals, regions))
    return out[0], out[1]


# -- Orlicz maximal function --------------------------------------------------

def cube_luxemburg(mag: np.ndarray, phi: YoungFunction, cubes: list) -> np.ndarray:
    """Luxemburg norm of ``mag`` on every cube, batched by size."""
    out = np.zeros(len(cubes))
    groups: dict[int, list[int]] = {}
    for i, c in enumerate(cubes):
        groups.setdefault(c.n_cells, []).append(i)
    for m, idx in groups.items():
        cols = np.stack([mag[cubes[i].cells] for i in idx], axis=1)
        out[idx] = luxemburg(cols, phi)
    return out


def orlicz_maximal(f, phi: YoungFunction, alpha_power: float, grid: GridSpec) -> np.ndarray:
    """``sup_{P containing x} |P|^{alpha_power/d} ||f||_{Phi,P}`` per finest cell."""
    if alpha_power < 0:
        raise ParameterError("alpha power must be nonnegative")
    mag = np.linalg.norm(_values(f), axis=1)
    cubes = enumerate_cubes(grid.standard)
    norms = cube_luxemburg(mag, phi, cubes)
    out = np.zeros(grid.n_cells)
    for c, nu in zip(cubes, norms):
        val = c.measure ** (alpha_power / grid.d) * nu
        out[c.cells] = np.maximum(out[c.cells], val)
    return out


# -- domination sum -----------------------------------------------------------

@dataclass
class DominationResult:
    lhs: float
    rhs: float
    ratio: float
    per_grid: list = field(default_factory=list)
    holder_worst: float | None = None


def _pair_terms(U, V, B, e, f, g) -> np.ndarray:
    """``mu^2 |<V_i^{1/q}(B_i - B_j)U_j^{-1/q} f_j, g_i>|`` for all cell pairs."""
    Vq, Uq = V.power_values(1.0 / e.q), U.power_values(-1.0 / e.q)
    fv, gv = _values(f), _values(g)
    a = np.einsum("iba,ib->ia", Vq, gv)            # V_i^{1/q} g_i (symmetric)
    c = np.einsum("jab,jb->ja", Uq, fv)             # U_j^{-1/q} f_j
    Bv = B.values
    inner = np.empty((a.shape[0], c.shape[0]))
    for i in range(a.shape[0]):
        inner[i] = np.einsum("a,jab,jb->j", a[i], Bv[i] - Bv, c)
    mu = U.grid.cell_measure
    return mu * mu * np.abs(inner)


def domination_sum(U, V, B, e: ExponentTriple, f, g, C: YoungFunction | None = None,
                   D: YoungFunction | None = None) -> DominationResult:
    """Left pairing ``|<V^{1/q}[M_B, I_alpha]U^{-1/q} f, g>|`` and the sum over the ``2^d``
    shifted grids and all levels of ``|Q|^{alpha/d - 1} int_Q int_Q |<...>|``.

    With ``C`` and ``D`` given, every summand is also checked against
    ``4 |Q|^{1+alpha/d} min(kappa_1(Q), kappa_2(Q)) ||f||_{D~,Q} ||g||_{C~,Q}``;
    ``holder_worst`` is the largest summand-to-bound ratio (at most 1).
    """
    grid = U.grid
    mu = grid.cell_measure
    T = conjugate(build_commutator(build_ialpha(grid, e, U.n), B), V, U, e)
    fv, gv = _values(f), _values(g)
    lhs = abs(float(mu * np.sum(T.apply(fv) * gv)))
    P = _pair_terms(U, V, B, e, fv, gv)
    rhs = 0.0
    per_grid = []
    worst = 0.0
    K = bmo_kernel(U, V, B, e) if C is not None else None
    fm, gm = np.linalg.norm(fv, axis=1), np.linalg.norm(gv, axis=1)
    for sg in shifted_grids(grid.d, grid.L):
        cubes = enumerate_cubes(sg)
        terms = np.array([c.measure ** (e.alpha / e.d - 1.0) * P[np.ix_(c.cells, c.cells)].sum()
                          for c in cubes])
        per_grid.append({"shift": list(sg.shift), "sum": float(terms.sum())})
        rhs += float(terms.sum())
        if K is not None:
            k1, k2 = _bump_values(K, cubes, C, D)
            nf = cube_luxemburg(fm, D.complement(), cubes)
            ng = cube_luxemburg(gm, C.complement(), cubes)
            meas = np.array([c.measure for c in cubes])
            bound = 4.0 * meas ** (1.0 + e.alpha / e.d) * np.minimum(k1, k2) * nf * ng
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(bound > 0, terms / bound, np.where(terms > 0, np.inf, 0.0))
            worst = max(worst, float(r.max()))
    ratio = lhs / rhs if rhs > 0 else 0.0
    return DominationResult(lhs, rhs, ratio, per_grid, worst if K is not None else None)


# -- sparse family ------------------------------------------------------------

@dataclass
class SparseFamily:
    """Stopping cubes ``S^k``, level buckets ``Q^k`` and the sets ``E_P``."""

    a: float
    stopping: dict
    buckets: dict
    E: dict = field(repr=False)
    norms: dict = field(repr=False)

    @property
    def cubes(self) -> list:
        seen = {}
        for k in sorted(self.stopping):
            for c in self.stopping[k]:
                seen.setdefault(c, None)
        return list(seen)

    def min_fraction(self) -> float:
        return min((self.E[c].size / c.n_cells for c in self.E), default=1.0)


def build_sparse_family(f, phi: YoungFunction, a: float | None = None,
                        grid: GridSpec | None = None) -> SparseFamily:
    """Stopping-time family for ``||f||_{phi,Q}`` on the standard dyadic cubes.

    ``f`` is extended by zero outside the unit cube; the root's parent then has
    average ``2^{-d}`` times the root's, and it (with every larger ancestor, whose
    norms are smaller still) blocks the root for large enough ``a^k``.  Raises
    InvariantError if ``|E_P| >= |P|/2`` or disjointness fails.
    """
    grid = (grid or f.grid).standard
    d = grid.d
    if a is None:
        a = 2.0 ** (d + 1) + 1.0
    if not a > 2.0 ** (d + 1):
        raise ParameterError(f"sparse parameter a={a} must exceed 2^(d+1)={2 ** (d + 1)}")
    mag = np.linalg.norm(_values(f), axis=1)
    cubes = enumerate_cubes(grid)
    norms = dict(zip(cubes, cube_luxemburg(mag, phi, cubes)))
    root = cubes[0]
    padded = np.concatenate([mag, np.zeros(mag.size * (2 ** d - 1))])
    parent_norm = luxemburg(padded, phi)
    log_a = math.log(a)
    stopping: dict[int, list] = {}
    buckets: dict[int, list] = {}
    anc_max = {root: parent_norm}
    for c in cubes:
        if c.level > 0:
            par = c.parent()
            anc_max[c] = max(anc_max[par], norms[par])
        nu = norms[c]
        if nu <= 0:
            continue
        k_top = math.ceil(math.log(nu) / log_a) - 1      # a^k < nu <= a^{k+1}
        buckets.setdefault(k_top, []).append(c)
        anc = anc_max[c]
        k_lo = math.ceil(math.log(anc) / log_a) if anc > 0 else k_top
        if anc > 0 and a ** k_lo < anc:
            k_lo += 1
        for k in range(k_lo, k_top + 1):
            if a ** k < nu:
                stopping.setdefault(k, []).append(c)
    chosen = list(dict.fromkeys(c for k in sorted(stopping) for c in stopping[k]))
    E = {}
    for P in chosen:
        inner = [S for S in chosen if S != P and P.contains(S)]
        cells = CubeSet(grid, P.cells)
        for S in inner:
            cells = cells - CubeSet(grid, S.cells)
        E[P] = cells
    total = 0
    for P, EP in E.items():
        if 2 * EP.size < P.n_cells:
            raise InvariantError(f"|E_P| < |P|/2 on {P.label()}: {EP.size}/{P.n_cells}")
        total += EP.size
    union = np.unique(np.concatenate([EP.members for EP in E.values()])) if E else np.array([])
    if union.size != total:
        raise InvariantError("sets E_P are not pairwise disjoint")
    for k, cs in stopping.items():
        cover = np.concatenate([c.cells for c in cs])
        if np.unique(cover).size != cover.size:
            raise InvariantError(f"stopping cubes of generation {k} overlap")
    return SparseFamily(a, stopping, buckets, E, norms)


# -- class-membership probe ---------------------------------------------------

@dataclass
class ProbeResult:
    verdict: str
    value: float
    shells: np.ndarray = field(repr=False)
    ratios: np.ndarray = field(repr=False)
    schedule: dict = field(default_factory=dict)


PROBE_KEYS = {"a", "b", "c", "shells"}


def bq_integral_probe(phi: YoungFunction, schedule: dict) -> ProbeResult:
    """Tail behaviour of ``int_1^T Phi(t)^a t^{-b} log(e + t)^c dt / t`` as ``T`` grows.

    With ``u = log t`` the integral is split into shells ``u in [0, 1]`` and
    ``u in [e^k, e^{k+1}]``; geometric or faster decay of the shell integrals
    means convergence, non-decaying shells mean divergence.  The integrand shape
    is configuration because the class conditions are defined elsewhere.
    """
    unknown = set(schedule) - PROBE_KEYS
    if unknown:
        raise ParameterError(f"unknown probe keys {sorted(unknown)}")
    a = float(schedule.get("a", 1.0))
    b = float(schedule.get("b", 0.0))
    c = float(schedule.get("c", 0.0))
    K = int(schedule.get("shells", 6))

    def log_integrand(u):
        return a * phi.log_value(u) - b * u + c * np.log(np.logaddexp(1.0, u))

    edges = [0.0, 1.0] + [math.exp(k + 1) for k in range(K)]
    shells = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda u: math.exp(min(float(log_integrand(u)), 700.0)), lo, hi,
                                limit=200, epsrel=1e-10)
        shells.append(val)
    shells = np.array(shells)
    prev = shells[1:-1]
    ratios = np.where(prev > 0, shells[2:] / np.where(prev > 0, prev, 1.0), 0.0)
    last = ratios[-3:]
    if np.all(last < 1.0 - 1e-3):
        rho = float(last.max())
        verdict, value = "converging", float(shells.sum() + shells[-1] * rho / (1.0 - rho))
    else:
        verdict, value = "diverging", math.inf
    return ProbeResult(verdict, value, shells, ratios, {"a": a, "b": b, "c": c, "shells": K})
