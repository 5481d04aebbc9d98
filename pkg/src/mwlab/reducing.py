"""Reducing matrices for averaged weighted norms.

For a weight ``W``, a set ``S`` and an exponent ``r`` the norm

    rho(e) = (avg_S |W^{s/q} e|^r)^{1/r},   s = +1 or -1,

is replaced by ``|A e|`` for a positive definite ``A``.  With ``r = 2`` the
Gram matrix gives ``A`` exactly.  Otherwise ``rho`` is evaluated on a fixed set
of unit directions and ``A`` comes from the minimum-volume ellipsoid that
encloses the sampled points ``e / rho(e)`` of the unit sphere of ``rho``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DegeneracyError, ParameterError
from .field import ExponentTriple, MatrixField, dual_weight
from .grid import as_cells

MVEE_TOL = 1e-7
MVEE_MAX_ITER = 100_000


@dataclass(frozen=True, eq=False)
class ReducingMatrix:
    """Positive definite ``A`` with ``c^{-1}|Ae| <= rho(e) <= c|Ae|`` on samples.

    ``upper`` is a bound ``rho(e) <= upper * |Ae|`` valid for every ``e``
    (not only the sampled ones); it is 1 for the exact modes.
    """

    A: np.ndarray
    mode: str
    distortion: float
    upper: float = 1.0
    samples: int = 0
    solver: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "mode": self.mode,
            "distortion": self.distortion,
            "upper": self.upper,
            "samples": self.samples,
            "solver": dict(self.solver),
        }


def sample_directions(n: int) -> np.ndarray:
    """Quasi-uniform unit vectors, one per antipodal pair."""
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        theta = np.pi * np.arange(64) / 64
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if n == 3:
        k = np.arange(256) + 0.5
        z = 1.0 - 2.0 * k / 256
        phi = np.pi * (1.0 + 5.0**0.5) * k
        s = np.sqrt(1.0 - z * z)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(12345 + n)
    x = rng.standard_normal((128 * n, n))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def averaged_norm(mats: np.ndarray, r: float, directions: np.ndarray) -> np.ndarray:
    """``(avg_c |M_c e|^r)^{1/r}`` for each row ``e`` of ``directions``."""
    lengths = np.linalg.norm(np.einsum("cij,kj->cki", mats, directions), axis=2)
    if lengths.max(initial=0.0) == 0.0:
        return np.zeros(directions.shape[0])
    scale = lengths.max()
    return scale * np.mean((lengths / scale) ** r, axis=0) ** (1.0 / r)


def _sym_basis(n: int) -> np.ndarray:
    basis = []
    for a in range(n):
        for b in range(a, n):
            E = np.zeros((n, n))
            E[a, b] = E[b, a] = 1.0
            basis.append(E)
    return np.array(basis)


def mvee_barrier(points: np.ndarray, tol: float = MVEE_TOL, max_iter: int = MVEE_MAX_ITER):
    """Minimum-volume ellipsoid ``{x : x^T H x <= 1}`` centred at 0 enclosing ``±points``.

    Log-barrier Newton method on the ``n(n+1)/2`` entries of ``H``; stops when
    the barrier duality gap (an upper bound on the log-volume excess) is below
    ``tol``.  Returns ``(H, M_u, iterations)`` where ``M_u = sum u_i x_i x_i^T``
    is the matching design with weights ``u`` on the simplex.
    """
    X = np.asarray(points, dtype=float)
    m, n = X.shape
    if m < n or np.linalg.matrix_rank(X) < n:
        raise DegeneracyError("sample points do not span the space")
    basis = _sym_basis(n)
    Phi = np.einsum("ia,kab,ib->ik", X, basis, X)
    h = np.linalg.lstsq(
        basis.reshape(len(basis), -1).T, (np.eye(n) / (1.5 * (X * X).sum(1).max())).ravel(),
        rcond=None)[0]

    def objective(hv, t):
        H = np.tensordot(hv, basis, 1)
        lam = np.linalg.eigvalsh(H)
        slack = 1.0 - Phi @ hv
        if lam.min() <= 0.0 or slack.min() <= 0.0:
            return np.inf
        return -t * np.log(lam).sum() - np.log(slack).sum()

    t = 1.0
    iterations = 0
    while True:
        for _ in range(200):
            iterations += 1
            if iterations > max_iter:
                raise ConvergenceError(
                    f"MVEE barrier did not reach tolerance {tol:g} in {max_iter} steps",
                    {"iterations": iterations, "t": t, "gap": m / t, "n_points": m},
                )
            H = np.tensordot(h, basis, 1)
            Hinv = np.linalg.inv(H)
            w = 1.0 / (1.0 - Phi @ h)
            C = np.einsum("ij,kjl->kil", Hinv, basis)
            grad = -t * np.einsum("kii->k", C) + Phi.T @ w
            hess = t * np.einsum("kij,lji->kl", C, C) + (Phi.T * w**2) @ Phi
            step = -np.linalg.solve(hess, grad)
            decrement = -grad @ step
            if decrement < 1e-10:
                break
            f0 = objective(h, t)
            fuzz = 1e-13 * abs(f0)
            alpha = 1.0
            while objective(h + alpha * step, t) > f0 - 0.25 * alpha * decrement + fuzz:
                alpha *= 0.5
                if alpha < 1e-12:
                    break
            h = h + alpha * step
        if m / t <= tol:
            break
        t *= 20.0
    H = np.tensordot(h, basis, 1)
    w = 1.0 / (1.0 - Phi @ h)
    u = w / w.sum()
    return H, (X.T * u) @ X, iterations


def mvee_khachiyan(points: np.ndarray, tol: float = MVEE_TOL, max_iter: int = MVEE_MAX_ITER):
    """Khachiyan's barycentric ascent with Todd-Yildirim away steps.

    Same contract as :func:`mvee_barrier`; stops once every point satisfies
    ``x^T M_u^{-1} x <= n (1 + tol)``.  Much slower on the nearly elliptic
    point clouds met here, kept as an independent solver.
    """
    X = np.asarray(points, dtype=float)
    m, n = X.shape
    if m < n or np.linalg.matrix_rank(X) < n:
        raise DegeneracyError("sample points do not span the space")
    u = np.full(m, 1.0 / m)
    for it in range(1, max_iter + 1):
        M = (X.T * u) @ X
        Minv = np.linalg.inv(M)
        g = np.einsum("ij,jk,ik->i", X, Minv, X)
        j = int(np.argmax(g))
        up = g[j] / n - 1.0
        if up <= tol:
            return Minv / g[j], M, it
        support = np.flatnonzero(u > 0)
        k = support[int(np.argmin(g[support]))]
        down = 1.0 - g[k] / n
        if up >= down:
            tau = (g[j] - n) / (n * (g[j] - 1.0))
            u *= 1.0 - tau
            u[j] += tau
        else:
            tau = max((g[k] - n) / (n * (g[k] - 1.0)), -u[k] / (1.0 - u[k]))
            u *= 1.0 - tau
            u[k] = max(u[k] + tau, 0.0)
    raise ConvergenceError(
        f"MVEE did not reach tolerance {tol:g} in {max_iter} iterations",
        {"iterations": max_iter, "up": float(up), "n_points": m},
    )


MVEE_SOLVERS = {"barrier": mvee_barrier, "khachiyan": mvee_khachiyan}


def _sqrtm_spd(M: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(M)
    if lam.min() <= 0.0:
        raise DegeneracyError("matrix is not positive definite")
    return (vec * np.sqrt(lam)) @ vec.T


def reduce(W: MatrixField, S, r: float, sign: int = 1, q: float | None = None,
           tol: float = MVEE_TOL, max_iter: int = MVEE_MAX_ITER,
           directions: np.ndarray | None = None, solver: str = "barrier") -> ReducingMatrix:
    """Reducing matrix of ``e -> (avg_S |W^{sign/q} e|^r)^{1/r}``.

    ``S`` is a Cube, CubeSet or array of cell indices.  ``q`` defaults to ``r``.
    """
    if sign not in (1, -1):
        raise ParameterError("sign must be +1 or -1")
    if r < 1.0:
        raise ParameterError(f"exponent r={r} must be >= 1")
    cells = as_cells(S, W.grid)
    if cells.size == 0:
        raise ParameterError("cannot reduce over an empty set")
    q = r if q is None else q
    mats = W.power_values(sign / q)[cells]
    n = W.n
    if n == 1:
        rho = averaged_norm(mats, r, np.ones((1, 1)))[0]
        return ReducingMatrix(np.array([[rho]]), "exact-scalar", 1.0, 1.0, 1)
    if r == 2.0:
        gram = np.einsum("cji,cjk->ik", mats, mats) / cells.size
        return ReducingMatrix(_sqrtm_spd(gram), "exact-r2", 1.0, 1.0, 0)

    dirs = sample_directions(n) if directions is None else np.asarray(directions, dtype=float)
    rho = averaged_norm(mats, r, dirs)
    if rho.min() <= 0.0:
        raise DegeneracyError("averaged norm vanishes in a sampled direction")
    H, M_u, iterations = MVEE_SOLVERS[solver](dirs / rho[:, None], tol, max_iter)
    A_raw = _sqrtm_spd(H)
    t = rho / np.linalg.norm(dirs @ A_raw.T, axis=1)
    t_lo, t_hi = float(t.min()), float(t.max())
    s = math.sqrt(t_lo * t_hi)
    A = s * A_raw
    distortion = math.sqrt(t_hi / t_lo)
    # rho(e) <= |M_u^{-1/2} e| for every e: the ellipsoid of M_u sits inside the sampled hull
    Ainv = np.linalg.inv(A)
    upper = math.sqrt(np.linalg.eigvalsh(Ainv @ np.linalg.inv(M_u) @ Ainv).max())
    return ReducingMatrix(
        A, "mvee", distortion, max(upper, distortion), dirs.shape[0],
        {"solver": solver, "tol": tol, "max_iter": max_iter, "iterations": iterations},
    )


def sandwich_ratios(R: ReducingMatrix, W: MatrixField, S, r: float, sign: int, q: float,
                    directions: np.ndarray) -> np.ndarray:
    """``rho(e) / |A e|`` on arbitrary unit directions."""
    cells = as_cells(S, W.grid)
    mats = W.power_values(sign / q)[cells]
    rho = averaged_norm(mats, r, directions)
    return rho / np.linalg.norm(directions @ R.A.T, axis=1)


def matrix_holder_defect(M: ReducingMatrix, Mp: ReducingMatrix) -> float:
    """Spectral norm of ``M^{-1} Mp^{-1}``; at most ``M.upper * Mp.upper``."""
    try:
        prod = np.linalg.solve(M.A, np.linalg.inv(Mp.A))
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError("singular reducing matrix") from exc
    return float(np.linalg.norm(prod, 2))


def holder_slack(M: ReducingMatrix, Mp: ReducingMatrix) -> float:
    return M.upper * Mp.upper


def dual_reducing_pair(W: MatrixField, S, e: ExponentTriple, **solver):
    """Two constructions of the reducing matrix of ``e -> (avg_S |W^{-1/q} e|^{p'})^{1/p'}``.

    The first reduces the dual weight ``W^{-p'/q}`` at its own exponent ``p'``,
    the second reduces ``W^{-1/q}`` directly.
    """
    pc = e.p_conj
    first = reduce(dual_weight(W, e), S, pc, +1, pc, **solver)
    second = reduce(W, S, pc, -1, e.q, **solver)
    return first, second


def duality_gap(W: MatrixField, S, e: ExponentTriple, **solver) -> tuple[float, float]:
    """Largest sampled ``|log(|A1 e| / |A2 e|)|`` over the pair above.

    Returns ``(gap, bound)`` where ``bound`` is the sum of the two logarithmic
    distortions, which the gap never exceeds.
    """
    first, second = dual_reducing_pair(W, S, e, **solver)
    dirs = sample_directions(W.n)
    a = np.linalg.norm(dirs @ first.A.T, axis=1)
    b = np.linalg.norm(dirs @ second.A.T, axis=1)
    gap = float(np.abs(np.log(a / b)).max())
    return gap, math.log(first.distortion) + math.log(second.distortion)
