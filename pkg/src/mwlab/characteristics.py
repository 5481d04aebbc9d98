"""Scalar functionals of weights and symbols, evaluated as exact finite sums.

Every quantity is a supremum over a family of regions (by default all dyadic
cubes of the standard grid) of an iterated cell average.  Cell pairs enter
through one kernel,

    K[x, y] = || L(x) (B(x) - B(y)) R(y) ||     (spectral norm),

or ``|| L(x) R(y) ||`` when no symbol is involved, which does not depend on
the region and is therefore computed once and sliced per cube.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, ParameterError
from .field import ExponentTriple, MatrixField, dual_weight
from .grid import Cube, CubeSet, GridSpec, enumerate_cubes
from .reducing import MVEE_MAX_ITER, MVEE_TOL, ReducingMatrix, reduce

PAIR_CHUNK = 1 << 22
KINDS = (
    "apq", "apq-restricted", "bmo-classic", "bmo-tilde", "bmo-tilde-dual",
    "jn-1", "jn-2", "jn-3", "jn-4", "jn-5", "jn-6", "bloom-nu",
)


@dataclass
class Characteristic:
    """Supremum of a per-region functional together with where it is attained."""

    value: float
    kind: str
    exponents: ExponentTriple
    argmax: Cube | CubeSet | None = None
    per_region: np.ndarray = field(default=None, repr=False)
    regions: list = field(default=None, repr=False)
    extra: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": float(self.value),
            "argmax": region_label(self.argmax),
            "exponents": self.exponents.as_dict(),
            "slack": self.extra.get("slack"),
        }


def region_label(region) -> str | None:
    if region is None:
        return None
    if isinstance(region, Cube):
        return region.label()
    return f"set[{region.size} cells]"


def spectral_norm(mats: np.ndarray) -> np.ndarray:
    """Largest singular value over the last two axes."""
    n, m = mats.shape[-2:]
    if n == m == 1:
        return np.abs(mats[..., 0, 0])
    if n == m == 2:
        a, b, c, d = mats[..., 0, 0], mats[..., 0, 1], mats[..., 1, 0], mats[..., 1, 1]
        fro = a * a + b * b + c * c + d * d
        det = a * d - b * c
        disc = np.sqrt(np.maximum(fro * fro - 4.0 * det * det, 0.0))
        return np.sqrt(0.5 * (fro + disc))
    return np.linalg.svd(mats, compute_uv=False)[..., 0]


def pair_kernel(left: np.ndarray, right: np.ndarray, symbol: np.ndarray | None = None
                ) -> np.ndarray:
    """``K[x, y] = ||left_x (B_x - B_y) right_y||`` or ``||left_x right_y||``."""
    if symbol is None:
        return spectral_norm(np.einsum("xab,ybc->xyac", left, right))
    N, n = left.shape[0], left.shape[1]
    out = np.empty((N, right.shape[0]))
    step = max(1, PAIR_CHUNK // max(1, right.shape[0] * n * n))
    for s in range(0, N, step):
        diff = symbol[s:s + step, None] - symbol[None, :]          # exact zero where B_x = B_y
        out[s:s + step] = spectral_norm(np.einsum("xab,xybc,ycd->xyad", left[s:s + step], diff, right))
    return out


def power_mean(values: np.ndarray, r: float, axis=None) -> np.ndarray:
    """``(mean |v|^r)^{1/r}`` with rescaling against overflow."""
    values = np.abs(np.asarray(values, dtype=float))
    scale = values.max(axis=axis, keepdims=True, initial=0.0)
    safe = np.where(scale > 0, scale, 1.0)
    out = safe * np.mean((values / safe) ** r, axis=axis, keepdims=True) ** (1.0 / r)
    out = np.where(scale > 0, out, 0.0)
    return np.squeeze(out, axis=axis) if axis is not None else float(out.squeeze())


def iterated_mean(K: np.ndarray, inner: float, outer: float, inner_axis: int) -> float:
    """``(mean_outer (mean_inner K^inner)^{outer/inner})^{1/outer}``."""
    return power_mean(power_mean(K, inner, axis=inner_axis), outer)


def resolve_regions(grid: GridSpec, over=None, max_level: int | None = None) -> list:
    """Regions for a supremum: all standard dyadic cubes, one set, or a list."""
    if over is None:
        return enumerate_cubes(grid.standard, max_level)
    if isinstance(over, (Cube, CubeSet)):
        return [over]
    return list(over)


def _cells(region) -> np.ndarray:
    return region.cells if isinstance(region, Cube) else region.members


def oscillation(Bc: np.ndarray) -> np.ndarray:
    """``B(x) - m B`` over the given cells; exactly zero when ``B`` is constant there."""
    D = Bc - Bc[0]                  # exact zeros before averaging
    return D - D.mean(axis=0)


def _supremum(values, regions, kind, e, **extra) -> Characteristic:
    values = np.asarray(values, dtype=float)
    i = int(np.argmax(values))
    return Characteristic(float(values[i]), kind, e, regions[i], values, regions, dict(extra))


def _check_weights(*fields_):
    for F in fields_:
        if F.kind != "weight":
            raise ParameterError("expected a weight field")


# -- A_{p,q} -----------------------------------------------------------------

def apq_kernel(W: MatrixField, e: ExponentTriple) -> np.ndarray:
    _check_weights(W)
    return pair_kernel(W.power_values(1.0 / e.q), W.power_values(-1.0 / e.q))


def apq_value(K: np.ndarray, e: ExponentTriple) -> float:
    """``avg_x (avg_y K^{p'})^{q/p'}`` for one region's kernel block."""
    return iterated_mean(K, e.p_conj, e.q, inner_axis=1) ** e.q


def apq_characteristic(W: MatrixField, e: ExponentTriple, over=None,
                       max_level: int | None = None) -> Characteristic:
    """Matrix ``A_{p,q}`` characteristic; ``over`` a CubeSet gives the restricted one."""
    K = apq_kernel(W, e)
    regions = resolve_regions(W.grid, over, max_level)
    values = [apq_value(K[np.ix_(c, c)], e) for c in map(_cells, regions)]
    kind = "apq-restricted" if isinstance(over, CubeSet) else "apq"
    return _supremum(values, regions, kind, e)


def apq_swapped_value(K: np.ndarray, e: ExponentTriple) -> float:
    """``(avg_y (avg_x K^q)^{p'/q})^{1/p'}``, the equivalent form with swapped averages."""
    return iterated_mean(K, e.q, e.p_conj, inner_axis=0)


# -- weighted BMO ------------------------------------------------------------

def bmo_kernel(U: MatrixField, V: MatrixField, B: MatrixField, e: ExponentTriple) -> np.ndarray:
    """``K[x, y] = ||V^{1/q}(x) (B(x) - B(y)) U^{-1/q}(y)||``."""
    _check_weights(U, V)
    return pair_kernel(V.power_values(1.0 / e.q), U.power_values(-1.0 / e.q), B.values)


def tilde_value(K: np.ndarray, e: ExponentTriple) -> float:
    return iterated_mean(K, e.p_conj, e.q, inner_axis=1)


def jn5_value(K: np.ndarray, e: ExponentTriple) -> float:
    return iterated_mean(K, e.q, e.p_conj, inner_axis=0)


def jn6_value(K: np.ndarray, e: ExponentTriple) -> float:
    return iterated_mean(K, e.q, e.q_conj, inner_axis=0)


def tilde_bmo(U, V, B, e, over=None, max_level=None) -> Characteristic:
    K = bmo_kernel(U, V, B, e)
    regions = resolve_regions(U.grid, over, max_level)
    values = [tilde_value(K[np.ix_(c, c)], e) for c in map(_cells, regions)]
    return _supremum(values, regions, "bmo-tilde", e)


def dual_tilde_bmo(U, V, B, e, over=None, max_level=None) -> Characteristic:
    """Tilde-BMO of ``B^T`` for the weights ``(U', V') = (U^{-p'/q}, V^{-p'/q})``
    at the dual exponents ``(q', p')``, computed from the dual side."""
    ed = e.dual()
    Ud, Vd = dual_weight(U, e), dual_weight(V, e)
    Bt = B.with_values(np.swapaxes(B.values, 1, 2))
    K = bmo_kernel(Vd, Ud, Bt, ed)
    regions = resolve_regions(U.grid, over, max_level)
    values = [tilde_value(K[np.ix_(c, c)], ed) for c in map(_cells, regions)]
    return _supremum(values, regions, "bmo-tilde-dual", e)


def bmo_classic(U, V, B, e, over=None, max_level=None) -> Characteristic:
    """``sup_Q (avg_Q ||(m_Q V^{1/q})(B(x) - m_Q B)(m_Q U^{1/q})^{-1}|| dx)^{1/q}``.

    The outer power ``1/q`` is applied as written, so this quantity is not
    positively homogeneous in ``B``.
    """
    _check_weights(U, V)
    Vq, Uq = V.power_values(1.0 / e.q), U.power_values(1.0 / e.q)
    regions = resolve_regions(U.grid, over, max_level)
    values = []
    for region in regions:
        c = _cells(region)
        mU = Uq[c].mean(axis=0)
        try:
            mU_inv = np.linalg.inv(mU)
        except np.linalg.LinAlgError as exc:
            raise DegeneracyError(f"average of U^(1/q) is singular on {region_label(region)}") from exc
        osc = oscillation(B.values[c])
        mats = np.einsum("ab,xbc,cd->xad", Vq[c].mean(axis=0), osc, mU_inv)
        values.append(np.mean(spectral_norm(mats)) ** (1.0 / e.q))
    return _supremum(values, regions, "bmo-classic", e)


@dataclass
class JNProfile:
    """All six John-Nirenberg quantities on a common region family.

    ``split`` holds, per region, the factors of the exact bound
    ``jn5_Q <= jn2_Q * f_U(Q) + jn3_Q * g_V(Q)`` together with the reducing
    matrices' upper distortion factors.
    """

    quantities: dict
    regions: list
    split: dict
    reducing: list = field(default_factory=list, repr=False)


def _jn_reducing(U, V, c, e, solver):
    U_Q = reduce(U, c, e.q, +1, e.q, **solver)
    V_Q = reduce(V, c, e.q, +1, e.q, **solver)
    Vp_Q = reduce(V, c, e.p_conj, -1, e.q, **solver)
    return U_Q, V_Q, Vp_Q


def jn_profile(U: MatrixField, V: MatrixField, B: MatrixField, e: ExponentTriple,
               over=None, max_level: int | None = None, which=(1, 2, 3, 4, 5, 6),
               solver: dict | None = None) -> JNProfile:
    """Evaluate the requested John-Nirenberg quantities on every region.

    Items 1-3 substitute reducing matrices ``U_Q = V_Q(U, q)``, ``V_Q = V_Q(V, q)``
    and ``V'_Q = V'_Q(V, p, q)`` from :func:`mwlab.reducing.reduce`.
    """
    _check_weights(U, V)
    solver = dict(solver or {})
    solver.setdefault("tol", MVEE_TOL)
    solver.setdefault("max_iter", MVEE_MAX_ITER)
    which = tuple(sorted(set(which)))
    if any(k not in range(1, 7) for k in which):
        raise ParameterError(f"John-Nirenberg index must be in 1..6, got {which}")
    q, pc = e.q, e.p_conj
    regions = resolve_regions(U.grid, over, max_level)
    K = bmo_kernel(U, V, B, e) if any(k >= 4 for k in which) or 1 in which else None
    Vq, Umq = V.power_values(1.0 / q), U.power_values(-1.0 / q)
    vals = {k: np.zeros(len(regions)) for k in which}
    f_U = np.zeros(len(regions))
    g_V = np.zeros(len(regions))
    uppers = np.ones((len(regions), 3))
    reducing = []
    need_red = any(k <= 3 for k in which)
    for i, region in enumerate(regions):
        c = _cells(region)
        osc = oscillation(B.values[c])
        if not np.any(osc):
            reducing.append(None)
            continue
        if K is not None:
            Kc = K[np.ix_(c, c)]
            if 4 in which:
                vals[4][i] = tilde_value(Kc, e)
            if 5 in which:
                vals[5][i] = jn5_value(Kc, e)
            if 6 in which:
                vals[6][i] = jn6_value(Kc, e)
        if not need_red:
            reducing.append(None)
            continue
        U_Q, V_Q, Vp_Q = _jn_reducing(U, V, c, e, solver)
        reducing.append((U_Q, V_Q, Vp_Q))
        uppers[i] = (U_Q.upper, V_Q.upper, Vp_Q.upper)
        U_inv = np.linalg.inv(U_Q.A)
        Vp_inv = np.linalg.inv(Vp_Q.A)
        if 1 in which:
            vals[1][i] = np.mean(spectral_norm(np.einsum("ab,xbc,cd->xad", V_Q.A, osc, U_inv)))
        if 2 in which:
            vals[2][i] = power_mean(
                spectral_norm(np.einsum("xab,xbc,cd->xad", Vq[c], osc, U_inv)), q)
        if 3 in which:
            vals[3][i] = power_mean(spectral_norm(
                np.einsum("xab,xcb,cd->xad", Umq[c], osc, Vp_inv)), pc)
        f_U[i] = power_mean(spectral_norm(np.einsum("ab,ybc->yac", U_Q.A, Umq[c])), pc)
        g_V[i] = power_mean(spectral_norm(np.einsum("xab,bc->xac", Vq[c], Vp_Q.A)), q)
    quantities = {k: _supremum(vals[k], regions, f"jn-{k}", e) for k in which}
    split = {"f_U": f_U, "g_V": g_V, "upper": uppers}
    return JNProfile(quantities, regions, split, reducing)


def jn_quantity(k: int, U, V, B, e, over=None, max_level=None, solver=None) -> Characteristic:
    return jn_profile(U, V, B, e, over, max_level, which=(k,), solver=solver).quantities[k]


# -- scalar Bloom weight -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScalarBloomInstance:
    """Scalar weights ``u, v``, symbol ``b`` and ``nu = u^{1/q} v^{-1/q}``."""

    u: MatrixField
    v: MatrixField
    b: MatrixField
    e: ExponentTriple

    def __post_init__(self):
        for F in (self.u, self.v, self.b):
            if F.n != 1:
                raise ParameterError("scalar Bloom instances need n = 1 fields")

    @property
    def nu(self) -> np.ndarray:
        u = self.u.values[:, 0, 0]
        v = self.v.values[:, 0, 0]
        return u ** (1.0 / self.e.q) * v ** (-1.0 / self.e.q)


def bloom_nu(inst: ScalarBloomInstance, over=None, max_level=None) -> Characteristic:
    """``sup_Q nu(Q)^{-1} int_Q |b - m_Q b|``.

    ``extra`` carries per region the ratio ``m_Q nu / ((m_Q u^{1/q}) (m_Q v^{1/q})^{-1})``
    and the Hölder bound ``(m_Q u)^{1/q} (m_Q v^{-q'/q})^{1/q'}`` on ``m_Q nu``.
    """
    e = inst.e
    q, qc = e.q, e.q_conj
    u = inst.u.values[:, 0, 0]
    v = inst.v.values[:, 0, 0]
    b = inst.b.values[:, 0, 0]
    nu = inst.nu
    regions = resolve_regions(inst.u.grid, over, max_level)
    values, chain, m_nu, holder = [], [], [], []
    for region in regions:
        c = _cells(region)
        mean_nu = nu[c].mean()
        values.append(np.abs(b[c] - b[c].mean()).mean() / mean_nu)
        chain.append(mean_nu / ((u[c] ** (1.0 / q)).mean() / (v[c] ** (1.0 / q)).mean()))
        m_nu.append(mean_nu)
        holder.append(u[c].mean() ** (1.0 / q) * (v[c] ** (-qc / q)).mean() ** (1.0 / qc))
    return _supremum(values, regions, "bloom-nu", e, chain_ratio=np.array(chain),
                     mean_nu=np.array(m_nu), holder_bound=np.array(holder))


def scalar_instance(u: MatrixField, v: MatrixField, b: MatrixField, e) -> ScalarBloomInstance:
    return ScalarBloomInstance(u, v, b, e)


def characteristic_by_name(name: str, U, V, B, e, over=None, max_level=None, solver=None
                           ) -> Characteristic:
    """Dispatch used by the command line: ``classic``, ``tilde``, ``dual``, ``jn1``..``jn6``, ``nu``."""
    if name == "classic":
        return bmo_classic(U, V, B, e, over, max_level)
    if name == "tilde":
        return tilde_bmo(U, V, B, e, over, max_level)
    if name == "dual":
        return dual_tilde_bmo(U, V, B, e, over, max_level)
    if name.startswith("jn") and name[2:].isdigit():
        return jn_quantity(int(name[2:]), U, V, B, e, over, max_level, solver)
    if name == "nu":
        return bloom_nu(ScalarBloomInstance(U, V, B, e), over, max_level)
    raise ParameterError(f"unknown quantity {name!r}")
