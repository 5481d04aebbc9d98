"""Experiment suites over generated instance batches.

Each suite returns an :class:`ExperimentReport` with two tiers of records:

* ``hard``: inequalities and identities that hold exactly on finite sums
  (checked with a small relative slack for rounding);
* ``soft``: comparisons whose constants are unknown, checked against
  batch-level caps from the configuration.

``info`` records are reported but never fail a suite.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import characteristics as ch
from .errors import MWLabError, ParameterError
from .field import (ExponentTriple, MatrixField, generate_symbol, generate_vector,
                    generate_weight)
from .grid import Cube, CubeSet, GridSpec, enumerate_cubes
from .norms import (YoungFunction, build_sparse_family, cube_luxemburg, domination_sum,
                    evaluate_ratio, luxemburg, luxemburg_star, opnorm, orlicz_bump_constants)
from .operators import (build_averaging, build_block_weight, build_commutator, build_ialpha,
                        cell_bounds, conjugate, least_majority_threshold, truncate,
                        truncation_set)
from .reducing import MVEE_MAX_ITER, MVEE_TOL, reduce

SUITES = ("jn", "upper", "lower", "averaging", "scalar", "orlicz", "exact")
THREADS_ENV = "MWLAB_THREADS"


@dataclass
class BatchConfig:
    """Instance batch and tolerances.  Unknown keys are rejected by :meth:`from_dict`."""

    d: int = 1
    levels: list = field(default_factory=lambda: [3, 4, 5])
    ns: list = field(default_factory=lambda: [1, 2])
    seeds: list = field(default_factory=lambda: list(range(20)))
    # (alpha, q) pairs; p follows from alpha/d + 1/q = 1/p
    exponents: list = field(default_factory=lambda: [[0.5, 4.0], [0.25, 2.4]])
    weight_families: list = field(default_factory=lambda: ["log-bounded-random", "rotating-diagonal"])
    weight_params: dict = field(default_factory=dict)
    symbol_families: list = field(default_factory=lambda: ["random", "smooth", "log", "step"])
    symbol_scale: float = 1.0
    apq_cap: float = 100.0
    hard_tol: float = 1e-9
    block_tol: float = 1e-10
    log_ratio_cap: float = math.log(100.0)
    averaging_cap: float = 10.0
    lower_cap: float = 100.0
    domination_cap: float = 100.0
    orlicz_cap: float = 100.0
    scalar_cap: float = 100.0
    restarts: int = 32
    opnorm_tol: float = 1e-9
    opnorm_max_iter: int = 10_000
    mvee_tol: float = MVEE_TOL
    mvee_max_iter: int = MVEE_MAX_ITER
    mvee_solver: str = "barrier"
    C: str = "auto"
    D: str = "auto"
    log_delta: float = 0.5
    sparse_a: float | None = None
    luxemburg_tests: int = 4

    @classmethod
    def from_dict(cls, doc: dict) -> BatchConfig:
        doc = dict(doc)
        doc.pop("schema", None)
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ParameterError(f"unknown config keys: {unknown}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.d not in (1, 2):
            raise ParameterError("d must be 1 or 2")
        for L in self.levels:
            GridSpec(self.d, int(L))
        for pair in self.exponents:
            if len(pair) != 2:
                raise ParameterError(f"exponent entry {pair} must be [alpha, q]")
            self.triple(pair)
        for name in ("apq_cap", "hard_tol", "block_tol", "log_ratio_cap", "averaging_cap",
                     "lower_cap", "domination_cap", "orlicz_cap", "scalar_cap", "opnorm_tol",
                     "mvee_tol", "log_delta"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.restarts < 1 or self.opnorm_max_iter < 1 or self.mvee_max_iter < 1:
            raise ParameterError("iteration counts must be positive")
        if not self.seeds or not self.ns or not self.levels or not self.exponents:
            raise ParameterError("empty batch")

    def triple(self, pair) -> ExponentTriple:
        alpha, q = float(pair[0]), float(pair[1])
        return ExponentTriple.from_alpha_q(alpha, q, self.d)

    def solver(self) -> dict:
        return {"tol": self.mvee_tol, "max_iter": self.mvee_max_iter, "solver": self.mvee_solver}

    def young(self, e: ExponentTriple) -> tuple[YoungFunction, YoungFunction]:
        """Bump pair ``(C, D)``; ``auto`` gives ``t^q log^{q-1+delta}`` and ``t^{p'} log^{p'-1+delta}``."""
        C = (YoungFunction.power_log(e.q, e.q - 1 + self.log_delta) if self.C == "auto"
             else YoungFunction.parse(self.C))
        D = (YoungFunction.power_log(e.p_conj, e.p_conj - 1 + self.log_delta) if self.D == "auto"
             else YoungFunction.parse(self.D))
        return C, D

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Instance:
    key: dict
    e: ExponentTriple
    U: MatrixField
    V: MatrixField
    B: MatrixField


def instances(cfg: BatchConfig) -> list[dict]:
    """Instance descriptors in canonical order (exponents, level, n, seed)."""
    out = []
    for k, pair in enumerate(cfg.exponents):
        for L in cfg.levels:
            for n in cfg.ns:
                for s in cfg.seeds:
                    out.append({"exponents": k, "L": int(L), "n": int(n), "seed": int(s)})
    return out


def make_instance(cfg: BatchConfig, key: dict) -> Instance:
    e = cfg.triple(cfg.exponents[key["exponents"]])
    grid = GridSpec(cfg.d, key["L"])
    n, s = key["n"], key["seed"]
    seeds = np.random.SeedSequence([s, key["L"], n, key["exponents"], cfg.d]).generate_state(3)
    wf = cfg.weight_families[s % len(cfg.weight_families)]
    sf = cfg.symbol_families[s % len(cfg.symbol_families)]
    params = dict(cfg.weight_params.get(wf, {}))
    U = generate_weight(int(seeds[0]), grid, n, wf, params)
    V = generate_weight(int(seeds[1]), grid, n, wf, params)
    B = generate_symbol(int(seeds[2]), grid, n, sf, {"scale": cfg.symbol_scale})
    desc = dict(key, d=cfg.d, weight_family=wf, symbol_family=sf, exponent_triple=e.as_dict())
    return Instance(desc, e, U, V, B)


# -- report -----------------------------------------------------------------

@dataclass
class ExperimentReport:
    suite: str
    config: dict
    records: list = field(default_factory=list)
    instances: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def add_le(self, anchor: str, lhs: float, rhs: float, tol: float, tier: str, inst: int,
               **extra) -> dict:
        """Record ``lhs <= rhs (1 + tol)``; ``0 <= 0`` passes."""
        lhs, rhs = float(lhs), float(rhs)
        ok = bool(np.isfinite(lhs) and lhs <= rhs * (1.0 + tol) + 1e-300)
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs <= 0 else math.inf)
        rec = {"anchor": anchor, "tier": tier, "instance": inst, "lhs": lhs, "rhs": rhs,
               "ratio": ratio, "tolerance": tol, "pass": ok}
        rec.update(extra)
        self.records.append(rec)
        return rec

    def add_cap(self, anchor: str, value: float, cap: float, inst: int, tier: str = "soft",
                **extra) -> dict:
        value = float(value)
        ok = bool(np.isfinite(value) and value <= cap)
        rec = {"anchor": anchor, "tier": tier, "instance": inst, "lhs": value, "rhs": cap,
               "ratio": value / cap, "tolerance": 0.0, "pass": ok}
        rec.update(extra)
        self.records.append(rec)
        return rec

    def add_check(self, anchor: str, ok: bool, tier: str, inst: int, lhs=None, rhs=None,
                  tol: float = 0.0, **extra) -> dict:
        """Record a check whose pass condition is computed by the caller."""
        ratio = None
        if lhs is not None and rhs is not None:
            lhs, rhs = float(lhs), float(rhs)
            ratio = lhs / rhs if rhs > 0 else (0.0 if lhs <= 0 else math.inf)
        rec = {"anchor": anchor, "tier": tier, "instance": inst, "lhs": lhs, "rhs": rhs,
               "ratio": ratio, "tolerance": tol, "pass": bool(ok)}
        rec.update(extra)
        self.records.append(rec)
        return rec

    def add_info(self, anchor: str, value, inst: int, **extra) -> dict:
        rec = {"anchor": anchor, "tier": "info", "instance": inst, "value": value, "pass": True}
        rec.update(extra)
        self.records.append(rec)
        return rec

    def failures(self, tier: str | None = None) -> list:
        return [r for r in self.records if not r["pass"] and (tier is None or r["tier"] == tier)]

    @property
    def hard_ok(self) -> bool:
        return not self.failures("hard")

    @property
    def ok(self) -> bool:
        return not self.failures("hard") and not self.failures("soft")

    def constants(self) -> dict:
        out = {}
        rated = [r for r in self.records if r.get("ratio") is not None]
        for anchor in sorted({r["anchor"] for r in rated}):
            rs = np.array([r["ratio"] for r in rated if r["anchor"] == anchor], dtype=float)
            finite = rs[np.isfinite(rs)]
            out[anchor] = {
                "count": int(rs.size), "non_finite": int(rs.size - finite.size),
                "min": float(finite.min()) if finite.size else None,
                "median": float(np.median(finite)) if finite.size else None,
                "max": float(finite.max()) if finite.size else None,
            }
        return out

    def summary(self) -> dict:
        anchors = {}
        for r in self.records:
            a = anchors.setdefault(r["anchor"], {"tier": r["tier"], "records": 0, "failed": 0})
            a["records"] += 1
            a["failed"] += int(not r["pass"])
        return anchors

    def to_doc(self) -> dict:
        from .io import REPORT_SCHEMA
        return {
            "schema": REPORT_SCHEMA, "suite": self.suite, "config": self.config,
            "instances": self.instances, "skipped": self.skipped, "records": self.records,
            "constants": self.constants(), "summary": self.summary(),
            "hard_pass": self.hard_ok, "pass": self.ok,
        }


# -- per-instance checks ------------------------------------------------------

def _rel_worst(lhs: np.ndarray, rhs: np.ndarray) -> int:
    """Index of the largest ``lhs / rhs`` (``0/0`` counts as 0)."""
    lhs, rhs = np.asarray(lhs, float), np.asarray(rhs, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    return int(np.argmax(r))


def _le_per_region(rep, anchor, lhs, rhs, regions, tol, inst, tier="hard"):
    i = _rel_worst(lhs, rhs)
    return rep.add_le(anchor, lhs[i], rhs[i], tol, tier, inst, where=ch.region_label(regions[i]))


def _log_ratio(a: float, b: float) -> float:
    if a == 0 and b == 0:
        return 0.0
    if a <= 0 or b <= 0:
        return math.inf
    return abs(math.log(a / b))


def _pairwise_max(values: dict) -> tuple[float, str]:
    worst, pair = 0.0, ""
    names = sorted(values)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            r = _log_ratio(values[a], values[b])
            if r > worst:
                worst, pair = r, f"{a}/{b}"
    return worst, pair


def _apq_gate(cfg, inst: Instance) -> str | None:
    for name, W in (("U", inst.U), ("V", inst.V)):
        a = ch.apq_characteristic(W, inst.e).value
        if not a <= cfg.apq_cap:
            return f"apq({name})={a:.4g} above cap {cfg.apq_cap}"
    return None


def check_jn(cfg, inst: Instance, rep: ExperimentReport, idx: int) -> None:
    e = inst.e
    prof = ch.jn_profile(inst.U, inst.V, inst.B, e, solver=cfg.solver())
    q = prof.quantities
    regions = prof.regions
    _le_per_region(rep, "jn6-le-jn5-per-cube", q[6].per_region, q[5].per_region, regions,
                   cfg.hard_tol, idx)
    split = q[2].per_region * prof.split["f_U"] + q[3].per_region * prof.split["g_V"]
    _le_per_region(rep, "jn5-split-exact", q[5].per_region, split, regions, cfg.hard_tol, idx)
    aU = ch.apq_characteristic(inst.U, e).value
    aV = ch.apq_characteristic(inst.V, e).value
    stated = aU ** (1 / e.p_conj) * q[2].value + aV ** (1 / e.p_conj) * q[3].value
    slack = float(prof.split["upper"].max())
    rep.add_le("jn5-split-stated-form", q[5].value, slack * stated, 0.0, "info", idx,
               slack=slack)
    classic = ch.bmo_classic(inst.U, inst.V, inst.B, e).value
    dual = ch.dual_tilde_bmo(inst.U, inst.V, inst.B, e).value
    gap = abs(dual - q[5].value)
    scale = max(dual, q[5].value)
    rep.add_check("dual-tilde-equals-jn5", gap <= cfg.hard_tol * scale, "hard", idx, gap, scale,
                  cfg.hard_tol)
    values = {f"jn{k}": q[k].value for k in range(1, 7)}
    values.update(classic=classic, tilde=q[4].value, dual=dual)
    worst, pair = _pairwise_max(values)
    rep.add_cap("equivalence-log-ratio", worst, cfg.log_ratio_cap, idx, pair=pair, values=values)


def check_upper(cfg, inst: Instance, rep: ExperimentReport, idx: int) -> None:
    e = inst.e
    U, V, B = inst.U, inst.V, inst.B
    bw = build_block_weight(U, V, B, e, cfg.block_tol)
    aW = ch.apq_characteristic(bw.W, e).value
    aU = ch.apq_characteristic(U, e).value
    aV = ch.apq_characteristic(V, e).value
    tl = ch.tilde_bmo(U, V, B, e).value
    rhs = 3 ** (e.q / e.p_conj) * (aU + aV + tl ** e.q)
    rep.add_le("block-weight-triangle", aW, rhs, cfg.hard_tol, "hard", idx)
    rep.add_le("block-weight-dominates-terms", max(aU, aV, tl ** e.q), aW, cfg.hard_tol, "soft",
               idx)
    T = build_ialpha(U.grid, e)
    comm = conjugate(build_commutator(T, B), V, U, e)
    ur = bw.upper_right(T)
    gap = float(np.abs(ur - comm.entries).max())
    rep.add_check("block-identity-upper-right", gap <= cfg.block_tol, "hard", idx, gap, cfg.block_tol,
                  cfg.block_tol)
    est_c = opnorm(comm, None, None, e, cfg.restarts, idx, cfg.opnorm_tol, cfg.opnorm_max_iter)
    blk = bw.conjugated(T)
    est_b = opnorm(blk, None, None, e, cfg.restarts, idx, cfg.opnorm_tol, cfg.opnorm_max_iter)
    n = U.n
    embedded = np.zeros((U.n_cells, 2 * n))
    embedded[:, n:] = est_c.witness.values
    via_witness = evaluate_ratio(blk, None, None, e, embedded)
    rep.add_le("commutator-le-block-operator", est_c.lower, max(est_b.lower, via_witness),
               cfg.hard_tol, "hard", idx, block_estimate=est_b.estimate)


def _lower_chain(cfg, inst, rep, idx):
    e = inst.e
    U, V, B = inst.U, inst.V, inst.B
    tl = ch.tilde_bmo(U, V, B, e).value
    du = ch.dual_tilde_bmo(U, V, B, e).value
    comm = build_commutator(build_ialpha(U.grid, e, U.n), B)
    est = opnorm(comm, U, V, e, cfg.restarts, idx, cfg.opnorm_tol, cfg.opnorm_max_iter)
    gap = abs(evaluate_ratio(comm, U, V, e, est.witness) - est.lower)
    rep.add_check("witness-certifies-lower", gap <= 1e-10 * est.lower, "hard", idx, gap, est.lower,
                  1e-10)
    top = max(tl, du)
    ratio = top / est.lower if est.lower > 0 else (0.0 if top == 0 else math.inf)
    rep.add_cap("commutator-lower-bound-ratio", ratio, cfg.lower_cap, idx, tilde=tl, dual=du,
                opnorm_lower=est.lower, flagged=est.flagged)


def check_lower(cfg, inst: Instance, rep: ExperimentReport, idx: int) -> None:
    _lower_chain(cfg, inst, rep, idx)
    e = inst.e
    U, V, B = inst.U, inst.V, inst.B
    grid = U.grid
    bounds = np.sort(np.unique(cell_bounds(U, V)))
    M0 = least_majority_threshold(U, V)
    ladder = [M0] + [float(np.nextafter(b, math.inf)) for b in bounds if b >= M0]
    ladder = sorted(set(ladder))
    if len(ladder) > 6:
        pick = np.unique(np.linspace(0, len(ladder) - 1, 6).round().astype(int))
        ladder = [ladder[i] for i in pick]
    seq = []
    for M in ladder:
        E = truncation_set(U, V, M)
        if E.size == 0:
            continue
        seq.append((M, E.size, ch.apq_characteristic(U, e, over=E).value,
                    ch.apq_characteristic(V, e, over=E).value, ch.tilde_bmo(U, V, B, e, over=E).value))
    half = truncation_set(U, V, M0).size
    rep.add_check("truncation-majority", 2 * half > grid.n_cells, "hard", idx, grid.n_cells, 2 * half)
    whole = CubeSet.whole(grid)
    full = (ch.apq_characteristic(U, e, over=whole).value, ch.apq_characteristic(V, e, over=whole).value,
            ch.tilde_bmo(U, V, B, e, over=whole).value)
    last = seq[-1]
    gap = max(abs(a - b) / max(abs(b), 1e-300) for a, b in zip(last[2:], full))
    rep.add_check("truncation-saturation", gap <= cfg.hard_tol, "hard", idx, gap, cfg.hard_tol,
                  cfg.hard_tol, sizes=[s[1] for s in seq])
    monotone = all(seq[i + 1][4] >= seq[i][4] * (1 - 1e-12) for i in range(len(seq) - 1))
    rep.add_info("truncation-tilde-monotone", bool(monotone), idx,
                 sequence=[[s[0], s[1], s[4]] for s in seq])


def _random_sets(grid: GridSpec, rng: np.random.Generator):
    """A random cube with a subset of at least half its cells, and one of arbitrary size."""
    level = int(rng.integers(0, max(grid.L - 1, 0) + 1))
    cubes = [c for c in enumerate_cubes(grid) if c.level == level]
    Q = cubes[int(rng.integers(len(cubes)))]
    cells = Q.cells
    big = rng.choice(cells, size=max(1, int(np.ceil(cells.size / 2)) + int(rng.integers(0, cells.size // 2 + 1))),
                     replace=False)
    small = rng.choice(cells, size=int(rng.integers(1, cells.size + 1)), replace=False)
    return Q, [CubeSet(grid, np.unique(big)), CubeSet(grid, small)]


def check_averaging(cfg, inst: Instance, rep: ExperimentReport, idx: int) -> None:
    e = inst.e
    W = inst.U
    grid = W.grid
    rng = np.random.default_rng([inst.key["seed"], 7])
    Q, sets = _random_sets(grid, rng)
    T = build_ialpha(grid, e, W.n)
    for label, E in zip(("half", "any"), sets):
        A = build_averaging(E, e, n=W.n)
        est = opnorm(A, W, W, e, cfg.restarts, idx, cfg.opnorm_tol, cfg.opnorm_max_iter)
        WE = reduce(W, E, e.q, +1, e.q, **cfg.solver())
        WpE = reduce(W, E, e.p_conj, -1, e.q, **cfg.solver())
        prod = float(np.linalg.norm(WpE.A @ WE.A, 2))
        exact = WE.mode.startswith("exact") and WpE.mode.startswith("exact")
        slack = WE.upper * WpE.upper * WE.distortion * WpE.distortion
        cap = cfg.averaging_cap * (1.0 if exact else slack)
        r = est.estimate / prod
        rep.add_cap("averaging-equivalence", max(r, 1 / r), cap, idx, set=label, exact=exact,
                    opnorm=est.estimate, reducing_product=prod)
        trunc = opnorm(truncate(T, E), W, W, e, cfg.restarts, idx, cfg.opnorm_tol, cfg.opnorm_max_iter)
        scale = (Q.n_cells / E.size) ** (1 - e.alpha / e.d)
        ratio = prod / (scale * trunc.lower) if trunc.lower > 0 else math.inf
        rep.add_cap("averaging-vs-truncated-ialpha", ratio, cfg.lower_cap, idx, set=label,
                    measure_ratio=Q.n_cells / E.size)


def _scalar_instance(cfg, inst: Instance) -> Instance:
    if inst.U.n == 1:
        return inst
    key = dict(inst.key, n=1)
    return make_instance(cfg, {k: key[k] for k in ("exponents", "L", "n", "seed")})


def check_scalar(cfg, inst: Instance, rep: ExperimentReport, idx: int) -> None:
    inst = _scalar_instance(cfg, inst)
    e = inst.e
    si = ch.ScalarBloomInstance(inst.U, inst.V, inst.B, e)
    nu = ch.bloom_nu(si)
    _le_per_region(rep, "bloom-holder-per-cube", nu.extra["mean_nu"], nu.extra["holder_bound"],
                   nu.regions, cfg.hard_tol, idx)
    chain = nu.extra["chain_ratio"]
    rep.add_cap("bloom-chain-ratio", float(np.abs(np.log(chain)).max()), math.log(cfg.scalar_cap), idx,
                min=float(chain.min()), max=float(chain.max()))
    classic = ch.bmo_classic(inst.U, inst.V, inst.B, e).value
    rep.add_cap("classic-vs-bloom", _log_ratio(classic, nu.value), math.log(cfg.scalar_cap), idx,
                classic=classic, bloom=nu.value)


def _luxemburg_checks(cfg, rep, idx, mags, phis, regions, rng):
    worst = (0.0, 0.0, 0.0)
    for _ in range(cfg.luxemburg_tests):
        mag = mags[int(rng.integers(len(mags)))]
        reg = regions[int(rng.integers(len(regions)))]
        for phi in phis:
            lam = luxemburg(mag[reg.cells], phi)
            star = luxemburg_star(mag[reg.cells], phi)
            if lam <= 0:
                continue
            r_lo, r_hi = lam / star, star / (2 * lam)
            if max(r_lo, r_hi) > max(worst[0], worst[1]):
                worst = (r_lo, r_hi, lam)
    rep.add_le("luxemburg-lower", worst[0], 1.0, cfg.hard_tol, "hard", idx)
    rep.add_le("luxemburg-upper", worst[1], 1.0, cfg.hard_tol, "hard", idx)


def _sparse_checks(cfg, rep, idx, f, Dbar):
    try:
        sp = build_sparse_family(f, Dbar, cfg.sparse_a)
    except MWLabError as exc:
        rep.add_check("sparse-half-measure", False, "hard", idx, error=str(exc))
        return
    frac = sp.min_fraction()
    rep.add_le("sparse-half-measure", 0.5, frac, cfg.hard_tol, "hard", idx, cubes=len(sp.E))
    total = sum(E.size for E in sp.E.values())
    union = np.unique(np.concatenate([E.members for E in sp.E.values()])) if sp.E else np.array([])
    rep.add_check("sparse-disjoint", total == union.size, "hard", idx, total, union.size)


def check_orlicz(cfg, inst: Instance, rep: ExperimentReport, idx: int) -> None:
    e = inst.e
    U, V, B = inst.U, inst.V, inst.B
    grid = U.grid
    C, D = cfg.young(e)
    k1, k2 = orlicz_bump_constants(U, V, B, e, C, D)
    comm = build_commutator(build_ialpha(grid, e, U.n), B)
    est = opnorm(comm, U, V, e, cfg.restarts, idx, cfg.opnorm_tol, cfg.opnorm_max_iter)
    kmin = min(k1.value, k2.value)
    ratio = est.lower / kmin if kmin > 0 else (0.0 if est.lower == 0 else math.inf)
    rep.add_cap("orlicz-upper-bound", ratio, cfg.orlicz_cap, idx, kappa1=k1.value, kappa2=k2.value,
                opnorm_lower=est.lower)
    Cp, Dp = YoungFunction.power(e.q), YoungFunction.power(e.p_conj)
    p1, p2 = orlicz_bump_constants(U, V, B, e, Cp, Dp)
    prof = ch.jn_profile(U, V, B, e, which=(4, 5))
    gap = max(abs(p1.value - prof.quantities[5].value), abs(p2.value - prof.quantities[4].value))
    scale = max(p1.value, p2.value)
    rep.add_check("power-bump-collapse", gap <= 1e-8 * scale, "hard", idx, gap, scale, 1e-8)
    rng = np.random.default_rng([inst.key["seed"], 11])
    f = generate_vector(int(rng.integers(2**31)), grid, U.n)
    g = generate_vector(int(rng.integers(2**31)), grid, U.n)
    dom = domination_sum(U, V, B, e, f, g, C, D)
    rep.add_cap("domination-ratio", dom.ratio, cfg.domination_cap, idx, lhs=dom.lhs, rhs=dom.rhs)
    rep.add_le("domination-per-cube-holder", dom.holder_worst, 1.0, cfg.hard_tol, "hard", idx)
    mags = [f.magnitude(), g.magnitude()]
    _luxemburg_checks(cfg, rep, idx, mags, [C, D, C.complement(), D.complement()],
                      enumerate_cubes(grid), rng)
    _sparse_checks(cfg, rep, idx, f, D.complement())


def check_exact(cfg, inst: Instance, rep: ExperimentReport, idx: int) -> None:
    """The exact-direction checks only, without reducing matrices or operator norms."""
    e = inst.e
    U, V, B = inst.U, inst.V, inst.B
    prof = ch.jn_profile(U, V, B, e, which=(5, 6))
    _le_per_region(rep, "jn6-le-jn5-per-cube", prof.quantities[6].per_region,
                   prof.quantities[5].per_region, prof.regions, cfg.hard_tol, idx)
    si = _scalar_instance(cfg, inst)
    nu = ch.bloom_nu(ch.ScalarBloomInstance(si.U, si.V, si.B, si.e))
    _le_per_region(rep, "bloom-holder-per-cube", nu.extra["mean_nu"], nu.extra["holder_bound"],
                   nu.regions, cfg.hard_tol, idx)
    bw = build_block_weight(U, V, B, e, cfg.block_tol)
    aW = ch.apq_characteristic(bw.W, e).value
    rhs = 3 ** (e.q / e.p_conj) * (ch.apq_characteristic(U, e).value + ch.apq_characteristic(V, e).value
                                   + ch.tilde_bmo(U, V, B, e).value ** e.q)
    rep.add_le("block-weight-triangle", aW, rhs, cfg.hard_tol, "hard", idx)
    T = build_ialpha(U.grid, e)
    gap = float(np.abs(bw.upper_right(T) - conjugate(build_commutator(T, B), V, U, e).entries).max())
    rep.add_check("block-identity-upper-right", gap <= cfg.block_tol, "hard", idx, gap, cfg.block_tol,
                  cfg.block_tol)
    C, D = cfg.young(e)
    rng = np.random.default_rng([inst.key["seed"], 13])
    f = generate_vector(int(rng.integers(2**31)), U.grid, U.n)
    g = generate_vector(int(rng.integers(2**31)), U.grid, U.n)
    _luxemburg_checks(cfg, rep, idx, [f.magnitude(), g.magnitude()],
                      [C, D, C.complement(), D.complement()], enumerate_cubes(U.grid), rng)
    _sparse_checks(cfg, rep, idx, f, D.complement())


CHECKS = {
    "jn": check_jn, "upper": check_upper, "lower": check_lower, "averaging": check_averaging,
    "scalar": check_scalar, "orlicz": check_orlicz, "exact": check_exact,
}


def _run_one(args):
    suite, cfg_doc, key, idx = args
    cfg = BatchConfig(**cfg_doc)
    rep = ExperimentReport(suite, cfg_doc)
    try:
        inst = make_instance(cfg, key)
        gate = _apq_gate(cfg, inst)
        if gate is not None:
            return inst.key, [], {"instance": idx, "reason": gate}
        CHECKS[suite](cfg, inst, rep, idx)
        return inst.key, rep.records, None
    except MWLabError as exc:
        return dict(key), [], {"instance": idx, "reason": f"{type(exc).__name__}: {exc}"}


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_suite(suite: str, cfg: BatchConfig | None = None, keys: list | None = None) -> ExperimentReport:
    """Run ``suite`` over the batch; results are merged in canonical instance order."""
    if suite not in CHECKS:
        raise ParameterError(f"unknown suite {suite!r}; choose from {SUITES}")
    cfg = cfg or BatchConfig()
    cfg.validate()
    cfg_doc = cfg.to_dict()
    keys = instances(cfg) if keys is None else keys
    jobs = [(suite, cfg_doc, k, i) for i, k in enumerate(keys)]
    threads = thread_count()
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    rep = ExperimentReport(suite, dict(cfg_doc, environment={
        "mvee": cfg.solver(), "restarts": cfg.restarts, "opnorm_tol": cfg.opnorm_tol,
        "opnorm_max_iter": cfg.opnorm_max_iter}))
    for i, (desc, records, skip) in enumerate(results):
        rep.instances.append(dict(desc, index=i))
        rep.records.extend(records)
        if skip is not None:
            rep.skipped.append(skip)
    return rep


def suite_jn(cfg=None):
    return run_suite("jn", cfg)


def suite_upper(cfg=None):
    return run_suite("upper", cfg)


def suite_lower(cfg=None):
    return run_suite("lower", cfg)


def suite_averaging(cfg=None):
    return run_suite("averaging", cfg)


def suite_scalar_bloom(cfg=None):
    return run_suite("scalar", cfg)


def suite_orlicz(cfg=None):
    return run_suite("orlicz", cfg)
