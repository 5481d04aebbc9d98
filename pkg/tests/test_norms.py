import math

import numpy as np
import pytest

from mwlab.characteristics import jn_profile
from mwlab.errors import ParameterError
from mwlab.field import (ExponentTriple, VectorField, generate_symbol, generate_vector, generate_weight,
                         identity_field, scalar_field)
from mwlab.grid import CubeSet, GridSpec, enumerate_cubes
from mwlab.norms import (YoungFunction, bq_integral_probe, build_sparse_family, cube_luxemburg,
                         domination_sum, evaluate_ratio, luxemburg, luxemburg_star, opnorm, opnorm_oracle,
                         orlicz_bump_constants, orlicz_maximal, weighted_norm, young_gap)
from mwlab.operators import (OperatorMatrix, build_averaging, build_commutator, build_ialpha, identity_operator,
                             truncate)


# -- weighted Lebesgue norms ---------------------------------------------------

def test_weighted_norm_examples():
    g = GridSpec(1, 3)
    I = identity_field(g, 2)
    v = np.array([3.0, 4.0])
    f = VectorField(g, np.tile(v, (8, 1)))
    for r in (1.5, 2.0, 7.0):
        assert weighted_norm(f, I, r, 0.5) == pytest.approx(5.0, rel=1e-15)
    h = VectorField(GridSpec(1, 1), [[1.0], [0.0]])
    assert weighted_norm(h, None, 2.0, 1.0) == pytest.approx(math.sqrt(0.5), rel=1e-15)
    W = generate_weight(1, g, 2, "log-bounded-random")
    k = generate_vector(2, g, 2)
    scaled = VectorField(g, -2.5 * k.values)
    assert weighted_norm(scaled, W, 3.0, 0.25) == pytest.approx(2.5 * weighted_norm(k, W, 3.0, 0.25), rel=1e-14)


# -- operator norms -------------------------------------------------------------

def test_identity_norms(e22, e_half):
    g = GridSpec(1, 2)
    assert opnorm(identity_operator(g), None, None, e22).estimate == pytest.approx(1.0, rel=1e-14)
    est = opnorm(identity_operator(GridSpec(1, 1)), None, None, e_half)
    assert est.lower == pytest.approx(math.sqrt(2), rel=1e-9)
    assert opnorm_oracle(identity_operator(GridSpec(1, 1)), None, None, e_half, samples=20_000) == \
        pytest.approx(math.sqrt(2), rel=1e-6)


def test_svd_path(e22):
    g = GridSpec(1, 2)
    rng = np.random.default_rng(3)
    T = OperatorMatrix(g, 2, rng.standard_normal((4, 4, 2, 2)), "product")
    est = opnorm(T, None, None, e22)
    assert est.method == "svd"
    sv = np.linalg.svd(T.dense(), compute_uv=False)[0] * g.cell_measure ** 0
    assert est.estimate == pytest.approx(sv, rel=1e-12)
    assert opnorm_oracle(T, None, None, e22, samples=20_000) == pytest.approx(sv, rel=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_witness_certifies(seed, e_quarter):
    g = GridSpec(1, 3)
    U = generate_weight(seed, g, 2, "log-bounded-random")
    V = generate_weight(seed + 5, g, 2, "log-bounded-random")
    B = generate_symbol(seed, g, 2, "random")
    T = build_commutator(build_ialpha(g, e_quarter, 2), B)
    est = opnorm(T, U, V, e_quarter, seed=seed)
    assert est.lower <= est.estimate * (1 + 1e-12)
    assert abs(evaluate_ratio(T, U, V, e_quarter, est.witness) - est.lower) <= 1e-10 * est.lower
    assert not est.flagged


def test_opnorm_duality(e_quarter):
    g = GridSpec(1, 3)
    rng = np.random.default_rng(7)
    T = OperatorMatrix(g, 1, rng.standard_normal((8, 8)), "product")
    a = opnorm(T, None, None, e_quarter).estimate
    b = opnorm(T.transpose(), None, None, e_quarter.dual()).estimate
    assert b == pytest.approx(a, rel=0.02)


def test_oracle_matches_and_refuses(e_quarter):
    g = GridSpec(1, 2)
    rng = np.random.default_rng(1)
    T = OperatorMatrix(g, 2, rng.standard_normal((4, 4, 2, 2)), "product")
    a = opnorm(T, None, None, e_quarter).estimate
    assert opnorm_oracle(T, None, None, e_quarter, samples=50_000) == pytest.approx(a, rel=0.02)
    big = OperatorMatrix(GridSpec(1, 3), 2, np.zeros((8, 8, 2, 2)), "product")
    with pytest.raises(ParameterError):
        opnorm_oracle(big, None, None, e_quarter)


def test_oracle_restriction_monotone(e_quarter):
    g = GridSpec(1, 3)
    T = build_ialpha(g, e_quarter)
    sub = truncate(T, CubeSet(g, [0, 3, 4]))
    assert opnorm_oracle(sub, None, None, e_quarter, samples=20_000) <= \
        opnorm_oracle(T, None, None, e_quarter, samples=20_000) * (1 + 1e-12)


def test_zero_operator(e_half):
    est = opnorm(build_averaging(CubeSet.whole(GridSpec(1, 2)), e_half).with_n(1), None, None, e_half)
    assert est.lower > 0
    Z = OperatorMatrix(GridSpec(1, 2), 1, np.zeros((4, 4)), "product")
    est = opnorm(Z, None, None, e_half)
    assert est.method == "zero" and est.lower == 0.0


# -- Young functions and Luxemburg norms ---------------------------------------

@pytest.mark.parametrize("phi", [YoungFunction.power(2.0), YoungFunction.power(4.0),
                                 YoungFunction.power_log(1.5, 0.5), YoungFunction.power_log(4.0, 3.5)])
def test_young_inequality(phi):
    s = np.logspace(-3, 3, 41)
    assert young_gap(phi, s, s).min() >= -1e-9 * (phi(s).max())


def test_power_complement_closed_form():
    c = YoungFunction.power(3.0).complement()
    t = np.array([0.5, 1.0, 2.0])
    assert np.allclose(c(t), 2 * (t / 3) ** 1.5, rtol=1e-15)
    assert np.allclose(c.inverse(c(t)), t, rtol=1e-13)


def test_powerlog_inverse_and_complement():
    phi = YoungFunction.power_log(2.0, 0.5)
    y = np.array([0.1, 1.0, 30.0])
    assert np.allclose(phi(phi.inverse(y)), y, rtol=1e-10)
    c = phi.complement()
    # Legendre transform: sup_s (t s - phi(s)) checked on a dense grid
    s = np.linspace(0, 10, 200001)
    for t in (0.5, 3.0, 10.0):
        assert c(t) == pytest.approx(np.max(t * s - phi(s)), rel=1e-6)


def test_young_parse_and_reject():
    assert YoungFunction.parse("powerlog:1.333,0.5").label() == "powerlog:1.333,0.5"
    assert YoungFunction.parse("power:2~").family == "complement"
    for bad in ("power:1", "powerlog:2", "cubic:3", "powerlog:1.5,-1.5"):
        with pytest.raises(ParameterError):
            YoungFunction.parse(bad)


def test_luxemburg_examples():
    sq = YoungFunction.power(2.0)
    assert luxemburg(np.full(8, 3.0), sq) == pytest.approx(3.0, rel=1e-10)
    f = np.random.default_rng(0).standard_normal(16)
    for r in (1.5, 3.0):
        expect = np.mean(np.abs(f) ** r) ** (1 / r)
        assert luxemburg(f, YoungFunction.power(r)) == pytest.approx(expect, rel=1e-9)
    assert luxemburg(np.zeros(4), sq) == 0.0


@pytest.mark.parametrize("phi", [YoungFunction.power(2.0), YoungFunction.power_log(4.0, 3.5),
                                 YoungFunction.power_log(1.5, 0.5).complement()])
def test_luxemburg_two_sided(phi):
    rng = np.random.default_rng(2)
    for _ in range(5):
        f = rng.standard_normal(8) * rng.uniform(0.1, 10)
        lam, star = luxemburg(f, phi), luxemburg_star(f, phi)
        assert lam <= star * (1 + 1e-9)
        assert star <= 2 * lam * (1 + 1e-9)


def test_luxemburg_monotone():
    phi = YoungFunction.power_log(2.0, 1.0)
    f = np.abs(np.random.default_rng(3).standard_normal(16))
    assert luxemburg(f, phi) <= luxemburg(f * 1.01 + 0.01, phi)


# -- bump constants, maximal function, domination -------------------------------

@pytest.fixture
def bloom(e_quarter):
    g = GridSpec(1, 3)
    U = generate_weight(1, g, 2, "log-bounded-random")
    V = generate_weight(2, g, 2, "rotating-diagonal")
    B = generate_symbol(3, g, 2, "smooth")
    return U, V, B, e_quarter


def test_bump_power_collapse(bloom):
    U, V, B, e = bloom
    k1, k2 = orlicz_bump_constants(U, V, B, e, YoungFunction.power(e.q), YoungFunction.power(e.p_conj))
    prof = jn_profile(U, V, B, e, which=(4, 5))
    assert k1.value == pytest.approx(prof.quantities[5].value, rel=1e-8)
    assert k2.value == pytest.approx(prof.quantities[4].value, rel=1e-8)


def test_bump_zero_and_homogeneous(bloom):
    U, V, B, e = bloom
    C, D = YoungFunction.power_log(e.q, 1.0), YoungFunction.power_log(e.p_conj, 1.0)
    const = generate_symbol(0, U.grid, 2, "constant")
    k1, k2 = orlicz_bump_constants(U, V, const, e, C, D)
    assert k1.value == 0.0 and k2.value == 0.0
    a1, a2 = orlicz_bump_constants(U, V, B, e, C, D)
    b1, b2 = orlicz_bump_constants(U, V, B.with_values(3.0 * B.values), e, C, D)
    assert b1.value == pytest.approx(3 * a1.value, rel=1e-9)
    assert b2.value == pytest.approx(3 * a2.value, rel=1e-9)


def test_maximal_constant_and_spike():
    g = GridSpec(1, 4)
    lin = YoungFunction.power(1.0 + 1e-12)
    c = orlicz_maximal(VectorField(g, np.full((16, 1), 2.5)), lin, 0.0, g)
    assert np.allclose(c, 2.5, rtol=1e-9)
    spike = np.zeros((16, 1))
    spike[5] = 1.0
    M = orlicz_maximal(VectorField(g, spike), YoungFunction.power(1.0 + 1e-12), 0.0, g)
    for x in range(16):
        level = max(l for l in range(5) if (x >> (4 - l)) == (5 >> (4 - l)))
        assert M[x] == pytest.approx(2.0 ** (-(4 - level)), rel=1e-9)


def test_maximal_alpha_dominates_top():
    g = GridSpec(1, 3)
    f = generate_vector(0, g, 2)
    phi = YoungFunction.power_log(2.0, 1.0)
    M = orlicz_maximal(f, phi, 0.5, g)
    root = enumerate_cubes(g, 0)
    top = cube_luxemburg(f.magnitude(), phi, root)[0]
    assert np.all(M >= top * (1 - 1e-12))


def test_domination_degenerate(bloom):
    U, V, B, e = bloom
    g = U.grid
    f, h = generate_vector(1, g, 2), generate_vector(2, g, 2)
    const = generate_symbol(0, g, 2, "constant")
    r = domination_sum(U, V, const, e, f, h)
    assert r.lhs == 0.0 and r.rhs == 0.0
    r = domination_sum(U, V, B, e, VectorField(g, np.zeros((8, 2))), h)
    assert r.lhs == 0.0 and r.rhs == 0.0


def test_domination_holder_per_cube(bloom):
    U, V, B, e = bloom
    g = U.grid
    C, D = YoungFunction.power_log(e.q, 1.0), YoungFunction.power_log(e.p_conj, 1.0)
    r = domination_sum(U, V, B, e, generate_vector(1, g, 2), generate_vector(2, g, 2), C, D)
    assert 0 < r.lhs and 0 < r.rhs
    assert len(r.per_grid) == 2
    assert r.holder_worst <= 1 + 1e-9


# -- sparse family --------------------------------------------------------------

def test_sparse_constant_root_only():
    g = GridSpec(1, 4)
    sq = YoungFunction.power(2.0)
    # ||f||_root = 1.2; the zero-padded parent has norm 1.2/sqrt 2; a^0 = 1 sits between
    sp = build_sparse_family(VectorField(g, np.full((16, 1), 1.2)), sq, a=5.0)
    root = enumerate_cubes(g, 0)[0]
    assert sp.cubes == [root]
    assert sp.E[root].size == 16


@pytest.mark.parametrize("cell", [0, 5, 15])
def test_sparse_spike_invariants(cell):
    g = GridSpec(1, 4)
    f = generate_vector(0, g, 1, "spike", {"cell": cell})
    sp = build_sparse_family(f, YoungFunction.power(2.0), a=5.0)
    assert sp.min_fraction() >= 0.5
    assert sum(E.size for E in sp.E.values()) <= g.n_cells
    for P in sp.cubes:
        assert cell in P.cells


@pytest.mark.parametrize("seed", range(4))
def test_sparse_random_invariants(seed):
    g = GridSpec(2, 3)
    f = generate_vector(seed, g, 2)
    f = VectorField(g, f.values * np.exp(3 * np.random.default_rng(seed).standard_normal((64, 1))))
    sp = build_sparse_family(f, YoungFunction.power_log(1.5, 0.5).complement())
    members = np.concatenate([E.members for E in sp.E.values()])
    assert np.unique(members).size == members.size
    assert sp.min_fraction() >= 0.5


def test_sparse_rejects_small_a():
    g = GridSpec(1, 2)
    with pytest.raises(ParameterError):
        build_sparse_family(generate_vector(0, g, 1), YoungFunction.power(2.0), a=4.0)


# -- class-membership probe ------------------------------------------------------

def test_probe_power_tails():
    phi = YoungFunction.power(2.0)
    assert bq_integral_probe(phi, {"a": 0, "b": 0.5}).verdict == "converging"
    assert bq_integral_probe(phi, {"a": 0, "b": 0.0}).verdict == "diverging"
    assert bq_integral_probe(phi, {"a": 1, "b": 2.5}).verdict == "converging"
    assert bq_integral_probe(phi, {"a": 1, "b": 2.0}).verdict == "diverging"


def test_probe_log_boundary():
    sched = {"b": 2, "c": -1}
    assert bq_integral_probe(YoungFunction.power_log(2.0, 0.0), sched).verdict == "diverging"
    r = bq_integral_probe(YoungFunction.power_log(2.0, -0.5), sched)
    assert r.verdict == "converging" and math.isfinite(r.value)


def test_probe_rejects_keys():
    with pytest.raises(ParameterError):
        bq_integral_probe(YoungFunction.power(2.0), {"s": 1})
