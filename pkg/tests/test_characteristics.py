import math

import numpy as np
import pytest
from scipy.linalg import fractional_matrix_power as fpow

from mwlab import characteristics as ch
from mwlab.errors import ParameterError
from mwlab.field import (ExponentTriple, MatrixField, constant_field, dual_weight, generate_symbol,
                         generate_weight, identity_field, scalar_field)
from mwlab.grid import CubeSet, GridSpec, enumerate_cubes


# -- brute-force oracles (loops, scipy matrix powers) --------------------------

def _norm(M):
    return np.linalg.norm(np.atleast_2d(M), 2)


def _pw(W, cell, t):
    return np.real(fpow(W.values[cell], t))


def oracle_apq(W, e):
    best = 0.0
    for c in enumerate_cubes(W.grid):
        outer = 0.0
        for x in c.cells:
            inner = np.mean([_norm(_pw(W, x, 1 / e.q) @ _pw(W, y, -1 / e.q)) ** e.p_conj for y in c.cells])
            outer += inner ** (e.q / e.p_conj)
        best = max(best, outer / c.n_cells)
    return best


def oracle_kernel(U, V, B, e, x, y):
    return _norm(_pw(V, x, 1 / e.q) @ (B.values[x] - B.values[y]) @ _pw(U, y, -1 / e.q))


def oracle_iterated(U, V, B, e, inner, outer, inner_over_y):
    best = 0.0
    for c in enumerate_cubes(U.grid):
        tot = 0.0
        for a in c.cells:
            if inner_over_y:
                vals = [oracle_kernel(U, V, B, e, a, b) for b in c.cells]
            else:
                vals = [oracle_kernel(U, V, B, e, b, a) for b in c.cells]
            tot += np.mean(np.power(vals, inner)) ** (outer / inner)
        best = max(best, (tot / c.n_cells) ** (1 / outer))
    return best


def oracle_classic(U, V, B, e):
    best = 0.0
    for c in enumerate_cubes(U.grid):
        mV = np.mean([_pw(V, x, 1 / e.q) for x in c.cells], axis=0)
        mU = np.mean([_pw(U, x, 1 / e.q) for x in c.cells], axis=0)
        mB = B.values[c.cells].mean(axis=0)
        val = np.mean([_norm(mV @ (B.values[x] - mB) @ np.linalg.inv(mU)) for x in c.cells])
        best = max(best, val ** (1 / e.q))
    return best


@pytest.fixture
def inst(e_quarter):
    g = GridSpec(1, 3)
    U = generate_weight(1, g, 2, "log-bounded-random")
    V = generate_weight(2, g, 2, "rotating-diagonal")
    B = generate_symbol(3, g, 2, "random")
    return U, V, B, e_quarter


# -- A_{p,q} -----------------------------------------------------------------

def test_apq_two_cell(e22):
    u = scalar_field(GridSpec(1, 1), [1.0, 4.0])
    assert ch.apq_characteristic(u, e22).value == pytest.approx(1.5625, rel=1e-14)


def test_apq_constant_is_one(e_half):
    W = constant_field(GridSpec(1, 3), [[3.0, 1.0], [1.0, 2.0]])
    c = ch.apq_characteristic(W, e_half)
    assert abs(c.value - 1.0) <= 1e-12
    assert c.argmax.level == 0


@pytest.mark.parametrize("seed", range(3))
def test_apq_matches_oracle(seed, e_quarter):
    W = generate_weight(seed, GridSpec(1, 3), 2, "log-bounded-random")
    assert ch.apq_characteristic(W, e_quarter).value == pytest.approx(oracle_apq(W, e_quarter), rel=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_apq_at_least_one(seed, e_half):
    W = generate_weight(seed, GridSpec(1, 4), 2, "rotating-diagonal")
    assert ch.apq_characteristic(W, e_half).value >= 1 - 1e-12


def test_apq_dual_exponents(e_half, e_quarter):
    W = generate_weight(8, GridSpec(1, 4), 2, "log-bounded-random")
    # p' = q: the dual characteristic coincides
    a = ch.apq_characteristic(W, e_half).value
    b = ch.apq_characteristic(dual_weight(W, e_half), e_half.dual()).value
    assert b == pytest.approx(a, rel=1e-9)
    # general exponents: the dual equals the swapped-order mean, per cube
    e = e_quarter
    K = ch.apq_kernel(W, e)
    swapped = max(ch.apq_swapped_value(K[np.ix_(c.cells, c.cells)], e) ** e.p_conj
                  for c in enumerate_cubes(W.grid))
    b = ch.apq_characteristic(dual_weight(W, e), e.dual()).value
    assert b == pytest.approx(swapped, rel=1e-9)


def test_apq_restricted(e_half):
    W = generate_weight(8, GridSpec(1, 3), 1, "log-bounded-random")
    E = CubeSet(W.grid, [0, 2, 5])
    c = ch.apq_characteristic(W, e_half, over=E)
    assert c.kind == "apq-restricted"
    w = W.values[[0, 2, 5], 0, 0]
    K = np.abs(w[:, None] ** 0.25 * w[None, :] ** -0.25)
    expect = np.mean(np.mean(K ** 4, axis=1))
    assert c.value == pytest.approx(expect, rel=1e-13)


def test_restricting_cube_family_never_increases(e_half):
    W = generate_weight(8, GridSpec(1, 4), 2, "log-bounded-random")
    vals = [ch.apq_characteristic(W, e_half, max_level=k).value for k in range(5)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


# -- BMO-type quantities -------------------------------------------------------

def test_tilde_two_cell(e22):
    g = GridSpec(1, 1)
    I = identity_field(g, 1)
    b = MatrixField(g, [0.0, 1.0], "symbol")
    c = ch.tilde_bmo(I, I, b, e22)
    assert c.value == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert c.argmax.level == 0
    assert ch.jn_quantity(4, I, I, b, e22).value == pytest.approx(1 / math.sqrt(2), rel=1e-15)


def test_bloom_two_cell(e22):
    g = GridSpec(1, 1)
    u = scalar_field(g, [2.0, 2.0])
    b = MatrixField(g, [0.0, 1.0], "symbol")
    c = ch.bloom_nu(ch.ScalarBloomInstance(u, u, b, e22))
    assert c.value == pytest.approx(0.5, rel=1e-15)


def test_bloom_unit_nu_is_mean_oscillation(e_half):
    g = GridSpec(1, 3)
    u = generate_weight(0, g, 1, "log-bounded-random")
    b = generate_symbol(1, g, 1, "random")
    c = ch.bloom_nu(ch.ScalarBloomInstance(u, u, b, e_half))
    bv = b.values[:, 0, 0]
    expect = max(np.abs(bv[q.cells] - bv[q.cells].mean()).mean() for q in enumerate_cubes(g))
    assert c.value == pytest.approx(expect, rel=1e-13)


def test_iterated_quantities_match_oracle(inst):
    U, V, B, e = inst
    assert ch.tilde_bmo(U, V, B, e).value == pytest.approx(
        oracle_iterated(U, V, B, e, e.p_conj, e.q, True), rel=1e-11)
    prof = ch.jn_profile(U, V, B, e, which=(4, 5, 6))
    assert prof.quantities[5].value == pytest.approx(
        oracle_iterated(U, V, B, e, e.q, e.p_conj, False), rel=1e-11)
    assert prof.quantities[6].value == pytest.approx(
        oracle_iterated(U, V, B, e, e.q, e.q_conj, False), rel=1e-11)


def test_classic_matches_oracle(inst):
    U, V, B, e = inst
    assert ch.bmo_classic(U, V, B, e).value == pytest.approx(oracle_classic(U, V, B, e), rel=1e-11)


def test_classic_identity_scalar(e_half):
    g = GridSpec(1, 3)
    I = identity_field(g, 1)
    b = generate_symbol(5, g, 1, "random")
    bv = b.values[:, 0, 0]
    expect = max(np.abs(bv[q.cells] - bv[q.cells].mean()).mean() ** (1 / e_half.q) for q in enumerate_cubes(g))
    assert ch.bmo_classic(I, I, b, e_half).value == pytest.approx(expect, rel=1e-13)


def test_dual_tilde_equals_jn5(inst):
    U, V, B, e = inst
    d = ch.dual_tilde_bmo(U, V, B, e).value
    j5 = ch.jn_quantity(5, U, V, B, e).value
    assert abs(d - j5) <= 1e-9 * j5


def test_dual_tilde_scalar_exact(e_quarter):
    g = GridSpec(1, 3)
    u = generate_weight(1, g, 1, "log-bounded-random")
    v = generate_weight(2, g, 1, "log-bounded-random")
    b = generate_symbol(3, g, 1, "random")
    d = ch.dual_tilde_bmo(u, v, b, e_quarter).value
    assert d == pytest.approx(ch.jn_quantity(5, u, v, b, e_quarter).value, rel=1e-13)


@pytest.mark.parametrize("name", ["classic", "tilde", "dual", "jn1", "jn2", "jn3", "jn4", "jn5", "jn6"])
def test_constant_symbol_gives_zero(name, e_quarter):
    g = GridSpec(1, 3)
    U = generate_weight(1, g, 2, "log-bounded-random")
    V = generate_weight(2, g, 2, "log-bounded-random")
    B = generate_symbol(3, g, 2, "constant")
    assert ch.characteristic_by_name(name, U, V, B, e_quarter).value <= 1e-12


def test_nu_constant_symbol(e_half):
    g = GridSpec(1, 3)
    u = generate_weight(1, g, 1, "log-bounded-random")
    b = generate_symbol(3, g, 1, "constant")
    assert ch.characteristic_by_name("nu", u, u, b, e_half).value == 0.0


def test_jn6_below_jn5_per_cube(inst):
    U, V, B, e = inst
    prof = ch.jn_profile(U, V, B, e)
    assert np.all(prof.quantities[6].per_region <= prof.quantities[5].per_region * (1 + 1e-9))


def test_exact_split(inst):
    U, V, B, e = inst
    prof = ch.jn_profile(U, V, B, e)
    bound = prof.quantities[2].per_region * prof.split["f_U"] + prof.quantities[3].per_region * prof.split["g_V"]
    assert np.all(prof.quantities[5].per_region <= bound * (1 + 1e-9))


def test_scalar_holder_per_cube(e_quarter):
    g = GridSpec(1, 4)
    u = generate_weight(4, g, 1, "log-bounded-random")
    v = generate_weight(5, g, 1, "scalar-power")
    b = generate_symbol(6, g, 1, "log")
    c = ch.bloom_nu(ch.ScalarBloomInstance(u, v, b, e_quarter))
    assert np.all(c.extra["mean_nu"] <= c.extra["holder_bound"] * (1 + 1e-12))


def test_report_row(inst):
    U, V, B, e = inst
    row = ch.tilde_bmo(U, V, B, e).to_dict()
    assert set(row) == {"kind", "value", "argmax", "exponents", "slack"}
    assert row["argmax"].startswith("L")


def test_rejects_bad_quantity(inst):
    U, V, B, e = inst
    with pytest.raises(ParameterError):
        ch.characteristic_by_name("jn7", U, V, B, e)
    with pytest.raises(ParameterError):
        ch.ScalarBloomInstance(U, V, B, e)
