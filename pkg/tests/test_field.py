import numpy as np
import pytest

from mwlab.characteristics import apq_characteristic
from mwlab.errors import DegeneracyError, ParameterError
from mwlab.field import (ExponentTriple, MatrixField, VectorField, constant_field, dual_weight,
                         generate_symbol, generate_vector, generate_weight, identity_field,
                         matrix_power, scalar_field)
from mwlab.grid import GridSpec


def test_triple_from_alpha_q():
    e = ExponentTriple.from_alpha_q(0.5, 4.0, 1)
    assert e.p == pytest.approx(4 / 3, rel=1e-15)
    assert e.p_conj == pytest.approx(4.0, rel=1e-14)
    assert e.q_conj == pytest.approx(4 / 3, rel=1e-15)


def test_triple_alpha_zero_forces_p_equal_q():
    e = ExponentTriple(2.0, 2.0, 0.0, 1)
    assert e.p == e.q
    with pytest.raises(ParameterError):
        ExponentTriple(2.0, 3.0, 0.0, 1)


@pytest.mark.parametrize("args", [(1.5, 4.0, 0.5, 1), (1.0, 2.0, 0.5, 1), (3.0, 2.0, 0.1, 1),
                                  (1.5, 3.0, 1.0, 1)])
def test_triple_rejects(args):
    with pytest.raises(ParameterError):
        ExponentTriple(*args)


def test_triple_dual():
    e = ExponentTriple.from_alpha_q(0.25, 2.4, 1)
    dd = e.dual()
    assert dd.p == pytest.approx(e.q_conj) and dd.q == pytest.approx(e.p_conj)


def test_power_examples():
    g = GridSpec(1, 0)
    I = identity_field(GridSpec(1, 2), 2)
    assert np.allclose(matrix_power(I, -0.5).values, I.values, rtol=0, atol=1e-15)
    D = constant_field(g, np.diag([4.0, 9.0]))
    assert np.allclose(matrix_power(D, 0.5).values[0], np.diag([2.0, 3.0]), atol=1e-14)
    M = constant_field(g, [[2.0, 1.0], [1.0, 2.0]])
    inv = np.array([[2, -1], [-1, 2]]) / 3.0
    assert np.allclose(matrix_power(M, -1.0).values[0], inv, atol=1e-14)
    assert np.array_equal(matrix_power(M, 1.0).values, M.values)


def test_power_composition(rng):
    W = generate_weight(5, GridSpec(1, 4), 3, "log-bounded-random")
    a, b = 0.7, -1.3
    lhs = matrix_power(matrix_power(W, a), b).values
    rhs = matrix_power(W, a * b).values
    assert np.abs(lhs - rhs).max() <= 1e-9 * np.abs(rhs).max()


def test_non_spd_names_cell():
    vals = np.stack([np.eye(2), np.diag([1.0, -1.0])])
    with pytest.raises(DegeneracyError, match="cell 1"):
        MatrixField(GridSpec(1, 1), vals, "weight")


def test_symbol_may_be_indefinite():
    B = MatrixField(GridSpec(1, 1), np.stack([np.eye(2), -np.eye(2)]), "symbol")
    with pytest.raises(ParameterError):
        matrix_power(B, 0.5)


def test_dual_weight_examples():
    g = GridSpec(1, 2)
    e22 = ExponentTriple(2.0, 2.0, 0.0, 1)
    assert np.allclose(dual_weight(scalar_field(g, [4.0] * 4), e22).values, 0.25, rtol=1e-15)
    e = ExponentTriple.from_alpha_q(0.5, 4.0, 1)
    assert np.allclose(dual_weight(scalar_field(g, [2.0] * 4), e).values, 0.5, rtol=1e-14)
    I = identity_field(g, 2)
    assert np.allclose(dual_weight(I, e).values, I.values)


@pytest.mark.parametrize("alpha,q", [(0.5, 4.0), (0.25, 2.4)])
def test_dual_weight_involution(alpha, q):
    e = ExponentTriple.from_alpha_q(alpha, q, 1)
    W = generate_weight(1, GridSpec(1, 4), 2, "rotating-diagonal")
    back = dual_weight(dual_weight(W, e), e.dual()).values
    rel = np.abs(back - W.values).max(axis=(1, 2)) / np.abs(W.values).max(axis=(1, 2))
    assert rel.max() <= 1e-9


@pytest.mark.parametrize("family", ["constant", "scalar-power", "rotating-diagonal", "log-bounded-random"])
@pytest.mark.parametrize("n", [1, 2])
def test_generators_deterministic_spd(family, n):
    g = GridSpec(1, 4)
    A = generate_weight(11, g, n, family)
    B = generate_weight(11, g, n, family)
    assert np.array_equal(A.values, B.values)
    assert A.eig[0].min() > 0
    lo, hi = A.eig_bounds
    assert 0 < lo <= hi


def test_constant_family_has_unit_characteristic():
    W = generate_weight(3, GridSpec(1, 3), 2, "constant")
    e = ExponentTriple.from_alpha_q(0.5, 4.0, 1)
    assert apq_characteristic(W, e).value == pytest.approx(1.0, abs=1e-12)


def test_power_range_warning():
    e = ExponentTriple.from_alpha_q(0.5, 4.0, 1)
    W = generate_weight(0, GridSpec(1, 3), 1, "scalar-power", {"beta": 5.0, "exponents": e})
    assert W.meta["warnings"]
    W = generate_weight(0, GridSpec(1, 3), 1, "scalar-power", {"beta": 0.1, "exponents": e})
    assert not W.meta["warnings"]


def test_generators_reject_unknown():
    g = GridSpec(1, 2)
    with pytest.raises(ParameterError):
        generate_weight(0, g, 1, "nope")
    with pytest.raises(ParameterError):
        generate_symbol(0, g, 1, "random", {"bogus": 1})
    with pytest.raises(ParameterError):
        generate_vector(0, g, 1, "spike", {"cell": 1, "bogus": 2})


def test_symbol_and_vector_shapes():
    g = GridSpec(2, 2)
    B = generate_symbol(4, g, 3, "smooth")
    assert B.values.shape == (16, 3, 3) and B.kind == "symbol"
    assert np.allclose(B.values, B.values.transpose(0, 2, 1))
    f = generate_vector(4, g, 3, "spike", {"cell": 5})
    assert isinstance(f, VectorField)
    assert np.flatnonzero(np.linalg.norm(f.values, axis=1)).tolist() == [5]
