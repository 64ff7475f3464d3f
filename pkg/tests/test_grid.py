import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siegel_da.exceptions import DomainError, GridMismatchError, GridShiftError
from siegel_da.grid import (
    CoeffFunction,
    GridSpec,
    enumerate_multi_indices,
    fock_norm_sq,
    inner_product,
    multi_factorial,
    mu_weight,
)

alpha_1d = st.lists(st.integers(0, 12), min_size=1, max_size=3)
neg_lambda = st.floats(-50, -1e-3, allow_nan=False)


def test_mu_weight_examples():
    assert mu_weight((0,), -2.0, 1) == pytest.approx(4.0, rel=1e-15)
    assert mu_weight((2, 1), -1.0, 2) == pytest.approx(16.0, rel=1e-15)
    for lam in (-0.3, -1.0, -7.5):
        assert mu_weight((0, 0, 0), lam, 3) == pytest.approx(abs(lam) ** 6, rel=1e-14)


def test_mu_weight_errors():
    with pytest.raises(DomainError):
        mu_weight((0,), 0.0, 1)
    with pytest.raises(DomainError):
        mu_weight((1,), 1.0, 1)
    with pytest.raises(OverflowError):
        mu_weight((400,), -1e-6, 1)


def test_fock_norm_examples():
    assert fock_norm_sq((0,), -3.7) == 1.0
    assert fock_norm_sq((1,), -2.0) == pytest.approx(1.0)
    assert fock_norm_sq((2, 1), -1.0) == pytest.approx(16.0)
    with pytest.raises(DomainError):
        fock_norm_sq((1,), 0.0)


def test_factorial_exact_then_log():
    assert multi_factorial((20,)) == math.factorial(20)
    assert isinstance(multi_factorial((10, 10)), int)
    big = multi_factorial((25,))
    assert big == pytest.approx(math.factorial(25), rel=1e-12)


@given(alpha_1d, neg_lambda)
def test_mu_factorizes_through_fock_norm(alpha, lam):
    d = len(alpha)
    assert mu_weight(alpha, lam, d) == pytest.approx(fock_norm_sq(alpha, lam) * abs(lam) ** (2 * d), rel=1e-12)


def test_enumeration_graded_and_prefix_stable():
    a = enumerate_multi_indices(2, 3)
    assert [tuple(r) for r in a[:6]] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert len(a) == math.comb(3 + 2, 2)
    b = enumerate_multi_indices(2, 5)
    assert np.array_equal(b[: len(a)], a)


def test_grid_validation():
    g = GridSpec(1, 2, -1.0, 0.25)
    assert g.n_nodes == 4
    assert np.allclose(g.nodes, [-0.25, -0.5, -0.75, -1.0])
    with pytest.raises(DomainError):
        GridSpec(1, 2, -1.0, 0.3)
    with pytest.raises(DomainError):
        GridSpec(1, 2, -0.25, 0.25)
    with pytest.raises(DomainError):
        GridSpec(1, 2, -0.5, 0.25, rule="trapezoid")
    with pytest.raises(DomainError):
        GridSpec(1, 2, -1.0, 0.25, rule="simpson")


def test_shift_steps():
    g = GridSpec(1, 2, -1.0, 0.05)
    assert g.shift_steps(-0.15) == 3
    assert g.shift_steps(0.0) == 0
    with pytest.raises(GridShiftError):
        g.shift_steps(-0.07)
    with pytest.raises(GridShiftError):
        g.shift_steps(0.05)


def test_grid_json_round_trip():
    g = GridSpec(2, 5, -3.0, 0.1, "trapezoid")
    assert GridSpec.from_json(g.to_json()) == g
    assert set(g.to_dict()) == {"d", "alpha_max", "lambda_min", "spacing", "rule"}


def test_trapezoid_integrates_exponential_to_second_order():
    # int_{-inf}^0 2 e^{2 lambda} = 1; error of the extrapolated trapezoid rule is O(h^2)
    errs = []
    for h in (0.01, 0.005):
        g = GridSpec(1, 0, -40.0, h, "trapezoid")
        errs.append(abs(np.sum(2 * np.exp(2 * g.nodes) * g.node_weights) - 1))
    assert errs[1] < errs[0] / 3.5


def test_inner_product_examples():
    g = GridSpec(1, 0, -2.0, 1.0)
    f = CoeffFunction.indicator(g, (0,), -1.0)
    assert inner_product(f, f) == pytest.approx(1.0)
    other = CoeffFunction.indicator(g, (0,), -2.0)
    assert inner_product(f, other) == 0


def test_inner_product_grid_mismatch():
    f = CoeffFunction.zeros(GridSpec(1, 1, -1.0, 0.5))
    g = CoeffFunction.zeros(GridSpec(1, 2, -1.0, 0.5))
    with pytest.raises(GridMismatchError):
        inner_product(f, g)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.integers(1, 2))
def test_inner_product_hermitian_and_positive(seed, d):
    g = GridSpec(d, 3, -2.0, 0.25)
    rng = np.random.default_rng(seed)
    f, h = CoeffFunction.random(g, rng), CoeffFunction.random(g, rng)
    assert inner_product(f, h) == pytest.approx(np.conj(inner_product(h, f)), rel=1e-13)
    assert inner_product(f, f).real > 0
    assert abs(inner_product(f, f).imag) <= 1e-14 * inner_product(f, f).real


def test_norm_zero_iff_values_zero():
    g = GridSpec(2, 2, -1.0, 0.5)
    assert CoeffFunction.zeros(g).norm() == 0.0
    f = CoeffFunction.indicator(g, (0, 1), -0.5, 1e-3)
    assert f.norm() > 0


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_refinement_monotone(seed):
    small = GridSpec(2, 3, -2.0, 0.25)
    f = CoeffFunction.random(small, seed)
    for bigger in (small.replace(alpha_max=5), small.replace(lambda_min=-4.0), GridSpec(2, 6, -5.0, 0.25)):
        assert f.extend(bigger).norm() >= f.norm() * (1 - 1e-15)


def test_extend_rejects_incompatible():
    f = CoeffFunction.zeros(GridSpec(1, 2, -1.0, 0.5))
    with pytest.raises(GridMismatchError):
        f.extend(GridSpec(1, 2, -1.0, 0.25))
    with pytest.raises(GridMismatchError):
        f.extend(GridSpec(1, 1, -1.0, 0.5))


def test_csv_round_trip(tmp_path):
    g = GridSpec(2, 2, -1.0, 0.25)
    f = CoeffFunction.random(g, 3)
    path = tmp_path / "phi.csv"
    f.to_csv(path)
    back = CoeffFunction.from_csv(path, g)
    assert np.array_equal(back.values, f.values)
    header = path.read_text().splitlines()[0]
    assert header == "alpha_1,alpha_2,lambda,re,im"


def test_values_immutable():
    f = CoeffFunction.random(GridSpec(1, 1, -1.0, 0.5), 0)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    with pytest.raises(DomainError):
        CoeffFunction(f.grid, np.full(f.grid.shape, np.nan))
