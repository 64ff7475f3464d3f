import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siegel_da import shifts
from siegel_da.exceptions import ConvergenceError, DomainError, GridShiftError
from siegel_da.grid import CoeffFunction, GridSpec, enumerate_multi_indices, inner_product
from siegel_da.shifts import (
    ShiftParams,
    ShiftSymbol,
    exp_mult_apply,
    multiplier_norm_bound,
    shift_adjoint_apply,
    shift_apply,
    symbol_apply,
    symbol_matrix,
    symbol_norm_bound,
    term_norm_bound,
    truncated_operator_norm,
)

H = 0.05


def _grid(d, alpha_max=6, nodes=60, rule="riemann-midpoint"):
    return GridSpec(d, alpha_max, -nodes * H, H, rule)


@st.composite
def shift_case(draw):
    d = draw(st.integers(1, 2))
    order = draw(st.integers(0, 3))
    gamma = list(enumerate_multi_indices(d, order)[math.comb(order - 1 + d, d) if order else 0:])
    g = tuple(int(x) for x in draw(st.sampled_from(gamma)))
    m = draw(st.sampled_from([1, 2, 5]))
    seed = draw(st.integers(0, 2**32 - 1))
    return d, g, m, seed


def test_shift_example():
    g = GridSpec(1, 0, -2.0, 0.5)
    phi = CoeffFunction.indicator(g, (0,), -1.5)
    out = shift_apply(ShiftParams((0,), -0.5), phi)
    assert out.value((0,), -2.0) == pytest.approx(0.75, rel=1e-15)
    assert np.count_nonzero(out.values) == 1


def test_adjoint_example():
    g = GridSpec(1, 2, -5.0, 1.0)
    phi = CoeffFunction.indicator(g, (1,), -3.0, 2.5)
    out = shift_adjoint_apply(ShiftParams((1,), -1.0), phi)
    assert out.value((0,), -2.0) == pytest.approx(2.5, rel=1e-15)


def test_off_grid_tau_rejected():
    phi = CoeffFunction.zeros(_grid(1))
    with pytest.raises(GridShiftError):
        shift_apply(ShiftParams((1,), -0.07), phi)
    with pytest.raises(GridShiftError):
        shift_adjoint_apply(ShiftParams((1,), -0.07), phi)
    with pytest.raises(DomainError):
        ShiftParams((1,), 0.0)
    with pytest.raises(DomainError):
        ShiftSymbol(((1.0, (1,), 0.0),))


@settings(max_examples=40)
@given(shift_case())
def test_shift_support(case):
    d, gamma, m, seed = case
    grid = _grid(d)
    out = shift_apply(ShiftParams(gamma, -m * H), CoeffFunction.random(grid, seed))
    rows = [i for i, a in enumerate(grid.alphas) if np.any(a < np.array(gamma))]
    assert np.all(out.values[rows] == 0)
    assert np.all(out.values[:, :m] == 0)


@settings(max_examples=60)
@given(shift_case())
def test_adjointness(case):
    d, gamma, m, seed = case
    grid = _grid(d)
    rng = np.random.default_rng(seed)
    sp = ShiftParams(gamma, -m * H)
    phi, psi = CoeffFunction.random(grid, rng), CoeffFunction.random(grid, rng)
    gap = inner_product(shift_adjoint_apply(sp, phi), psi) - inner_product(phi, shift_apply(sp, psi))
    assert abs(gap) <= 1e-10 * phi.norm() * psi.norm()


@pytest.mark.parametrize("d,gamma", [(1, (0,)), (1, (2,)), (2, (0, 0)), (2, (1, 2))])
def test_closed_form_adjoint_matches_matrix_adjoint(d, gamma):
    # oracle: W^-1 S^H W built from the forward operator only
    grid = _grid(d, alpha_max=4, nodes=12)
    sp = ShiftParams(gamma, -3 * H)
    size = grid.n_alpha * grid.n_nodes
    basis = np.eye(size).reshape(size, *grid.shape)
    s = np.array([shift_apply(sp, CoeffFunction(grid, b)).values.ravel() for b in basis]).T
    w = grid.weights.ravel()
    numeric = (s.conj().T * w[None, :]) / w[:, None]
    closed = np.array([shift_adjoint_apply(sp, CoeffFunction(grid, b)).values.ravel() for b in basis]).T
    assert np.allclose(closed, numeric, rtol=1e-12, atol=1e-14 * np.max(np.abs(numeric)))


@settings(max_examples=30)
@given(st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_composition_law(d, seed):
    rng = np.random.default_rng(seed)
    grid = _grid(d)
    g1 = tuple(int(x) for x in rng.integers(0, 2, d))
    g2 = tuple(int(x) for x in rng.integers(0, 2, d))
    m1, m2 = (int(x) for x in rng.integers(1, 6, 2))
    phi = CoeffFunction.random(grid, rng)
    two = shift_apply(ShiftParams(g1, -m1 * H), shift_apply(ShiftParams(g2, -m2 * H), phi))
    one = shift_apply(ShiftParams(tuple(a + b for a, b in zip(g1, g2)), -(m1 + m2) * H), phi)
    assert np.allclose(two.values, one.values, rtol=1e-13, atol=0)


@settings(max_examples=40)
@given(st.integers(1, 2), st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_exp_mult_contraction_and_semigroup(d, m1, m2, seed):
    grid = _grid(d, alpha_max=5)
    phi = CoeffFunction.random(grid, seed)
    tau, sigma = -m1 * H, -m2 * H
    assert exp_mult_apply(tau, phi).norm() <= phi.norm() + 1e-12
    composed = exp_mult_apply(tau, exp_mult_apply(sigma, phi)).values
    direct = exp_mult_apply(tau + sigma, phi).values
    assert np.max(np.abs(composed - direct)) <= 1e-12 * np.max(np.abs(phi.values))


@pytest.mark.parametrize("d", [1, 2])
def test_exp_mult_substitution_identity(d):
    # ||E phi||^2 = sum |phi|^2 |lambda / (lambda + tau)|^|alpha| mu over nodes that stay on the grid
    grid = _grid(d, alpha_max=5)
    phi = CoeffFunction.random(grid, 7)
    tau = -4 * H
    total = 0.0
    for i, alpha in enumerate(grid.alphas):
        for k, lam in enumerate(grid.nodes):
            if k + 4 < grid.n_nodes:
                total += abs(phi.values[i, k]) ** 2 * abs(lam / (lam + tau)) ** alpha.sum() * grid.weights[i, k]
    assert exp_mult_apply(tau, phi).norm_sq() == pytest.approx(total, rel=1e-12)


def test_symbol_single_term_and_adjoint():
    grid = _grid(2, alpha_max=4, nodes=30)
    rng = np.random.default_rng(1)
    phi, psi = CoeffFunction.random(grid, rng), CoeffFunction.random(grid, rng)
    single = ShiftSymbol(((1.0, (1, 0), -2 * H),))
    assert np.array_equal(symbol_apply(single, phi).values, shift_apply(ShiftParams((1, 0), -2 * H), phi).values)
    sym = ShiftSymbol.from_polynomial({(0, 0): 0.3 - 0.1j, (1, 0): 0.5j, (1, 1): -0.2, (0, 2): 0.4 + 0.4j},
                                      [-2 * H, -3 * H])
    gap = inner_product(symbol_apply(sym, phi, adjoint=True), psi) - inner_product(phi, symbol_apply(sym, psi))
    assert abs(gap) <= 1e-10 * phi.norm() * psi.norm()


def test_from_polynomial_taus_and_json():
    sym = ShiftSymbol.from_polynomial({(2, 1): 1 + 2j, (0, 0): 0.5}, [-0.1, -0.25])
    terms = {t[1]: t for t in sym.terms}
    assert terms[(2, 1)][2] == pytest.approx(-0.45)
    assert terms[(0, 0)][2] == 0.0
    back = ShiftSymbol.from_json(sym.to_json())
    assert back == sym
    assert set(sym.to_list()[0]) == {"c_re", "c_im", "gamma", "tau"}


def test_constant_symbol_is_contraction():
    grid = _grid(2, alpha_max=4, nodes=40)
    c = 0.6 - 0.3j
    sym = ShiftSymbol(((c, (0, 0), -3 * H),))
    assert truncated_operator_norm(sym, grid) <= abs(c) * (1 + 1e-10)
    assert symbol_norm_bound(ShiftSymbol(((c, (0, 0), 0.0),))) == pytest.approx(abs(c))


def test_truncated_norm_basic():
    grid = _grid(1)
    assert truncated_operator_norm(ShiftSymbol(()), grid) == 0.0
    assert truncated_operator_norm(ShiftSymbol(((0.0, (1,), -H),)), grid) == 0.0
    # gamma = 0: nodes with alpha = 0 keep their norm, so the value is 1
    assert truncated_operator_norm(ShiftSymbol(((1.0, (0,), -5 * H),)), grid) == pytest.approx(1.0, abs=1e-10)


def test_power_and_lanczos_agree():
    grid = _grid(2, alpha_max=5, nodes=40)
    sym = ShiftSymbol.from_polynomial({(1, 0): 0.7, (0, 1): -0.4j, (1, 1): 0.3}, [-H, -2 * H])
    a = truncated_operator_norm(sym, grid, method="power")
    b = truncated_operator_norm(sym, grid, method="lanczos")
    assert a == pytest.approx(b, rel=1e-8)


def test_power_iteration_reports_non_convergence():
    grid = _grid(2, alpha_max=5, nodes=40)
    sym = ShiftSymbol.from_polynomial({(1, 0): 0.7, (0, 1): -0.4j, (1, 1): 0.3}, [-H, -2 * H])
    with pytest.raises(ConvergenceError) as info:
        truncated_operator_norm(sym, grid, tol=1e-16, max_iter=15)
    assert info.value.last_value > 0
    assert info.value.last_iterate.grid == grid


def test_symbol_matrix_is_weighted_operator():
    grid = _grid(1, alpha_max=3, nodes=10)
    sym = ShiftSymbol.from_polynomial({(1,): 0.5, (2,): 0.25j}, [-H])
    mat = symbol_matrix(sym, grid).toarray()
    phi = CoeffFunction.random(grid, 2)
    sqrt_w = np.sqrt(grid.weights.ravel())
    assert np.allclose(mat @ (sqrt_w * phi.values.ravel()), sqrt_w * symbol_apply(sym, phi).values.ravel())


def test_multiplier_bound_examples():
    assert multiplier_norm_bound((0,), -1.0) == (1.0, 1.0)
    assert multiplier_norm_bound((0, 0), -0.1) == (1.0, 1.0)
    sup, closed = multiplier_norm_bound((1,), -1.0)
    assert closed == pytest.approx(2.0)
    assert sup == pytest.approx(2.0)
    with pytest.raises(DomainError):
        multiplier_norm_bound((1,), 0.5)


def _brute_sup(gamma, tau, max_order):
    # enumerate every alpha and maximize over lambda on a fine grid
    g = sum(gamma)
    t = abs(tau)
    best = math.lgamma(1) + sum(math.lgamma(x + 1) for x in gamma) + g * math.log(2 / t)
    s = np.linspace(1e-4, 60, 200001)
    for alpha in itertools.product(range(max_order + 1), repeat=len(gamma)):
        n = sum(alpha)
        if n == 0 or n > max_order:
            continue
        rising = sum(math.lgamma(a + b + 1) - math.lgamma(a + 1) for a, b in zip(alpha, gamma))
        vals = g * math.log(2) + n * np.log(s) - (n + g) * np.log(s + t) + rising
        best = max(best, float(vals.max()))
    return best


@pytest.mark.parametrize("gamma,tau", [((1,), -1.0), ((3,), -0.5), ((2, 1), -0.7), ((1, 1, 1), -2.0)])
def test_sup_bound_matches_brute_force(gamma, tau):
    max_order = 12 if len(gamma) < 3 else 8
    brute = _brute_sup(gamma, tau, max_order)
    sup, _ = multiplier_norm_bound(gamma, tau)
    assert math.log(sup) >= brute - 1e-9
    capped, _ = multiplier_norm_bound(gamma, tau, scan_cap=max_order)
    tail = sum(gamma) * math.log(2 / abs(tau)) - sum(gamma) + sum(x * math.log(x) for x in gamma if x)
    assert math.log(capped) == pytest.approx(max(brute, tail), abs=1e-6)


def test_greedy_alpha_is_optimal():
    gamma = (3, 1, 2)
    for order in range(1, 9):
        best = max(
            (a for a in itertools.product(range(order + 1), repeat=3) if sum(a) == order),
            key=lambda a: shifts._log_rising(a, gamma),
        )
        greedy = shifts._greedy_alpha(gamma, order)
        assert shifts._log_rising(greedy, gamma) == pytest.approx(shifts._log_rising(best, gamma), abs=1e-12)


@pytest.mark.parametrize("gamma,m", [((1,), 20), ((2,), 10), ((1, 1), 20), ((3,), 40), ((1,), 60), ((0, 2), 50)])
def test_truncated_norm_respects_squared_bound_and_refines_monotonically(gamma, m):
    d = len(gamma)
    grid = GridSpec(d, 6, -4.0, H)
    sym = ShiftSymbol(((1.0, gamma, -m * H),))
    sup, _ = multiplier_norm_bound(gamma, -m * H)
    norms = []
    for _ in range(3):
        norms.append(truncated_operator_norm(sym, grid, tol=1e-13, method="lanczos"))
        grid = grid.refined()
    assert max(norms) <= math.sqrt(sup) + 1e-8
    assert norms[1] >= norms[0] - 1e-8 and norms[2] >= norms[1] - 1e-8
    assert term_norm_bound(gamma, -m * H) == pytest.approx(math.sqrt(sup))


def test_bound_controls_square_not_norm():
    # for |tau| > 2 the bound is below 1 and the truncated norm already exceeds it
    gamma, tau = (1,), -3.0
    sup, closed = multiplier_norm_bound(gamma, tau)
    t = truncated_operator_norm(ShiftSymbol(((1.0, gamma, tau),)), GridSpec(1, 8, -12.0, H), method="lanczos")
    assert t > sup and t > closed
    assert t ** 2 <= sup + 1e-8


def test_symbol_norm_bound_dominates():
    grid = GridSpec(2, 5, -4.0, H)
    sym = ShiftSymbol.from_polynomial({(1, 0): 0.5, (0, 1): 0.5j}, [-4 * H, -6 * H])
    bound = symbol_norm_bound(sym)
    parts = [abs(c) * term_norm_bound(g, t) for c, g, t in sym.terms]
    assert bound == pytest.approx(sum(parts))
    assert truncated_operator_norm(sym, grid, method="lanczos") <= bound


# -- monomial weight with tau = 0 on compactly supported coefficients -------------

@pytest.fixture
def monomial_weight():
    """``(alpha + gamma)! / alpha! * (2/|lambda|)^|gamma|`` on a grid: the ratio ``mu(alpha + gamma) / mu(alpha)``."""

    def weight(grid, gamma):
        rising = np.array([sum(math.lgamma(a + g + 1) - math.lgamma(a + 1) for a, g in zip(alpha, gamma))
                           for alpha in grid.alphas])
        return np.exp(rising[:, None] + sum(gamma) * np.log(2 / -grid.nodes)[None, :])

    return weight


@pytest.mark.parametrize("gamma", [(1,), (2,), (1, 1), (0, 3)])
def test_monomial_multiplier_bounded_on_compact_support(monomial_weight, gamma):
    d = len(gamma)
    big = GridSpec(d, 10, -4.0, 0.1)
    rng = np.random.default_rng(3)
    for lam_cut, amax in ((-0.5, 3), (-0.2, 4), (-0.1, 6)):
        values = np.zeros(big.shape, dtype=complex)
        rows = big.alpha_abs <= amax
        cols = big.nodes <= lam_cut + 1e-12
        values[np.ix_(rows, cols)] = rng.standard_normal((rows.sum(), cols.sum()))
        values *= np.exp(-0.5 * big.log_mu)
        phi = CoeffFunction(big, values)
        out = CoeffFunction._wrap(big, shifts._shift_values(big, phi.values, gamma, 0))
        w = monomial_weight(big, gamma)
        predicted = float(np.sum(np.abs(phi.values) ** 2 * w * big.weights))
        assert out.norm_sq() == pytest.approx(predicted, rel=1e-12)
        c_phi = float(np.max(w[np.ix_(rows, cols)]))
        assert out.norm_sq() <= c_phi * phi.norm_sq() * (1 + 1e-12)


def test_monomial_constant_blows_up_toward_zero(monomial_weight):
    # the constant c(phi) grows without bound as the support approaches lambda = 0
    grid = GridSpec(1, 4, -2.0, 0.01)
    w = monomial_weight(grid, (1,))
    consts = [np.max(w[:, grid.nodes <= cut]) for cut in (-1.0, -0.1, -0.01)]
    assert consts[0] < consts[1] < consts[2]
    assert consts[2] > 50 * consts[0]
