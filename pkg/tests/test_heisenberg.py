import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from siegel_da.exceptions import DomainError
from siegel_da.heisenberg import (
    HeisenbergElement,
    SiegelPoint,
    bargmann_lowest_row,
    cayley,
    from_psi_coordinates,
    hgroup_inv,
    hgroup_mul,
    phi_action,
    psi_coordinates,
    rho,
)

seeds = st.integers(0, 2**32 - 1)


def _element(rng, d):
    return HeisenbergElement(rng.standard_normal(d) + 1j * rng.standard_normal(d), rng.standard_normal())


def _gap(a, b):
    return max(np.max(np.abs(a.z - b.z)), abs(a.t - b.t))


def test_rho_examples():
    assert rho(SiegelPoint([0], 1j)) == 1.0
    assert rho(SiegelPoint([2], 1j)) == 0.0
    assert rho(SiegelPoint([1, 1], 3 + 1j)) == pytest.approx(0.5)
    assert SiegelPoint([2], 1j).is_boundary()
    assert SiegelPoint([0], 1j).is_interior()


def test_group_examples():
    s = HeisenbergElement([0], 1.5)
    t = HeisenbergElement([0], -0.25)
    assert hgroup_mul(s, t) == HeisenbergElement([0], 1.25)
    p = hgroup_mul(HeisenbergElement([1], 0), HeisenbergElement([1j], 0))
    assert np.allclose(p.z, [1 + 1j]) and p.t == pytest.approx(0.5)
    a = HeisenbergElement([1 - 2j, 0.5j], 3.0)
    assert _gap(a * a.inverse(), HeisenbergElement.identity(2)) == 0


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        hgroup_mul(HeisenbergElement([0], 0), HeisenbergElement([0, 0], 0))
    with pytest.raises(DomainError):
        phi_action(HeisenbergElement([0], 0), SiegelPoint([0, 0], 1j))


@given(seeds, st.integers(1, 3))
def test_group_axioms(seed, d):
    rng = np.random.default_rng(seed)
    a, b, c = (_element(rng, d) for _ in range(3))
    e = HeisenbergElement.identity(d)
    assert _gap((a * b) * c, a * (b * c)) <= 1e-12
    assert _gap(a * e, a) == 0 and _gap(e * a, a) == 0
    assert _gap(a * hgroup_inv(a), e) <= 1e-12


@given(seeds, st.integers(1, 3))
def test_phi_action_preserves_rho(seed, d):
    rng = np.random.default_rng(seed)
    g = _element(rng, d)
    p = from_psi_coordinates(rng.standard_normal(d) + 1j * rng.standard_normal(d), rng.standard_normal(),
                             rng.exponential())
    assert abs(rho(phi_action(g, p)) - rho(p)) <= 1e-12


def test_phi_action_translation():
    p = SiegelPoint([0.3 + 0.1j], 0.2 + 2j)
    q = phi_action(HeisenbergElement([0], 1.5), p)
    assert np.array_equal(q.zeta, p.zeta)
    assert q.zeta_last == p.zeta_last + 1.5


@given(seeds, st.integers(1, 3))
def test_phi_action_composition_on_boundary(seed, d):
    rng = np.random.default_rng(seed)
    a, b = _element(rng, d), _element(rng, d)
    q = from_psi_coordinates(rng.standard_normal(d) + 1j * rng.standard_normal(d), rng.standard_normal(), 0.0)
    left = phi_action(a, phi_action(b, q))
    right = phi_action(hgroup_mul(b, a), q)
    assert np.allclose(left.zeta, right.zeta, atol=1e-12)
    assert abs(left.zeta_last - right.zeta_last) <= 1e-12


def test_psi_coordinates_round_trip():
    p = SiegelPoint([0.3 - 0.2j, 1j], 0.7 + 3j)
    z, t, h = psi_coordinates(p)
    assert h == pytest.approx(rho(p))
    q = from_psi_coordinates(z, t, h)
    assert np.allclose(q.zeta, p.zeta) and abs(q.zeta_last - p.zeta_last) < 1e-15


def test_cayley_examples():
    c = cayley([0, 0])
    assert np.array_equal(c.zeta, [0]) and c.zeta_last == 1j
    assert cayley([0, 0.999999]).zeta_last.imag > 1e5
    with pytest.raises(DomainError):
        cayley([0, 1.0])
    with pytest.raises(DomainError):
        cayley([0.8, 0.8])


@given(seeds, st.integers(1, 3))
def test_cayley_lands_inside(seed, d):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d + 1) + 1j * rng.standard_normal(d + 1)
    w *= 0.999 * rng.uniform() ** (1 / (2 * d + 2)) / np.linalg.norm(w)
    assert rho(cayley(w)) > 0


def test_bargmann_examples():
    e = HeisenbergElement.identity(1)
    for n_exp in (0, 1, 2):
        assert bargmann_lowest_row(-3.0, e, (0,), n_exp) == pytest.approx((3.0 / (2 * np.pi)) ** n_exp)
    assert bargmann_lowest_row(-1.0, HeisenbergElement([0], 2.0), (1,)) == 0
    with pytest.raises(DomainError):
        bargmann_lowest_row(0.5, e, (0,))


def test_bargmann_closed_form():
    g = HeisenbergElement([0.5 + 0.5j], 0.3)
    lam = -2.0
    expected = (1 / np.sqrt(2)) * (1.0) ** 1 * np.exp(1j * lam * 0.3 + lam * 0.5 / 4) * np.conj(0.5 + 0.5j) ** 2
    assert bargmann_lowest_row(lam, g, (2,)) == pytest.approx(expected, rel=1e-14)
