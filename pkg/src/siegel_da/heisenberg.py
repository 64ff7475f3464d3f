"""Siegel upper half-space geometry and the Heisenberg group acting on it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .grid import as_multi_index, log_multi_factorial

__all__ = [
    "BOUNDARY_TOL",
    "SiegelPoint",
    "HeisenbergElement",
    "rho",
    "psi_coordinates",
    "from_psi_coordinates",
    "hgroup_mul",
    "hgroup_inv",
    "phi_action",
    "cayley",
    "bargmann_lowest_row",
]

BOUNDARY_TOL = 1e-12


def _cvec(x) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=complex)).copy()
    if arr.ndim != 1:
        raise DomainError("expected a vector of complex numbers")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SiegelPoint:
    """A point ``(zeta, zeta_last)`` of ``C^d x C``."""

    zeta: np.ndarray
    zeta_last: complex

    def __post_init__(self):
        object.__setattr__(self, "zeta", _cvec(self.zeta))
        object.__setattr__(self, "zeta_last", complex(self.zeta_last))

    @property
    def d(self) -> int:
        return len(self.zeta)

    @property
    def rho(self) -> float:
        return rho(self)

    def is_interior(self) -> bool:
        return self.rho > BOUNDARY_TOL

    def is_boundary(self) -> bool:
        return abs(self.rho) <= BOUNDARY_TOL

    def __eq__(self, other):
        if not isinstance(other, SiegelPoint):
            return NotImplemented
        return np.array_equal(self.zeta, other.zeta) and self.zeta_last == other.zeta_last

    def __repr__(self):
        return f"SiegelPoint(zeta={self.zeta.tolist()}, zeta_last={self.zeta_last})"


@dataclass(frozen=True, eq=False)
class HeisenbergElement:
    """An element ``[z, t]`` of the Heisenberg group ``C^d x R``."""

    z: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "z", _cvec(self.z))
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def identity(cls, d: int) -> "HeisenbergElement":
        return cls(np.zeros(d, dtype=complex), 0.0)

    @property
    def d(self) -> int:
        return len(self.z)

    def inverse(self) -> "HeisenbergElement":
        return hgroup_inv(self)

    def __mul__(self, other):
        if not isinstance(other, HeisenbergElement):
            return NotImplemented
        return hgroup_mul(self, other)

    def __eq__(self, other):
        if not isinstance(other, HeisenbergElement):
            return NotImplemented
        return np.array_equal(self.z, other.z) and self.t == other.t

    def __repr__(self):
        return f"HeisenbergElement(z={self.z.tolist()}, t={self.t})"


def rho(p: SiegelPoint) -> float:
    """Defining function ``Im zeta_last - |zeta|^2 / 4``; positive inside the domain."""
    return float(p.zeta_last.imag - 0.25 * np.vdot(p.zeta, p.zeta).real)


def psi_coordinates(p: SiegelPoint) -> tuple[np.ndarray, float, float]:
    """Return ``(z, t, h) = (zeta, Re zeta_last, rho)``."""
    return p.zeta.copy(), p.zeta_last.real, rho(p)


def from_psi_coordinates(z, t: float, h: float) -> SiegelPoint:
    z = _cvec(z)
    return SiegelPoint(z, complex(t, 0.25 * np.vdot(z, z).real + h))


def _check_dims(a, b):
    if a.d != b.d:
        raise DomainError(f"dimension mismatch: {a.d} vs {b.d}")


def hgroup_mul(a: HeisenbergElement, b: HeisenbergElement) -> HeisenbergElement:
    """Group law ``[w, s][z, t] = [w + z, s + t - Im(w . conj z) / 2]``."""
    _check_dims(a, b)
    return HeisenbergElement(a.z + b.z, a.t + b.t - 0.5 * np.dot(a.z, np.conj(b.z)).imag)


def hgroup_inv(a: HeisenbergElement) -> HeisenbergElement:
    return HeisenbergElement(-a.z, -a.t)


def phi_action(g: HeisenbergElement, p: SiegelPoint) -> SiegelPoint:
    """Apply the biholomorphism ``Phi_[z,t]`` to ``p``.

    ``Phi_[z,t](w, w_last) = (w + z, w_last + t + i|z|^2/4 + (i/2) w . conj z)``.
    It preserves :func:`rho`, and on boundary points it is right
    multiplication by ``[z, t]``, so ``Phi_g o Phi_g' = Phi_(g' g)``.
    """
    _check_dims(g, p)
    z = g.z
    shift = g.t + 0.25j * np.vdot(z, z).real + 0.5j * np.dot(p.zeta, np.conj(z))
    return SiegelPoint(p.zeta + z, p.zeta_last + shift)


def cayley(w) -> SiegelPoint:
    """Cayley transform from the unit ball of ``C^(d+1)`` onto the Siegel domain.

    ``(omega, omega_last) -> (2 omega / (1 - omega_last), i (1 + omega_last) / (1 - omega_last))``

    Raises
    ------
    DomainError
        If ``w`` is not inside the open unit ball or ``w_last == 1``.
    """
    w = _cvec(w)
    if len(w) < 2:
        raise DomainError("cayley expects a point of C^(d+1) with d >= 1")
    omega, last = w[:-1], w[-1]
    denom = 1.0 - last
    if abs(denom) == 0:
        raise DomainError("pole of the Cayley transform at w_last = 1")
    if np.vdot(w, w).real >= 1.0:
        raise DomainError("point is not inside the open unit ball")
    return SiegelPoint(2.0 * omega / denom, 1j * (1.0 + last) / denom)


def bargmann_lowest_row(lam: float, g: HeisenbergElement, alpha, n_exp: float = 0) -> complex:
    """Coefficient of ``e_0`` in ``P_0 sigma_lambda[z, t] e_alpha`` for ``lambda < 0``.

        (1/sqrt(alpha!)) (|lambda|/2)^(|alpha|/2) (|lambda|/(2 pi))^n_exp
            * exp(i lambda t + lambda |z|^2 / 4) * conj(z)^alpha

    ``n_exp = 0`` is the value for which the trace form of the inversion
    formula reproduces direct synthesis; see
    :func:`siegel_da.da_space.calibrate_bargmann_exponent`.
    """
    if not lam < 0:
        raise DomainError(f"lambda must be negative, got {lam}")
    alpha = as_multi_index(alpha, g.d)
    s = -lam
    n = sum(alpha)
    zbar_pow = complex(np.prod(np.conj(g.z) ** np.array(alpha))) if n else 1.0 + 0j
    if zbar_pow == 0:
        return 0j
    log_mag = -0.5 * log_multi_factorial(alpha) + 0.5 * n * math.log(s / 2) + n_exp * math.log(s / (2 * math.pi))
    phase = np.exp(1j * lam * g.t + 0.25 * lam * np.vdot(g.z, g.z).real)
    return complex(math.exp(log_mag) * phase * zbar_pow)
