"""Function side of the coefficient picture: synthesis, kernel and direct norm.

A coefficient function ``phi`` synthesizes the holomorphic function

    F(zeta, zeta_last) = (2 pi)^-(d+1) sum_alpha int zeta^alpha exp(-i lambda zeta_last)
                         conj(phi(alpha, lambda)) |lambda|^d dlambda

on the Siegel domain. The map is conjugate linear, and
``||F||^2 = c_{d,n} ||phi||^2_mu`` for the norm built from ``n`` derivatives
in ``zeta_last``, where ``c_{d,n} = Gamma(2n-d) / (2^(2n-d) (2 pi)^(d+1))``
(see :attr:`KernelParams.isometry_constant`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .exceptions import DomainError, SingularityError, UnsupportedConfigurationError
from .grid import CoeffFunction, GridSpec, fock_norm_sq
from .heisenberg import HeisenbergElement, SiegelPoint, bargmann_lowest_row, psi_coordinates

__all__ = [
    "KernelParams",
    "synthesize",
    "synthesize_many",
    "kernel",
    "kernel_coefficients",
    "trace_synthesize",
    "calibrate_bargmann_exponent",
    "DABox",
    "DANormEstimate",
    "da_norm_direct",
    "auto_box",
]

KERNEL_GUARD = 1e-14


@dataclass(frozen=True)
class KernelParams:
    """Dimension ``d`` and smoothness index ``n`` (``2n > d``)."""

    d: int
    n: int = 1

    def __post_init__(self):
        if self.d < 1 or int(self.d) != self.d:
            raise DomainError("d must be a positive integer")
        if int(self.n) != self.n or 2 * self.n <= self.d:
            raise DomainError(f"need an integer n with 2n > d, got d={self.d}, n={self.n}")

    @property
    def gamma_const(self) -> float:
        """Kernel prefactor ``4^n / ((4 pi)^(d+1) Gamma(2n - d))``."""
        return 4.0 ** self.n / ((4 * math.pi) ** (self.d + 1) * math.gamma(2 * self.n - self.d))

    @property
    def transform_constant(self) -> float:
        """``Gamma(2n-d) / 2^(2n-d)``, the factor between the function norm and the operator-valued transform norm."""
        return math.gamma(2 * self.n - self.d) / 2.0 ** (2 * self.n - self.d)

    @property
    def isometry_constant(self) -> float:
        """``||S phi||^2 / ||phi||^2_mu`` for this ``n``: ``transform_constant / (2 pi)^(d+1)``."""
        return self.transform_constant / (2 * math.pi) ** (self.d + 1)


def _require_interior(p: SiegelPoint):
    if not p.is_interior():
        raise DomainError(f"point is not in the open Siegel domain (rho={p.rho:.3g})")


def _active(phi: CoeffFunction):
    rows = np.flatnonzero(np.any(phi.values != 0, axis=1))
    cols = np.flatnonzero(np.any(phi.values != 0, axis=0))
    return rows, cols


def synthesize(phi: CoeffFunction, p: SiegelPoint, derivative: int = 0) -> complex:
    """Evaluate the synthesized function (or its ``derivative``-th ``zeta_last`` derivative) at ``p``.

    Differentiation in ``zeta_last`` is exact: it multiplies the summand by
    ``(-i lambda)^derivative``.

    Raises
    ------
    DomainError
        If ``p`` is not an interior point or has the wrong dimension.
    """
    _require_interior(p)
    if p.d != phi.grid.d:
        raise DomainError("dimension mismatch between point and grid")
    return complex(synthesize_many(phi, p.zeta[None, :], np.array([p.zeta_last]), derivative)[0])


def _synthesis_table(phi: CoeffFunction, derivative: int):
    grid = phi.grid
    rows, cols = _active(phi)
    if len(rows) == 0:
        return None
    k0, k1 = cols.min(), cols.max()
    lam = grid.nodes[k0:k1 + 1]
    table = np.conj(phi.values[np.ix_(rows, np.arange(k0, k1 + 1))])
    table = table * (np.abs(lam) ** grid.d * grid.node_weights[k0:k1 + 1] * (-1j * lam) ** derivative)[None, :]
    # node index k corresponds to exp(-i lambda zeta_last) = q^(k+1), q = exp(i h zeta_last)
    return grid.alphas[rows], table, k0 + 1


def synthesize_many(phi: CoeffFunction, zeta: np.ndarray, zeta_last: np.ndarray, derivative: int = 0) -> np.ndarray:
    """Vectorized synthesis at points ``(zeta[j], zeta_last[j])``; no domain checks."""
    zeta = np.asarray(zeta, dtype=complex).reshape(len(zeta_last), phi.grid.d)
    zeta_last = np.asarray(zeta_last, dtype=complex)
    prepared = _synthesis_table(phi, derivative)
    if prepared is None:
        return np.zeros(len(zeta_last), dtype=complex)
    alphas, table, first_power = prepared
    return _evaluate_table(phi.grid, alphas, table, first_power, zeta, zeta_last)


def _evaluate_table(grid, alphas, table, first_power, zeta, zeta_last):
    q = np.exp(1j * grid.spacing * zeta_last)
    # Horner in q for every active alpha row: shape (n_rows, n_points)
    series = npoly.polyval(q, table.T)
    monomials = np.prod(zeta[:, None, :] ** alphas[None, :, :], axis=2)
    total = np.einsum("pa,ap->p", monomials, series)
    return total * q ** first_power / (2 * math.pi) ** (grid.d + 1)


def kernel(w: SiegelPoint, z: SiegelPoint, kp: KernelParams) -> complex:
    """Reproducing kernel ``gamma_{d,n} ((w_last - conj z_last)/(2i) - w . conj z / 4)^-1``.

    Raises
    ------
    DomainError
        If either point is not interior.
    SingularityError
        If the denominator is below ``1e-14`` in magnitude.
    """
    _require_interior(w)
    _require_interior(z)
    if w.d != kp.d or z.d != kp.d:
        raise DomainError("dimension mismatch")
    denom = (w.zeta_last - np.conj(z.zeta_last)) / 2j - 0.25 * np.dot(w.zeta, np.conj(z.zeta))
    if abs(denom) < KERNEL_GUARD:
        raise SingularityError(f"kernel denominator {denom!r} vanishes")
    return complex(kp.gamma_const / denom)


def kernel_coefficients(w: SiegelPoint, grid: GridSpec, kp: KernelParams, normalized: bool = False) -> CoeffFunction:
    """Coefficients of the kernel function centred at ``w``.

        phi_K(alpha, lambda) = (2 pi)^-(d+1) w^alpha exp(-i lambda w_last)
                               |lambda|^-d (|lambda|/2)^|alpha| / alpha!

    With this choice ``<phi_K, psi>_mu`` equals the synthesis of ``psi`` at
    ``w`` exactly on the grid. Synthesizing ``phi_K`` itself gives the kernel
    up to the global factor ``1 / kp.isometry_constant``; ``normalized=True``
    divides that factor out so the synthesis approximates :func:`kernel`.
    """
    _require_interior(w)
    if w.d != grid.d or kp.d != grid.d:
        raise DomainError("dimension mismatch")
    s = -grid.nodes
    n = grid.alpha_abs[:, None]
    log_mag = (-grid.d * np.log(s))[None, :] + n * np.log(s / 2)[None, :] - grid.log_alpha_factorial[:, None]
    w_pow = np.prod(w.zeta[None, :] ** grid.alphas, axis=1)
    values = (w_pow[:, None] * np.exp(log_mag) * np.exp(1j * s * w.zeta_last)[None, :]) / (2 * math.pi) ** (grid.d + 1)
    if normalized:
        values = values / kp.isometry_constant
    return CoeffFunction(grid, values)


# -- trace form of the inversion formula -------------------------------------

def trace_synthesize(phi: CoeffFunction, p: SiegelPoint, n_exp: float = 0) -> complex:
    """Synthesis routed through the lowest-row Bargmann coefficients.

    Evaluates ``(2 pi)^-(d+1) int e^(h lambda) tr(tau(lambda) sigma_lambda[z,t]^*) |lambda|^d dlambda``
    with the rank-one ``tau`` determined by ``phi``; agrees with
    :func:`synthesize` exactly when ``n_exp = 0``. Loops in Python, so meant
    for sparse ``phi``.
    """
    _require_interior(p)
    grid = phi.grid
    z, t, h = psi_coordinates(p)
    g = HeisenbergElement(z, t)
    total = 0j
    for i, k in zip(*np.nonzero(phi.values)):
        alpha = tuple(int(a) for a in grid.alphas[i])
        lam = grid.nodes[k]
        row = bargmann_lowest_row(lam, g, alpha, n_exp)
        coeff = math.sqrt(fock_norm_sq(alpha, lam)) * np.conj(phi.values[i, k]) * np.conj(row)
        total += math.exp(h * lam) * coeff * abs(lam) ** grid.d * grid.node_weights[k]
    return complex(total / (2 * math.pi) ** (grid.d + 1))


def calibrate_bargmann_exponent(d: int = 1, lambdas=(-0.5, -1.0, -2.0, -4.0, -8.0), n_probe: float = 1.0,
                                point: SiegelPoint | None = None) -> float:
    """Fit the power of ``|lambda|/(2 pi)`` in the Bargmann coefficient.

    Single-node coefficient functions are synthesized both directly and
    through :func:`trace_synthesize` with exponent ``n_probe``; the log-ratio
    is regressed on ``log(|lambda|/(2 pi))`` and the exponent that makes the
    two routes agree is returned.
    """
    h = 0.5
    lam_min = min(lambdas)
    grid = GridSpec(d=d, alpha_max=1, lambda_min=lam_min, spacing=h)
    if point is None:
        z = np.full(d, 0.3 + 0.2j)
        point = SiegelPoint(z, complex(0.4, 0.25 * np.vdot(z, z).real + 0.7))
    xs, ys = [], []
    for lam in lambdas:
        for alpha in ((0,) * d, (1,) + (0,) * (d - 1)):
            phi = CoeffFunction.indicator(grid, alpha, lam)
            direct = synthesize(phi, point)
            routed = trace_synthesize(phi, point, n_probe)
            xs.append(math.log(abs(lam) / (2 * math.pi)))
            ys.append(math.log(abs(routed / direct)))
    slope = np.polyfit(xs, ys, 1)[0]
    return float(n_probe - slope)


# -- direct norm by Monte Carlo ---------------------------------------------

@dataclass(frozen=True)
class DABox:
    """Integration box in ``(z, t, h)`` coordinates: ``|z| <= z_radius``, ``t_min <= t <= t_max``, ``0 < h <= h_max``."""

    z_radius: float
    t_min: float
    t_max: float
    h_max: float


@dataclass(frozen=True)
class DANormEstimate:
    value: float
    stderr: float
    n_samples: int
    box: DABox


_PROFILE_THRESHOLD = 1e-14
_PROFILE_POINTS = 8192
_T_UNIFORM_SHARE = 0.2


def _t_profile(grid, table, first_power, t):
    q = np.exp(1j * grid.spacing * t)
    series = npoly.polyval(q, table.T)
    return np.sum(np.abs(series) ** 2, axis=0)


def auto_box(phi: CoeffFunction, kp: KernelParams) -> DABox:
    """Box outside which the integrand is below ~1e-14 of its peak.

    The ``t``-window lies inside one period ``2 pi / h`` of the discretized
    synthesis, centred on the peak of the ``t``-profile; when the profile
    never drops below threshold the whole period is used.
    """
    grid = phi.grid
    prepared = _synthesis_table(phi, kp.n)
    if prepared is None:
        raise DomainError("zero coefficient function has no support")
    alphas, table, first_power = prepared
    b = -grid.nodes[first_power - 1]
    amax = int(alphas.sum(axis=1).max())
    tail = -math.log(_PROFILE_THRESHOLD)
    k = 2 * kp.n - kp.d - 1
    h_max = (tail + max(k, 0) * math.log(1 + tail / b) + 5) / (2 * b)
    r2 = 1.0
    for _ in range(100):
        r2 = 2 * (tail + amax * math.log(max(r2, 1.0))) / b
    period = 2 * math.pi / grid.spacing
    t = np.linspace(-period / 2, period / 2, _PROFILE_POINTS, endpoint=False)
    prof = _t_profile(grid, table, first_power, t)
    centre = t[np.argmax(prof)]
    t = centre + np.linspace(-period / 2, period / 2, _PROFILE_POINTS + 1)
    prof = _t_profile(grid, table, first_power, t)
    above = np.flatnonzero(prof >= _PROFILE_THRESHOLD * prof.max())
    if above[0] == 0 and above[-1] == len(t) - 1:
        t_min, t_max = t[0], t[-1]
    else:
        step = t[1] - t[0]
        t_min, t_max = t[above[0]] - step, t[above[-1]] + step
    return DABox(z_radius=math.sqrt(r2), t_min=float(t_min), t_max=float(t_max), h_max=float(h_max))


def da_norm_direct(phi: CoeffFunction, kp: KernelParams, mc_samples: int = 1_000_000,
                   box: DABox | None = None, seed=0, chunk: int = 100_000) -> DANormEstimate:
    """Monte-Carlo estimate of ``int |rho^n d^n F|^2 rho^(-d-1)`` over the Siegel domain.

    ``F`` is the synthesis of ``phi`` and ``d^n`` the ``n``-th derivative in
    ``zeta_last``. In ``(z, t, h)`` coordinates the volume element is
    ``dz dt dh`` and the integrand is ``|d^n F|^2 h^(2n-d-1)``. Samples are
    drawn by importance sampling matched to the decay of the integrand:
    complex Gaussian ``z``, Gamma-distributed ``h``, and ``t`` from a mixture
    of the tabulated ``t``-profile and a uniform density on the box. Points
    outside the box contribute zero.

    Returns
    -------
    DANormEstimate
        Estimate, its standard error, sample count and the box used.

    Raises
    ------
    UnsupportedConfigurationError
        For ``d > 2``.
    """
    if kp.d != phi.grid.d:
        raise DomainError("dimension mismatch between kernel parameters and grid")
    if kp.d > 2:
        raise UnsupportedConfigurationError("direct norm quadrature is implemented for d <= 2")
    prepared = _synthesis_table(phi, kp.n)
    if box is None:
        if prepared is None:
            return DANormEstimate(0.0, 0.0, mc_samples, DABox(0.0, 0.0, 0.0, 0.0))
        box = auto_box(phi, kp)
    if prepared is None:
        return DANormEstimate(0.0, 0.0, mc_samples, box)
    alphas, table, first_power = prepared
    grid, d = phi.grid, kp.d
    b = -grid.nodes[first_power - 1]
    shape_h = 2 * kp.n - d
    var_z = 4.0 / b

    t_tab = np.linspace(box.t_min, box.t_max, _PROFILE_POINTS + 1)
    p_tab = _t_profile(grid, table, first_power, t_tab)
    cell = t_tab[1] - t_tab[0]
    if box.t_max > box.t_min:
        cell_mass = 0.5 * (p_tab[1:] + p_tab[:-1])
        cell_mass = cell_mass / cell_mass.sum()
    else:
        cell_mass = None
    length = box.t_max - box.t_min

    root = np.random.SeedSequence(seed)
    n_chunks = -(-mc_samples // chunk)
    sums = 0.0
    sq_sums = 0.0
    for child, todo in zip(root.spawn(n_chunks), [chunk] * (n_chunks - 1) + [mc_samples - chunk * (n_chunks - 1)]):
        rng = np.random.default_rng(child)
        z = np.sqrt(var_z / 2) * (rng.standard_normal((todo, d)) + 1j * rng.standard_normal((todo, d)))
        h = rng.gamma(shape_h, 1.0 / b, size=todo)
        if cell_mass is None:
            t = np.full(todo, box.t_min)
            pdf_t = np.ones(todo)
        else:
            use_uniform = rng.random(todo) < _T_UNIFORM_SHARE
            idx = rng.choice(len(cell_mass), size=todo, p=cell_mass)
            t = np.where(use_uniform, box.t_min + length * rng.random(todo),
                         t_tab[idx] + cell * rng.random(todo))
            cell_of_t = np.clip(((t - box.t_min) / cell).astype(int), 0, len(cell_mass) - 1)
            pdf_t = _T_UNIFORM_SHARE / length + (1 - _T_UNIFORM_SHARE) * cell_mass[cell_of_t] / cell
        abs_z2 = np.sum(np.abs(z) ** 2, axis=1)
        pdf_z = np.exp(-abs_z2 / var_z) / (math.pi * var_z) ** d
        pdf_h = np.exp(shape_h * math.log(b) + (shape_h - 1) * np.log(h) - b * h - math.lgamma(shape_h))
        zeta_last = t + 1j * (0.25 * abs_z2 + h)
        deriv = _evaluate_table(grid, alphas, table, first_power, z, zeta_last)
        inside = (abs_z2 <= box.z_radius ** 2) & (h <= box.h_max) & (t >= box.t_min) & (t <= box.t_max)
        f = np.where(inside, np.abs(deriv) ** 2 * h ** (2 * kp.n - d - 1) / (pdf_z * pdf_h * pdf_t), 0.0)
        sums += f.sum()
        sq_sums += np.sum(f ** 2)
    mean = sums / mc_samples
    var = max(sq_sums / mc_samples - mean ** 2, 0.0)
    return DANormEstimate(float(mean), float(math.sqrt(var / mc_samples)), mc_samples, box)
