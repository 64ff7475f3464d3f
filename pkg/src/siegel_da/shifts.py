"""Weighted shift operators on coefficient space and multiplier norm bounds.

``S_{gamma,tau}`` is the coefficient-side form of multiplication by
``zeta^gamma exp(-i tau zeta_last)``:

    (S phi)(alpha, lambda) = (|lambda - tau| / |lambda|)^d phi(alpha - gamma, lambda - tau)

for ``lambda < tau`` and ``alpha >= gamma``, zero otherwise. Its adjoint in
``L^2(mu)`` is

    (S^* phi)(alpha, lambda) = |lambda + tau|^(d - |alpha| - |gamma|) / |lambda|^(d - |alpha|)
                               * (alpha + gamma)! / alpha! * 2^|gamma| * phi(alpha + gamma, lambda + tau).

Shifts must be whole multiples of the grid spacing; there is no
interpolation, so on a ``riemann-midpoint`` grid the truncated operators are
exact adjoints of each other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .exceptions import ConvergenceError, DomainError
from .grid import CoeffFunction, GridSpec, as_multi_index, log_multi_factorial

__all__ = [
    "ShiftParams",
    "ShiftSymbol",
    "MultiplierBound",
    "shift_apply",
    "shift_adjoint_apply",
    "exp_mult_apply",
    "symbol_apply",
    "symbol_matrix",
    "truncated_operator_norm",
    "multiplier_norm_bound",
    "term_norm_bound",
    "symbol_norm_bound",
]

SCAN_CAP = 200


@dataclass(frozen=True)
class ShiftParams:
    """Shift by multi-index ``gamma`` and ``tau < 0``."""

    gamma: tuple
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "gamma", as_multi_index(self.gamma))
        if not self.tau < 0:
            raise DomainError(f"tau must be negative, got {self.tau}")
        object.__setattr__(self, "tau", float(self.tau))


@dataclass(frozen=True)
class ShiftSymbol:
    """Finite sum ``sum c_gamma zeta^gamma exp(-i tau_gamma zeta_last)``.

    ``terms`` holds ``(c, gamma, tau)`` triples. ``tau == 0`` is allowed only
    for ``gamma == 0`` (the constant term, acting as the identity); the pure
    monomials ``zeta^gamma`` are unbounded and rejected.
    """

    terms: tuple

    def __post_init__(self):
        clean = []
        d = None
        for c, gamma, tau in self.terms:
            gamma = as_multi_index(gamma, d)
            d = len(gamma)
            tau = float(tau)
            if tau > 0 or (tau == 0 and any(gamma)):
                raise DomainError(f"term {gamma} needs tau < 0 (tau == 0 only for the constant term), got {tau}")
            clean.append((complex(c), gamma, tau))
        object.__setattr__(self, "terms", tuple(clean))

    @property
    def d(self) -> int | None:
        return len(self.terms[0][1]) if self.terms else None

    @classmethod
    def from_polynomial(cls, coeffs: Mapping, taus: Sequence[float]) -> "ShiftSymbol":
        """Symbol of ``p(m_1, ..., m_d)`` with ``m_j = zeta_j exp(-i tau_j zeta_last)``.

        ``coeffs`` maps ``gamma`` to ``c_gamma``; each term gets
        ``tau_gamma = sum_j gamma_j tau_j``.
        """
        taus = [float(t) for t in taus]
        if any(t >= 0 for t in taus):
            raise DomainError("every tau_j must be negative")
        terms = []
        for gamma, c in coeffs.items():
            gamma = as_multi_index(gamma, len(taus))
            terms.append((c, gamma, float(np.dot(gamma, taus))))
        return cls(tuple(terms))

    def conj(self) -> "ShiftSymbol":
        return ShiftSymbol(tuple((np.conj(c), g, t) for c, g, t in self.terms))

    def to_list(self) -> list[dict]:
        return [{"c_re": c.real, "c_im": c.imag, "gamma": list(g), "tau": t} for c, g, t in self.terms]

    @classmethod
    def from_list(cls, items: Iterable[Mapping]) -> "ShiftSymbol":
        return cls(tuple((complex(it["c_re"], it["c_im"]), tuple(it["gamma"]), it["tau"]) for it in items))

    def to_json(self) -> str:
        return json.dumps(self.to_list())

    @classmethod
    def from_json(cls, text: str) -> "ShiftSymbol":
        return cls.from_list(json.loads(text))


# -- raw kernels on value arrays --------------------------------------------

@lru_cache(maxsize=512)
def _row_pairs(grid: GridSpec, gamma: tuple):
    """Rows ``(i_alpha, i_alpha_plus_gamma)`` with both inside the truncation."""
    src, dst = [], []
    for alpha, i in grid.alpha_index.items():
        j = grid.alpha_index.get(tuple(a + g for a, g in zip(alpha, gamma)))
        if j is not None:
            src.append(i)
            dst.append(j)
    return np.array(src, dtype=np.intp), np.array(dst, dtype=np.intp)


@lru_cache(maxsize=512)
def _forward_factor(grid: GridSpec, m: int):
    k = np.arange(m + 1, grid.n_nodes + 1, dtype=float)
    return ((k - m) / k) ** grid.d


@lru_cache(maxsize=512)
def _adjoint_factor(grid: GridSpec, gamma: tuple, m: int):
    lo, hi = _row_pairs(grid, gamma)
    d, h = grid.d, grid.spacing
    g = sum(gamma)
    k = np.arange(1, grid.n_nodes - m + 1, dtype=float)
    n = grid.alpha_abs[lo][:, None].astype(float)
    log_c = ((d - n - g) * np.log((k + m) * h)[None, :] - (d - n) * np.log(k * h)[None, :]
             + (grid.log_alpha_factorial[hi] - grid.log_alpha_factorial[lo])[:, None] + g * math.log(2.0))
    return np.exp(log_c)


def _shift_values(grid, values, gamma, m):
    out = np.zeros_like(values)
    lo, hi = _row_pairs(grid, gamma)
    if m == 0:
        out[hi] = values[lo]
    else:
        out[hi, m:] = values[lo, : grid.n_nodes - m] * _forward_factor(grid, m)[None, :]
    return out


def _adjoint_values(grid, values, gamma, m):
    out = np.zeros_like(values)
    lo, hi = _row_pairs(grid, gamma)
    if m == 0:
        out[lo] = values[hi]
    else:
        out[lo, : grid.n_nodes - m] = values[hi, m:] * _adjoint_factor(grid, gamma, m)
    return out


def _symbol_values(grid, values, sym, adjoint):
    out = np.zeros_like(values)
    for c, gamma, tau in sym.terms:
        m = grid.shift_steps(tau)
        if adjoint:
            out += c * _adjoint_values(grid, values, gamma, m)
        else:
            out += np.conj(c) * _shift_values(grid, values, gamma, m)
    return out


def _check_params(sp: ShiftParams, phi: CoeffFunction):
    gamma = as_multi_index(sp.gamma, phi.grid.d)
    return gamma, phi.grid.shift_steps(sp.tau)


# -- public operators --------------------------------------------------------

def shift_apply(sp: ShiftParams, phi: CoeffFunction) -> CoeffFunction:
    """Apply ``S_{gamma,tau}``.

    Raises
    ------
    GridShiftError
        If ``tau`` is not a multiple of the grid spacing.
    """
    gamma, m = _check_params(sp, phi)
    return CoeffFunction._wrap(phi.grid, _shift_values(phi.grid, phi.values, gamma, m))


def shift_adjoint_apply(sp: ShiftParams, phi: CoeffFunction) -> CoeffFunction:
    """Apply the closed-form adjoint ``S^*_{gamma,tau}``; entries whose source leaves the grid are zero."""
    gamma, m = _check_params(sp, phi)
    return CoeffFunction._wrap(phi.grid, _adjoint_values(phi.grid, phi.values, gamma, m))


def exp_mult_apply(tau: float, phi: CoeffFunction) -> CoeffFunction:
    """Coefficient-side multiplication by ``exp(-i tau zeta_last)``, i.e. ``S_{0,tau}``."""
    return shift_apply(ShiftParams((0,) * phi.grid.d, tau), phi)


def symbol_apply(sym: ShiftSymbol, phi: CoeffFunction, adjoint: bool = False) -> CoeffFunction:
    """Coefficient-side operator of the multiplier ``p(m)`` described by ``sym``.

    Because synthesis is conjugate linear, multiplication by
    ``sum c_gamma zeta^gamma exp(-i tau_gamma zeta_last)`` corresponds to
    ``sum conj(c_gamma) S_{gamma,tau_gamma}``; that is what is applied when
    ``adjoint`` is false. With ``adjoint=True`` the Hilbert-space adjoint
    ``sum c_gamma S^*_{gamma,tau_gamma}`` is applied instead.
    """
    if sym.terms and sym.d != phi.grid.d:
        raise DomainError("symbol and grid dimensions differ")
    return CoeffFunction._wrap(phi.grid, _symbol_values(phi.grid, phi.values, sym, adjoint))


def symbol_matrix(sym: ShiftSymbol, grid: GridSpec) -> scipy.sparse.csr_matrix:
    """Sparse matrix of the symbol operator in ``mu``-orthonormal coordinates.

    With ``W`` the diagonal of ``mu`` densities times quadrature weights, the
    returned matrix is ``W^(1/2) T W^(-1/2)``, acting on values flattened in
    row-major ``(alpha, node)`` order. Its spectral norm equals the operator
    norm of ``T`` in the ``mu``-weighted inner product.
    """
    n_nodes = grid.n_nodes
    log_w = grid.log_mu + np.log(grid.node_weights)[None, :]
    rows, cols, vals = [], [], []
    for c, gamma, tau in sym.terms:
        if c == 0:
            continue
        m = grid.shift_steps(tau)
        lo, hi = _row_pairs(grid, gamma)
        if len(lo) == 0 or m >= n_nodes:
            continue
        k = np.arange(m, n_nodes)
        factor = _forward_factor(grid, m) if m else np.ones(n_nodes)
        scale = np.exp(0.5 * (log_w[hi][:, k] - log_w[lo][:, k - m]))
        rows.append((hi[:, None] * n_nodes + k[None, :]).ravel())
        cols.append((lo[:, None] * n_nodes + (k - m)[None, :]).ravel())
        vals.append((np.conj(c) * factor[None, :] * scale).ravel())
    size = grid.n_alpha * n_nodes
    if not rows:
        return scipy.sparse.csr_matrix((size, size), dtype=complex)
    mat = scipy.sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(size, size))
    return mat.tocsr()


def truncated_operator_norm(sym: ShiftSymbol, grid: GridSpec, tol: float = 1e-12, max_iter: int = 20000,
                            seed=0, method: str = "power", return_vector: bool = False):
    """Largest singular value of the symbol operator compressed to ``grid``.

    Parameters
    ----------
    tol : float
        Relative tolerance on the squared norm.
    max_iter : int
        Iteration budget.
    seed : int
        Seed of the random start vector, so results are reproducible.
    method : {"power", "lanczos"}
        ``"power"`` runs power iteration on ``T^* T`` in the ``mu``-weighted
        inner product, stopping when the Rayleigh quotient changes by less
        than ``tol`` (relative) over 10 iterations. ``"lanczos"`` hands the
        same operator to ARPACK, which is much faster when the top of the
        spectrum is clustered.

    Returns
    -------
    float or (float, CoeffFunction)
        The norm, a lower bound for the untruncated operator norm; with
        ``return_vector`` also the approximate top right singular vector.

    Raises
    ------
    ConvergenceError
        If the iteration budget runs out; carries the last estimate and iterate.
    """
    if method not in ("power", "lanczos"):
        raise DomainError(f"unknown method {method!r}")
    if sym.terms and sym.d != grid.d:
        raise DomainError("symbol and grid dimensions differ")
    mat = symbol_matrix(sym, grid)
    if mat.nnz == 0 or not np.any(mat.data):
        return (0.0, CoeffFunction.zeros(grid)) if return_vector else 0.0
    mat_h = mat.conj().T.tocsr()
    size = mat.shape[0]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    x /= np.linalg.norm(x)

    def as_coeff(vec):
        vals = vec.reshape(grid.shape) * np.exp(-0.5 * (grid.log_mu + np.log(grid.node_weights)[None, :]))
        return CoeffFunction._wrap(grid, vals)

    if method == "lanczos":
        op = scipy.sparse.linalg.LinearOperator((size, size), matvec=lambda y: mat_h @ (mat @ y), dtype=complex)
        try:
            vals, vecs = scipy.sparse.linalg.eigsh(op, k=1, which="LA", v0=x, tol=tol, maxiter=max_iter)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            last = float(exc.eigenvalues[0]) if len(exc.eigenvalues) else math.nan
            raise ConvergenceError("Lanczos iteration did not converge", last_value=math.sqrt(max(last, 0.0)),
                                   last_iterate=None, n_iter=max_iter) from exc
        theta, x = max(float(vals[0]), 0.0), vecs[:, 0]
    else:
        theta_old = None
        theta = 0.0
        for it in range(1, max_iter + 1):
            tx = mat @ x
            theta = float(np.vdot(tx, tx).real)
            u = mat_h @ tx
            nu = np.linalg.norm(u)
            if nu == 0:
                break
            x = u / nu
            if it % 10 == 0:
                if theta_old is not None and abs(theta - theta_old) <= tol * theta:
                    break
                theta_old = theta
        else:
            raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations",
                                   last_value=math.sqrt(theta), last_iterate=as_coeff(x), n_iter=max_iter)
    norm = math.sqrt(theta)
    return (norm, as_coeff(x)) if return_vector else norm


# -- multiplier norm bounds --------------------------------------------------

class MultiplierBound(NamedTuple):
    """Bounds for ``||zeta^gamma exp(-i tau zeta_last)||^2`` as a multiplier.

    ``sup_bound`` is the supremum of the diagonal factor of ``S^* S``; it
    equals the squared norm. ``closed_form`` is the cruder explicit bound
    ``max(gamma! (2/|tau|)^|gamma|, gamma! (2/|tau|)^|gamma| |gamma|! / sqrt(2 pi |gamma|))``.
    Both control the *square* of the operator norm.
    """

    sup_bound: float
    closed_form: float


def _greedy_alpha(gamma, order):
    # maximizes (alpha + gamma)! / alpha! over |alpha| = order; each log-gain
    # log((alpha_i + gamma_i + 1) / (alpha_i + 1)) is decreasing in alpha_i,
    # so greedy increments are optimal
    alpha = [0] * len(gamma)
    for _ in range(order):
        gains = [math.log((a + g + 1) / (a + 1)) for a, g in zip(alpha, gamma)]
        alpha[int(np.argmax(gains))] += 1
    return tuple(alpha)


def _log_rising(alpha, gamma):
    return sum(math.lgamma(a + g + 1) - math.lgamma(a + 1) for a, g in zip(alpha, gamma))


def multiplier_norm_bound(gamma, tau: float, scan_cap: int = SCAN_CAP) -> MultiplierBound:
    """Supremum bound and closed-form bound for the squared multiplier norm.

    The supremum over ``(alpha, lambda)`` of

        2^|gamma| |lambda|^|alpha| / |lambda + tau|^|alpha + gamma| * (alpha + gamma)! / alpha!

    is taken in ``lambda`` analytically (maximizer ``|lambda| = |alpha| |tau| / |gamma|``,
    or ``lambda -> 0`` for ``alpha = 0``), then over ``alpha`` by scanning
    ``|alpha| <= scan_cap`` with the best ``alpha`` of each order, and finally
    against the ``|alpha| -> infinity`` limit ``(2/|tau|)^|gamma| e^-|gamma| prod gamma_i^gamma_i``.
    ``|tau|`` is used throughout.
    """
    gamma = as_multi_index(gamma)
    g = sum(gamma)
    if g == 0:
        return MultiplierBound(1.0, 1.0)
    if not tau < 0:
        raise DomainError(f"tau must be negative, got {tau}")
    t = abs(tau)
    log_pref = g * math.log(2.0 / t)
    log_gf = log_multi_factorial(gamma)
    best = log_pref + log_gf
    for order in range(1, scan_cap + 1):
        alpha = _greedy_alpha(gamma, order)
        val = (log_pref - order * math.log1p(g / order) - g * math.log1p(order / g)
               + _log_rising(alpha, gamma))
        best = max(best, val)
    tail = log_pref - g + sum(gi * math.log(gi) for gi in gamma if gi > 0)
    best = max(best, tail)
    closed = log_pref + log_gf + max(0.0, math.lgamma(g + 1) - 0.5 * math.log(2 * math.pi * g))
    return MultiplierBound(math.exp(best), math.exp(closed))


def term_norm_bound(gamma, tau: float) -> float:
    """Upper bound for the operator norm of one term: ``sqrt(sup_bound)``."""
    return math.sqrt(multiplier_norm_bound(gamma, tau).sup_bound)


def symbol_norm_bound(sym: ShiftSymbol) -> float:
    """Triangle-inequality bound ``sum |c_gamma| * term_norm_bound(gamma, tau_gamma)``."""
    return float(sum(abs(c) * term_norm_bound(gamma, tau) for c, gamma, tau in sym.terms))
