"""Finite-dimensional Siegel-dissipative tuples and the lifting map ``Theta``.

A tuple ``(A_1, ..., A_d, A_last)`` of commuting matrices is
Siegel-dissipative when the defect matrix

    G = (A_last - A_last^*) / (2i) - 1/4 sum_i A_i^* A_i

is positive semidefinite, and strongly so with margin ``epsilon`` when
``G >= epsilon``. ``G`` is the Gram matrix of the defect form ``<., .>_Delta``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .exceptions import DomainError, PreconditionError
from .grid import GridSpec, _node_index, as_multi_index, log_multi_factorial
from .shifts import ShiftSymbol

__all__ = [
    "COMMUTATOR_TOL",
    "DISSIPATIVE_TOL",
    "OperatorTuple",
    "DissipativityReport",
    "HValuedGridFunction",
    "ThetaNorm",
    "check_dissipative",
    "random_tuple",
    "semigroup",
    "theta_grid",
    "theta_embed",
    "theta_norm_sq",
    "theta_isometry_residual",
    "intertwine_residual",
    "apply_polynomial",
    "operator_norm",
]

COMMUTATOR_TOL = 1e-10
DISSIPATIVE_TOL = 1e-10
CUTOFF_DECAY = 1e-12


def _matrix(m, dim=None) -> np.ndarray:
    arr = np.array(m, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DomainError("expected a square matrix")
    if dim is not None and arr.shape[0] != dim:
        raise DomainError(f"expected a {dim}x{dim} matrix, got {arr.shape}")
    arr.flags.writeable = False
    return arr


def _encode(m):
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def _decode(obj):
    return np.array(obj["re"], dtype=float) + 1j * np.array(obj["im"], dtype=float)


@dataclass(frozen=True, eq=False)
class OperatorTuple:
    """Commuting matrices ``A_1, ..., A_d`` and ``A_last`` with margin ``epsilon``.

    ``epsilon`` records the claimed strong-dissipativity margin; it is not
    checked at construction, see :func:`check_dissipative`.
    """

    A: tuple
    A_last: np.ndarray
    epsilon: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        A_last = _matrix(self.A_last)
        dim = A_last.shape[0]
        A = tuple(_matrix(a, dim) for a in self.A)
        if not A:
            raise DomainError("need at least one matrix A_1")
        if self.epsilon < 0:
            raise DomainError("epsilon must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "A_last", A_last)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def d(self) -> int:
        return len(self.A)

    @property
    def dim(self) -> int:
        return self.A_last.shape[0]

    @property
    def defect(self) -> np.ndarray:
        """Hermitian defect matrix ``G``."""
        g = (self.A_last - self.A_last.conj().T) / 2j
        for a in self.A:
            g = g - 0.25 * a.conj().T @ a
        return 0.5 * (g + g.conj().T)

    def shifted(self, s: float) -> "OperatorTuple":
        """Replace ``A_last`` by ``A_last + i s Id``; the margin grows by ``s``."""
        return OperatorTuple(self.A, self.A_last + 1j * s * np.eye(self.dim), max(self.epsilon + s, 0.0), self.seed)

    def conjugated(self, u: np.ndarray) -> "OperatorTuple":
        """Change of basis ``A -> U A U^*`` by a unitary ``u``."""
        uh = u.conj().T
        return OperatorTuple(tuple(u @ a @ uh for a in self.A), u @ self.A_last @ uh, self.epsilon, self.seed)

    def power(self, alpha) -> np.ndarray:
        """``A^alpha = A_1^alpha_1 ... A_d^alpha_d``."""
        alpha = as_multi_index(alpha, self.d)
        out = np.eye(self.dim, dtype=complex)
        for a, k in zip(self.A, alpha):
            if k:
                out = out @ np.linalg.matrix_power(a, k)
        return out

    def to_dict(self) -> dict:
        return {"d": self.d, "dim": self.dim, "A": [_encode(a) for a in self.A], "A_last": _encode(self.A_last),
                "epsilon": self.epsilon, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "OperatorTuple":
        t = cls(tuple(_decode(a) for a in data["A"]), _decode(data["A_last"]), data["epsilon"], data.get("seed"))
        if t.d != data.get("d", t.d) or t.dim != data.get("dim", t.dim):
            raise DomainError("d/dim fields disagree with the matrices")
        return t

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "OperatorTuple":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, OperatorTuple):
            return NotImplemented
        return (self.d == other.d and self.dim == other.dim and self.epsilon == other.epsilon
                and all(np.array_equal(a, b) for a, b in zip(self.A, other.A))
                and np.array_equal(self.A_last, other.A_last))


class DissipativityReport(NamedTuple):
    min_eig: float
    worst_commutator: float
    strong: bool
    commuting: bool


def check_dissipative(t: OperatorTuple) -> DissipativityReport:
    """Smallest eigenvalue of ``G`` and the worst relative commutator.

    ``strong`` holds when ``epsilon > 0``, ``min_eig >= epsilon - 1e-10`` and
    the matrices commute to ``1e-10`` relative.
    """
    min_eig = float(np.linalg.eigvalsh(t.defect)[0])
    mats = list(t.A) + [t.A_last]
    norms = [np.linalg.norm(m, 2) for m in mats]
    worst = 0.0
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            if norms[i] and norms[j]:
                c = np.linalg.norm(mats[i] @ mats[j] - mats[j] @ mats[i], 2) / (norms[i] * norms[j])
                worst = max(worst, float(c))
    commuting = worst <= COMMUTATOR_TOL
    strong = t.epsilon > 0 and min_eig >= t.epsilon - DISSIPATIVE_TOL and commuting
    return DissipativityReport(min_eig, worst, strong, commuting)


def _complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def random_tuple(d: int, dim: int, epsilon: float, seed, mode: str = "polynomial",
                 scale: float = 0.5) -> OperatorTuple:
    """Random strongly Siegel-dissipative tuple with margin exactly ``epsilon``.

    Parameters
    ----------
    d, dim : int
        Number of ``A_i`` and matrix size.
    epsilon : float
        Target smallest eigenvalue of the defect matrix.
    seed : int or numpy.random.SeedSequence
        Determines the tuple bit for bit.
    mode : {"polynomial", "similarity"}
        ``"polynomial"`` takes every matrix as a random quadratic polynomial
        in one random matrix ``X`` with ``||X|| = scale``. ``"similarity"``
        conjugates random diagonal matrices by one random invertible matrix,
        which gives non-normal tuples.

    Notes
    -----
    After drawing commuting candidates, ``A_last`` is shifted by ``i s Id``
    with ``s = epsilon - min_eig(G)``, the unique shift giving margin
    ``epsilon``. The shift keeps the tuple commuting.
    """
    if dim < 1 or d < 1:
        raise DomainError("d and dim must be positive")
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    rng = np.random.default_rng(seed)
    if mode == "polynomial":
        x = _complex_normal(rng, (dim, dim))
        x *= scale / np.linalg.norm(x, 2)
        powers = [np.eye(dim), x, x @ x]

        def draw():
            c = _complex_normal(rng, 3) * np.array([0.5, 1.0, 0.5])
            return sum(ci * p for ci, p in zip(c, powers))
    elif mode == "similarity":
        v = np.eye(dim) + 0.3 * _complex_normal(rng, (dim, dim)) / math.sqrt(dim)
        vinv = np.linalg.inv(v)

        def draw():
            return v @ np.diag(scale * _complex_normal(rng, dim)) @ vinv
    else:
        raise DomainError(f"unknown mode {mode!r}")
    A = tuple(draw() for _ in range(d))
    candidate = OperatorTuple(A, draw(), 0.0)
    s = epsilon - float(np.linalg.eigvalsh(candidate.defect)[0])
    seed_val = seed if isinstance(seed, (int, np.integer)) else None
    return OperatorTuple(A, candidate.A_last + 1j * s * np.eye(dim), epsilon,
                         None if seed_val is None else int(seed_val))


def semigroup(t: OperatorTuple, tau: float) -> np.ndarray:
    """``exp(-i tau A_last)`` for ``tau <= 0`` (scaling and squaring with Pade approximants)."""
    if tau > 0:
        raise DomainError(f"tau must be nonpositive, got {tau}")
    if tau == 0:
        return np.eye(t.dim, dtype=complex)
    return scipy.linalg.expm(-1j * tau * t.A_last)


def operator_norm(m) -> float:
    """Largest singular value."""
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(np.atleast_2d(m), compute_uv=False)[0])


def apply_polynomial(t: OperatorTuple, sym: ShiftSymbol) -> np.ndarray:
    """``p(M_1, ..., M_d) = sum c_gamma exp(-i tau_gamma A_last) A^gamma``."""
    out = np.zeros((t.dim, t.dim), dtype=complex)
    for c, gamma, tau in sym.terms:
        if len(gamma) != t.d:
            raise DomainError("symbol and tuple dimensions differ")
        out += c * (semigroup(t, tau) @ t.power(gamma))
    return out


# -- lifting map ---------------------------------------------------------------

def theta_grid(epsilon: float, spacing: float, alpha_max: int = 0, d: int = 1,
               rule: str = "trapezoid") -> GridSpec:
    """Smallest grid with the given spacing whose cutoff satisfies ``exp(epsilon lambda_min) < 1e-12``."""
    k = math.floor(-math.log(CUTOFF_DECAY) / epsilon / spacing) + 1
    return GridSpec(d, alpha_max, -k * spacing, spacing, rule)


def _check_theta_pre(t: OperatorTuple, grid: GridSpec):
    if not t.epsilon > 0:
        raise PreconditionError("Theta needs a strong tuple (epsilon > 0)")
    if grid.d != t.d:
        raise DomainError("grid and tuple dimensions differ")
    if math.exp(t.epsilon * grid.lambda_min) >= CUTOFF_DECAY:
        raise PreconditionError(
            f"lambda_min={grid.lambda_min} too shallow: need exp(epsilon * lambda_min) < {CUTOFF_DECAY}")


def _propagators(a_last: np.ndarray, spacing: float, n: int) -> np.ndarray:
    """Stack ``P[k] = exp(i (k+1) h A_last) = exp(-i lambda_k A_last)`` by doubling."""
    e = scipy.linalg.expm(1j * spacing * a_last)
    out = e[None, :, :]
    while out.shape[0] < n:
        out = np.concatenate([out, out @ out[-1]], axis=0)
    return out[:n]


def _theta_log_prefactor(grid: GridSpec) -> np.ndarray:
    # log(|lambda|^(|alpha|-d) / (alpha! 2^(|alpha| - 1/2))), shape (n_alpha, K)
    n = grid.alpha_abs[:, None].astype(float)
    return ((n - grid.d) * np.log(-grid.nodes)[None, :] - grid.log_alpha_factorial[:, None]
            - (n - 0.5) * math.log(2.0))


def _alpha_vectors(t: OperatorTuple, alphas, v) -> np.ndarray:
    """Rows ``A^alpha v`` for a prefix-closed list of multi-indices."""
    out = np.zeros((len(alphas), t.dim), dtype=complex)
    index = {}
    for row, alpha in enumerate(alphas):
        alpha = tuple(int(a) for a in alpha)
        index[alpha] = row
        nz = [i for i, a in enumerate(alpha) if a]
        if not nz:
            out[row] = v
            continue
        i = nz[0]
        prev = list(alpha)
        prev[i] -= 1
        out[row] = t.A[i] @ out[index[tuple(prev)]]
    return out


class HValuedGridFunction:
    """Vector-valued coefficient function: one ``dim``-vector per ``(alpha, node)``.

    ``vectors`` has shape ``(n_alpha, n_nodes, dim)``.
    """

    __slots__ = ("grid", "vectors")

    def __init__(self, grid: GridSpec, vectors):
        vectors = np.array(vectors, dtype=complex)
        if vectors.shape[:2] != grid.shape or vectors.ndim != 3:
            raise DomainError(f"vectors must have shape {grid.shape + ('dim',)}, got {vectors.shape}")
        vectors.flags.writeable = False
        self.grid = grid
        self.vectors = vectors

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]

    def norm_sq(self, gram: np.ndarray) -> float:
        """``sum <G g, g> mu h`` over the grid."""
        q = np.einsum("aki,ij,akj->ak", self.vectors.conj(), gram, self.vectors).real
        return float(np.sum(q * self.grid.weights))

    def value(self, alpha, lam: float) -> np.ndarray:
        return self.vectors[self.grid.alpha_index[as_multi_index(alpha, self.grid.d)], _node_index(self.grid, lam)]


def _theta_values(t: OperatorTuple, v, grid: GridSpec, props=None) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(t.dim)
    if props is None:
        props = _propagators(t.A_last, grid.spacing, grid.n_nodes)
    w = _alpha_vectors(t, grid.alphas, v)
    vec = np.einsum("kij,aj->aki", props, w)
    return vec * np.exp(_theta_log_prefactor(grid))[:, :, None]


def theta_embed(t: OperatorTuple, v, grid: GridSpec) -> HValuedGridFunction:
    """Evaluate ``(Theta v)(alpha, lambda) = |lambda|^(|alpha|-d) / (alpha! 2^(|alpha|-1/2)) exp(-i lambda A_last) A^alpha v``.

    Raises
    ------
    PreconditionError
        If ``epsilon == 0`` or ``exp(epsilon * lambda_min) >= 1e-12``.
    """
    _check_theta_pre(t, grid)
    return HValuedGridFunction(grid, _theta_values(t, v, grid))


class ThetaNorm(NamedTuple):
    """``||Theta v||^2`` with truncation diagnostics."""

    norm_sq: float
    shells: int
    tail_estimate: float
    converged: bool


def theta_norm_sq(t: OperatorTuple, v, grid: GridSpec, tail_tol: float = 1e-12, alpha_cap: int = 400) -> ThetaNorm:
    """``||Theta v||^2`` in ``L^2(mu; H_Delta)`` with adaptive ``|alpha|``-truncation.

    ``grid.alpha_max`` is ignored. Shells ``|alpha| = 0, 1, ...`` are added
    until a shell contributes less than ``tail_tol`` of the running total and
    the geometric tail estimate does too, or until ``alpha_cap``. Each shell
    uses the combined density ``|lambda|^|alpha| / (alpha! 2^(|alpha|-1))`` and
    the shell Gram matrix ``sum_{|alpha|=n} A^alpha v (A^alpha v)^* / alpha!``.
    """
    _check_theta_pre(t, grid)
    v = np.asarray(v, dtype=complex).reshape(t.dim)
    props = _propagators(t.A_last, grid.spacing, grid.n_nodes)
    m = np.einsum("kji,jl,klm->kim", props.conj(), t.defect, props)
    m_scale = np.linalg.norm(m, axis=(1, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(m_scale[:, None, None] > 0, m / m_scale[:, None, None], 0)
        log_m_scale = np.log(m_scale)
    log_base = np.log(-grid.nodes / 2.0)
    log_w = np.log(grid.node_weights) + math.log(2.0) + log_m_scale

    total = 0.0
    prev_shell = None
    tail = math.inf
    shell_vecs = {(0,) * t.d: v}
    n = 0
    converged = False
    while n <= alpha_cap:
        if n > 0:
            nxt = {}
            for alpha, w in shell_vecs.items():
                for i in range(t.d):
                    beta = alpha[:i] + (alpha[i] + 1,) + alpha[i + 1:]
                    if beta not in nxt:
                        nxt[beta] = t.A[i] @ w
            shell_vecs = nxt
        r = np.zeros((t.dim, t.dim), dtype=complex)
        for alpha, w in shell_vecs.items():
            r += np.outer(w, w.conj()) * math.exp(-log_multi_factorial(alpha))
        r_scale = float(np.linalg.norm(r))
        if r_scale == 0.0:
            converged, tail = True, 0.0
            break
        tr = np.einsum("kij,ji->k", m, r / r_scale).real
        with np.errstate(over="ignore"):
            contrib = float(np.sum(tr * np.exp(n * log_base + log_w + math.log(r_scale))))
        if not math.isfinite(contrib):
            break
        total += contrib
        if prev_shell is not None and prev_shell > 0 and 0 <= contrib < prev_shell:
            ratio = contrib / prev_shell
            tail = contrib * ratio / (1 - ratio)
        if n > 0 and abs(contrib) <= tail_tol * abs(total) and tail <= tail_tol * abs(total):
            converged = True
            break
        prev_shell = contrib
        n += 1
    return ThetaNorm(total, n + 1, float(tail), converged)


def theta_isometry_residual(t: OperatorTuple, v, grid: GridSpec, **kwargs) -> float:
    """``| ||Theta v||^2 - ||v||^2 | / ||v||^2``; the absolute residual when ``v == 0``."""
    v = np.asarray(v, dtype=complex).reshape(t.dim)
    vv = float(np.vdot(v, v).real)
    res = abs(theta_norm_sq(t, v, grid, **kwargs).norm_sq - vv)
    return res / vv if vv > 0 else res


def intertwine_residual(t: OperatorTuple, gamma, tau: float, v, grid: GridSpec) -> float:
    """Worst per-node relative gap in ``Theta(exp(-i tau A_last) A^gamma v) = (S^*_{gamma,tau} (x) Id) Theta v``.

    The left side embeds the transformed vector; the right side applies the
    lifted adjoint-shift formula to ``Theta v`` at ``(alpha + gamma, lambda + tau)``.
    Nodes where that point leaves the grid are skipped, as are nodes where
    both sides vanish. The identity is algebraic, so no cutoff precondition
    is imposed on ``grid``.
    """
    if grid.d != t.d:
        raise DomainError("grid and tuple dimensions differ")
    gamma = as_multi_index(gamma, t.d)
    m = grid.shift_steps(tau)
    v = np.asarray(v, dtype=complex).reshape(t.dim)
    props = _propagators(t.A_last, grid.spacing, grid.n_nodes)
    lhs = _theta_values(t, semigroup(t, tau) @ t.power(gamma) @ v, grid, props)
    rhs_src = _theta_values(t, v, grid, props)

    d, h, g = grid.d, grid.spacing, sum(gamma)
    worst = 0.0
    k = np.arange(1, grid.n_nodes - m + 1, dtype=float)
    for alpha, row in grid.alpha_index.items():
        src = grid.alpha_index.get(tuple(a + b for a, b in zip(alpha, gamma)))
        if src is None:
            continue
        n = sum(alpha)
        log_c = ((d - n - g) * np.log((k + m) * h) - (d - n) * np.log(k * h)
                 + log_multi_factorial(tuple(a + b for a, b in zip(alpha, gamma))) - log_multi_factorial(alpha)
                 + g * math.log(2.0))
        right = np.exp(log_c)[:, None] * rhs_src[src, m:]
        left = lhs[row, : grid.n_nodes - m]
        scale = np.maximum(np.linalg.norm(left, axis=1), np.linalg.norm(right, axis=1))
        ok = scale > np.finfo(float).tiny / np.finfo(float).eps
        if np.any(ok):
            worst = max(worst, float(np.max(np.linalg.norm(left - right, axis=1)[ok] / scale[ok])))
    return worst

