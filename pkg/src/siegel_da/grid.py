"""Truncated weighted sequence space on multi-indices times the negative half-line.

Coefficient functions ``phi(alpha, lambda)`` are stored as a complex array of
shape ``(n_alpha, n_nodes)``. Rows follow the graded enumeration of all
``alpha`` with ``|alpha| <= alpha_max``; columns are the nodes
``-h, -2h, ..., lambda_min``. Inner products use the measure

    dmu(alpha, lambda) = alpha! (2/|lambda|)^|alpha| |lambda|^(2d) dalpha dlambda

with counting measure in ``alpha`` and a fixed quadrature rule in ``lambda``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from functools import cached_property
from typing import Callable, Iterable

import numpy as np
from scipy.special import gammaln

from .exceptions import DomainError, GridMismatchError, GridShiftError

__all__ = [
    "RULES",
    "GridSpec",
    "CoeffFunction",
    "as_multi_index",
    "multi_abs",
    "multi_factorial",
    "log_multi_factorial",
    "mu_weight",
    "fock_norm_sq",
    "inner_product",
    "enumerate_multi_indices",
]

RULES = ("riemann-midpoint", "trapezoid")

_EXACT_FACTORIAL_MAX = 20
_GRID_TOL = 1e-9


# -- multi-indices -----------------------------------------------------------

def as_multi_index(alpha, d=None) -> tuple[int, ...]:
    """Validate ``alpha`` and return it as a tuple of nonnegative ints."""
    if np.isscalar(alpha):
        alpha = (alpha,)
    out = []
    for a in alpha:
        if int(a) != a or a < 0:
            raise DomainError(f"multi-index entries must be nonnegative integers, got {alpha!r}")
        out.append(int(a))
    if d is not None and len(out) != d:
        raise DomainError(f"expected a multi-index of length {d}, got {len(out)}")
    return tuple(out)


def multi_abs(alpha) -> int:
    return sum(as_multi_index(alpha))


def multi_factorial(alpha):
    """``alpha! = prod(alpha_i!)``.

    Exact (``int``) when ``|alpha| <= 20``, otherwise a float computed from
    log-factorials (``inf`` if it overflows).
    """
    alpha = as_multi_index(alpha)
    if sum(alpha) <= _EXACT_FACTORIAL_MAX:
        return math.prod(math.factorial(a) for a in alpha)
    try:
        return math.exp(log_multi_factorial(alpha))
    except OverflowError:
        return math.inf


def log_multi_factorial(alpha) -> float:
    return float(sum(math.lgamma(a + 1) for a in as_multi_index(alpha)))


def enumerate_multi_indices(d: int, max_order: int) -> np.ndarray:
    """All ``alpha`` in ``N_0^d`` with ``|alpha| <= max_order``, graded.

    Within a fixed order the indices appear in reverse lexicographic order, so
    for ``d = 2`` the sequence starts ``(0,0), (1,0), (0,1), (2,0), ...``.
    """
    rows = []
    for order in range(max_order + 1):
        rows.extend(_compositions(order, d))
    return np.array(rows, dtype=np.int64).reshape(-1, d)


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# -- scalar weights ----------------------------------------------------------

def fock_norm_sq(alpha, lam: float) -> float:
    """Squared Fock-space norm of the monomial ``z^alpha``: ``alpha! (2/|lambda|)^|alpha|``."""
    alpha = as_multi_index(alpha)
    if lam == 0:
        raise DomainError("lambda must be nonzero")
    return _weight_from_logs(alpha, abs(lam), extra_power=0)


def mu_weight(alpha, lam: float, d: int) -> float:
    """Density of ``mu`` at ``(alpha, lambda)``: ``alpha! (2/|lambda|)^|alpha| |lambda|^(2d)``.

    Raises
    ------
    DomainError
        If ``lambda >= 0``.
    OverflowError
        If the weight is not representable as a finite float.
    """
    alpha = as_multi_index(alpha, d)
    if not lam < 0:
        raise DomainError(f"lambda must be negative, got {lam}")
    return _weight_from_logs(alpha, -lam, extra_power=2 * d)


def _weight_from_logs(alpha, s, extra_power):
    n = sum(alpha)
    if n <= _EXACT_FACTORIAL_MAX:
        value = float(multi_factorial(alpha)) * (2.0 / s) ** n * s ** extra_power
        if math.isfinite(value) and value > 0:
            return value
    log_w = log_multi_factorial(alpha) + n * math.log(2.0) + (extra_power - n) * math.log(s)
    try:
        value = math.exp(log_w)
    except OverflowError:
        value = math.inf
    if not math.isfinite(value):
        raise OverflowError(f"weight for alpha={alpha}, |lambda|={s} exceeds float range (log={log_w:.1f})")
    return value


# -- grid --------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Truncation of ``N_0^d x R_-``.

    Parameters
    ----------
    d : int
        Number of ``zeta`` coordinates.
    alpha_max : int
        Largest ``|alpha|`` kept.
    lambda_min : float
        Left cutoff; must equal ``-K * spacing`` with integer ``K >= 2``.
    spacing : float
        Node spacing ``h``; nodes are ``-h, -2h, ..., lambda_min``.
    rule : {"riemann-midpoint", "trapezoid"}
        ``"riemann-midpoint"`` gives every node weight ``h``; the shift
        operators are exact adjoints of each other only under this rule.
        ``"trapezoid"`` is the composite trapezoid rule on
        ``[lambda_min, 0]`` with the (excluded) value at ``0`` replaced by the
        linear extrapolation ``2 f(-h) - f(-2h)``; second order, positive
        weights, needs ``K >= 3``.
    """

    d: int
    alpha_max: int
    lambda_min: float
    spacing: float
    rule: str = "riemann-midpoint"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"d must be a positive integer, got {self.d}")
        if int(self.alpha_max) != self.alpha_max or self.alpha_max < 0:
            raise DomainError(f"alpha_max must be a nonnegative integer, got {self.alpha_max}")
        if not self.spacing > 0:
            raise DomainError(f"spacing must be positive, got {self.spacing}")
        if not self.lambda_min < 0:
            raise DomainError(f"lambda_min must be negative, got {self.lambda_min}")
        if self.rule not in RULES:
            raise DomainError(f"rule must be one of {RULES}, got {self.rule!r}")
        k = -self.lambda_min / self.spacing
        if abs(k - round(k)) > _GRID_TOL * max(1.0, k):
            raise DomainError("lambda_min must be an integer multiple of spacing")
        min_nodes = 3 if self.rule == "trapezoid" else 2
        if round(k) < min_nodes:
            raise DomainError(f"grid needs at least {min_nodes} nodes for rule {self.rule!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "alpha_max", int(self.alpha_max))
        object.__setattr__(self, "lambda_min", float(self.lambda_min))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def n_nodes(self) -> int:
        return int(round(-self.lambda_min / self.spacing))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_alpha, self.n_nodes)

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = -self.spacing * np.arange(1, self.n_nodes + 1, dtype=float)
        nodes.flags.writeable = False
        return nodes

    @cached_property
    def alphas(self) -> np.ndarray:
        alphas = enumerate_multi_indices(self.d, self.alpha_max)
        alphas.flags.writeable = False
        return alphas

    @property
    def n_alpha(self) -> int:
        return len(self.alphas)

    @cached_property
    def alpha_abs(self) -> np.ndarray:
        return self.alphas.sum(axis=1)

    @cached_property
    def alpha_index(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(a) for a in row): i for i, row in enumerate(self.alphas)}

    @cached_property
    def log_alpha_factorial(self) -> np.ndarray:
        return gammaln(self.alphas + 1.0).sum(axis=1)

    @cached_property
    def node_weights(self) -> np.ndarray:
        h = self.spacing
        w = np.full(self.n_nodes, h)
        if self.rule == "trapezoid":
            w[0] = 2.0 * h
            w[1] = 0.5 * h
            w[-1] = 0.5 * h
        w.flags.writeable = False
        return w

    @cached_property
    def log_mu(self) -> np.ndarray:
        """``log`` of the ``mu`` density at every ``(alpha, node)``."""
        log_s = np.log(-self.nodes)
        n = self.alpha_abs[:, None]
        out = self.log_alpha_factorial[:, None] + n * math.log(2.0) + (2 * self.d - n) * log_s[None, :]
        out.flags.writeable = False
        return out

    @cached_property
    def weights(self) -> np.ndarray:
        """``mu`` density times quadrature weight, shape ``(n_alpha, n_nodes)``."""
        with np.errstate(over="ignore"):
            w = np.exp(self.log_mu) * self.node_weights[None, :]
        if not np.all(np.isfinite(w)):
            raise OverflowError("mu weights overflow on this grid; reduce alpha_max or raise |lambda| cutoff")
        w.flags.writeable = False
        return w

    def shift_steps(self, tau: float) -> int:
        """Number of nodes ``m`` with ``tau = -m h``; ``0`` for ``tau == 0``.

        Raises
        ------
        GridShiftError
            If ``tau`` is positive or not an integer multiple of the spacing.
        """
        m = -tau / self.spacing
        if tau > 0 or abs(m - round(m)) > _GRID_TOL * max(1.0, abs(m)):
            raise GridShiftError(f"tau={tau} is not a nonpositive multiple of spacing {self.spacing}")
        return int(round(m))

    def replace(self, **changes) -> "GridSpec":
        return dataclasses.replace(self, **changes)

    def refined(self, alpha_increment: int = 2) -> "GridSpec":
        """Halve the spacing and raise ``alpha_max``; the cutoff is kept."""
        return self.replace(spacing=self.spacing / 2, alpha_max=self.alpha_max + alpha_increment)

    def to_dict(self) -> dict:
        return {"d": self.d, "alpha_max": self.alpha_max, "lambda_min": self.lambda_min,
                "spacing": self.spacing, "rule": self.rule}

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(d=data["d"], alpha_max=data["alpha_max"], lambda_min=data["lambda_min"],
                   spacing=data["spacing"], rule=data.get("rule", "riemann-midpoint"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GridSpec":
        return cls.from_dict(json.loads(text))


# -- coefficient functions ---------------------------------------------------

class CoeffFunction:
    """A complex coefficient function on a :class:`GridSpec`.

    Instances are immutable: the value array is copied on construction and
    marked read-only. Arithmetic returns new instances.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: GridSpec, values):
        values = np.array(values, dtype=complex)
        if values.shape != grid.shape:
            raise ValueError(f"values must have shape {grid.shape}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("coefficient values must be finite")
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    @classmethod
    def _wrap(cls, grid, values):
        # trusted internal constructor: no copy, no validation
        obj = cls.__new__(cls)
        values.flags.writeable = False
        obj.grid = grid
        obj.values = values
        return obj

    @classmethod
    def zeros(cls, grid: GridSpec) -> "CoeffFunction":
        return cls._wrap(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def indicator(cls, grid: GridSpec, alpha, lam: float, value: complex = 1.0) -> "CoeffFunction":
        values = np.zeros(grid.shape, dtype=complex)
        values[grid.alpha_index[as_multi_index(alpha, grid.d)], _node_index(grid, lam)] = value
        return cls._wrap(grid, values)

    @classmethod
    def from_function(cls, grid: GridSpec, func: Callable) -> "CoeffFunction":
        """Sample ``func(alpha, lambdas)`` row by row (``lambdas`` is the node array)."""
        values = np.zeros(grid.shape, dtype=complex)
        for i, alpha in enumerate(grid.alphas):
            values[i] = func(tuple(int(a) for a in alpha), grid.nodes)
        return cls(grid, values)

    @classmethod
    def random(cls, grid: GridSpec, rng=None, normalized: bool = True) -> "CoeffFunction":
        """Gaussian random coefficients.

        With ``normalized=True`` each entry is divided by the square root of
        its weight, so every node contributes O(1) to the norm.
        """
        rng = np.random.default_rng(rng)
        values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        if normalized:
            values = values * np.exp(-0.5 * (grid.log_mu + np.log(grid.node_weights)[None, :]))
        return cls._wrap(grid, values)

    def value(self, alpha, lam: float) -> complex:
        return complex(self.values[self.grid.alpha_index[as_multi_index(alpha, self.grid.d)],
                                   _node_index(self.grid, lam)])

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2 * self.grid.weights))

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def extend(self, grid: GridSpec) -> "CoeffFunction":
        """Extend by zero onto a grid with the same ``d``, spacing and rule but a larger truncation."""
        if (grid.d, grid.spacing, grid.rule) != (self.grid.d, self.grid.spacing, self.grid.rule):
            raise GridMismatchError("extension requires equal d, spacing and rule")
        if grid.alpha_max < self.grid.alpha_max or grid.n_nodes < self.grid.n_nodes:
            raise GridMismatchError("target grid must contain the source grid")
        values = np.zeros(grid.shape, dtype=complex)
        # graded enumeration is a prefix-stable order
        values[: self.grid.n_alpha, : self.grid.n_nodes] = self.values
        return CoeffFunction._wrap(grid, values)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Row and node indices of nonzero entries."""
        return np.nonzero(self.values)

    def _check(self, other):
        if not isinstance(other, CoeffFunction):
            return NotImplemented
        if other.grid != self.grid:
            raise GridMismatchError("coefficient functions live on different grids")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return CoeffFunction._wrap(self.grid, self.values + other.values)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return CoeffFunction._wrap(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return CoeffFunction._wrap(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return CoeffFunction._wrap(self.grid, -self.values)

    def __repr__(self):
        return f"CoeffFunction(grid={self.grid!r}, norm={self.norm():.6g})"

    # -- CSV ------------------------------------------------------------------

    def csv_rows(self, nonzero_only: bool = False) -> Iterable[list]:
        """Rows ``alpha_1, ..., alpha_d, lambda, re, im``."""
        for i, alpha in enumerate(self.grid.alphas):
            for k, lam in enumerate(self.grid.nodes):
                v = self.values[i, k]
                if nonzero_only and v == 0:
                    continue
                yield [*(int(a) for a in alpha), repr(float(lam)), repr(float(v.real)), repr(float(v.imag))]

    def to_csv(self, path, nonzero_only: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"alpha_{j + 1}" for j in range(self.grid.d)] + ["lambda", "re", "im"])
            writer.writerows(self.csv_rows(nonzero_only))

    @classmethod
    def from_csv(cls, path, grid: GridSpec) -> "CoeffFunction":
        values = np.zeros(grid.shape, dtype=complex)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                alpha = tuple(int(a) for a in row[: grid.d])
                lam, re, im = (float(x) for x in row[grid.d:])
                values[grid.alpha_index[alpha], _node_index(grid, lam)] = complex(re, im)
        return cls(grid, values)


def _node_index(grid: GridSpec, lam: float) -> int:
    k = -lam / grid.spacing
    if lam >= 0 or abs(k - round(k)) > _GRID_TOL * max(1.0, k) or not 1 <= round(k) <= grid.n_nodes:
        raise DomainError(f"lambda={lam} is not a node of the grid")
    return int(round(k)) - 1


def inner_product(f: CoeffFunction, g: CoeffFunction) -> complex:
    """``sum_alpha sum_nodes f conj(g) dmu`` on the common grid."""
    if f.grid != g.grid:
        raise GridMismatchError("coefficient functions live on different grids")
    return complex(np.sum(f.values * np.conj(g.values) * f.grid.weights))
