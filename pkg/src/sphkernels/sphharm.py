"""Legendre polynomials in dimension d, quadrature rules and related special functions.

Legendre polynomials here are the d-dimensional ones, normalized so that
``P_k(1) = 1``; they are orthogonal on [-1, 1] for the weight
``(1 - t^2)^((d-3)/2)``.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import comb, gamma, lgamma, log, pi, sin
from typing import Optional

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from . import _accel
from .errors import DomainError, GammaPoleError

__all__ = [
    "SphereGeometry",
    "QuadratureRule",
    "MonomialLegendreTable",
    "surface_area",
    "n_harmonics",
    "legendre_batch",
    "legendre_norm_sq",
    "jacobi_quadrature",
    "monomial_legendre_table",
    "log_gamma_signed",
    "sample_sphere",
    "substitution_power",
]

_UNIT_TOL = 1e-12


def _check_dim(d):
    if int(d) != d or d < 3:
        raise DomainError(f"dimension must be an integer >= 3, got {d}")


def surface_area(p):
    """Surface area of the unit sphere S^{p-1} in R^p."""
    if int(p) != p or p < 1:
        raise DomainError(f"surface_area needs an integer p >= 1, got {p}")
    return 2.0 * pi ** (p / 2.0) / gamma(p / 2.0)


@dataclass(frozen=True)
class SphereGeometry:
    d: int

    def __post_init__(self):
        _check_dim(self.d)

    @property
    def omega_d1(self):
        """Area of S^{d-1}."""
        return surface_area(self.d)

    @property
    def omega_d2(self):
        """Area of S^{d-2}."""
        return surface_area(self.d - 1)

    @property
    def ratio(self):
        """omega_{d-2} / omega_{d-1}: normalizer of the Funk-Hecke integral."""
        return self.omega_d2 / self.omega_d1


def n_harmonics(d, k):
    """Number N(d, k) of linearly independent spherical harmonics of degree k on S^{d-1}."""
    _check_dim(d)
    if int(k) != k or k < 0:
        raise DomainError(f"degree must be a non-negative integer, got {k}")
    d, k = int(d), int(k)
    if k == 0:
        return 1
    return (2 * k + d - 2) * comb(k + d - 3, d - 2) // k


def n_harmonics_array(d, k_max):
    return np.array([n_harmonics(d, k) for k in range(k_max + 1)], dtype=np.float64)


def legendre_batch(d, k_max, t):
    """Values P_0(t), ..., P_{k_max}(t) by the forward three-term recurrence.

    ``t`` may be a scalar or an array; the result has shape
    ``(k_max + 1,) + np.shape(t)``.
    """
    _check_dim(d)
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(np.abs(t_arr) > 1.0 + _UNIT_TOL):
        raise DomainError("legendre_batch needs |t| <= 1")
    t_arr = np.clip(t_arr, -1.0, 1.0)
    table = _accel.legendre_table(d, int(k_max), t_arr.ravel())
    return table.reshape((int(k_max) + 1,) + t_arr.shape)


def legendre_norm_sq(d, k):
    """Integral of P_k(t)^2 (1 - t^2)^((d-3)/2) over [-1, 1]."""
    geo = SphereGeometry(d)
    return 1.0 / (geo.ratio * n_harmonics(d, k))


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights with the Jacobi weight already folded into the weights.

    ``degree`` is the polynomial degree integrated exactly, or ``None`` when the
    substituted integrand is not polynomial (half-integer weight exponents with
    the endpoint substitution); such rules are still spectrally accurate.
    """

    nodes: np.ndarray
    weights: np.ndarray
    weight_exponent: float
    half_interval_substitution: bool
    power: int = 1
    degree: Optional[int] = None

    def integrate(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            return float(_accel.weighted_row_sums(values[None, :], self.weights)[0])
        return _accel.weighted_row_sums(values, self.weights)

    def __len__(self):
        return self.nodes.size


def jacobi_quadrature(d, n_nodes, desingularize=False, power=2):
    """Quadrature for integrals of f(t) (1 - t^2)^((d-3)/2) over [-1, 1].

    Plain mode is Gauss-Jacobi with ``n_nodes`` nodes.  With ``desingularize``
    each half interval is mapped by t = 1 - s^power (and t = -1 + s^power),
    s in (0, 1], and integrated by ``n_nodes`` Gauss-Legendre nodes, so terms
    like (1 - t)^(j/power) become polynomial in s.
    """
    _check_dim(d)
    if n_nodes < 2:
        raise DomainError("n_nodes must be >= 2")
    a = (d - 3) / 2.0
    if not desingularize:
        x, w = roots_jacobi(int(n_nodes), a, a)
        return QuadratureRule(np.asarray(x), np.asarray(w), a, False, 1, 2 * int(n_nodes) - 1)

    p = int(power)
    if p < 1:
        raise DomainError("substitution power must be >= 1")
    s, ws = roots_legendre(int(n_nodes))
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    sp = s**p
    # (1 - t^2) = s^p (2 - s^p), kept in factored form to avoid cancellation
    jac = p * s ** (p - 1) * ws
    weight = (sp * (2.0 - sp)) ** a if a != 0 else np.ones_like(s)
    w_half = jac * weight
    t_right = 1.0 - sp
    # left half: t = -1 + s^p, same weights
    nodes = np.concatenate([(-1.0 + sp), t_right[::-1]])
    weights = np.concatenate([w_half, w_half[::-1]])
    order = np.argsort(nodes, kind="stable")
    degree = None
    if float(a).is_integer():
        degree = (2 * int(n_nodes)) // p - 2 * int(a) - 1
        degree = max(degree, 0)
    return QuadratureRule(nodes[order], weights[order], a, True, p, degree)


def substitution_power(*exponents, cap=64):
    """Smallest even integer p making every exponent * p an integer (capped)."""
    p = 2
    for e in exponents:
        den = Fraction(float(e)).limit_denominator(cap).denominator
        p = np.lcm(p, den)
    return int(min(p, cap))


@dataclass
class MonomialLegendreTable:
    """lam[n, k] = normalized projection of t^n on P_k (its k-th Mercer eigenvalue)."""

    d: int
    lam: np.ndarray

    @property
    def n_max(self):
        return self.lam.shape[0] - 1

    @property
    def k_max(self):
        return self.lam.shape[1] - 1


def monomial_legendre_table(d, n_max, k_max):
    """Build the table by the recurrence t P_k = k/(2k+d-2) P_{k-1} + (k+d-2)/(2k+d-2) P_{k+1}."""
    _check_dim(d)
    if not n_max >= k_max >= 0:
        raise DomainError("need n_max >= k_max >= 0")
    width = n_max + 2
    k = np.arange(width, dtype=np.float64)
    down = k / (2 * k + d - 2)  # coefficient on lambda_{n, k-1}
    up = (k + d - 2) / (2 * k + d - 2)  # coefficient on lambda_{n, k+1}
    lam = np.zeros((n_max + 1, k_max + 1))
    row = np.zeros(width)
    row[0] = 1.0
    lam[0] = row[: k_max + 1]
    for n in range(n_max):
        new = np.zeros(width)
        new[1:] += down[1:] * row[:-1]
        new[:-1] += up[:-1] * row[1:]
        row = new
        lam[n + 1] = row[: k_max + 1]
    return MonomialLegendreTable(int(d), lam)


def log_gamma_signed(x):
    """Return ``(log|Gamma(x)|, sign(Gamma(x)))``.

    Negative non-integer arguments go through the reflection formula
    Gamma(x) = pi / (sin(pi x) Gamma(1 - x)).  Poles raise GammaPoleError.
    """
    x = float(x)
    if x <= 0 and x == int(x):
        raise GammaPoleError(f"Gamma has a pole at {x}")
    if x > 0:
        return lgamma(x), 1
    # reduce the sine argument to keep it accurate for large |x|
    frac = x - 2.0 * np.floor(x / 2.0)
    s = sin(pi * frac)
    log_abs = log(pi) - log(abs(s)) - lgamma(1.0 - x)
    return log_abs, 1 if s > 0 else -1


def sample_sphere(d, n, seed):
    """n i.i.d. uniform points on S^{d-1} (rows), deterministic in ``seed``."""
    if d < 2 or n < 1:
        raise DomainError("sample_sphere needs d >= 2 and n >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = rng.standard_normal((int(n), int(d)))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x
