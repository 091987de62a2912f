"""Endpoint expansions of kernels at u = +-1 and the eigenvalue decays they imply.

Near the endpoints each kernel behaves like

    kappa(1 - t)  = p_+(t) + c_plus  t^nu + ...
    kappa(-1 + t) = p_-(t) + c_minus t^nu + ...

with p_+- polynomials and nu > 0 non-integer.  The eigenvalues then decay as
k^{-(d + 2 nu - 1)}, with constant (c_plus +- c_minus) C(d, nu) / 2^{nu+1} for
even/odd k.
"""

from dataclasses import dataclass
from math import ceil, isclose, pi, sqrt
from typing import Optional

import numpy as np

from .errors import ExpansionUnknownError
from .kernels import KernelSpec, kappa0_eval, kappa1_eval, kappa_at_one, kernel_eval
from .phi import asymptotic_constant
from .sphharm import substitution_power

__all__ = [
    "EndpointExpansion",
    "DecayPrediction",
    "endpoint_expansion",
    "decay_prediction",
    "estimate_endpoint_coefficient",
    "rf_minus_sequence",
    "ntk_minus_coefficient",
]

C0 = sqrt(2.0) / pi  # kappa0(1 - t) = 1 - C0 t^{1/2} + ...
C1 = 2.0 * sqrt(2.0) / (3.0 * pi)  # kappa1(1 - t) = 1 - t + C1 t^{3/2} + ...


@dataclass(frozen=True)
class EndpointExpansion:
    nu: Optional[float]
    c_plus: float
    c_minus: float
    poly_degree_hint: int
    super_smooth: bool = False

    @property
    def substitution_power(self):
        """Power p for the t = +-(1 - s^p) quadrature substitution."""
        if self.super_smooth:
            return 2
        return substitution_power(self.nu, 0.5)


@dataclass(frozen=True)
class DecayPrediction:
    exponent: Optional[float]
    const_even: float
    const_odd: float
    vanishing_parity: Optional[str]
    super_polynomial: bool = False

    def constant(self, parity):
        return self.const_even if parity == "even" else self.const_odd

    def predicted(self, k):
        """Leading-order mu_k for integer k (array or scalar)."""
        k = np.asarray(k, dtype=np.float64)
        const = np.where(k.astype(int) % 2 == 0, self.const_even, self.const_odd)
        return const * k**self.exponent


def rf_minus_sequence(L):
    """Values b_l = kappa^l(-1) and t^{3/2} coefficients c_l of kappa^l(-1 + t), l = 2..L.

    kappa^l is the l-layer ReLU random-feature kernel; b_l = kappa1(b_{l-1}) and
    c_l = kappa1'(b_{l-1}) c_{l-1} = kappa0(b_{l-1}) c_{l-1}, starting from
    b_2 = 0, c_2 = C1.
    """
    b = {1: -1.0, 2: 0.0}
    c = {2: C1}
    for level in range(3, L + 1):
        c[level] = kappa0_eval(b[level - 1]) * c[level - 1]
        b[level] = kappa1_eval(b[level - 1])
    return b, c


def ntk_minus_coefficient(L, bias=False):
    """t^{1/2} coefficient of the unnormalized L-layer NTK at u = -1 + t.

    Without bias the two-layer value is -C0 and each extra layer multiplies by
    kappa0(kappa^{l-1}(-1)); with bias the two-layer coefficient is already 0.
    """
    if L < 2:
        return 0.0
    if bias:
        return 0.0
    b, _ = rf_minus_sequence(L)
    coef = -C0
    for level in range(3, L + 1):
        coef *= kappa0_eval(b[level - 1])
    return coef


def endpoint_expansion(spec):
    """Leading non-integer exponent and endpoint coefficients of ``spec``."""
    f = spec.family
    if f == "arccos0":
        return EndpointExpansion(0.5, -C0, C0, 0)
    if f == "arccos1":
        return EndpointExpansion(1.5, C1, C1, 1)
    if f == "rf":
        _, c = rf_minus_sequence(spec.L)
        return EndpointExpansion(1.5, (spec.L - 1) * C1, c[spec.L], 1)
    if f == "ntk":
        if spec.L == 1:
            return EndpointExpansion(None, 0.0, 0.0, 1, super_smooth=True)
        L = spec.L
        plus = -(L * (L - 1) if spec.bias else L * (L - 1) / 2.0) * C0
        minus = ntk_minus_coefficient(L, spec.bias)
        if spec.normalized:
            scale = kappa_at_one(KernelSpec.ntk(L, spec.bias, False))
            plus, minus = plus / scale, minus / scale
        return EndpointExpansion(0.5, plus, minus, 0)
    if f == "laplace":
        return EndpointExpansion(0.5, -spec.c, 0.0, 0)
    if f == "genexp":
        return EndpointExpansion(spec.gamma, -spec.c, 0.0, int(ceil(spec.gamma)) - 1)
    if f == "step":
        L = spec.L
        nu = 0.5 ** (L - 1)
        # kappa0 o ... o kappa0 (L-1 times): exponent of C0 is sum_{j=0}^{L-2} 2^{-j}
        plus = -(C0 ** sum(0.5**j for j in range(L - 1)))
        minus = C0 if L == 2 else 0.0
        return EndpointExpansion(nu, plus, minus, 0)
    if f in ("gauss", "linear"):
        return EndpointExpansion(None, 0.0, 0.0, 0, super_smooth=True)
    raise ExpansionUnknownError(f"no endpoint expansion known for {f}; fit the decay instead")


def decay_prediction(spec, d):
    """Leading asymptotics of mu_k for ``spec`` on S^{d-1}."""
    exp_ = endpoint_expansion(spec)
    if exp_.super_smooth:
        return DecayPrediction(None, 0.0, 0.0, None, super_polynomial=True)
    nu = exp_.nu
    scale = asymptotic_constant(d, nu) / 2.0 ** (nu + 1)
    cp, cm = exp_.c_plus, exp_.c_minus
    vanishing = None
    if isclose(cp, cm, rel_tol=1e-12, abs_tol=0.0) or (cp == 0 and cm == 0):
        vanishing = "odd" if cp != 0 else "both"
    elif isclose(cp, -cm, rel_tol=1e-12, abs_tol=0.0):
        vanishing = "even"
    return DecayPrediction(-(d + 2 * nu - 1), (cp + cm) * scale, (cp - cm) * scale, vanishing)


def estimate_endpoint_coefficient(spec, nu, side=+1, t0=1e-7, n_points=12):
    """Numerical t^nu coefficient of kappa(+-1 -+ t) near the endpoint.

    Least-squares fit over t = t0 * 2^j of t^nu together with the integer
    powers up to floor(nu) + 1, t^{2 nu} and t^{nu + 1}, which absorb the
    polynomial part and the next corrections.  Independent of
    :func:`endpoint_expansion`, so it serves as a check on it.
    """
    t = t0 * 2.0 ** np.arange(n_points)
    u = 1.0 - t if side > 0 else -1.0 + t
    vals = np.asarray(kernel_eval(spec, u))
    # t^nu first, then the next corrections: integer powers, t^{2 nu}, t^{nu+1}
    extra = sorted({float(p) for p in range(int(np.floor(nu)) + 2)} | {2 * nu, nu + 1} - {nu})
    basis = np.column_stack([t**nu] + [t**p for p in extra])
    # column scaling keeps the least-squares problem well conditioned
    norms = np.linalg.norm(basis, axis=0)
    sol, *_ = np.linalg.lstsq(basis / norms, vals, rcond=None)
    return float(sol[0] / norms[0])
