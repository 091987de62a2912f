"""Exact Legendre coefficients of (1 - t^2)^nu and t (1 - t^2)^nu.

Both are evaluated from products of Gamma functions (a balanced 3F2 summed in
closed form), in log space with explicit sign tracking.
"""

from math import exp, log, pi

import numpy as np

from .errors import DomainError, GammaPoleError
from .sphharm import SphereGeometry, log_gamma_signed

__all__ = ["mu_phi_closed_form", "asymptotic_constant", "phi_nu"]


def _check_nu(nu):
    if not nu > 0 or float(nu).is_integer():
        raise DomainError(f"nu must be a positive non-integer, got {nu}")


def _gamma_ratio(num, den):
    """prod Gamma(num) / prod Gamma(den) as (log|.|, sign); a pole in den gives zero."""
    log_abs = 0.0
    sign = 1
    for x in den:
        try:
            la, s = log_gamma_signed(x)
        except GammaPoleError:
            return None
        log_abs -= la
        sign *= s
    for x in num:
        la, s = log_gamma_signed(x)
        log_abs += la
        sign *= s
    return log_abs, sign


def _mu_even(d, nu, k):
    ratio = SphereGeometry(d).ratio
    h = (d - 1) / 2.0
    head = _gamma_ratio([nu + h, nu + h], [2 * nu + d - 1])
    watson = _gamma_ratio(
        [0.5, nu + d / 2.0, h, nu + 1.0],
        [(1.0 - k) / 2.0, (d + k - 1) / 2.0, nu + k / 2.0 + d / 2.0, nu + 1.0 - k / 2.0],
    )
    if watson is None:
        return 0.0
    la = log(ratio) + (2 * nu + d - 2) * log(2.0) + head[0] + watson[0]
    return head[1] * watson[1] * exp(la)


def mu_phi_closed_form(d, nu, k, odd_variant=False):
    """Eigenvalue mu_k of phi_nu(t) = (1 - t^2)^nu, or of t * phi_nu(t) if ``odd_variant``.

    phi_nu has vanishing odd coefficients and t * phi_nu vanishing even ones;
    those are returned as exact zeros.
    """
    _check_nu(nu)
    if int(k) != k or k < 0:
        raise DomainError("k must be a non-negative integer")
    k = int(k)
    if not odd_variant:
        if k % 2:
            return 0.0
        return _mu_even(d, nu, k)
    if k % 2 == 0:
        return 0.0
    # t P_k = k/(2k+d-2) P_{k-1} + (k+d-2)/(2k+d-2) P_{k+1}
    den = 2.0 * k + d - 2.0
    return (k / den) * _mu_even(d, nu, k - 1) + ((k + d - 2) / den) * _mu_even(d, nu, k + 1)


def asymptotic_constant(d, nu):
    """C(d, nu) with mu_k(phi_nu) ~ C(d, nu) k^{-(d + 2 nu - 1)} for even k.

    The sign is that of the Gamma product: negative for nu in (0, 1), for
    instance, where the even coefficients of (1 - t^2)^nu are eventually negative.
    """
    _check_nu(nu)
    ratio = SphereGeometry(d).ratio
    h = (d - 1) / 2.0
    head = _gamma_ratio([nu + h, nu + h], [2 * nu + d - 1])
    # Gamma(1/2)/Gamma((1-k)/2) * Gamma(nu+1)/Gamma(nu+1-k/2)
    #   = -Gamma((k+1)/2) Gamma(k/2-nu) Gamma(nu+1) / (sqrt(pi) Gamma(nu+2) Gamma(-nu-1))
    tail = _gamma_ratio([nu + d / 2.0, h, nu + 1.0], [nu + 2.0, -nu - 1.0])
    if tail is None:
        raise DomainError(f"C(d, nu) is undefined at nu = {nu}")
    # 2^{2nu+d-2} * 2^{d+2nu-1} from the Stirling limit in k/2
    la = log(ratio) + (4 * nu + 2 * d - 3) * log(2.0) + head[0] + tail[0] - 0.5 * log(pi)
    return -head[1] * tail[1] * exp(la)


def phi_nu(nu, odd_variant=False):
    """Callable t -> (1 - t^2)^nu (times t for the odd variant); works on floats, arrays and mpf."""

    def f(t):
        if isinstance(t, (float, np.ndarray)):
            base = np.maximum(1.0 - t * t, 0.0) ** nu
        else:
            base = (1 - t * t) ** nu
        return t * base if odd_variant else base

    return f

