"""Truncated power series kappa(u) = sum_n b_n u^n of the series-capable kernels."""

from dataclasses import dataclass
from math import pi
from typing import Optional

import numpy as np
from scipy import fft

from .errors import SeriesUnsupportedError, UnsupportedCompositionError
from .kernels import KernelSpec, kappa_at_one, kernel_eval_complex, ntk_unnormalized_at_one

__all__ = [
    "PowerSeries",
    "arccos_series",
    "series_compose",
    "series_product",
    "kernel_series",
    "contour_coefficients",
]

_NEG_TOL = 1e-14
_FFT_NOISE = 16 * np.finfo(np.float64).eps
# above this length deep kernels take their coefficients from the contour FFT
COMPOSE_LIMIT = 8192


@dataclass(frozen=True)
class PowerSeries:
    coeffs: np.ndarray
    kappa_one: Optional[float] = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def n_max(self):
        return self.coeffs.size - 1

    @property
    def truncation_tail_mass(self):
        """kappa(1) minus the partial sum, when kappa(1) is known (else nan)."""
        if self.kappa_one is None:
            return float("nan")
        return max(self.kappa_one - float(np.sum(self.coeffs)), 0.0)

    @property
    def nonnegative(self):
        return bool(np.all(self.coeffs >= -_NEG_TOL))

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        acc = np.zeros_like(u)
        for b in self.coeffs[::-1]:
            acc = acc * u + b
        return float(acc) if acc.ndim == 0 else acc

    def truncate(self, n_max):
        return PowerSeries(self.coeffs[: n_max + 1], self.kappa_one)


def arccos_series(n_max):
    """Taylor series of kappa0 and kappa1 at 0, up to degree ``n_max``.

    kappa0(u) = 1/2 + arcsin(u)/pi, and kappa1 is its antiderivative with
    kappa1(0) = 1/pi.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    b0 = np.zeros(n_max + 1)
    b0[0] = 0.5
    # arcsin(u) = sum_m binom(2m, m) / 4^m * u^(2m+1) / (2m+1)
    m = np.arange((n_max - 1) // 2 + 1, dtype=np.float64)
    central = np.ones_like(m)
    if m.size > 1:
        central[1:] = np.cumprod((2 * m[:-1] + 1) / (2 * m[:-1] + 2))
    b0[1::2] = central / (2 * m + 1) / pi
    b1 = np.zeros(n_max + 1)
    b1[0] = 1.0 / pi
    b1[1:] = b0[:-1] / np.arange(1, n_max + 1)
    return PowerSeries(b0, 1.0), PowerSeries(b1, 1.0)


def _fft_len(n):
    return fft.next_fast_len(2 * n - 1, real=True)


def series_product(a, b):
    """Coefficient convolution, truncated to the shorter length."""
    n = min(a.coeffs.size, b.coeffs.size)
    x, y = a.coeffs[:n], b.coeffs[:n]
    if n <= 256:
        out = np.convolve(x, y)[:n]
    else:
        m = _fft_len(n)
        out = fft.irfft(fft.rfft(x, m) * fft.rfft(y, m), m)[:n]
        if a.nonnegative and b.nonnegative:
            out = np.maximum(out, 0.0)
    k1 = None
    if a.kappa_one is not None and b.kappa_one is not None:
        k1 = a.kappa_one * b.kappa_one
    return PowerSeries(out, k1)


def series_compose(outer, inner):
    """Coefficients of outer(inner(u)), truncated to the common length.

    Horner's scheme over the outer coefficients; the transform of ``inner`` is
    computed once.  Needs nonnegative inner coefficients with inner(1) <= 1 so
    that the composed series converges on [-1, 1].
    """
    if not inner.nonnegative:
        raise UnsupportedCompositionError("inner series has negative coefficients")
    inner_at_one = float(np.sum(inner.coeffs))
    if inner_at_one > 1.0 + 1e-12:
        raise UnsupportedCompositionError("inner series exceeds 1 at u = 1")
    n = min(outer.coeffs.size, inner.coeffs.size)
    g = inner.coeffs[:n]
    f = outer.coeffs[:n]
    acc = np.zeros(n)
    acc[0] = f[-1]
    if n <= 256:
        for b in f[-2::-1]:
            acc = np.convolve(acc, g)[:n]
            acc[0] += b
    else:
        m = _fft_len(n)
        g_hat = fft.rfft(g, m)
        for b in f[-2::-1]:
            acc = fft.irfft(fft.rfft(acc, m) * g_hat, m)[:n]
            acc[0] += b
        if outer.nonnegative:
            acc = np.maximum(acc, 0.0)
    k1 = None
    if outer.kappa_one is not None and inner.kappa_one is not None and inner.kappa_one == 1.0:
        k1 = outer.kappa_one
    return PowerSeries(acc, k1)


def contour_coefficients(spec, n_max, oversample=8, amplification=10.0):
    """Taylor coefficients from samples of kappa on the circle |z| = r < 1.

    b_n = r^{-n} * DFT(kappa(r e^{i theta}))_n / M.  The radius is chosen so
    that r^{-n_max} = ``amplification``; aliasing from b_{n+M} then carries a
    factor amplification^{-M/n_max}.
    """
    n = int(n_max) + 1
    m = 1 << int(np.ceil(np.log2(max(oversample * n, 64))))
    log_r = -np.log(amplification) / max(n_max, 1)
    theta = 2.0 * np.pi * np.arange(m) / m
    z = np.exp(log_r + 1j * theta)
    vals = kernel_eval_complex(spec, z)
    coef = fft.fft(vals)[:n].real / m
    scale = np.exp(-log_r * np.arange(n))
    # entries at the FFT rounding level are zeros of the exact series (e.g. the
    # vanishing odd coefficients of the two-layer NTK), not small coefficients
    floor = _FFT_NOISE * float(np.max(np.abs(vals))) * scale
    coef *= scale
    coef[np.abs(coef) <= floor] = 0.0
    return coef


def kernel_series(spec, n_max=4000, method="auto"):
    """Power series of a series-capable kernel up to degree ``n_max``.

    ``method`` is ``"compose"`` (coefficient-level composition and products of
    the arc-cosine series), ``"contour"`` (FFT on a circle inside the unit disk)
    or ``"auto"`` (closed forms where they exist, composition up to
    ``COMPOSE_LIMIT`` terms, contour beyond).
    """
    if not isinstance(spec, KernelSpec):
        raise TypeError("spec must be a KernelSpec")
    if not spec.series_capable:
        raise SeriesUnsupportedError(f"{spec.family} has no power-series route; use quadrature")
    n_max = int(n_max)
    k_one = kappa_at_one(spec)
    f = spec.family
    if f == "linear":
        c = np.zeros(n_max + 1)
        if n_max >= 1:
            c[1] = 1.0
        return PowerSeries(c, 1.0)
    if f == "series":
        c = np.zeros(n_max + 1)
        m = min(len(spec.coeffs), n_max + 1)
        c[:m] = spec.coeffs[:m]
        return PowerSeries(c, k_one)
    if f == "gauss":
        n = np.arange(n_max + 1, dtype=np.float64)
        logs = -spec.c + n * np.log(spec.c) - np.cumsum(np.concatenate([[0.0], np.log(n[1:])]))
        return PowerSeries(np.exp(logs), 1.0)
    if f in ("arccos0", "arccos1"):
        s0, s1 = arccos_series(max(n_max, 1))
        return (s0 if f == "arccos0" else s1).truncate(n_max)

    if method == "auto":
        method = "compose" if n_max <= COMPOSE_LIMIT else "contour"
    if method == "contour":
        return PowerSeries(contour_coefficients(spec, n_max), k_one)
    if method != "compose":
        raise ValueError(f"unknown series method {method!r}")

    s0, s1 = arccos_series(max(n_max, 1))
    s0, s1 = s0.truncate(n_max), s1.truncate(n_max)
    ident = kernel_series(KernelSpec.linear(), n_max)
    if f == "rf":
        out = s1
        for _ in range(spec.L - 2):
            out = series_compose(s1, out)
        return out
    if f == "step":
        out = s0
        for _ in range(spec.L - 2):
            out = series_compose(s0, out)
        return out
    # ntk: N_l = (N_{l-1} [+ 1]) * k0(K_{l-1}) + K_l with K_l = k1(K_{l-1})
    rf = ident
    ntk = ident
    one = PowerSeries(np.eye(1, n_max + 1)[0], 1.0)
    for level in range(2, spec.L + 1):
        k0_of_rf = s0 if level == 2 else series_compose(s0, rf)
        carry = ntk
        if spec.bias:
            carry = PowerSeries(ntk.coeffs + one.coeffs, None)
        rf = s1 if level == 2 else series_compose(s1, rf)
        prod = series_product(carry, k0_of_rf)
        ntk = PowerSeries(prod.coeffs + rf.coeffs, None)
    coeffs = ntk.coeffs
    if spec.normalized:
        coeffs = coeffs / ntk_unnormalized_at_one(spec.L, spec.bias)
    return PowerSeries(coeffs, k_one)
