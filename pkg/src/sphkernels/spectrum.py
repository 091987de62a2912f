"""Eigenvalues mu_k of dot-product kernels on S^{d-1}, decay fits and Mercer sums.

Two independent routes compute a spectrum:

* ``series``: mu_k = sum_n b_n lambda_{n,k}, projecting the kernel's power
  series onto Legendre polynomials with the monomial table;
* ``quadrature``: mu_k = (omega_{d-2}/omega_{d-1}) int kappa P_k w dt on a
  rule whose endpoint substitution makes half-power singularities analytic.

The closed form for (1 - t^2)^nu (:mod:`sphkernels.phi`) arbitrates between them.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import log

import numpy as np
from scipy.special import gammaln

from . import _accel
from .endpoints import decay_prediction, endpoint_expansion
from .errors import DomainError, ExpansionUnknownError, FitError, SeriesUnsupportedError
from .kernels import KernelSpec, kappa_at_one, kernel_eval, kernel_eval_complex, kernel_eval_mp
from .phi import asymptotic_constant, mu_phi_closed_form, phi_nu
from .series import PowerSeries, kernel_series
from .sphharm import (
    SphereGeometry,
    jacobi_quadrature,
    legendre_batch,
    n_harmonics_array,
)

__all__ = [
    "Spectrum",
    "FitResult",
    "mu_series",
    "mu_quadrature",
    "mu_phi_closed_form",
    "asymptotic_constant",
    "phi_nu",
    "compute_spectrum",
    "fit_decay",
    "constant_ratio",
    "empirical_constant",
    "mercer_reconstruct",
    "trace_partial_sums",
    "taylor_decay",
    "ibp_identity_check",
    "read_spectrum",
]

# series length for kernels whose Taylor coefficients never terminate
DEFAULT_SERIES_TERMS = 1 << 17
ZERO_REL_TOL = 1e-13


@dataclass(frozen=True)
class Spectrum:
    d: int
    mu: np.ndarray
    method: str
    kernel: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def k_max(self):
        return self.mu.size - 1

    @property
    def kernel_label(self):
        if self.kernel is None:
            return ""
        return str(self.kernel)

    def parity_mask(self, parity):
        k = np.arange(self.mu.size)
        if parity == "even":
            return k % 2 == 0
        if parity == "odd":
            return k % 2 == 1
        if parity == "all":
            return np.ones(self.mu.size, dtype=bool)
        raise DomainError(f"parity must be even, odd or all, got {parity!r}")

    def zero_threshold(self, parity):
        """Entries at or below this are exact zeros for parity classification.

        Quadrature spectra carry a rounding floor, so small entries relative to
        the parity maximum count as zero; series and closed-form entries are
        exact sums of nonnegative terms and only true zeros are zero.
        """
        if self.method != "quadrature":
            return 0.0
        vals = np.abs(self.mu[self.parity_mask(parity)])
        return ZERO_REL_TOL * float(vals.max()) if vals.size else 0.0

    # -- serialization -------------------------------------------------------
    def metadata(self):
        out = {"kernel": self.kernel_label, "d": int(self.d), "method": self.method, "k_max": int(self.k_max)}
        out["truncation"] = {k: _jsonable(v) for k, v in sorted(self.meta.items())}
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "mu", "parity"])
        for k, m in enumerate(self.mu):
            w.writerow([k, repr(float(m)), "even" if k % 2 == 0 else "odd"])
        return buf.getvalue()

    def to_json(self):
        rows = [
            {"k": k, "mu": float(m), "parity": "even" if k % 2 == 0 else "odd"} for k, m in enumerate(self.mu)
        ]
        return json.dumps({"metadata": self.metadata(), "spectrum": rows}, sort_keys=True, indent=1) + "\n"


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def read_spectrum(text, d=None, fmt=None):
    """Parse a spectrum written by :meth:`Spectrum.to_csv` or :meth:`Spectrum.to_json`."""
    stripped = text.lstrip()
    if fmt == "json" or (fmt is None and stripped.startswith("{")):
        doc = json.loads(text)
        meta = doc["metadata"]
        mu = [row["mu"] for row in sorted(doc["spectrum"], key=lambda r: r["k"])]
        kernel = KernelSpec.parse(meta["kernel"]) if meta.get("kernel") else None
        return Spectrum(int(meta["d"]), mu, meta["method"], kernel, dict(meta.get("truncation", {})))
    if d is None:
        raise DomainError("reading a CSV spectrum needs the dimension d")
    rows = list(csv.DictReader(io.StringIO(text)))
    mu = [float(r["mu"]) for r in sorted(rows, key=lambda r: int(r["k"]))]
    return Spectrum(int(d), mu, "file")


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    parity: str
    k_range: tuple
    n_points: int

    def predict(self, k):
        return np.exp(self.intercept) * np.asarray(k, dtype=np.float64) ** self.slope


# --------------------------------------------------------------------------
# series route
# --------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _cached_series(spec, n_max):
    return kernel_series(spec, n_max)


def _log_lambda(d, n, k):
    """log lambda_{n,k} for n >= k, n - k even, via the closed-form product."""
    n = np.asarray(n, dtype=np.float64)
    m = (n - k) / 2.0
    j = np.arange(1, k + 1, dtype=np.float64)
    log_diag = float(np.sum(np.log(j / (2 * j + d - 2)))) if k else 0.0
    return (
        log_diag
        + gammaln(n + 1)
        - gammaln(k + 1)
        - 2 * m * log(2.0)
        - gammaln(m + 1)
        - gammaln(k + m + d / 2.0)
        + gammaln(k + d / 2.0)
    )


def _tail_estimate(b, d, k):
    """Sum over n > N of b_n lambda_{n,k}, extrapolating the terms as A n^{-q}.

    The exponent q is read off the last terms of the matching parity, which
    follow a pure power law once n is large.
    """
    n_top = b.size - 1
    if (n_top - k) % 2:
        n_top -= 1
    n_mid = n_top // 2
    if (n_mid - k) % 2:
        n_mid -= 1
    if n_mid <= k or b[n_top] <= 0 or b[n_mid] <= 0:
        return 0.0
    ns = np.array([n_mid, n_top], dtype=np.float64)
    terms = b[[n_mid, n_top]] * np.exp(_log_lambda(d, ns, k))
    q = -np.log(terms[1] / terms[0]) / np.log(ns[1] / ns[0])
    if not q > 1.05:
        return 0.0
    # step-2 sum of A n^{-q} over n > n_top ~ (1/2) int_{n_top+1}^inf A n^{-q} dn
    return float(terms[1] * n_top / (2.0 * (q - 1.0)) * (1.0 + 1.0 / n_top) ** (1.0 - q))


def mu_series(spec, d, k_max, n_max=None, tail_correction=True):
    """Spectrum from the power series of ``spec``: mu_k = sum_n b_n lambda_{n,k}.

    For kernels with infinitely many Taylor coefficients the default length is
    2^17 terms, and the remaining power-law tail is added by extrapolation
    (recorded as ``tail_max`` in the metadata).
    """
    if not isinstance(spec, KernelSpec):
        raise TypeError("mu_series needs a KernelSpec")
    if not spec.series_capable:
        raise SeriesUnsupportedError(f"{spec.family} has no series route; use route=quadrature")
    SphereGeometry(d)
    k_max = int(k_max)
    finite = spec.family in ("linear", "series", "gauss")
    if n_max is None:
        if spec.family == "linear":
            n_max = max(k_max, 1)
        elif spec.family == "series":
            n_max = max(k_max, len(spec.coeffs) - 1)
        elif spec.family == "gauss":
            # b_n = e^{-c} c^n / n! underflows long before this
            n_max = max(k_max, int(4 * spec.c) + 400)
        else:
            n_max = max(DEFAULT_SERIES_TERMS, 4 * k_max)
    n_max = int(n_max)
    if n_max < k_max:
        raise DomainError("n_max must be >= k_max")
    ps = _cached_series(spec, n_max)
    b = np.asarray(ps.coeffs)
    mu = _accel.series_project(b, d, k_max)
    tail_max = 0.0
    if tail_correction and not finite:
        tails = np.array([_tail_estimate(b, d, k) for k in range(k_max + 1)])
        mu = mu + tails
        tail_max = float(tails.max(initial=0.0))
    meta = {"n_max": n_max, "tail_max": tail_max, "series_tail_mass": _finite_or_none(ps.truncation_tail_mass)}
    return Spectrum(int(d), mu, "series", spec, meta)


def _finite_or_none(x):
    return float(x) if np.isfinite(x) else None


# --------------------------------------------------------------------------
# quadrature route
# --------------------------------------------------------------------------

def _default_power(spec):
    if isinstance(spec, KernelSpec):
        try:
            return endpoint_expansion(spec).substitution_power
        except ExpansionUnknownError:
            return 2
    return 2


def mu_quadrature(spec, d, k_max, nodes=None, power=None, precision=None):
    """Spectrum by quadrature of kappa(t) P_k(t) (1 - t^2)^((d-3)/2).

    ``spec`` is a :class:`KernelSpec` or any callable t -> kappa(t).  Each half
    interval uses ``nodes`` Gauss-Legendre points (default max(256, 4 k_max))
    after the substitution t = +-(1 - s^power); ``power`` defaults to the value
    that makes the kernel's endpoint exponent integral in s.

    With ``precision`` (decimal digits) the same rule is evaluated in mpmath
    arithmetic, for spectra whose entries are far below float64 resolution
    relative to kappa.
    """
    SphereGeometry(d)
    k_max = int(k_max)
    if k_max < 0:
        raise DomainError("k_max must be >= 0")
    nodes = int(nodes) if nodes is not None else max(256, 4 * k_max)
    power = int(power) if power is not None else _default_power(spec)
    if precision is not None:
        mu = _mu_quadrature_mp(spec, d, k_max, power, int(precision))
        meta = {"power": power, "precision": int(precision), "rule": "gauss-legendre-mp"}
    else:
        rule = jacobi_quadrature(d, nodes, desingularize=True, power=power)
        if isinstance(spec, KernelSpec):
            vals = np.asarray(kernel_eval(spec, rule.nodes), dtype=np.float64)
        else:
            vals = np.asarray(spec(rule.nodes), dtype=np.float64)
        table = legendre_batch(d, k_max, rule.nodes)
        mu = SphereGeometry(d).ratio * rule.integrate(table * vals)
        meta = {"nodes_per_half": nodes, "power": power}
    kernel = spec if isinstance(spec, KernelSpec) else None
    return Spectrum(int(d), mu, "quadrature", kernel, meta)


@lru_cache(maxsize=8)
def _mp_nodes(degree, dps):
    import mpmath as mp
    from mpmath.calculus.quadrature import GaussLegendre

    with mp.workdps(dps):
        return tuple(GaussLegendre(mp.mp).calc_nodes(degree, mp.mp.prec))


def _mu_quadrature_mp(spec, d, k_max, power, dps):
    import mpmath as mp

    # 3 * 2^(degree-1) nodes per half; enough for P_k up to degree ~3 * 2^degree / power
    degree = 6
    while 3 * 2 ** (degree - 1) < 2 * (power * k_max + 40):
        degree += 1
    nodes = _mp_nodes(degree, dps)
    with mp.workdps(dps):
        a = mp.mpf(d - 3) / 2
        acc = [mp.mpf(0)] * (k_max + 1)
        for x, w in nodes:
            s = (x + 1) / 2
            sp = s**power
            base = w / 2 * power * s ** (power - 1) * (sp * (2 - sp)) ** a
            for t in (1 - sp, -1 + sp):
                f = kernel_eval_mp(spec, t) if isinstance(spec, KernelSpec) else spec(t)
                p_prev, p = mp.mpf(1), t
                acc[0] += base * f
                if k_max >= 1:
                    acc[1] += base * f * t
                for k in range(1, k_max):
                    p_prev, p = p, ((2 * k + d - 2) * t * p - k * p_prev) / (k + d - 2)
                    acc[k + 1] += base * f * p
        ratio = mp.gamma(mp.mpf(d) / 2) / (mp.sqrt(mp.pi) * mp.gamma(mp.mpf(d - 1) / 2))
        return np.array([float(ratio * v) for v in acc])


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def compute_spectrum(spec, d, k_max, route="auto", **kwargs):
    """``route`` is ``series``, ``quadrature`` or ``auto`` (series when available)."""
    if route == "auto":
        route = "series" if spec.series_capable else "quadrature"
    if route == "series":
        return mu_series(spec, d, k_max, **kwargs)
    if route == "quadrature":
        return mu_quadrature(spec, d, k_max, **kwargs)
    raise DomainError(f"unknown route {route!r}; choose series, quadrature or auto")


# --------------------------------------------------------------------------
# decay fits
# --------------------------------------------------------------------------

def _loglog_fit(k, v, parity, k_range):
    if k.size < 5:
        raise FitError(f"only {k.size} positive {parity} entries in k in [{k_range[0]}, {k_range[1]}]; need 5")
    x, y = np.log(k), np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), min(max(r2, 0.0), 1.0), parity, tuple(k_range), int(k.size))


def fit_decay(spectrum, parity="even", k_min=15, k_max=61):
    """Least-squares line through (log k, log mu_k) over one parity class."""
    k_max = min(int(k_max), spectrum.k_max)
    k = np.arange(spectrum.mu.size)
    sel = spectrum.parity_mask(parity) & (k >= k_min) & (k <= k_max) & (k > 0)
    vals = spectrum.mu[sel]
    keep = vals > spectrum.zero_threshold(parity)
    return _loglog_fit(k[sel][keep].astype(np.float64), vals[keep], parity, (int(k_min), int(k_max)))


def _top_parity_k(spectrum, parity, k_cap, count):
    k = np.arange(min(spectrum.k_max, k_cap) + 1)
    k = k[spectrum.parity_mask(parity)[: k.size] & (k > 0)]
    return k[-count:]


def empirical_constant(spectrum, parity, exponent, k_cap=80, count=10):
    """Mean of mu_k k^{-exponent} over the ``count`` largest same-parity k <= k_cap."""
    k = _top_parity_k(spectrum, parity, k_cap, count)
    return float(np.mean(spectrum.mu[k] * k.astype(np.float64) ** (-exponent)))


def constant_ratio(spectrum, spec=None, parity="even", k_cap=80, count=10):
    """Mean of mu_k / (predicted constant * k^exponent) over the largest same-parity k <= k_cap."""
    spec = spec if spec is not None else spectrum.kernel
    pred = decay_prediction(spec, spectrum.d)
    if pred.super_polynomial:
        raise FitError("super-polynomial decay has no power-law constant")
    const = pred.constant(parity)
    if const == 0:
        raise FitError(f"{parity} coefficients vanish at leading order")
    return empirical_constant(spectrum, parity, pred.exponent, k_cap, count) / const


# --------------------------------------------------------------------------
# Mercer sums
# --------------------------------------------------------------------------

def mercer_reconstruct(spectrum, t):
    """Partial Mercer sum sum_{k <= K} mu_k N(d, k) P_k(t)."""
    t_arr = np.asarray(t, dtype=np.float64)
    table = legendre_batch(spectrum.d, spectrum.k_max, t_arr.ravel())
    coef = spectrum.mu * n_harmonics_array(spectrum.d, spectrum.k_max)
    out = _accel.weighted_row_sums(np.ascontiguousarray(table.T), coef)
    return float(out[0]) if t_arr.ndim == 0 else out.reshape(t_arr.shape)


def trace_partial_sums(spectrum):
    """Cumulative sums of mu_k N(d, k); their limit is kappa(1)."""
    return np.cumsum(spectrum.mu * n_harmonics_array(spectrum.d, spectrum.k_max))


# --------------------------------------------------------------------------
# Taylor coefficients
# --------------------------------------------------------------------------

def taylor_decay(series, n_min=50, n_max=2000, parity="auto"):
    """Fit the power-law exponent of the Taylor coefficients |b_n|.

    ``parity="auto"`` uses whichever parity classes carry nonzero coefficients
    in the range.
    """
    coeffs = np.asarray(series.coeffs if isinstance(series, PowerSeries) else series, dtype=np.float64)
    n_max = min(int(n_max), coeffs.size - 1)
    n = np.arange(coeffs.size)
    in_range = (n >= max(n_min, 1)) & (n <= n_max)
    if parity == "auto":
        live = [p for p, r in (("even", 0), ("odd", 1)) if np.any(np.abs(coeffs[in_range & (n % 2 == r)]) > 0)]
        parity = live[0] if len(live) == 1 else "all"
    if parity == "even":
        in_range &= n % 2 == 0
    elif parity == "odd":
        in_range &= n % 2 == 1
    elif parity != "all":
        raise DomainError(f"bad parity {parity!r}")
    vals = np.abs(coeffs[in_range])
    keep = vals > 0
    return _loglog_fit(n[in_range][keep].astype(np.float64), vals[keep], parity, (int(n_min), int(n_max)))


# --------------------------------------------------------------------------
# integration-by-parts identity
# --------------------------------------------------------------------------

_SMOOTH_FAMILIES = ("linear", "series", "gauss")


def _derivatives(spec, t, h):
    def f(u):
        return kernel_eval_complex(spec, u).real

    def d1(step):
        return (f(t + step) - f(t - step)) / (2 * step)

    def d2(step):
        return (f(t + step) - 2 * f(t) + f(t - step)) / step**2

    # one Richardson step cancels the h^2 error terms
    return (4 * d1(h / 2) - d1(h)) / 3, (4 * d2(h / 2) - d2(h)) / 3


def ibp_identity_check(spec, d, k, nodes=None, h=1e-3):
    """Check int kappa P_k w = (B + int kappa~ P_k w) / (k (k + d - 2)).

    kappa~ = -kappa'' (1 - t^2) + (d - 1) t kappa', w = (1 - t^2)^((d-3)/2), and
    B collects the boundary terms [-kappa (1-t^2)^((d-1)/2) P_k' +
    kappa' (1-t^2)^((d-1)/2) P_k] at t = +-1.  Derivatives are central
    differences with one Richardson step.  Returns (left, right, residual).
    """
    if not isinstance(spec, KernelSpec) or spec.family not in _SMOOTH_FAMILIES:
        raise SeriesUnsupportedError("ibp_identity_check needs a smooth kernel (linear, series or gauss)")
    if k < 1:
        raise DomainError("k must be >= 1")
    SphereGeometry(d)
    n = int(nodes) if nodes is not None else max(64, 2 * k + 32)
    rule = jacobi_quadrature(d, n)
    t = rule.nodes
    kap = kernel_eval_complex(spec, t).real
    dk, d2k = _derivatives(spec, t, h)
    tilde = -d2k * (1 - t * t) + (d - 1) * t * dk
    pk = legendre_batch(d, k, t)[k]
    left = rule.integrate(kap * pk)
    inner = rule.integrate(tilde * pk)
    boundary = 0.0
    for sign, e in ((1.0, 1.0), (-1.0, -1.0)):
        ev = np.array([e])
        dk_e, _ = _derivatives(spec, ev, h)
        # P_k(+-1) = (+-1)^k and P_k'(+-1) = (+-1)^(k-1) k (k+d-2) / (d-1)
        p_e, dp_e = e**k, e ** (k - 1) * k * (k + d - 2) / (d - 1)
        kap_e = float(kernel_eval_complex(spec, ev).real[0])
        # (1 - t^2)^((d-1)/2) is zero at +-1 for d >= 3, so these terms vanish
        edge = (1.0 - e * e) ** ((d - 1) / 2.0)
        boundary += sign * edge * (float(dk_e[0]) * p_e - kap_e * dp_e)
    right = (boundary + inner) / (k * (k + d - 2))
    return float(left), float(right), float(abs(left - right))
