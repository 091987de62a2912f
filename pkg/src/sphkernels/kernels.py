"""Dot-product kernel families on the sphere and their pointwise evaluation.

A kernel is described by a :class:`KernelSpec` and evaluated as a function
kappa(u) of the inner product u = x^T y in [-1, 1].  The flat text form
``family:key=value,...`` (e.g. ``ntk:L=3,bias=0,norm=1``) round-trips through
:meth:`KernelSpec.parse` and ``str``.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import DomainError, UnknownKernelError

__all__ = [
    "KernelSpec",
    "FAMILIES",
    "kappa0_eval",
    "kappa1_eval",
    "kernel_eval",
    "kernel_eval_complex",
    "kernel_eval_mp",
    "kappa_at_one",
]

_CLAMP_TOL = 1e-12

# family name -> allowed parameters with defaults
FAMILIES = {
    "arccos0": {},
    "arccos1": {},
    "rf": {"L": 3},
    "ntk": {"L": 2, "bias": 0, "norm": 0},
    "laplace": {"c": 1.0},
    "genexp": {"c": 1.0, "g": 0.5},
    "step": {"L": 3},
    "gauss": {"c": 1.0},
    "linear": {},
    "series": {"coeffs": ()},
}

SERIES_FAMILIES = frozenset({"arccos0", "arccos1", "rf", "ntk", "step", "gauss", "linear", "series"})


def _fmt_num(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True)
class KernelSpec:
    family: str
    L: int = 2
    c: float = 1.0
    gamma: float = 0.5
    bias: bool = False
    normalized: bool = False
    coeffs: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnknownKernelError(f"unknown kernel family {self.family!r}")
        if self.family in ("rf", "step") and self.L < 2:
            raise DomainError(f"{self.family} needs depth L >= 2")
        if self.family == "ntk" and self.L < 1:
            raise DomainError("ntk needs depth L >= 1")
        if self.family in ("laplace", "genexp", "gauss") and not self.c > 0:
            raise DomainError("scale c must be positive")
        if self.family == "genexp":
            g = self.gamma
            if not (0 < g < 2) or float(g).is_integer():
                raise DomainError("genexp exponent must be a non-integer in (0, 2)")
        if self.family == "series":
            if len(self.coeffs) == 0:
                raise DomainError("series kernel needs at least one coefficient")

    # -- constructors -------------------------------------------------------
    @classmethod
    def arccos0(cls):
        return cls("arccos0")

    @classmethod
    def arccos1(cls):
        return cls("arccos1")

    @classmethod
    def rf(cls, L):
        return cls("rf", L=int(L))

    @classmethod
    def ntk(cls, L, bias=False, normalized=False):
        return cls("ntk", L=int(L), bias=bool(bias), normalized=bool(normalized))

    @classmethod
    def laplace(cls, c=1.0):
        return cls("laplace", c=float(c))

    @classmethod
    def genexp(cls, c, gamma):
        return cls("genexp", c=float(c), gamma=float(gamma))

    @classmethod
    def step(cls, L):
        return cls("step", L=int(L))

    @classmethod
    def gauss(cls, c=1.0):
        return cls("gauss", c=float(c))

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def series(cls, coeffs):
        return cls("series", coeffs=tuple(float(b) for b in coeffs))

    # -- text form ----------------------------------------------------------
    @classmethod
    def parse(cls, text):
        text = text.strip()
        family, _, rest = text.partition(":")
        family = family.strip().lower()
        if family not in FAMILIES:
            raise UnknownKernelError(f"unknown kernel family {family!r}")
        params = dict(FAMILIES[family])
        if rest.strip():
            for item in rest.split(","):
                key, eq, value = item.partition("=")
                key = key.strip()
                if not eq or key not in params:
                    raise UnknownKernelError(f"bad parameter {item!r} for kernel {family!r}")
                params[key] = value.strip()
        try:
            if family in ("rf", "step"):
                return cls(family, L=int(params["L"]))
            if family == "ntk":
                return cls.ntk(int(params["L"]), bool(int(params["bias"])), bool(int(params["norm"])))
            if family in ("laplace", "gauss"):
                return cls(family, c=float(params["c"]))
            if family == "genexp":
                return cls.genexp(float(params["c"]), float(params["g"]))
            if family == "series":
                raw = params["coeffs"]
                coeffs = raw if isinstance(raw, tuple) else tuple(float(v) for v in raw.split("/") if v)
                return cls.series(coeffs)
        except ValueError as exc:
            if isinstance(exc, DomainError):
                raise
            raise UnknownKernelError(f"bad parameter value in {text!r}: {exc}") from None
        return cls(family)

    def __str__(self):
        f = self.family
        if f in ("rf", "step"):
            return f"{f}:L={self.L}"
        if f == "ntk":
            return f"ntk:L={self.L},bias={int(self.bias)},norm={int(self.normalized)}"
        if f in ("laplace", "gauss"):
            return f"{f}:c={_fmt_num(self.c)}"
        if f == "genexp":
            return f"genexp:c={_fmt_num(self.c)},g={_fmt_num(self.gamma)}"
        if f == "series":
            return "series:coeffs=" + "/".join(_fmt_num(b) for b in self.coeffs)
        return f

    @property
    def series_capable(self):
        return self.family in SERIES_FAMILIES


def _clamp(u):
    u = np.asarray(u, dtype=np.float64)
    if np.any(np.abs(u) > 1.0 + _CLAMP_TOL) or np.any(np.isnan(u)):
        raise DomainError("kernel argument must satisfy |u| <= 1")
    return np.clip(u, -1.0, 1.0)


def _k0(u):
    return (np.pi - np.arccos(u)) / np.pi


def _k1(u):
    return (u * (np.pi - np.arccos(u)) + np.sqrt(np.maximum(1.0 - u * u, 0.0))) / np.pi


def _scalar(out, u):
    return float(out) if np.ndim(u) == 0 else out


def kappa0_eval(u):
    """Arc-cosine kernel of degree 0 (step activation): (pi - arccos u) / pi."""
    return _scalar(_k0(_clamp(u)), u)


def kappa1_eval(u):
    """Arc-cosine kernel of degree 1 (ReLU activation)."""
    return _scalar(_k1(_clamp(u)), u)


def ntk_unnormalized_at_one(L, bias):
    return float(2 * L - 1 if bias else L)


def kappa_at_one(spec):
    """kappa(1) without evaluating the kernel."""
    f = spec.family
    if f == "ntk":
        return 1.0 if spec.normalized else ntk_unnormalized_at_one(spec.L, spec.bias)
    if f == "series":
        return float(sum(spec.coeffs))
    return 1.0


def _generic_eval(spec, u, k0, k1, sqrt, exp, power):
    """Evaluation shared by the real, complex and mpmath paths."""
    f = spec.family
    if f == "arccos0":
        return k0(u)
    if f == "arccos1":
        return k1(u)
    if f == "linear":
        return u
    if f == "rf":
        v = u
        for _ in range(spec.L - 1):
            v = k1(v)
        return v
    if f == "step":
        v = u
        for _ in range(spec.L - 1):
            v = k0(v)
        return v
    if f == "ntk":
        rf = u
        ntk = u
        for _ in range(2, spec.L + 1):
            if spec.bias:
                ntk = (ntk + 1) * k0(rf)
            else:
                ntk = ntk * k0(rf)
            rf = k1(rf)
            ntk = ntk + rf
        if spec.normalized:
            ntk = ntk / ntk_unnormalized_at_one(spec.L, spec.bias)
        return ntk
    if f == "laplace":
        return exp(-spec.c * sqrt(1 - u))
    if f == "genexp":
        return exp(-spec.c * power(1 - u, spec.gamma))
    if f == "gauss":
        return exp(-spec.c * (1 - u))
    if f == "series":
        acc = 0 * u
        for b in reversed(spec.coeffs):
            acc = acc * u + b
        return acc
    raise UnknownKernelError(spec.family)  # pragma: no cover


def kernel_eval(spec, u):
    """kappa(u) for a scalar or array u in [-1, 1] (rounding beyond 1 is clamped)."""
    uc = _clamp(u)
    out = _generic_eval(
        spec,
        uc,
        _k0,
        _k1,
        lambda x: np.sqrt(np.maximum(x, 0.0)),
        np.exp,
        lambda x, g: np.maximum(x, 0.0) ** g,
    )
    return _scalar(np.asarray(out, dtype=np.float64), u)


def kernel_eval_complex(spec, z):
    """Analytic continuation of kappa into the open unit disk (series families only)."""
    if not spec.series_capable:
        raise DomainError(f"{spec.family} is not analytic in the unit disk")
    z = np.asarray(z, dtype=np.complex128)

    def k0(w):
        return 0.5 + np.arcsin(w) / np.pi

    def k1(w):
        return (w * (np.pi - np.arccos(w)) + np.sqrt(1.0 - w * w)) / np.pi

    return _generic_eval(spec, z, k0, k1, np.sqrt, np.exp, np.power)


def kernel_eval_mp(spec, u):
    """Evaluate kappa at an mpmath number (used by the high-precision quadrature)."""
    import mpmath as mp

    def k0(w):
        return (mp.pi - mp.acos(w)) / mp.pi

    def k1(w):
        return (w * (mp.pi - mp.acos(w)) + mp.sqrt(max(1 - w * w, 0))) / mp.pi

    return _generic_eval(spec, mp.mpf(u), k0, k1, mp.sqrt, mp.exp, mp.power)
