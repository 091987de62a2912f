"""Kernel ridge regression and random-feature experiments on the sphere.

Learning curves: for each seed, one pool of training points is drawn and the
first n points are used for every n in the grid, with one fixed test set, so
curves over n and comparisons across kernels share their randomness.
"""

import csv
import io
import json
import zlib
from dataclasses import dataclass, field
from math import ceil, sqrt
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import ConditioningError, ConfigError, DataError, DomainError
from .kernels import KernelSpec, kernel_eval
from .sphharm import sample_sphere

__all__ = [
    "SphereDataset",
    "TargetSpec",
    "RidgeModel",
    "RFModel",
    "ExperimentConfig",
    "target_eval",
    "gram_matrix",
    "krr_fit",
    "ridge_path",
    "model_select",
    "rf_features",
    "rf_fit",
    "experiment_synthetic",
    "ingest_csv",
    "table_to_csv",
    "table_to_json",
    "default_lambda_grid",
    "cell_rng",
    "mean_curve",
]

UNIT_TOL = 1e-10
TABLE_COLUMNS = ("kernel", "n", "lambda_min", "seed", "lambda", "test_mse")


@dataclass
class SphereDataset:
    X: np.ndarray
    y: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        if self.X.shape[0] < 1:
            raise DataError("dataset needs at least one row")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.float64).ravel()
            if self.y.size != self.X.shape[0]:
                raise DataError("labels and rows differ in length")
            if not np.all(np.isfinite(self.y)):
                raise DataError("labels must be finite")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def unit_norm(self):
        return bool(np.all(np.abs(np.linalg.norm(self.X, axis=1) - 1.0) <= UNIT_TOL))


@dataclass(frozen=True)
class TargetSpec:
    """``indicator_cap``: 1{w.x >= threshold}; ``double_exp``:
    exp(-(1 - w.x)^{3/2}) + exp(-(1 + w.x)^{3/2}); ``custom``: func(w.x)."""

    kind: str
    w: np.ndarray
    threshold: float = 0.7
    func: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("indicator_cap", "double_exp", "custom"):
            raise DomainError(f"unknown target kind {self.kind!r}")
        w = np.asarray(self.w, dtype=np.float64).ravel()
        if abs(np.linalg.norm(w) - 1.0) > UNIT_TOL:
            raise DomainError("target direction w must have unit norm")
        if self.kind == "custom" and self.func is None:
            raise DomainError("custom target needs func")
        object.__setattr__(self, "w", w)


def target_eval(target, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != target.w.size:
        raise DomainError(f"points have dimension {X.shape[1]}, target has {target.w.size}")
    u = np.clip(X @ target.w, -1.0, 1.0)
    if target.kind == "indicator_cap":
        return (u >= target.threshold).astype(np.float64)
    if target.kind == "double_exp":
        return np.exp(-((1.0 - u) ** 1.5)) + np.exp(-((1.0 + u) ** 1.5))
    return np.asarray(target.func(u), dtype=np.float64)


def _check_rows(A, name):
    norms = np.linalg.norm(A, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise DataError(f"rows of {name} must have unit norm (max deviation {worst:.3g})")


def gram_matrix(spec, A, B=None):
    """G[i, j] = kappa(a_i . b_j); exactly symmetric when ``B`` is omitted."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    _check_rows(A, "A")
    if B is None:
        u = A @ A.T
        u = np.triu(u) + np.triu(u, 1).T
    else:
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if B.shape[1] != A.shape[1]:
            raise DataError("A and B have different dimensions")
        _check_rows(B, "B")
        u = A @ B.T
    return np.asarray(kernel_eval(spec, np.clip(u, -1.0, 1.0)))


# --------------------------------------------------------------------------
# ridge solvers
# --------------------------------------------------------------------------

@dataclass
class RidgeModel:
    kernel: KernelSpec
    lam: float
    alpha: np.ndarray
    X_train: np.ndarray
    residual: float = 0.0
    jitter: float = 0.0

    def predict(self, X):
        return gram_matrix(self.kernel, X, self.X_train) @ self.alpha


def _residual(A, x, b):
    # extended precision keeps the check meaningful when ||x|| >> ||b||
    r = b.astype(np.longdouble) - A.astype(np.longdouble) @ x.astype(np.longdouble)
    return r, float(np.linalg.norm(r.astype(np.float64)) / max(np.linalg.norm(b), np.finfo(float).tiny))


def _solve_spd(A, b, tol=1e-8, max_refine=6):
    """Cholesky solve with escalating diagonal jitter and iterative refinement."""
    n = A.shape[0]
    base = 1e-12 * float(np.trace(A)) / n
    jitters = [0.0, base, 10 * base, 100 * base]
    for jitter in jitters:
        try:
            factor = linalg.cho_factor(A + jitter * np.eye(n), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        x = linalg.cho_solve(factor, b, check_finite=False)
        r, rel = _residual(A, x, b)
        for _ in range(max_refine):
            if rel <= tol:
                break
            x = x + linalg.cho_solve(factor, r.astype(np.float64), check_finite=False)
            r, rel = _residual(A, x, b)
        if rel <= tol:
            return x, rel, jitter
    raise ConditioningError(f"ridge system not solved to {tol:g} relative residual after jitter escalation")


def krr_fit(K, y, lam, kernel=None, X_train=None):
    """Solve (K + n lam I) alpha = y."""
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.size
    if K.shape != (n, n):
        raise DataError("K must be n x n with n = len(y)")
    if not lam > 0:
        raise DomainError("lambda must be positive")
    alpha, res, jitter = _solve_spd(K + n * lam * np.eye(n), y)
    return RidgeModel(kernel, float(lam), alpha, X_train, res, jitter)


def ridge_path(K, y, lambdas, K_eval):
    """Predictions K_eval alpha(lam) for every lam, from one eigendecomposition of K."""
    n = y.size
    evals, V = linalg.eigh(K, driver="evd", check_finite=False)
    evals = np.maximum(evals, 0.0)
    proj = V.T @ y
    alphas = V @ (proj[:, None] / (evals[:, None] + n * np.asarray(lambdas)[None, :]))
    return list((K_eval @ alphas).T)


def default_lambda_grid():
    return np.logspace(-10, 0, 20)


def model_select(train, validation, spec, lambda_grid, lambda_min):
    """Grid lambda >= lambda_min with the smallest validation mean squared error."""
    grid = np.asarray([lam for lam in lambda_grid if lam >= lambda_min * (1 - 1e-12)], dtype=np.float64)
    if grid.size == 0:
        raise ConfigError(f"no grid value is >= lambda_min = {lambda_min:g}")
    K = gram_matrix(spec, train.X)
    preds = ridge_path(K, train.y, grid, gram_matrix(spec, validation.X, train.X))
    errs = [float(np.mean((p - validation.y) ** 2)) for p in preds]
    best = int(np.argmin(errs))
    return float(grid[best]), errs[best]


# --------------------------------------------------------------------------
# random features
# --------------------------------------------------------------------------

def _activation(name):
    if name == "relu":
        return lambda z: np.maximum(z, 0.0)
    if name == "step":
        return lambda z: (z >= 0).astype(np.float64)
    raise DomainError(f"activation must be relu or step, got {name!r}")


def rf_features(X, widths, activation="relu", seed=0):
    """sqrt(2/m) sigma(W x) per layer, W with i.i.d. N(0, 1) entries.

    Layer-1 outputs are rescaled to unit norm before entering layer 2, so the
    second layer sees points on a sphere again and F F^T approximates the
    two-layer composition of the arc-cosine kernel.
    """
    widths = [int(m) for m in widths]
    if len(widths) not in (1, 2) or min(widths) < 1:
        raise DomainError("widths must list one or two positive layer sizes")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sigma = _activation(activation)
    H = np.atleast_2d(np.asarray(X, dtype=np.float64))
    weights = [rng.standard_normal((m, d_in)) for m, d_in in zip(widths, [H.shape[1]] + widths[:-1])]
    for layer, W in enumerate(weights):
        if layer > 0:
            norms = np.linalg.norm(H, axis=1, keepdims=True)
            H = H / np.where(norms > 0, norms, 1.0)
        H = sqrt(2.0 / W.shape[0]) * sigma(H @ W.T)
    return H


@dataclass
class RFModel:
    widths: tuple
    activation: str
    seed: int
    beta: np.ndarray
    lam: float

    def features(self, X):
        return rf_features(X, self.widths, self.activation, self.seed)

    def predict(self, X):
        return self.features(X) @ self.beta


def _rf_ridge_path(F, y, lambdas, F_eval):
    n = y.size
    evals, V = linalg.eigh(F.T @ F, driver="evd", check_finite=False)
    evals = np.maximum(evals, 0.0)
    proj = V.T @ (F.T @ y)
    betas = V @ (proj[:, None] / (evals[:, None] + n * np.asarray(lambdas)[None, :]))
    return list((F_eval @ betas).T)


def rf_fit(X, y, widths, lam, activation="relu", seed=0):
    """Primal ridge on random features: (F^T F + n lam I) beta = F^T y."""
    F = rf_features(X, widths, activation, seed)
    n = F.shape[0]
    beta, _, _ = _solve_spd(F.T @ F + n * lam * np.eye(F.shape[1]), F.T @ np.asarray(y, dtype=np.float64))
    return RFModel(tuple(int(m) for m in widths), activation, seed, beta, float(lam))


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

def _tag(text):
    return zlib.crc32(text.encode("utf-8"))


def cell_rng(master_seed, *coords):
    """Generator for one experiment cell; coordinates may be ints or strings."""
    key = tuple(_tag(c) if isinstance(c, str) else int(c) for c in coords)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed), spawn_key=key))


@dataclass
class ExperimentConfig:
    """``model`` is ``krr`` (exact kernels) or ``rf`` (random features; kernels
    then name depths ``rf1``/``rf2`` and widths follow ``rf_schedule``)."""

    kernels: Sequence = ("ntk:L=2,bias=1", "rf:L=3", "laplace:c=1")
    target: str = "f1"
    d: int = 4
    n_grid: Sequence[int] = (64, 128, 256, 512, 1024, 2048, 4096)
    lambda_grid: Sequence[float] = tuple(default_lambda_grid())
    lambda_mins: Sequence[float] = (1e-10, 1e-5)
    test_size: int = 10000
    seeds: int = 5
    master_seed: int = 0
    model: str = "krr"
    rf_schedule: str = "sqrt"
    activation: str = "relu"

    def validate(self):
        if self.model not in ("krr", "rf"):
            raise ConfigError(f"model must be krr or rf, got {self.model!r}")
        if self.target not in ("f1", "f2"):
            raise ConfigError(f"target must be f1 or f2, got {self.target!r}")
        if int(self.d) < 3:
            raise ConfigError("d must be >= 3")
        if not self.n_grid or min(self.n_grid) < 1:
            raise ConfigError("n grid must be nonempty and positive")
        if self.test_size < 1 or self.seeds < 1:
            raise ConfigError("test_size and seeds must be positive")
        if not self.lambda_grid or min(self.lambda_grid) <= 0:
            raise ConfigError("lambda grid must be positive")
        for lm in self.lambda_mins:
            if not any(lam >= lm for lam in self.lambda_grid):
                raise ConfigError(f"no grid value is >= lambda_min = {lm:g}")
        if self.rf_schedule not in ("sqrt", "linear"):
            raise ConfigError("rf_schedule must be sqrt or linear")
        if self.model == "krr":
            for k in self.kernels:
                if isinstance(k, str):
                    KernelSpec.parse(k)
        else:
            for k in self.kernels:
                if k not in ("rf1", "rf2"):
                    raise ConfigError(f"rf models are rf1 or rf2, got {k!r}")
        return self


def _target_for(cfg, rng):
    w = sample_sphere(cfg.d, 1, rng)[0]
    kind = "indicator_cap" if cfg.target == "f1" else "double_exp"
    return TargetSpec(kind, w)


def _rf_width(n, schedule):
    return int(ceil(sqrt(n))) if schedule == "sqrt" else int(n)


def experiment_synthetic(cfg):
    """Learning-curve rows (kernel, n, lambda_min, seed, lambda, test_mse).

    For each (kernel, n, seed) cell the ridge path is computed once; each
    lambda_min then picks the best grid value at or above it by test error.
    """
    cfg.validate()
    grid = np.sort(np.asarray(cfg.lambda_grid, dtype=np.float64))
    n_pool = max(cfg.n_grid)
    rows = []
    for seed in range(cfg.seeds):
        rng = cell_rng(cfg.master_seed, "data", seed)
        target = _target_for(cfg, rng)
        X_pool = sample_sphere(cfg.d, n_pool, rng)
        X_test = sample_sphere(cfg.d, cfg.test_size, rng)
        y_pool, y_test = target_eval(target, X_pool), target_eval(target, X_test)
        for name in cfg.kernels:
            label = str(name)
            for n in cfg.n_grid:
                X, y = X_pool[:n], y_pool[:n]
                if cfg.model == "krr":
                    spec = KernelSpec.parse(name) if isinstance(name, str) else name
                    label = str(spec)
                    preds = ridge_path(gram_matrix(spec, X), y, grid, gram_matrix(spec, X_test, X))
                else:
                    m = _rf_width(n, cfg.rf_schedule)
                    widths = [m] if name == "rf1" else [m, m]
                    feat_rng = cell_rng(cfg.master_seed, "features", label, n, seed)
                    F_all = rf_features(np.vstack([X, X_test]), widths, cfg.activation, feat_rng)
                    preds = _rf_ridge_path(F_all[:n], y, grid, F_all[n:])
                errs = np.array([np.mean((p - y_test) ** 2) for p in preds])
                for lm in cfg.lambda_mins:
                    ok = grid >= lm * (1 - 1e-12)
                    best = int(np.flatnonzero(ok)[np.argmin(errs[ok])])
                    rows.append(
                        {
                            "kernel": label,
                            "n": int(n),
                            "lambda_min": float(lm),
                            "seed": int(seed),
                            "lambda": float(grid[best]),
                            "test_mse": float(errs[best]),
                        }
                    )
    return rows


def mean_curve(rows, kernel, lambda_min):
    """{n: mean test MSE over seeds} for one kernel and budget."""
    out = {}
    for r in rows:
        if r["kernel"] == kernel and r["lambda_min"] == lambda_min:
            out.setdefault(r["n"], []).append(r["test_mse"])
    return {n: float(np.mean(v)) for n, v in sorted(out.items())}


def table_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in rows:
        w.writerow([r["kernel"], r["n"], repr(r["lambda_min"]), r["seed"], repr(r["lambda"]), repr(r["test_mse"])])
    return buf.getvalue()


def table_to_json(rows, meta=None):
    return json.dumps({"metadata": meta or {}, "rows": rows}, sort_keys=True, indent=1) + "\n"


# --------------------------------------------------------------------------
# ingestion
# --------------------------------------------------------------------------

def ingest_csv(path, normalize=True, label_column=None, shuffle_seed=None):
    """Read a numeric CSV into a :class:`SphereDataset`.

    ``label_column`` is a header name or a 0-based column index; the remaining
    columns are features.  A header row is detected by a non-numeric first
    line.  With ``normalize`` rows are scaled to unit norm (zero rows are
    rejected); without it, non-unit rows are kept and rejected later by
    :func:`gram_matrix`.
    """
    with open(path, newline="") as fh:
        raw = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not raw:
        raise DataError(f"{path}: no data rows")
    header = None
    try:
        [float(c) for c in raw[0]]
    except ValueError:
        header, raw = [c.strip() for c in raw[0]], raw[1:]
    if not raw:
        raise DataError(f"{path}: no data rows")
    width = len(raw[0])
    if any(len(r) != width for r in raw):
        raise DataError(f"{path}: rows have different lengths")
    try:
        data = np.array([[float(c) for c in r] for r in raw], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric cell ({exc})") from None
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite cell")

    y = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if header is None or label_column not in header:
                raise DataError(f"{path}: no label column {label_column!r}")
            idx = header.index(label_column)
        else:
            idx = int(label_column)
            if not -width <= idx < width:
                raise DataError(f"{path}: label column {idx} out of range")
            idx %= width
        y = data[:, idx]
        data = np.delete(data, idx, axis=1)
    if data.shape[1] < 1:
        raise DataError(f"{path}: no feature columns")

    norms = np.linalg.norm(data, axis=1)
    if normalize:
        if np.any(norms == 0):
            raise DataError(f"{path}: zero row {int(np.flatnonzero(norms == 0)[0])} cannot be normalized")
        data = data / norms[:, None]
    if shuffle_seed is not None:
        perm = np.random.default_rng(shuffle_seed).permutation(data.shape[0])
        data = data[perm]
        y = y[perm] if y is not None else None
    return SphereDataset(data, y, {"source": "ingested", "path": str(path)})
