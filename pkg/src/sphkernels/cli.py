"""Command-line entry point: ``sphkernels <command> [options]``.

Commands write one CSV or JSON document to ``--out`` (or stdout).  Errors go to
stderr as a single ``code: message`` line; the exit status is 2 for usage and
configuration errors and 3 for numerical failures.
"""

import argparse
import csv
import io
import json
import sys

import numpy as np

from .endpoints import decay_prediction, endpoint_expansion
from .errors import ConfigError, ExpansionUnknownError, FitError, SphKernelsError
from .kernels import KernelSpec, kappa_at_one, kernel_eval
from .regress import ExperimentConfig, default_lambda_grid, experiment_synthetic, table_to_csv, table_to_json
from .spectrum import (
    compute_spectrum,
    empirical_constant,
    fit_decay,
    mercer_reconstruct,
    trace_partial_sums,
)

COMMANDS = ("spectrum", "decay", "predict", "mercer", "krr", "rf")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(p, kmax_default):
    p.add_argument("kernel", nargs="?", help="kernel spec, e.g. ntk:L=3,bias=0,norm=1")
    p.add_argument("--d", type=int, default=None, help="ambient dimension (points on S^{d-1})")
    p.add_argument("--kmax", type=int, default=None, help=f"largest degree k (default {kmax_default})")
    p.add_argument("--route", choices=("series", "quadrature", "auto"), default=None)
    p.add_argument("--nodes", type=int, default=None, help="quadrature nodes per half interval")


def _add_output(p):
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--config", default=None, help="flat 'key = value' file; flags override it")


def build_parser():
    parser = _Parser(prog="sphkernels", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("spectrum", help="eigenvalues mu_0..mu_K")
    _add_common(p, 40)
    _add_output(p)

    p = sub.add_parser("decay", help="fitted vs predicted eigenvalue decay")
    _add_common(p, 80)
    p.add_argument("--fit-range", default=None, help="k range a:b for the fit (default 15:61)")
    p.add_argument("--tol", type=float, default=None, help="allowed |slope - exponent| (default 0.2)")
    _add_output(p)

    p = sub.add_parser("predict", help="endpoint expansion and predicted decay")
    p.add_argument("kernel", nargs="?")
    p.add_argument("--d", type=int, default=None)
    _add_output(p)

    p = sub.add_parser("mercer", help="Mercer reconstruction error and trace defect")
    _add_common(p, 400)
    p.add_argument("--grid", type=int, default=None, help="number of t points in [-0.9, 0.9] (default 181)")
    _add_output(p)

    for name, help_ in (("krr", "kernel ridge learning curves"), ("rf", "random-feature ridge learning curves")):
        p = sub.add_parser(name, help=help_)
        if name == "krr":
            p.add_argument("--kernel", action="append", dest="kernels", default=None, help="repeatable")
        else:
            p.add_argument("--depth", action="append", type=int, dest="depths", default=None, help="1 or 2, repeatable")
            p.add_argument("--schedule", choices=("sqrt", "linear"), default=None, help="width m = ceil(sqrt(n)) or n")
        p.add_argument("--target", choices=("f1", "f2"), default=None)
        p.add_argument("--d", type=int, default=None)
        p.add_argument("--n-grid", default=None, help="comma-separated sample sizes")
        p.add_argument("--lambda-min", action="append", type=float, default=None, help="repeatable")
        p.add_argument("--test-size", type=int, default=None)
        p.add_argument("--seeds", type=int, default=None, help="number of replicates")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        _add_output(p)
    return parser


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------

def read_config(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


_LIST_KEYS = {"kernels": str, "depths": int, "lambda_min": float}
_SCALAR_TYPES = {
    "d": int, "kmax": int, "nodes": int, "grid": int, "test_size": int, "seeds": int, "seed": int, "tol": float,
}


def _merge(args):
    """Fill unset flags from the config file, then apply defaults."""
    opts = {k: v for k, v in vars(args).items()}
    if args.config:
        for key, raw in read_config(args.config).items():
            key = {"kernel": "kernels", "depth": "depths"}.get(key, key) if args.command in ("krr", "rf") else key
            if key not in opts:
                raise ConfigError(f"unknown config key {key!r} for {args.command}")
            if opts[key] is not None:
                continue
            try:
                if key in _LIST_KEYS:
                    sep = ";" if key == "kernels" else ","
                    opts[key] = [_LIST_KEYS[key](v.strip()) for v in raw.split(sep) if v.strip()]
                else:
                    opts[key] = _SCALAR_TYPES.get(key, str)(raw)
            except ValueError:
                raise ConfigError(f"bad value {raw!r} for config key {key!r}") from None
    return opts


def _require_kernel(opts):
    if not opts.get("kernel"):
        raise ConfigError(f"{opts['command']} needs a kernel spec")
    return KernelSpec.parse(opts["kernel"])


def _dimension(opts, default=3):
    d = opts.get("d") if opts.get("d") is not None else default
    if d < 3:
        raise ConfigError("--d must be >= 3")
    return d


def _kmax(opts, default):
    k = opts.get("kmax") if opts.get("kmax") is not None else default
    if k < 1:
        raise ConfigError("--kmax must be >= 1")
    return k


def _fit_range(text):
    text = text or "15:61"
    a, sep, b = text.partition(":")
    try:
        lo, hi = int(a), int(b)
    except ValueError:
        raise ConfigError(f"--fit-range must look like a:b, got {text!r}") from None
    if not sep or lo < 1 or hi <= lo:
        raise ConfigError(f"--fit-range needs 1 <= a < b, got {text!r}")
    return lo, hi


def _spectrum_kwargs(opts, route):
    if opts.get("nodes") is not None and route == "quadrature":
        return {"nodes": opts["nodes"]}
    return {}


def _resolve_route(spec, route):
    route = route or "auto"
    if route == "auto":
        return "series" if spec.series_capable else "quadrature"
    return route


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _report_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else k, obj[k])
        else:
            w.writerow([prefix, repr(obj) if isinstance(obj, float) else obj])

    walk("", report)
    return buf.getvalue()


def _report(report, fmt):
    if fmt == "csv":
        return _report_csv(report)
    return json.dumps(report, sort_keys=True, indent=1) + "\n"


def cmd_spectrum(opts):
    spec = _require_kernel(opts)
    d, k_max = _dimension(opts), _kmax(opts, 40)
    route = _resolve_route(spec, opts.get("route"))
    sp = compute_spectrum(spec, d, k_max, route, **_spectrum_kwargs(opts, route))
    return sp.to_json() if opts.get("format") == "json" else sp.to_csv()


def _prediction_dict(spec, d):
    try:
        exp_ = endpoint_expansion(spec)
    except ExpansionUnknownError as exc:
        return None, {"available": False, "reason": str(exc)}
    pred = decay_prediction(spec, d)
    out = {
        "available": True,
        "nu": exp_.nu,
        "c_plus": exp_.c_plus,
        "c_minus": exp_.c_minus,
        "super_smooth": exp_.super_smooth,
        "exponent": pred.exponent,
        "const_even": pred.const_even,
        "const_odd": pred.const_odd,
        "vanishing_parity": pred.vanishing_parity,
        "super_polynomial": pred.super_polynomial,
    }
    return pred, out


def cmd_predict(opts):
    spec = _require_kernel(opts)
    d = _dimension(opts)
    _, out = _prediction_dict(spec, d)
    out.update({"kernel": str(spec), "d": d})
    return _report(out, opts.get("format"))


def cmd_decay(opts):
    spec = _require_kernel(opts)
    d = _dimension(opts)
    lo, hi = _fit_range(opts.get("fit_range"))
    k_max = _kmax(opts, max(80, hi))
    tol = opts.get("tol") if opts.get("tol") is not None else 0.2
    route = _resolve_route(spec, opts.get("route"))
    sp = compute_spectrum(spec, d, k_max, route, **_spectrum_kwargs(opts, route))
    pred, pred_out = _prediction_dict(spec, d)
    parities = {}
    verdicts = []
    for parity in ("even", "odd"):
        entry = {}
        try:
            fit = fit_decay(sp, parity, lo, hi)
        except FitError as exc:
            entry.update({"status": FitError.code, "message": str(exc)})
            parities[parity] = entry
            continue
        entry.update({"status": "ok", "slope": fit.slope, "r_squared": fit.r_squared, "n_points": fit.n_points})
        if pred is not None and not pred.super_polynomial:
            const = pred.constant(parity)
            emp = empirical_constant(sp, parity, pred.exponent)
            entry["empirical_constant"] = emp
            entry["predicted_constant"] = const
            entry["constant_ratio"] = emp / const if const != 0 else None
            entry["pass"] = abs(fit.slope - pred.exponent) <= tol
            verdicts.append(entry["pass"])
        parities[parity] = entry
    report = {
        "kernel": str(spec),
        "d": d,
        "route": route,
        "k_max": k_max,
        "fit_range": [lo, hi],
        "tolerance": tol,
        "prediction": pred_out,
        "fits": parities,
        "pass": all(verdicts) if verdicts else None,
    }
    return _report(report, opts.get("format"))


def cmd_mercer(opts):
    spec = _require_kernel(opts)
    d, k_max = _dimension(opts), _kmax(opts, 400)
    route = _resolve_route(spec, opts.get("route"))
    sp = compute_spectrum(spec, d, k_max, route, **_spectrum_kwargs(opts, route))
    n_grid = opts.get("grid") or 181
    t = np.linspace(-0.9, 0.9, n_grid)
    err = np.abs(mercer_reconstruct(sp, t) - kernel_eval(spec, t))
    trace = float(trace_partial_sums(sp)[-1])
    k1 = kappa_at_one(spec)
    report = {
        "kernel": str(spec),
        "d": d,
        "route": route,
        "k_max": k_max,
        "grid_points": int(n_grid),
        "max_grid_error": float(err.max()),
        "argmax_t": float(t[int(err.argmax())]),
        "trace_partial_sum": trace,
        "kappa_one": k1,
        "trace_defect": k1 - trace,
    }
    return _report(report, opts.get("format"))


def _n_grid(text):
    if not text:
        return (64, 128, 256, 512, 1024, 2048, 4096)
    try:
        vals = tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"--n-grid must be comma-separated integers, got {text!r}") from None
    if not vals:
        raise ConfigError("--n-grid is empty")
    return vals


def _experiment(opts, model):
    base = ExperimentConfig()
    cfg = ExperimentConfig(
        kernels=tuple(opts.get("kernels") or base.kernels)
        if model == "krr"
        else tuple(f"rf{k}" for k in (opts.get("depths") or (1, 2))),
        target=opts.get("target") or ("f1" if model == "krr" else "f2"),
        d=opts.get("d") if opts.get("d") is not None else base.d,
        n_grid=_n_grid(opts.get("n_grid")),
        lambda_grid=tuple(default_lambda_grid()),
        lambda_mins=tuple(opts.get("lambda_min") or base.lambda_mins),
        test_size=opts.get("test_size") or base.test_size,
        seeds=opts.get("seeds") or base.seeds,
        master_seed=opts.get("seed") if opts.get("seed") is not None else 0,
        model=model,
        rf_schedule=opts.get("schedule") or "sqrt",
    )
    if model == "krr":
        cfg.kernels = tuple(str(KernelSpec.parse(k)) for k in cfg.kernels)
    cfg.validate()
    rows = experiment_synthetic(cfg)
    if opts.get("format") == "json":
        meta = {
            "model": model,
            "target": cfg.target,
            "d": cfg.d,
            "test_size": cfg.test_size,
            "seeds": cfg.seeds,
            "master_seed": cfg.master_seed,
            "lambda_grid": [float(v) for v in cfg.lambda_grid],
        }
        return table_to_json(rows, meta)
    return table_to_csv(rows)


def cmd_krr(opts):
    return _experiment(opts, "krr")


def cmd_rf(opts):
    return _experiment(opts, "rf")


HANDLERS = {
    "spectrum": cmd_spectrum,
    "decay": cmd_decay,
    "predict": cmd_predict,
    "mercer": cmd_mercer,
    "krr": cmd_krr,
    "rf": cmd_rf,
}


def run(argv=None):
    """Run a command and return its output text (raises on error)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise ConfigError(f"missing command; choose one of {', '.join(COMMANDS)}")
    opts = _merge(args)
    return HANDLERS[args.command](opts), opts.get("out")


def main(argv=None):
    try:
        text, out = run(argv)
        if out:
            with open(out, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except SphKernelsError as exc:
        msg = " ".join(str(exc).split())
        sys.stderr.write(f"{exc.code}: {msg}\n")
        return exc.exit_status
    except OSError as exc:
        sys.stderr.write(f"io-error: {exc}\n")
        return 2
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical-failure: {exc}\n")
        return 3
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
