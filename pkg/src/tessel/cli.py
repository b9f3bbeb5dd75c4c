"""Command-line front end: ``tessel {select,assess,split,bench}``.

Every command is deterministic given ``--seed`` and writes JSON that embeds
the resolved configuration and the library version. A ``--config job.json``
file may supply any option by its long name (dashes as underscores); unknown
keys are rejected before any computation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DimensionMismatchError,
    NumericalError,
    SizeError,
    TesselError,
    ValidationError,
)
from .kernels import KernelSpec, condition
from .measures import (
    PointSet,
    UnitCubeUniform,
    candidate_set,
    format_csv,
    iso_transform,
    parse_measure,
    read_csv,
)
from .rng import MC_SAMPLE, make_rng
from .selection import canonical_method, default_lengthscale, select_indices

log = logging.getLogger("tessel")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _dump(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="")


def _write(text, path):
    Path(path).write_text(text, encoding="utf-8", newline="")


def _resolved(args):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    return cfg


def _kernel(args, dim, n):
    if args.kernel:
        text = args.kernel
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text(encoding="utf-8")
        spec = KernelSpec.from_json(text)
        if spec.dim != dim:
            raise DimensionMismatchError(f"kernel has dimension {spec.dim}, data has {dim}")
        return spec
    theta = args.theta if args.theta is not None else default_lengthscale(n, dim)
    return KernelSpec.matern52(theta, dim)


def _need(args, *names):
    missing = ["--" + n.replace("_", "-") for n in names if getattr(args, n) is None]
    if missing:
        raise ValidationError(f"missing required options: {' '.join(missing)}")


def _read_points(path):
    header, vals = read_csv(path)
    return header, PointSet(vals)


def _read_vector(path):
    header, vals = read_csv(path)
    if vals.shape[1] != 1:
        raise ValidationError(f"{path}: expected a single column, found {vals.shape[1]}")
    return vals[:, 0]


# ---------------------------------------------------------------- select

def cmd_select(args):
    _need(args, 'method', 'n', 'out')
    method = canonical_method(args.method)
    measure = parse_measure(args.measure) if args.measure else None
    if args.candidates:
        header, S = _read_points(args.candidates)
        S_sel = S
    elif measure is not None:
        d = measure.dim
        uniform = isinstance(measure, UnitCubeUniform)
        U = candidate_set(d, args.n, include_vertices=uniform and d <= 20, size=args.n_candidates)
        S = U if uniform else iso_transform(U, measure)
        # FSSF fills the unit cube; other methods work in the input space
        S_sel = U if method == "fssf" else S
        header = [f"x{i + 1}" for i in range(d)]
    else:
        raise ValidationError("give --candidates or --measure")
    fixed = fixed_sel = None
    if args.fixed:
        _, fixed = _read_points(args.fixed)
        if fixed.dim != S.dim:
            raise DimensionMismatchError(f"fixed points have dimension {fixed.dim}, candidates {S.dim}")
        fixed_sel = fixed
        if S_sel is not S:
            fixed_sel = PointSet(np.column_stack(
                [m.cdf(fixed.points[:, j]) for j, m in enumerate(measure.marginals)]))
    kern = None
    if method == "herding":
        kern = _kernel(args, S.dim, args.n)
    idx, scores, _ = select_indices(method, args.n, S_sel, fixed_sel, measure, kern, seed=args.seed)
    _write(format_csv(S.points[idx], header), args.out)
    prov = {
        "version": __version__,
        "command": "select",
        "config": _resolved(args),
        "method": method,
        "seed": args.seed,
        "kernel": kern.to_dict() if kern is not None else None,
        "indices": [int(i) for i in idx],
        "scores": [float(s) for s in scores],
        "n_candidates": S.size,
    }
    _dump(prov, args.json or (str(args.out) + ".json"))
    return EXIT_OK


# ---------------------------------------------------------------- assess

def _pair(text, what):
    parts = [p for p in text.split(",") if p]
    if len(parts) != 2:
        raise ValidationError(f"--{what} expects 'X.csv,y.csv'")
    return parts


def cmd_assess(args):
    _need(args, 'train', 'test')
    from .surrogate import fit
    from .weighting import (
        WeightedTestSet,
        error_interpolant,
        optimal_prime_weights,
        optimal_weights,
        q2_report,
        check_disjoint,
    )

    xm_path, ym_path = _pair(args.train, "train")
    xn_path, yn_path = _pair(args.test, "test")
    _, X_m = _read_points(xm_path)
    _, X_n = _read_points(xn_path)
    y_m, y_n = _read_vector(ym_path), _read_vector(yn_path)
    if X_m.dim != X_n.dim:
        raise DimensionMismatchError("train and test inputs differ in dimension")
    if y_m.size != X_m.size or y_n.size != X_n.size:
        raise DimensionMismatchError("one response per input row required")
    check_disjoint(X_m, X_n)
    d = X_m.dim
    if bool(args.pred) == bool(args.fit_kriging):
        raise ValidationError("give exactly one of --pred and --fit-kriging")
    model = None
    if args.fit_kriging:
        model = fit(X_m, y_m)
        eta_n, eta_m = model(X_n), model(X_m)
    else:
        eta_n = _read_vector(args.pred)
        if eta_n.size != X_n.size:
            raise DimensionMismatchError("one prediction per test row required")
        # without training predictions the model is taken to interpolate
        eta_m = _read_vector(args.pred_train) if args.pred_train else None
        if eta_m is not None and eta_m.size != X_m.size:
            raise DimensionMismatchError("one training prediction per training row required")
    info = {"weights": args.weights}
    if args.weights == "uniform":
        wts = WeightedTestSet.uniform(X_n)
        prime = None
    else:
        if args.mu_sample:
            _, mu = _read_points(args.mu_sample)
        elif args.measure:
            measure = parse_measure(args.measure)
            mu = PointSet(measure.sample(args.n_quad, make_rng(args.seed, MC_SAMPLE)))
        else:
            raise ValidationError("optimal weights need --measure or --mu-sample")
        if mu.dim != d:
            raise DimensionMismatchError("quadrature sample dimension differs from inputs")
        kern = _kernel(args, d, X_n.size)
        ck = condition(kern, X_m)
        dhat = error_interpolant(ck, y_m, eta_m) if eta_m is not None else None
        wts = optimal_weights(ck, X_n, mu, dhat)
        prime = None
        if args.prime:
            if model is None:
                raise ValidationError("--prime needs --fit-kriging (the predictor must be callable)")
            prime = optimal_prime_weights(ck, X_n, mu, model, float(np.mean(y_m)))
        info["kernel"] = kern.to_dict()
        info["n_quad"] = mu.size
        info["error_interpolant_zero"] = dhat is None or dhat.is_zero
    rep = q2_report(y_n, eta_n, wts, y_m=y_m if args.prime else None, prime_weights=prime)
    rep.provenance = {"version": __version__, "command": "assess", "config": _resolved(args),
                      "seed": args.seed, **info}
    if model is not None:
        rep.provenance["model"] = model.summary()
    _dump(rep.to_dict(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- split

def cmd_split(args):
    _need(args, 'data', 'train_out', 'test_out')
    header, data = read_csv(args.data)
    N = data.shape[0]
    if args.y_col:
        cols = [c.strip() for c in args.y_col.split(",")]
        missing = [c for c in cols if c not in header]
        if missing:
            raise ValidationError(f"columns {missing} not in header {header}")
        keep = [j for j, h in enumerate(header) if h not in cols]
    else:
        keep = list(range(len(header)))
    if not keep:
        raise ValidationError("no input columns left for splitting")
    if (args.ratio is None) == (args.n_test is None):
        raise ValidationError("give exactly one of --ratio and --n-test")
    if args.ratio is not None:
        if not 0.0 < args.ratio < 1.0:
            raise ValidationError("--ratio must lie in (0, 1)")
        n = int(round(args.ratio * N))
    else:
        n = args.n_test
    if not 1 <= n < N:
        raise SizeError(f"test size {n} must satisfy 1 <= n < N={N}")
    method = canonical_method(args.method)
    if method == "fssf":
        raise ValidationError("FSSF needs a known input distribution; use herding or support-points")
    X = data[:, keep]
    lo, hi = X.min(axis=0), X.max(axis=0)
    Z = (X - lo) / np.where(hi > lo, hi - lo, 1.0)
    kern = _kernel(args, Z.shape[1], n) if method == "herding" else None
    idx, scores, _ = select_indices(method, n, Z, None, None, kern, seed=args.seed)
    test = np.zeros(N, dtype=bool)
    test[idx] = True
    _write(format_csv(data[idx], header), args.test_out)
    _write(format_csv(data[~test], header), args.train_out)
    _dump({
        "version": __version__, "command": "split", "config": _resolved(args), "seed": args.seed,
        "method": method, "N": N, "n_test": n, "n_train": N - n,
        "kernel": kern.to_dict() if kern is not None else None,
        "test_indices": [int(i) for i in idx], "scores": [float(s) for s in scores],
    }, args.json or (str(args.test_out) + ".json"))
    return EXIT_OK


# ---------------------------------------------------------------- bench

def cmd_bench(args):
    _need(args, 'out')
    from .bench import SPLIT_RATIOS, get_case, run_completion_study, run_split_study, synthetic_split_dataset
    from .surrogate import FitConfig

    if args.case:
        case = get_case(args.case)
        if args.n_candidates is not None:
            from dataclasses import replace

            case = replace(case, n_candidates=args.n_candidates)
        res = run_completion_study(case, args.methods or ("fssf", "support_points", "herding"), args.seed,
                           m_values=args.m, n_max=args.n_max, mc_size=args.mc_size, loo=not args.no_loo)
    else:
        if args.dataset:
            header, data = read_csv(args.dataset)
            if not args.y_col or args.y_col not in header:
                raise ValidationError("--dataset needs --y-col naming the response column")
            j = header.index(args.y_col)
            X, y = np.delete(data, j, axis=1), data[:, j]
        elif args.synthetic:
            X, y = synthetic_split_dataset(args.synthetic, args.seed)
        else:
            raise ValidationError("give --case, --dataset or --synthetic")
        fit_config = FitConfig() if args.refit else None
        res = run_split_study(X, y, tuple(args.ratios or SPLIT_RATIOS), args.rcv_reps, args.seed,
                              methods=args.methods or ("herding", "support_points"),
                              fit_config=fit_config, loo=not args.no_loo)
    res.config["cli"] = _resolved(args)
    res.to_csv(args.out)
    _write(res.to_json(include_runtimes=args.runtimes), args.json or (str(args.out) + ".json"))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="tessel", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tessel {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of option defaults")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--theta", type=float, help="Matern-5/2 lengthscale for all inputs")
        sp.add_argument("--kernel", help="kernel spec as JSON text or path")

    s = sub.add_parser("select", help="greedy test-set selection")
    common(s)
    s.add_argument("--method")
    s.add_argument("--n", type=int)
    s.add_argument("--candidates")
    s.add_argument("--measure")
    s.add_argument("--n-candidates", type=int)
    s.add_argument("--fixed")
    s.add_argument("--out")
    s.add_argument("--json")
    s.set_defaults(func=cmd_select)

    a = sub.add_parser("assess", help="uniform and weighted Q2 of a predictor")
    common(a)
    a.add_argument("--train", help="X_m.csv,y_m.csv")
    a.add_argument("--test", help="X_n.csv,y_n.csv")
    a.add_argument("--pred", help="predictions at the test inputs")
    a.add_argument("--pred-train", help="predictions at the training inputs")
    a.add_argument("--fit-kriging", action="store_true")
    a.add_argument("--weights", choices=("uniform", "optimal"), default="optimal")
    a.add_argument("--prime", action="store_true", help="also report the primed coefficients")
    a.add_argument("--measure")
    a.add_argument("--mu-sample")
    a.add_argument("--n-quad", type=int, default=4096)
    a.add_argument("--out", default="-")
    a.set_defaults(func=cmd_assess)

    t = sub.add_parser("split", help="partition a dataset into train and test sets")
    common(t)
    t.add_argument("--data")
    t.add_argument("--method", default="herding")
    t.add_argument("--ratio", type=float)
    t.add_argument("--n-test", type=int)
    t.add_argument("--y-col", help="comma-separated columns ignored for splitting")
    t.add_argument("--train-out")
    t.add_argument("--test-out")
    t.add_argument("--json")
    t.set_defaults(func=cmd_split)

    b = sub.add_parser("bench", help="run an experiment protocol")
    common(b)
    b.add_argument("--case")
    b.add_argument("--dataset")
    b.add_argument("--synthetic", type=int, help="size of the synthetic split dataset")
    b.add_argument("--y-col")
    b.add_argument("--methods", nargs="+")
    b.add_argument("--m", type=int, nargs="+")
    b.add_argument("--n-max", type=int)
    b.add_argument("--n-candidates", type=int)
    b.add_argument("--mc-size", type=int, default=100_000)
    b.add_argument("--rcv-reps", type=int, default=200)
    b.add_argument("--ratios", type=float, nargs="+")
    b.add_argument("--refit", action="store_true", help="re-estimate lengthscales for every split")
    b.add_argument("--no-loo", action="store_true")
    b.add_argument("--runtimes", action="store_true", help="include wall times in the JSON")
    b.add_argument("--out")
    b.add_argument("--json")
    b.set_defaults(func=cmd_bench)
    return p


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(cfg, dict):
        raise ValidationError("config file must hold a JSON object")
    known = set(vars(args)) - {"func", "config", "command"}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ValidationError(f"unknown config keys: {unknown}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except ValidationError as exc:
        print(f"tessel: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"tessel: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"tessel: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"tessel: error: bad JSON: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TesselError as exc:
        print(f"tessel: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
