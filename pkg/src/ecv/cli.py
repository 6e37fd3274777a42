"""Command-line interface: simulate | tune | surface | compare.

Every numeric cell in the emitted JSON/CSV files uses 17 significant
digits, so outputs are byte-stable across repeated runs and thread counts.
Failures exit nonzero with a single machine-readable line on stderr of the
form ``<error-class>: <message>``.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .baselines import BaselineSpec, compare
from .data import Dataset, SyntheticSpec, load_csv, simulate, write_csv
from .errors import EcvError, InvalidParameterError
from .predictors import PredictorSpec, fit_ensemble
from .risk import INFINITE, CenteringSpec, null_risk, risk_surface
from .streams import derive_seed
from .tuning import EcvConfig, build_grid, ecv_tune, tune_feature_fraction

# ============================================================
# deterministic serialization
# ============================================================


def fmt_float(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def fmt_cell(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(float(v))
    return str(v)


def json_dumps(obj, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits and stable key order."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v) or math.isinf(v):
            return '"' + fmt_float(v) + '"'
        return fmt_float(v)
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [inner + json_dumps(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            inner + json_dumps(str(k), 0) + ": " + json_dumps(v, indent + 1)
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    raise InvalidParameterError(f"cannot serialize {type(obj).__name__}")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_csv_rows(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_cell(c) for c in row))
    _write_text(path, "\n".join(lines) + "\n")


# ============================================================
# argument handling
# ============================================================


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidParameterError(message)


def _add_common(p: _Parser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (falls back to ECV_SEED, then 0)")
    p.add_argument("--config", default=None,
                   help="JSON file of defaults; explicit flags override it")
    p.add_argument("--outdir", default=".", help="directory for output files")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: available parallelism)")


def _add_data_source(p: _Parser, with_test: bool) -> None:
    p.add_argument("--data", default=None, help="training CSV path")
    p.add_argument("--response", default="y",
                   help="response column name, or index if --no-header")
    p.add_argument("--no-header", action="store_true", dest="no_header")
    p.add_argument("--model", choices=["linear", "quad", "tanh"], default=None)
    p.add_argument("--n", default=None,
                   help="synthetic training rows (compare accepts a comma list)")
    p.add_argument("--p", type=int, default=None, help="synthetic features")
    p.add_argument("--rho-ar", type=float, default=0.5, dest="rho_ar")
    p.add_argument("--sigma", type=float, default=0.5)
    if with_test:
        p.add_argument("--test-data", default=None, dest="test_data")
        p.add_argument("--test-n", type=int, default=2000, dest="test_n")


def _add_predictor(p: _Parser) -> None:
    p.add_argument("--predictor", default="tree",
                   choices=["tree", "ridge", "ridgeless", "knn", "null"])
    p.add_argument("--lambda", type=float, default=0.1, dest="lam")
    p.add_argument("--neighbors", type=int, default=5)
    p.add_argument("--min-node-size", type=int, default=5, dest="min_node_size")
    p.add_argument("--feature-fraction", type=float, default=1.0 / 3.0,
                   dest="feature_fraction")
    p.add_argument("--max-depth", type=int, default=None, dest="max_depth")


def _add_estimation(p: _Parser) -> None:
    p.add_argument("--nu", type=float, default=0.4)
    p.add_argument("--m0", type=int, default=10)
    p.add_argument("--centering", choices=["avg", "mom"], default="avg")
    p.add_argument("--mom-a", type=float, default=1.0, dest="mom_a")
    p.add_argument("--mode", choices=["subagging", "bagging"],
                   default="subagging")


def build_parser() -> _Parser:
    parser = _Parser(prog="ecv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write synthetic train/test CSVs")
    _add_common(sim)
    sim.add_argument("--model", choices=["linear", "quad", "tanh"],
                     required=False, default=None)
    sim.add_argument("--n", type=int, default=1000)
    sim.add_argument("--p", type=int, default=None)
    sim.add_argument("--rho-ar", type=float, default=0.5, dest="rho_ar")
    sim.add_argument("--sigma", type=float, default=0.5)
    sim.add_argument("--test-n", type=int, default=2000, dest="test_n")
    sim.add_argument("--train-out", default="train.csv", dest="train_out")
    sim.add_argument("--test-out", default="test.csv", dest="test_out")
    sim.set_defaults(func=cmd_simulate)

    tune = sub.add_parser("tune", help="tune ensemble and subsample sizes")
    _add_common(tune)
    _add_data_source(tune, with_test=False)
    _add_predictor(tune)
    _add_estimation(tune)
    tune.add_argument("--delta", type=float, default=0.05)
    tune.add_argument("--m-max", type=int, default=None, dest="m_max")
    tune.add_argument("--zeta", type=float, default=None)
    tune.add_argument("--selection", choices=["additive", "multiplicative"],
                      default="additive")
    tune.add_argument("--normalize", action="store_true",
                      help="divide the surface by the null risk before selection")
    tune.add_argument("--m-list", default="1,2,5,10,20,50,inf", dest="m_list")
    tune.add_argument("--mtry-grid", default=None, dest="mtry_grid",
                      help="comma list of feature fractions to try first (trees)")
    tune.set_defaults(func=cmd_tune)

    surf = sub.add_parser("surface", help="estimated risk over (k, m)")
    _add_common(surf)
    _add_data_source(surf, with_test=True)
    _add_predictor(surf)
    _add_estimation(surf)
    surf.add_argument("--k-grid", default=None, dest="k_grid",
                      help="comma list of subsample sizes (default: built grid)")
    surf.add_argument("--m-list", default="1,2,5,10,20,50,inf", dest="m_list")
    surf.add_argument("--with-test", action="store_true", dest="with_test",
                      help="add held-out risks of freshly fitted ensembles")
    surf.set_defaults(func=cmd_surface)

    cmp_ = sub.add_parser("compare", help="tuner vs cross-validation baselines")
    _add_common(cmp_)
    _add_data_source(cmp_, with_test=True)
    _add_predictor(cmp_)
    _add_estimation(cmp_)
    cmp_.add_argument("--delta", type=float, default=0.05)
    cmp_.add_argument("--m-max", type=int, default=50, dest="m_max")
    cmp_.add_argument("--alpha", type=float, default=5.0 / 6.0)
    cmp_.add_argument("--folds", type=int, default=5)
    cmp_.add_argument("--metric", choices=["nmse", "mse"], default="nmse")
    cmp_.set_defaults(func=cmd_compare)

    return parser


def _load_config_file(path: str) -> dict:
    import json

    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise InvalidParameterError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise InvalidParameterError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InvalidParameterError("config file must hold a JSON object")
    return cfg


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    pre = _Parser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)

    config_values = {}
    if known.config is not None:
        config_values = _load_config_file(known.config)
        if argv and argv[0] in ("simulate", "tune", "surface", "compare"):
            sub = next(
                a for a in parser._actions
                if isinstance(a, argparse._SubParsersAction)
            ).choices[argv[0]]
            dests = {a.dest for a in sub._actions} - {"help", "config", "func"}
            unknown = set(config_values) - dests
            if unknown:
                raise InvalidParameterError(
                    f"unknown config keys for {argv[0]}: {sorted(unknown)}"
                )
            sub.set_defaults(**config_values)

    args = parser.parse_args(argv)
    args.config_values = config_values
    if args.seed is None:
        env = os.environ.get("ECV_SEED")
        args.seed = int(env) if env is not None else 0
    return args


def _write_provenance(args, argv) -> None:
    resolved = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "config_values")
    }
    obj = {
        "command": args.command,
        "argv": list(argv),
        "config_file": args.config,
        "config_file_values": args.config_values,
        "resolved": resolved,
    }
    _write_text(Path(args.outdir) / f"{args.command}_provenance.json",
                json_dumps(obj) + "\n")


# ============================================================
# shared assembly helpers
# ============================================================


def _synthetic_spec(args, n: int, seed: int) -> SyntheticSpec:
    if args.model is None or args.p is None:
        raise InvalidParameterError(
            "synthetic data needs --model and --p (or provide --data)"
        )
    return SyntheticSpec(model=args.model, n=n, p=args.p, rho_ar=args.rho_ar,
                         sigma=args.sigma, seed=seed)


def _training_data(args) -> Dataset:
    if args.data is not None:
        response = args.response
        if args.no_header:
            try:
                response = int(response)
            except ValueError:
                raise InvalidParameterError(
                    "--no-header needs an integer --response index"
                ) from None
        return load_csv(args.data, response, has_header=not args.no_header)
    n = args.n
    if n is None:
        raise InvalidParameterError("synthetic data needs --n")
    return simulate(_synthetic_spec(args, int(n), derive_seed(args.seed, "train")))


def _test_data(args) -> Dataset:
    if getattr(args, "test_data", None) is not None:
        response = args.response
        if args.no_header:
            response = int(response)
        return load_csv(args.test_data, response, has_header=not args.no_header)
    if args.data is not None:
        raise InvalidParameterError("CSV input needs --test-data for held-out rows")
    return simulate(_synthetic_spec(args, args.test_n,
                                    derive_seed(args.seed, "test")))


def _predictor_spec(args) -> PredictorSpec:
    kind = args.predictor
    if kind == "ridge":
        return PredictorSpec.ridge(args.lam)
    if kind == "knn":
        return PredictorSpec.knn(args.neighbors)
    if kind == "tree":
        return PredictorSpec.tree(min_node_size=args.min_node_size,
                                  feature_fraction=args.feature_fraction,
                                  max_depth=args.max_depth)
    return PredictorSpec(kind=kind)


def _centering(args) -> CenteringSpec:
    return CenteringSpec(method=args.centering, mom_a=args.mom_a)


def _parse_m_list(text: str):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if tok in ("inf", "Inf", "INF"):
            out.append(INFINITE)
            continue
        try:
            m = int(tok)
        except ValueError:
            raise InvalidParameterError(f"bad ensemble size {tok!r} in list") from None
        if m < 1:
            raise InvalidParameterError("ensemble sizes must be at least 1")
        out.append(m)
    if not out:
        raise InvalidParameterError("ensemble-size list is empty")
    return out


def _surface_rows(surface, m_list):
    return surface.rows(tuple(m_list))


# ============================================================
# subcommands
# ============================================================


def cmd_simulate(args, argv) -> int:
    if args.model is None or args.p is None:
        raise InvalidParameterError("simulate needs --model and --p")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    train = simulate(_synthetic_spec(args, args.n, derive_seed(args.seed, "train")))
    test = simulate(_synthetic_spec(args, args.test_n,
                                    derive_seed(args.seed, "test")))
    write_csv(train, str(outdir / args.train_out))
    write_csv(test, str(outdir / args.test_out))
    _write_provenance(args, argv)
    print(f"wrote {outdir / args.train_out} ({train.n} rows) and "
          f"{outdir / args.test_out} ({test.n} rows)")
    return 0


def cmd_tune(args, argv) -> int:
    data = _training_data(args)
    spec = _predictor_spec(args)
    cfg = EcvConfig(nu=args.nu, m0=args.m0, delta=args.delta,
                    centering=_centering(args), mode=args.mode,
                    m_max=args.m_max, zeta=args.zeta,
                    selection=args.selection, seed=args.seed,
                    normalize=args.normalize)
    m_list = _parse_m_list(args.m_list)

    mtry_table = None
    if args.mtry_grid is not None:
        fractions = [float(t) for t in args.mtry_grid.split(",") if t.strip()]
        best_fraction, table, result = tune_feature_fraction(
            data, spec, cfg, fractions, threads=args.threads)
        mtry_table = {
            "chosen_fraction": best_fraction,
            "candidates": [{"fraction": f, "estimate": e} for f, e in table],
        }
        spec = PredictorSpec.tree(min_node_size=spec.min_node_size,
                                  feature_fraction=best_fraction,
                                  max_depth=spec.max_depth)
    else:
        result = ecv_tune(data, spec, cfg, threads=args.threads)

    trace = result.trace_dict()
    trace["null_risk"] = result.surface.null_risk
    trace["predictor"] = spec.to_json_dict()
    trace["tuner"] = cfg.to_json_dict()
    if mtry_table is not None:
        trace["feature_fraction_stage"] = mtry_table

    outdir = Path(args.outdir)
    _write_text(outdir / "tune_result.json", json_dumps(trace) + "\n")
    _write_csv_rows(outdir / "tune_surface.csv",
                    ["k", "m", "estimate", "oob_min", "oob_mean", "skipped_pairs"],
                    _surface_rows(result.surface, m_list))
    _write_provenance(args, argv)
    print(f"k_hat={result.k_hat} m_hat={result.m_hat} "
          f"estimated_risk={fmt_float(result.estimated_risk_at_selection)}")
    return 0


def cmd_surface(args, argv) -> int:
    data = _training_data(args)
    spec = _predictor_spec(args)
    if args.k_grid is not None:
        grid = [int(t) for t in args.k_grid.split(",") if t.strip()]
    else:
        grid = build_grid(data.n, args.nu)
    m_list = _parse_m_list(args.m_list)
    surf = risk_surface(data, spec, grid, args.m0, args.mode, _centering(args),
                        args.seed, threads=args.threads)
    rows = _surface_rows(surf, m_list)
    header = ["k", "m", "estimate", "oob_min", "oob_mean", "skipped_pairs"]

    if args.with_test:
        test = _test_data(args)
        header.append("test_risk")
        out_rows = []
        for row in rows:
            k, m = row[0], row[1]
            if m == INFINITE:
                out_rows.append(row + (None,))
                continue
            if k == 0:
                risk = float(np.mean(test.y**2))
            else:
                ens = fit_ensemble(spec, data, k, int(m), args.mode,
                                   derive_seed(args.seed, "fresh", k, int(m)))
                pred = ens.member_matrix(test.x).mean(axis=0)
                risk = float(np.mean((pred - test.y) ** 2))
            out_rows.append(row + (risk,))
        rows = out_rows

    outdir = Path(args.outdir)
    _write_csv_rows(outdir / "surface.csv", header, rows)
    _write_provenance(args, argv)
    print(f"wrote {outdir / 'surface.csv'} ({len(rows)} rows)")
    return 0


def _sizes(args):
    if args.data is not None:
        return [None]
    if args.n is None:
        raise InvalidParameterError("synthetic data needs --n")
    return [int(t) for t in str(args.n).split(",") if t.strip()]


def cmd_compare(args, argv) -> int:
    spec = _predictor_spec(args)
    sizes = _sizes(args)
    outdir = Path(args.outdir)
    written = []
    for n in sizes:
        if n is None:
            train = _training_data(args)
            test = _test_data(args)
            out_name = "compare.csv"
        else:
            train = simulate(_synthetic_spec(args, n, derive_seed(args.seed,
                                                                  "train", n)))
            test = simulate(_synthetic_spec(args, args.test_n,
                                            derive_seed(args.seed, "test", n)))
            out_name = "compare.csv" if len(sizes) == 1 else f"compare_n{n}.csv"
        cfg = EcvConfig(nu=args.nu, m0=args.m0, delta=args.delta,
                        centering=_centering(args), mode=args.mode,
                        m_max=args.m_max, seed=args.seed)
        grid = build_grid(train.n, args.nu)
        baselines = [
            BaselineSpec(method="sample-split", m_max=args.m_max, grid=grid,
                         seed=args.seed, alpha=args.alpha),
            BaselineSpec(method="kfold", m_max=args.m_max, grid=grid,
                         seed=args.seed, folds=args.folds),
        ]
        report = compare(train, test, spec, cfg, baselines, metric=args.metric,
                         threads=args.threads)
        _write_csv_rows(
            outdir / out_name,
            ["method", "m_hat", "k_hat", "tune_seconds", f"test_{args.metric}",
             "suboptimality", "base_fits"],
            [(r.method, r.m_hat, r.k_hat, r.tune_seconds, r.test_error,
              r.suboptimality, r.base_fits) for r in report.rows],
        )
        written.append(out_name)
    _write_provenance(args, argv)
    print("wrote " + ", ".join(str(outdir / w) for w in written))
    return 0


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = parse_args(list(argv))
        return args.func(args, list(argv))
    except EcvError as exc:
        text = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"{exc.error_class}: {text}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
