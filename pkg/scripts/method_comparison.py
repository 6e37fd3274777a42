"""Tuner vs cross-validation baselines over a range of sample sizes.

For each n, tunes (M, k) three ways on the same training set under a shared
budget, then reports held-out error, suboptimality against the
grid-exhaustive best, base fits spent, and tuning wall-time.

    python scripts/method_comparison.py --sizes 200,400,800 --predictor tree
"""

import argparse

import ecv
from ecv.streams import derive_seed


def parse():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="200,400",
                    help="comma-separated training sizes")
    ap.add_argument("--p", type=int, default=20)
    ap.add_argument("--test-n", type=int, default=5000)
    ap.add_argument("--model", default="quad", choices=["linear", "quad", "tanh"])
    ap.add_argument("--predictor", default="tree",
                    choices=["ridge", "ridgeless", "knn", "tree"])
    ap.add_argument("--nu", type=float, default=0.7)
    ap.add_argument("--m-max", type=int, default=30)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    return ap.parse_args()


def main():
    args = parse()
    sizes = [int(s) for s in args.sizes.split(",")]
    specs = {
        "ridge": ecv.PredictorSpec.ridge(0.1),
        "ridgeless": ecv.PredictorSpec.ridgeless(),
        "knn": ecv.PredictorSpec.knn(5),
        "tree": ecv.PredictorSpec.tree(),
    }
    spec = specs[args.predictor]

    print(f"model={args.model} p={args.p} predictor={args.predictor} "
          f"m_max={args.m_max} metric=nmse")
    print(f"{'n':>6} {'method':>14} {'m':>4} {'k':>6} {'nmse':>8} "
          f"{'subopt':>8} {'fits':>6} {'seconds':>8}")
    for n in sizes:
        train = ecv.simulate(ecv.SyntheticSpec(args.model, n=n, p=args.p,
                                               seed=derive_seed(args.seed, "train", n)))
        test = ecv.simulate(ecv.SyntheticSpec(args.model, n=args.test_n, p=args.p,
                                              seed=derive_seed(args.seed, "test", n)))
        cfg = ecv.EcvConfig(nu=args.nu, m_max=args.m_max, seed=args.seed)
        grid = ecv.build_grid(n, args.nu)
        baselines = [
            ecv.BaselineSpec("sample-split", args.m_max, grid, seed=args.seed),
            ecv.BaselineSpec("kfold", args.m_max, grid, seed=args.seed,
                             folds=args.folds),
        ]
        report = ecv.compare(train, test, spec, cfg, baselines,
                             threads=args.threads)
        for row in report.rows:
            print(f"{n:>6} {row.method:>14} {row.m_hat:>4} {row.k_hat:>6} "
                  f"{row.test_error:>8.4f} {row.suboptimality:>8.4f} "
                  f"{row.base_fits:>6} {row.tune_seconds:>8.3f}")
        print(f"{'':>6} {'grid best':>14} {'':>4} {'':>6} "
              f"{report.best_grid_error:>8.4f}")


if __name__ == "__main__":
    main()
