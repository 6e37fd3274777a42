"""Estimated vs held-out risk across subsample and ensemble sizes.

Fits one pilot ensemble per grid subsample size, extrapolates the risk to
a range of ensemble sizes from the two OOB components, then checks the
estimates against freshly fitted ensembles scored on held-out data.

    python scripts/risk_surface_demo.py --n 500 --p 50 --predictor ridge
"""

import argparse

import numpy as np

import ecv
from ecv.streams import derive_seed


def parse():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--p", type=int, default=50)
    ap.add_argument("--test-n", type=int, default=5000)
    ap.add_argument("--model", default="quad", choices=["linear", "quad", "tanh"])
    ap.add_argument("--predictor", default="ridge",
                    choices=["ridge", "ridgeless", "knn", "tree"])
    ap.add_argument("--nu", type=float, default=0.7)
    ap.add_argument("--m0", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    return ap.parse_args()


def main():
    args = parse()
    specs = {
        "ridge": ecv.PredictorSpec.ridge(0.1),
        "ridgeless": ecv.PredictorSpec.ridgeless(),
        "knn": ecv.PredictorSpec.knn(5),
        "tree": ecv.PredictorSpec.tree(),
    }
    spec = specs[args.predictor]
    train = ecv.simulate(ecv.SyntheticSpec(args.model, n=args.n, p=args.p,
                                           seed=derive_seed(args.seed, "train")))
    test = ecv.simulate(ecv.SyntheticSpec(args.model, n=args.test_n, p=args.p,
                                          seed=derive_seed(args.seed, "test")))

    grid = ecv.build_grid(args.n, args.nu)
    surface = ecv.risk_surface(train, spec, grid, args.m0, "subagging",
                               ecv.CenteringSpec.avg(), args.seed)
    sizes = (1, 2, 5, 10, 20)

    print(f"model={args.model} n={args.n} p={args.p} predictor={args.predictor}")
    print(f"null risk {ecv.null_risk(train):.4f} "
          f"(test {float(np.mean(test.y ** 2)):.4f})")
    header = "    k | " + " | ".join(f"      M={m:<3d}" for m in sizes) + " |    M=inf"
    print(header)
    print("-" * len(header))
    for k in grid:
        cells = []
        for m in sizes:
            est = surface.value(k, m)
            if est is None:
                cells.append("    missing")
                continue
            if k == 0:
                held = float(np.mean(test.y**2))
            else:
                ens = ecv.fit_ensemble(spec, train, k, m, "subagging",
                                       derive_seed(args.seed, "fresh", k, m))
                pred = ecv.predict_ensemble(ens, test.x)
                held = float(np.mean((pred - test.y) ** 2))
            cells.append(f"{est:6.2f}/{held:4.2f}")
        lim = surface.value(k, ecv.INFINITE)
        tail = "  missing" if lim is None else f"{lim:9.3f}"
        print(f"{k:5d} | " + " | ".join(cells) + " | " + tail)
    print("(cells are estimated/held-out risk; the limit column has no "
          "held-out counterpart)")


if __name__ == "__main__":
    main()
