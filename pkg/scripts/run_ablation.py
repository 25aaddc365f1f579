"""Train the full model and the four ablation variants on one synthetic corpus.

Prints a table of test metrics, one row per variant.
"""

import argparse

from qmf.data import generate_synthetic
from qmf.trainer import VARIANTS, RunConfig, run_variant


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variants", nargs="+", default=list(VARIANTS), choices=VARIANTS)
    args = p.parse_args()

    ds = generate_synthetic(args.n, seed=7)
    print(f"{'variant':<16}{'acc2':>7}{'f1':>7}{'acc7':>7}{'mae':>7}{'corr':>7}")
    for v in args.variants:
        m = run_variant(v, ds, RunConfig(epochs=args.epochs, seed=args.seed)).metrics
        print(f"{v:<16}{m.acc2:7.3f}{m.f1:7.3f}{m.acc7:7.3f}{m.mae:7.3f}{m.corr:7.3f}")


if __name__ == "__main__":
    main()
