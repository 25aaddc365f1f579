"""Sub-modality decisions of a trained model, without retraining.

Trains on the synthetic corpus (or loads ``--model``), then reports metrics of
every modality subset on the test split and the entanglement of each eigenstate.
"""

import argparse

import numpy as np

from qmf.data import generate_synthetic
from qmf.interpret import ALL_SUBSETS, entanglement_report, subset_metrics
from qmf.model import QMFModel
from qmf.trainer import RunConfig, train


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--model", default=None, help="saved model directory; trains one if omitted")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    ds = generate_synthetic(args.n, seed=7)
    if args.model:
        model = QMFModel.load(args.model)
    else:
        model, _ = train(ds, RunConfig(epochs=args.epochs, seed=args.seed))

    print(f"{'subset':<8}{'acc2':>7}{'mae':>7}{'corr':>7}")
    for subset in ALL_SUBSETS:
        m = subset_metrics(model, ds.test, subset)
        print(f"{''.join(subset):<8}{m.acc2:7.3f}{m.mae:7.3f}{m.corr:7.3f}")

    rows = entanglement_report(model.observable)
    purities = np.array([list(r["purity"].values()) for r in rows])
    print(f"\neigenstate reduced purity per one-vs-rest cut (1 = separable), {len(rows)} aspects")
    print("mean", np.round(purities.mean(axis=0), 3), "min", np.round(purities.min(axis=0), 3))


if __name__ == "__main__":
    main()
