"""Train the default model on the synthetic corpus and print its test metrics.

    python3 scripts/run_synthetic.py --n 500 --epochs 100 --out runs/synthetic
"""

import argparse
import json
from pathlib import Path

from qmf.data import generate_synthetic
from qmf.trainer import RunConfig, evaluate, train, write_run_log


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--data-seed", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--out", default=None, help="directory for model + run log")
    args = p.parse_args()

    ds = generate_synthetic(args.n, seed=args.data_seed)
    config = RunConfig(epochs=args.epochs, seed=args.seed)
    model, records = train(ds, config)
    metrics = evaluate(model, ds.test)
    print(f"train L1 {records[0]['train_loss']:.3f} -> {records[-1]['train_loss']:.3f}")
    print(json.dumps(metrics.to_dict(), indent=1))
    if args.out:
        out = Path(args.out)
        model.save(out / "model")
        write_run_log(out / "runlog.jsonl", records, config, metrics)


if __name__ == "__main__":
    main()
