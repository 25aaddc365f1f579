"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
(divergence or a violated state invariant).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import checks, qcore
from .data import SPLITS, SyntheticConfig, generate_synthetic, load_dataset, read_kv, write_dataset
from .errors import DataError, InvariantError, NumericalError
from .interpret import interpretation_report
from .model import QMFModel
from .trainer import (
    VARIANTS,
    RunConfig,
    evaluate,
    grid_search,
    pretrain_nontextual,
    train,
    write_run_log,
)

log = logging.getLogger("qmf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# flag name -> RunConfig field
RUN_FLAGS = {
    "tdim": "t_dim",
    "vdim": "v_dim",
    "adim": "a_dim",
    "window_lengths": "window_lengths",
    "k": "K",
    "hidden": "hidden",
    "batch": "batch",
    "lr": "lr",
    "epochs": "epochs",
    "variant": "variant",
    "seed": "seed",
    "clip_norm": "clip_norm",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_run_flags(p: argparse.ArgumentParser):
    d = RunConfig.__dataclass_fields__
    g = p.add_argument_group("model / training (a --config file sets these too; flags win)")
    g.add_argument("--config", help="flat key=value file of RunConfig fields")
    g.add_argument("--tdim", type=int, help=f"textual state dimension (default {d['t_dim'].default})")
    g.add_argument("--vdim", type=int, help=f"visual state dimension (default {d['v_dim'].default})")
    g.add_argument("--adim", type=int, help=f"acoustic state dimension (default {d['a_dim'].default})")
    g.add_argument("--window-lengths", help="comma-separated window lengths (default 1,2)")
    g.add_argument("--k", type=int, help=f"number of observable eigenstates (default {d['K'].default})")
    g.add_argument("--hidden", type=int, help=f"output-network hidden width (default {d['hidden'].default})")
    g.add_argument("--batch", type=int, help=f"mini-batch size (default {d['batch'].default})")
    g.add_argument("--lr", type=float, help=f"RMSprop learning rate (default {d['lr'].default})")
    g.add_argument("--epochs", type=int, help=f"training epochs (default {d['epochs'].default})")
    g.add_argument("--variant", choices=VARIANTS, help="model variant (default qmf)")
    g.add_argument("--seed", type=int, help="seed for every random draw (default 0)")
    g.add_argument("--clip-norm", type=float, help="global gradient-norm clip, 0 disables (default 5.0)")


def _run_config(args) -> RunConfig:
    values = {}
    if args.config:
        names = {f.name for f in fields(RunConfig)}
        for k, v in read_kv(args.config).items():
            key = RUN_FLAGS.get(k.replace("-", "_"), k)
            if key not in names:
                raise UsageError(f"{args.config}: unknown key {k!r}")
            values[key] = v
    for flag, key in RUN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    types = {f.name: f.type for f in fields(RunConfig)}
    for key, v in list(values.items()):
        if isinstance(v, str) and key not in ("window_lengths", "variant"):
            kind = types[key]
            if key == "clip_norm":
                values[key] = float(v)
            else:
                values[key] = float(v) if "float" in str(kind) else int(v)
    if values.get("clip_norm") == 0:
        values["clip_norm"] = None
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


# -- subcommands ----------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = SyntheticConfig(L=args.L) if args.L else SyntheticConfig()
    ds = generate_synthetic(args.n, args.seed, cfg)
    write_dataset(ds, args.out)
    print(f"wrote {len(ds.train)}/{len(ds.valid)}/{len(ds.test)} sentences to {args.out}")
    return EXIT_OK


def _pretrained(args) -> dict:
    out = {}
    for m in ("v", "a"):
        path = getattr(args, f"pretrained_{m}", None)
        if path:
            out[m] = np.load(path)
    return out


def cmd_train(args) -> int:
    config = _run_config(args)
    ds = load_dataset(args.data)
    model, records = train(ds, config, pretrained_args=_pretrained(args) or None, embeddings_path=args.embeddings)
    metrics = evaluate(model, ds.test) if ds.test else None
    out = Path(args.out)
    model.save(out / "model")
    write_run_log(out / "runlog.jsonl", records, config, metrics)
    print(json.dumps({"best_val_loss": min(r["val_loss"] for r in records),
                      "test": metrics.to_dict() if metrics else None}))
    return EXIT_OK


def cmd_eval(args) -> int:
    model = _load_model(args.model)
    ds = load_dataset(args.data)
    print(json.dumps(evaluate(model, ds[args.split]).to_dict()))
    return EXIT_OK


def cmd_pretrain(args) -> int:
    config = _run_config(args)
    ds = load_dataset(args.data)
    table = pretrain_nontextual(args.modality, ds, config)
    np.save(args.out, table)
    print(f"wrote {args.modality} argument table {table.shape} to {args.out}")
    return EXIT_OK


def cmd_gridsearch(args) -> int:
    base = _run_config(args)
    ds = load_dataset(args.data)
    res = grid_search(ds, budget=args.budget, base=base, seed=base.seed, jobs=args.jobs, log_path=args.out)
    print(json.dumps({"best_config": asdict(res.best_config),
                      "test": res.best_metrics.to_dict() if res.best_metrics else None}))
    return EXIT_OK


def cmd_interpret(args) -> int:
    model = _load_model(args.model)
    ds = load_dataset(args.data)
    report = interpretation_report(model, ds[args.split], max_fragment_sentences=args.fragments)
    text = json.dumps(report, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_check(args) -> int:
    results = checks.run_all(seed=args.seed, trials=args.trials, grad_models=args.grad_models)
    print(checks.format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def cmd_inspect(args) -> int:
    from .fusion import local_contexts, global_mixture
    from .interpret import sentence_states

    model = _load_model(args.model)
    out = {
        "config": asdict(model.config),
        "beta": model.beta().tolist(),
        "eigenstates": [qcore.ket_to_json(k) for k in model.observable.kets()],
    }
    if args.data:
        ds = load_dataset(args.data)
        split = ds[args.split]
        if not 0 <= args.sentence < len(split):
            raise DataError(f"sentence index {args.sentence} out of range for {args.split} ({len(split)})")
        s = split[args.sentence]
        kets, lam = sentence_states(model, s)
        mask = s.mask[: len(kets)]
        if model.config.context_mode == "global":
            contexts = [(0, len(kets), global_mixture(kets, lam, mask))]
        else:
            contexts = list(local_contexts(kets, lam, mask, model.config.window_lengths))
        out["sentence"] = {
            "split": args.split,
            "index": args.sentence,
            "words": [qcore.ket_to_json(k) for k in kets],
            "weights": lam[: len(kets)].tolist(),
            "contexts": [{"start": a, "length": b, "density": qcore.density_to_json(r)} for a, b, r in contexts],
        }
    text = json.dumps(out)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _load_model(path) -> QMFModel:
    p = Path(path)
    if (p / "model").is_dir():
        p = p / "model"
    if not (p / "model.json").exists():
        raise DataError(f"{path}: no saved model found")
    return QMFModel.load(p)


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qmf", description="Complex-valued multimodal sentiment model.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--n", type=int, default=500, help="number of sentences (default 500)")
    p.add_argument("--seed", type=int, default=7, help="generator seed (default 7)")
    p.add_argument("--L", type=int, default=None, help="padded length (default 20)")
    p.add_argument("--out", required=True, help="output .jsonl path; .cfg and .lexicon are written alongside")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model and write the run log")
    p.add_argument("--data", required=True, help="dataset .jsonl")
    p.add_argument("--out", default="run", help="output directory (default ./run)")
    p.add_argument("--embeddings", help="word-vector text file (default: random vectors)")
    p.add_argument("--pretrained-v", help="visual argument table from `pretrain` (.npy)")
    p.add_argument("--pretrained-a", help="acoustic argument table from `pretrain` (.npy)")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics of a saved model on one split")
    p.add_argument("--model", required=True, help="model directory (or a train --out directory)")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=SPLITS, default="test", help="(default test)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pretrain", help="learn a visual or acoustic argument table")
    p.add_argument("--modality", choices=("v", "a"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output .npy path")
    _add_run_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("gridsearch", help="random hyper-parameter search")
    p.add_argument("--data", required=True)
    p.add_argument("--budget", type=int, default=50, help="configurations to try (default 50)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes (default 1)")
    p.add_argument("--out", default=None, help="JSON-lines log of every run (default: none)")
    _add_run_flags(p)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("interpret", help="sub-modality decisions, fragment scores, entanglement")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=SPLITS, default="test", help="(default test)")
    p.add_argument("--fragments", type=int, default=5, help="sentences with per-word scores (default 5)")
    p.add_argument("--out", default=None, help="JSON output path (default stdout)")
    p.set_defaults(func=cmd_interpret)

    p = sub.add_parser("check", help="run the state-algebra properties and gradient checks")
    p.add_argument("--seed", type=int, default=0, help="(default 0)")
    p.add_argument("--trials", type=int, default=1000, help="randomized trials per property (default 1000)")
    p.add_argument("--grad-models", type=int, default=20, help="tiny models to gradient-check (default 20)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("inspect", help="dump eigenstates and, optionally, one sentence's states as JSON")
    p.add_argument("--model", required=True)
    p.add_argument("--data", default=None, help="dataset to draw a sentence from (default: none)")
    p.add_argument("--split", choices=SPLITS, default="test", help="(default test)")
    p.add_argument("--sentence", type=int, default=0, help="sentence index within the split (default 0)")
    p.add_argument("--out", default=None, help="JSON output path (default stdout)")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"qmf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"qmf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, InvariantError) as exc:
        print(f"qmf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
