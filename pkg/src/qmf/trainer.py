"""Pretraining, training, evaluation, grid search and ablation variants."""

from __future__ import annotations

import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import RMSprop, clip_grad_norm
from .data import DatasetSplits, collate, load_embeddings
from .errors import DataError, NumericalError
from .model import ModelConfig, QMFModel, backward, forward_loss

log = logging.getLogger(__name__)

VARIANTS = ("qmf", "real", "rand-init", "global-mixture", "average-pool")

SEARCH_GRID = {
    "t_dim": [5, 10, 20],
    "v_dim": [5, 10, 20],
    "a_dim": [5, 10, 20],
    "window_lengths": [
        tuple(c) for r in range(1, 5) for c in itertools.combinations((1, 2, 3, 4), r)
    ],
    "K": [10, 20, 30, 50, 80],
    "hidden": [16, 32, 48, 64, 80],
    "batch": [32, 64, 96],
    "lr": [0.001, 0.002, 0.005, 0.008, 0.01],
}


@dataclass
class RunConfig:
    t_dim: int = 5
    v_dim: int = 5
    a_dim: int = 5
    window_lengths: tuple = (1, 2)
    K: int = 10
    hidden: int = 32
    batch: int = 32
    lr: float = 0.005
    epochs: int = 100
    seed: int = 0
    variant: str = "qmf"
    e_dim: int | None = None  # defaults to the dataset's embedding_dim
    clip_norm: float | None = 5.0
    decay: float = 0.9

    def __post_init__(self):
        if isinstance(self.window_lengths, str):
            self.window_lengths = tuple(int(x) for x in self.window_lengths.split(",") if x.strip())
        self.window_lengths = tuple(sorted(set(int(l) for l in self.window_lengths)))
        if not self.window_lengths:
            raise ValueError("window_lengths must not be empty")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for key in ("t_dim", "v_dim", "a_dim", "K", "hidden", "batch", "lr"):
            if getattr(self, key) not in SEARCH_GRID[key]:
                log.warning("%s=%s is outside the searched grid %s", key, getattr(self, key), SEARCH_GRID[key])
        if not set(self.window_lengths) <= {1, 2, 3, 4}:
            log.warning("window lengths %s fall outside {1,2,3,4}", self.window_lengths)


@dataclass
class Metrics:
    acc7: float
    acc2: float
    f1: float
    mae: float
    corr: float
    corr_defined: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    config: RunConfig
    model: QMFModel
    log: list
    metrics: Metrics | None = None


# -- metrics --------------------------------------------------------------------


def compute_metrics(pred, labels) -> Metrics:
    pred = np.asarray(pred, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if pred.size == 0:
        raise DataError("cannot evaluate an empty split")
    acc7 = float(np.mean(np.round(np.clip(pred, -3, 3)) == np.round(np.clip(labels, -3, 3))))
    nz = labels != 0
    if nz.any():
        truth = labels[nz] > 0
        guess = pred[nz] > 0
        acc2 = float(np.mean(truth == guess))
        tp = float(np.sum(truth & guess))
        fp = float(np.sum(~truth & guess))
        fn = float(np.sum(truth & ~guess))
        f1 = 2 * tp / (2 * tp + fp + fn) if tp > 0 else 0.0
    else:
        acc2 = f1 = 0.0
    mae = float(np.mean(np.abs(pred - labels)))
    if np.std(pred) == 0 or np.std(labels) == 0:
        corr, defined = 0.0, False
    else:
        corr, defined = float(np.corrcoef(pred, labels)[0, 1]), True
    return Metrics(acc7, acc2, f1, mae, corr, defined)


def evaluate(model: QMFModel, split) -> Metrics:
    split = list(split)
    if not split:
        raise DataError("cannot evaluate an empty split")
    pred = model.predict(split)
    return compute_metrics(pred, [s.label for s in split])


def l1_loss(model: QMFModel, split) -> float:
    split = list(split)
    pred = model.predict(split)
    return float(np.mean(np.abs(pred - np.array([s.label for s in split]))))


# -- model construction -----------------------------------------------------------


def model_config_for(config: RunConfig, dataset: DatasetSplits, modalities=("t", "v", "a"),
                     context_mode: str | None = None) -> ModelConfig:
    dims = dict(t_dim=config.t_dim, v_dim=config.v_dim, a_dim=config.a_dim, K=config.K)
    if config.variant == "real":
        # same parameter budget as the complex model: doubled dims and aspects
        dims = {k: 2 * v for k, v in dims.items()}
    return ModelConfig(
        vocab_size=len(dataset.vocab),
        e_dim=config.e_dim or dataset.config.embedding_dim,
        v_in=dataset.config.visual_dim,
        a_in=dataset.config.acoustic_dim,
        hidden=config.hidden,
        window_lengths=config.window_lengths,
        modalities=modalities,
        context_mode=context_mode or ("global" if config.variant == "global-mixture" else "local"),
        pooling="avg" if config.variant == "average-pool" else "max",
        real=config.variant == "real",
        **dims,
    )


def build_model(config: RunConfig, dataset: DatasetSplits, pretrained_args: dict | None = None,
                embeddings_path=None) -> QMFModel:
    rng = np.random.default_rng(config.seed)
    mcfg = model_config_for(config, dataset)
    emb = None
    if embeddings_path is not None:
        emb = load_embeddings(embeddings_path, dataset.vocab, mcfg.e_dim, rng)
    return QMFModel.initialize(
        mcfg, rng, dataset.vocab, dataset.lexicon, embeddings=emb,
        arguments=pretrained_args, random_text_arguments=config.variant == "rand-init",
    )


# -- training loop -----------------------------------------------------------------


def fit(model: QMFModel, dataset: DatasetSplits, config: RunConfig, rng: np.random.Generator):
    """Train ``model`` in place; return the best-validation snapshot and the epoch log.

    Only the train split drives updates and only the validation split drives
    model selection.
    """
    train, valid = list(dataset.train), list(dataset.valid)
    if not train:
        raise DataError("training split is empty")
    select_on = valid or train
    opt = RMSprop(lr=config.lr, decay=config.decay)
    best = model.copy()
    best_val = l1_loss(model, select_on)
    records = [{"epoch": 0, "train_loss": l1_loss(model, train), "val_loss": best_val}]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        for start in range(0, len(order), config.batch):
            batch = collate(train[i] for i in order[start:start + config.batch])
            try:
                _, tape = forward_loss(model, batch)
            except NumericalError as exc:
                raise NumericalError(f"{exc} at epoch {epoch}; config={asdict(config)}") from exc
            backward(tape, model)
            params = [p for p in model.params.values() if p.trainable]
            if config.clip_norm:
                clip_grad_norm(params, config.clip_norm)
            opt.step(model.params)
            model.project()
        rec = {"epoch": epoch, "train_loss": l1_loss(model, train), "val_loss": l1_loss(model, select_on)}
        if not np.isfinite(rec["train_loss"]):
            raise NumericalError(f"training diverged at epoch {epoch}; config={asdict(config)}")
        records.append(rec)
        log.info("epoch %d train %.4f val %.4f", epoch, rec["train_loss"], rec["val_loss"])
        if rec["val_loss"] < best_val:
            best_val, best = rec["val_loss"], model.copy()
    return best, records


def train(dataset: DatasetSplits, config: RunConfig, pretrained_args: dict | None = None,
          embeddings_path=None):
    """Returns ``(model, epoch_log)``; the model is the lowest-validation-loss snapshot."""
    model = build_model(config, dataset, pretrained_args, embeddings_path)
    # separate stream so that shuffling does not depend on how many draws initialisation made
    rng = np.random.default_rng([config.seed, 1])
    return fit(model, dataset, config, rng)


def pretrain_nontextual(modality: str, dataset: DatasetSplits, config: RunConfig) -> np.ndarray:
    """Learn a visual or acoustic argument table from unimodal data alone.

    The unimodal network is reducer -> global mixture of all words ->
    measurement -> output net, starting from random arguments.
    """
    if modality not in ("v", "a"):
        raise ValueError("pretraining is defined for the visual ('v') and acoustic ('a') modalities")
    mcfg = model_config_for(replace(config, variant="qmf"), dataset, modalities=(modality,), context_mode="global")
    model = QMFModel.initialize(mcfg, np.random.default_rng([config.seed, 2]))
    best, _ = fit(model, dataset, config, np.random.default_rng([config.seed, 3]))
    return best.params[f"theta.{modality}"].value.copy()


def run_variant(variant: str, dataset: DatasetSplits, config: RunConfig, **kw) -> RunResult:
    config = replace(config, variant=variant)
    model, records = train(dataset, config, **kw)
    metrics = evaluate(model, dataset.test) if dataset.test else None
    return RunResult(config, model, records, metrics)


# -- run log -----------------------------------------------------------------------


def write_run_log(path, records: list, config: RunConfig, metrics: Metrics | None, extra: dict | None = None):
    """JSON-lines: one record per epoch, then a final record.

    The wall-clock timestamp is confined to the final record's ``time`` field.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
        final = {"final": True, "config": asdict(config), "metrics": metrics.to_dict() if metrics else None}
        if extra:
            final.update(extra)
        final["time"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        fh.write(json.dumps(final) + "\n")


# -- grid search ---------------------------------------------------------------------


@dataclass
class GridResult:
    best_config: RunConfig
    best_metrics: Metrics
    runs: list = field(default_factory=list)  # dicts: config, val_loss, metrics


def sample_grid(grid: dict, budget: int, seed: int) -> list[dict]:
    keys = sorted(grid)
    sizes = [len(grid[k]) for k in keys]
    total = int(np.prod(sizes))
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(budget, total), replace=False)
    out = []
    for flat in picks:
        idx = np.unravel_index(int(flat), sizes)
        out.append({k: grid[k][i] for k, i in zip(keys, idx)})
    return out


def _grid_run(args):
    dataset, config = args
    model, records = train(dataset, config)
    best_val = min(r["val_loss"] for r in records)
    metrics = evaluate(model, dataset.test) if dataset.test else None
    return config, best_val, metrics


def grid_search(dataset: DatasetSplits, grid: dict | None = None, budget: int = 50,
                base: RunConfig | None = None, seed: int = 0, jobs: int = 1, log_path=None) -> GridResult:
    """Random search without replacement; the winner is chosen by validation loss."""
    grid = grid or SEARCH_GRID
    base = base or RunConfig(seed=seed)
    configs = [replace(base, **choice) for choice in sample_grid(grid, budget, seed)]
    work = [(dataset, c) for c in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_grid_run, work))
    else:
        results = [_grid_run(w) for w in work]
    runs = [
        {"config": asdict(c), "val_loss": v, "metrics": m.to_dict() if m else None} for c, v, m in results
    ]
    i = int(np.argmin([v for _, v, _ in results]))
    if log_path is not None:
        with Path(log_path).open("w") as fh:
            for r in runs:
                fh.write(json.dumps(r) + "\n")
    return GridResult(results[i][0], results[i][2], runs)
