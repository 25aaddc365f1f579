"""The full fusion network: parameters, forward pass, loss and gradients."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fusion, measurement
from .autodiff import FREE, FROZEN, Parameter, Tape, Tensor, backward as tape_backward
from .data import PAD, Batch, SentimentLexicon, Vocabulary, collate, random_embeddings
from .embedding import (
    MODALITIES,
    Reducer,
    ReducerSpec,
    init_textual_arguments,
    kron_pair,
    polar_to_rect,
    random_arguments,
    _normalize,
)
from .errors import DataError, NumericalError

__all__ = ["ModelConfig", "QMFModel", "forward_loss", "backward"]


@dataclass
class ModelConfig:
    vocab_size: int
    e_dim: int
    v_in: int
    a_in: int
    t_dim: int = 5
    v_dim: int = 5
    a_dim: int = 5
    K: int = 10
    hidden: int = 32
    window_lengths: tuple = (1, 2)
    modalities: tuple = MODALITIES
    context_mode: str = "local"  # "local" windows or one "global" mixture
    pooling: str = "max"
    real: bool = False  # arguments pinned at zero and frozen

    def __post_init__(self):
        self.window_lengths = tuple(sorted(set(int(l) for l in self.window_lengths)))
        self.modalities = tuple(m for m in MODALITIES if m in self.modalities)
        if not self.modalities:
            raise ValueError("at least one modality is required")

    def mdim(self, m: str) -> int:
        return {"t": self.t_dim, "v": self.v_dim, "a": self.a_dim}[m]

    def in_dim(self, m: str) -> int:
        return {"t": self.e_dim, "v": self.v_in, "a": self.a_in}[m]

    @property
    def dims(self) -> tuple:
        return tuple(self.mdim(m) for m in self.modalities)


class QMFModel:
    def __init__(self, config: ModelConfig, params: dict):
        self.config = config
        self.params = params
        self.reducers = {m: Reducer(ReducerSpec(m, config.in_dim(m), config.mdim(m))) for m in config.modalities}
        self.out_net = measurement.OutputNet(config.K, config.hidden)

    # -- construction ---------------------------------------------------------

    @classmethod
    def initialize(
        cls,
        config: ModelConfig,
        rng: np.random.Generator,
        vocab: Vocabulary | None = None,
        lexicon: SentimentLexicon | None = None,
        embeddings: np.ndarray | None = None,
        arguments: dict | None = None,
        random_text_arguments: bool = False,
    ) -> "QMFModel":
        """Fresh parameters.

        ``arguments`` optionally maps a modality to an initial argument table
        (e.g. from unimodal pretraining). Textual arguments otherwise follow the
        lexicon; visual/acoustic ones are uniform in [-pi, pi].
        """
        params: dict = {}
        shell = cls(config, params)
        V = config.vocab_size
        arguments = dict(arguments or {})
        for m in config.modalities:
            params.update(shell.reducers[m].init(rng))
        if "t" in config.modalities:
            table = embeddings if embeddings is not None else random_embeddings(range(V), config.e_dim, rng)
            if table.shape != (V, config.e_dim):
                raise DataError(f"embedding table shape {table.shape} != {(V, config.e_dim)}")
            params["E"] = Parameter(table.copy(), FREE, frozen_rows=(PAD,))
        for m in config.modalities:
            d = config.mdim(m)
            if config.real:
                table = np.zeros((V, d))
            elif m in arguments:
                table = np.array(arguments[m], dtype=np.float64)
            elif m == "t" and not random_text_arguments and vocab is not None:
                table = init_textual_arguments(vocab, lexicon or SentimentLexicon(), d)
            else:
                table = random_arguments(V, d, rng)
            if table.shape != (V, d):
                raise DataError(f"argument table for {m} has shape {table.shape}, expected {(V, d)}")
            params[f"theta.{m}"] = Parameter(table, FROZEN if config.real else FREE)
        params["beta"] = Parameter(np.zeros(len(config.modalities)), FREE)
        obs = measurement.init_observable(config.K, config.dims, rng)
        if config.real:
            obs = measurement.Observable(obs.moduli * rng.choice([-1.0, 1.0], size=obs.moduli.shape),
                                         np.zeros_like(obs.arguments), obs.dims)
        params.update(measurement.observable_parameters(obs, trainable_args=not config.real))
        params.update(shell.out_net.init(rng))
        return shell

    def copy(self) -> "QMFModel":
        params = {
            k: Parameter(p.value.copy(), p.constraint, frozen_rows=p.frozen_rows) for k, p in self.params.items()
        }
        return QMFModel(self.config, params)

    # -- views ------------------------------------------------------------------

    def leaves(self, requires_grad: bool = True) -> dict:
        return {k: Tensor(p.value, requires_grad=requires_grad and p.trainable) for k, p in self.params.items()}

    @property
    def observable(self) -> measurement.Observable:
        return measurement.Observable(
            self.params["obs.moduli"].value, self.params["obs.args"].value, self.config.dims
        )

    def beta(self) -> np.ndarray:
        return fusion.softmax(self.params["beta"].value)

    # -- forward ---------------------------------------------------------------

    def encode(self, P: dict, batch: Batch) -> dict:
        """Per-modality ``(re, im, norms)`` of unimodal states, each (B, L, d)."""
        out = {}
        ids = batch.ids
        for m in self.config.modalities:
            if m == "t":
                x = P["E"][ids]
            elif m == "v":
                x = Tensor(batch.visual)
            else:
                x = Tensor(batch.acoustic)
            unit, norms = _normalize(self.reducers[m](P, x), m)
            re, im = polar_to_rect(unit, P[f"theta.{m}"][ids])
            out[m] = (re, im, norms)
        return out

    def word_states(self, encoded: dict, modalities=None):
        modalities = modalities or self.config.modalities
        re, im, _ = encoded[modalities[0]]
        for m in modalities[1:]:
            re, im = kron_pair(re, im, encoded[m][0], encoded[m][1])
        return re, im

    def lam(self, P: dict, encoded: dict, modalities=None):
        """Global word weights over ``modalities`` with beta renormalised over them."""
        modalities = modalities or self.config.modalities
        active = [self.config.modalities.index(m) for m in modalities]
        beta = fusion.modality_weights(P["beta"], active)
        lam = None
        for j, m in enumerate(modalities):
            term = beta[j] * encoded[m][2]
            lam = term if lam is None else lam + term
        return lam

    def context_probabilities(self, P: dict, batch: Batch, context_mode=None):
        """Return ``(probs (B, C, K), valid (B, C))``."""
        cfg = self.config
        enc = self.encode(P, batch)
        wr, wi = self.word_states(enc)
        vr, vi = measurement.eigenstate_parts(P["obs.moduli"], P["obs.args"])
        q = measurement.overlaps(wr, wi, vr, vi)
        plan = fusion.plan_windows(batch.mask, cfg.window_lengths, context_mode or cfg.context_mode)
        weights = fusion.window_weights(self.lam(P, enc), plan)
        return measurement.measure_windows(q, weights, plan), plan.valid_all

    def forward(self, P: dict, batch: Batch, context_mode=None, pooling=None):
        probs, valid = self.context_probabilities(P, batch, context_mode)
        pooled = measurement.masked_pool(probs, valid, pooling or self.config.pooling)
        return self.out_net(P, pooled)

    def predict(self, sentences, batch_size: int = 256, **kw) -> np.ndarray:
        sentences = list(sentences)
        P = self.leaves(requires_grad=False)
        out = [
            self.forward(P, collate(sentences[i:i + batch_size]), **kw).data
            for i in range(0, len(sentences), batch_size)
        ]
        return np.concatenate(out) if out else np.zeros(0)

    def project(self) -> None:
        """Restore unit-norm eigenstate moduli after an optimiser step."""
        mod, args = measurement.project_moduli(
            self.params["obs.moduli"].value, self.params["obs.args"].value, fold_sign=not self.config.real
        )
        self.params["obs.moduli"].value = mod
        self.params["obs.args"].value = args

    # -- persistence -------------------------------------------------------------

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        np.savez(d / "params.npz", **{k: p.value for k, p in self.params.items()})
        (d / "model.json").write_text(json.dumps(asdict(self.config), indent=1))

    @classmethod
    def load(cls, directory) -> "QMFModel":
        d = Path(directory)
        cfg = ModelConfig(**json.loads((d / "model.json").read_text()))
        shell = cls.initialize(cfg, np.random.default_rng(0))
        with np.load(d / "params.npz") as z:
            for k, p in shell.params.items():
                p.value = z[k].copy()
        return shell


def forward_loss(model: QMFModel, batch: Batch, P: dict | None = None):
    """Mean absolute error of the batch and the tape that produced it."""
    if len(batch) == 0:
        raise DataError("empty batch")
    P = model.leaves() if P is None else P
    pred = model.forward(P, batch)
    loss = (pred - batch.labels).abs().mean()
    tape = Tape.record(loss)
    if not np.isfinite(loss.data):
        tape.check_finite()
        raise NumericalError("loss is not finite")
    tape.leaves = P
    return loss, tape


def backward(tape: Tape, model: QMFModel) -> dict:
    """Fill ``Parameter.grad`` for every parameter; frozen ones get zeros."""
    tape_backward(tape)
    grads = {}
    for name, p in model.params.items():
        leaf = tape.leaves[name]
        g = leaf.grad if (p.trainable and leaf.grad is not None) else np.zeros_like(p.value)
        g = np.array(g, dtype=np.float64)
        for r in p.frozen_rows:
            g[r] = 0.0
        p.grad = g
        grads[name] = g
    return grads
