"""Complex-valued multimodal word embedding.

Each modality has a dimension-reduction network whose output, once
L2-normalised, gives the moduli of a unimodal state; its norm is kept as the
word's importance weight for that modality. Arguments come from per-word
tables. Multimodal word states are tensor products in (t, v, a) order.

Layers are stateless: they know their parameter names and shapes, and read
values from a flat ``name -> Tensor`` mapping at call time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import qcore
from .autodiff import FREE, Parameter, Tensor, as_tensor, stack
from .data import SentimentLexicon, Vocabulary
from .errors import InvariantError

log = logging.getLogger(__name__)

EPS = 1e-12
MODALITIES = ("t", "v", "a")


def glorot(rng, n_in, n_out):
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_in, n_out))


class Affine:
    def __init__(self, name: str, n_in: int, n_out: int):
        self.name, self.n_in, self.n_out = name, n_in, n_out

    def init(self, rng) -> dict:
        return {
            f"{self.name}.W": Parameter(glorot(rng, self.n_in, self.n_out), FREE),
            f"{self.name}.b": Parameter(np.zeros(self.n_out), FREE),
        }

    def __call__(self, P, x):
        return x @ P[f"{self.name}.W"] + P[f"{self.name}.b"]


class LSTM:
    """Single-layer unidirectional LSTM returning the hidden state at every step.

    Gate order in the fused weights is input, forget, cell, output.
    """

    def __init__(self, name: str, n_in: int, n_hidden: int):
        self.name, self.n_in, self.n_hidden = name, n_in, n_hidden

    def init(self, rng) -> dict:
        H = self.n_hidden
        return {
            f"{self.name}.Wx": Parameter(glorot(rng, self.n_in, 4 * H), FREE),
            f"{self.name}.Wh": Parameter(glorot(rng, H, 4 * H), FREE),
            f"{self.name}.b": Parameter(np.zeros(4 * H), FREE),
        }

    def __call__(self, P, x):
        B, L, _ = x.shape
        H = self.n_hidden
        Wh = P[f"{self.name}.Wh"]
        xw = x @ P[f"{self.name}.Wx"] + P[f"{self.name}.b"]
        h = Tensor(np.zeros((B, H)))
        c = Tensor(np.zeros((B, H)))
        outputs = []
        for t in range(L):
            z = xw[:, t, :] + h @ Wh
            i = z[:, 0:H].sigmoid()
            f = z[:, H:2 * H].sigmoid()
            g = z[:, 2 * H:3 * H].tanh()
            o = z[:, 3 * H:4 * H].sigmoid()
            c = f * c + i * g
            h = o * c.tanh()
            outputs.append(h)
        return stack(outputs, axis=1)


@dataclass
class ReducerSpec:
    """Layer layout of one modality's dimension-reduction network.

    Textual: LSTM then two affine layers. Visual/acoustic: three affine
    layers. ReLU follows every hidden affine layer; the output layer is linear.
    """

    modality: str
    in_dim: int
    out_dim: int
    hidden1: int | None = None
    hidden2: int | None = None

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        self.hidden1 = self.hidden1 or self.in_dim
        self.hidden2 = self.hidden2 or 2 * self.out_dim


class Reducer:
    def __init__(self, spec: ReducerSpec):
        self.spec = spec
        name = f"D_{spec.modality}"
        if spec.modality == "t":
            self.layers = [
                LSTM(f"{name}.lstm", spec.in_dim, spec.hidden1),
                Affine(f"{name}.fc1", spec.hidden1, spec.hidden2),
                Affine(f"{name}.fc2", spec.hidden2, spec.out_dim),
            ]
        else:
            self.layers = [
                Affine(f"{name}.fc1", spec.in_dim, spec.hidden1),
                Affine(f"{name}.fc2", spec.hidden1, spec.hidden2),
                Affine(f"{name}.fc3", spec.hidden2, spec.out_dim),
            ]

    def init(self, rng) -> dict:
        out = {}
        for layer in self.layers:
            out.update(layer.init(rng))
        return out

    def __call__(self, P, x):
        *hidden, last = self.layers
        for layer in hidden:
            x = layer(P, x)
            if isinstance(layer, Affine):
                x = x.relu()
        return last(P, x)


def _normalize(raw, modality):
    """Unit direction and norm of each reducer output.

    The direction is taken of ``raw + EPS/sqrt(d)`` so it is always a unit
    vector: an all-zero output (e.g. every ReLU inactive) maps to the uniform
    superposition instead of a zero "state". Elsewhere the offset is far below
    floating-point noise relative to ``|raw|``. The norm is that of ``raw``.
    """
    norms = raw.norm(axis=-1)
    tiny = norms.data < EPS
    if tiny.any():
        log.debug("%d zero-norm %s reducer outputs; epsilon guard applied", int(tiny.sum()), modality)
    shifted = raw + EPS / np.sqrt(raw.shape[-1])
    unit = shifted / shifted.norm(axis=-1).reshape(*norms.shape, 1)
    return unit, norms


def _batched(x):
    x = as_tensor(x)
    return (x.reshape(1, *x.shape), True) if x.ndim == 2 else (x, False)


def _reduce(reducer: Reducer, P, features):
    x, single = _batched(features)
    unit, norms = _normalize(reducer(P, x), reducer.spec.modality)
    if single:
        return unit[0], norms[0]
    return unit, norms


def reduce_textual(embedded, P, reducer: Reducer):
    """``(unit_vectors, norms)`` for an embedded sentence (L x e) or batch (B x L x e).

    The recurrent state runs left to right, so each word's output depends on
    the words before it.
    """
    return _reduce(reducer, P, embedded)


def reduce_visual(features, P, reducer: Reducer):
    return _reduce(reducer, P, features)


def reduce_acoustic(features, P, reducer: Reducer):
    return _reduce(reducer, P, features)


# -- argument tables ------------------------------------------------------------


def init_textual_arguments(vocab: Vocabulary, lex: SentimentLexicon, t_dim: int) -> np.ndarray:
    """Positive words start at 0, negative at pi, everything else at pi/2."""
    table = np.full((len(vocab), t_dim), np.pi / 2)
    for word, idx in vocab.stoi.items():
        pol = lex(word)
        if pol > 0:
            table[idx] = 0.0
        elif pol < 0:
            table[idx] = np.pi
    return table


def random_arguments(n_rows: int, dim: int, rng) -> np.ndarray:
    return rng.uniform(-np.pi, np.pi, size=(n_rows, dim))


def neutral_arguments(n_rows: int, dim: int) -> np.ndarray:
    return np.full((n_rows, dim), np.pi / 2)


# -- word states ----------------------------------------------------------------


def polar_to_rect(unit, theta):
    """Real and imaginary parts of ``unit * exp(i theta)``."""
    return unit * theta.cos(), unit * theta.sin()


def kron_pair(ar, ai, br, bi):
    """Complex Kronecker product over the last axis of two batched vectors."""
    *lead, da = ar.shape
    db = br.shape[-1]
    ar4, ai4 = ar.reshape(*lead, da, 1), ai.reshape(*lead, da, 1)
    br4, bi4 = br.reshape(*lead, 1, db), bi.reshape(*lead, 1, db)
    re = ar4 * br4 - ai4 * bi4
    im = ar4 * bi4 + ai4 * br4
    return re.reshape(*lead, da * db), im.reshape(*lead, da * db)


def unimodal_ket(moduli, arguments) -> qcore.Ket:
    """Ket from possibly signed moduli; a negative modulus becomes a phase of pi."""
    m = np.asarray(moduli, dtype=np.float64)
    a = np.asarray(arguments, dtype=np.float64)
    return qcore.ket_from_polar(np.abs(m), a + np.pi * (m < 0))


def assemble_word_state(R_t, theta_t, R_v, theta_v, R_a, theta_a, dims=None) -> qcore.Ket:
    """Product state |w_t> (x) |w_v> (x) |w_a>."""
    kets = [unimodal_ket(R_t, theta_t), unimodal_ket(R_v, theta_v), unimodal_ket(R_a, theta_a)]
    if dims is not None and tuple(k.dim for k in kets) != tuple(dims):
        raise InvariantError(f"unimodal dims {[k.dim for k in kets]} != configured {list(dims)}")
    return qcore.tensor_kets(kets)
