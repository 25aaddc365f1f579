"""Learned observable, Born-rule measurement of context states, pooling and output net."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qcore
from .autodiff import FREE, UNIT_NORM_MODULI, Parameter, Tensor, as_tensor, concat
from .embedding import Affine
from .errors import InvariantError

__all__ = [
    "Observable",
    "OutputNet",
    "init_observable",
    "eigenstate_parts",
    "overlaps",
    "measure_windows",
    "measure_contexts",
    "pool_max",
    "pool_avg",
    "masked_pool",
    "predict",
    "project_eigenstates",
]


@dataclass
class Observable:
    """K eigenstates over the (t, v, a) product space in polar form.

    Aspect ids 1..K are the eigenvalues; only the eigenstates are used.
    """

    moduli: np.ndarray  # (K, D)
    arguments: np.ndarray  # (K, D)
    dims: tuple

    def __post_init__(self):
        self.moduli = np.asarray(self.moduli, dtype=np.float64)
        self.arguments = np.asarray(self.arguments, dtype=np.float64)
        self.dims = tuple(int(d) for d in self.dims)
        if self.moduli.shape != self.arguments.shape:
            raise InvariantError("moduli/arguments shape mismatch")
        if self.moduli.shape[1] != int(np.prod(self.dims)):
            raise InvariantError(f"eigenstate dim {self.moduli.shape[1]} != prod{self.dims}")

    @property
    def K(self) -> int:
        return self.moduli.shape[0]

    @property
    def aspect_ids(self) -> np.ndarray:
        return np.arange(1, self.K + 1)

    def vectors(self) -> np.ndarray:
        return self.moduli * np.exp(1j * self.arguments)

    def kets(self) -> list:
        return [qcore.Ket.from_vector(v, self.dims) for v in self.vectors()]


def init_observable(K: int, dims, rng) -> Observable:
    """Arguments uniform in [-pi, pi]; moduli |N(0, 1)| rescaled to unit norm."""
    D = int(np.prod(dims))
    mod = np.abs(rng.normal(size=(K, D)))
    mod /= np.linalg.norm(mod, axis=1, keepdims=True)
    args = rng.uniform(-np.pi, np.pi, size=(K, D))
    return Observable(mod, args, dims)


def observable_parameters(obs: Observable, trainable_args: bool = True) -> dict:
    return {
        "obs.moduli": Parameter(obs.moduli.copy(), UNIT_NORM_MODULI),
        "obs.args": Parameter(obs.arguments.copy(), FREE if trainable_args else "frozen"),
    }


def project_eigenstates(obs: Observable, fold_sign: bool = True) -> Observable:
    """Rescale each eigenstate's moduli to unit L2 norm.

    With ``fold_sign`` a negative modulus is replaced by its magnitude and a
    phase shift of pi, which leaves the complex eigenstate itself unchanged.
    """
    mod, args = project_moduli(obs.moduli, obs.arguments, fold_sign)
    return Observable(mod, args, obs.dims)


def project_moduli(moduli, arguments, fold_sign=True):
    mod = np.array(moduli, dtype=np.float64)
    args = np.array(arguments, dtype=np.float64)
    if fold_sign:
        neg = mod < 0
        mod[neg] = -mod[neg]
        args[neg] += np.pi
    n = np.linalg.norm(mod, axis=-1, keepdims=True)
    return mod / np.where(n > 0, n, 1.0), args


# -- batched measurement (differentiable) ----------------------------------------


def eigenstate_parts(moduli, arguments):
    moduli, arguments = as_tensor(moduli), as_tensor(arguments)
    return moduli * arguments.cos(), moduli * arguments.sin()


def overlaps(wr, wi, vr, vi):
    """``|<v_k|w>|^2`` for word states (..., D) against eigenstates (K, D)."""
    vrT, viT = vr.T, vi.T
    re = wr @ vrT + wi @ viT
    im = wi @ vrT - wr @ viT
    return re.square() + im.square()


def measure_windows(q, weights, plan):
    """``<v_k|rho_c|v_k>`` for every window, shape (B, C, K).

    Uses ``<v|sum_i p_i |w_i><w_i| |v> = sum_i p_i |<v|w_i>|^2`` so context
    density matrices are never materialised.
    """
    parts = []
    for index, w in zip(plan.index, weights):
        qw = q[:, index, :]  # (B, C, l, K)
        parts.append((qw * w.reshape(*w.shape, 1)).sum(axis=2))
    return parts[0] if len(parts) == 1 else concat(parts, axis=1)


def masked_pool(probs, valid, how: str = "max"):
    """Pool (B, C, K) over contexts, ignoring columns where ``valid`` is False."""
    valid = np.asarray(valid, dtype=bool)
    if how == "max":
        # probabilities lie in [0, 1]; invalid columns are pushed below any real one
        offset = np.where(valid, 0.0, -2.0)[:, :, None]
        return (probs + offset).max(axis=1)
    if how == "avg":
        w = valid / valid.sum(axis=1, keepdims=True)
        return (probs * w[:, :, None]).sum(axis=1)
    raise ValueError(f"unknown pooling {how!r}")


# -- explicit path ----------------------------------------------------------------


def measure_contexts(contexts, obs) -> np.ndarray:
    """K x C matrix of Born probabilities, one column per context state."""
    if len(contexts) == 0:
        raise InvariantError("no contexts to measure")
    kets = obs.kets() if hasattr(obs, "kets") else list(obs)
    mats = [c[2] if isinstance(c, tuple) else c for c in contexts]
    V = np.stack([k.vector for k in kets])
    out = np.empty((len(kets), len(mats)))
    for c, rho in enumerate(mats):
        if rho.dim != V.shape[1]:
            raise InvariantError(f"dimension mismatch: {rho.dim} vs {V.shape[1]}")
        out[:, c] = np.real(np.einsum("kd,de,ke->k", V.conj(), rho.entries, V))
    return np.clip(out, 0.0, 1.0)


def _rowwise(probmatrix, fn):
    if isinstance(probmatrix, Tensor):
        return fn(probmatrix)
    return fn(Tensor(probmatrix)).data


def pool_max(probmatrix):
    """Row-wise max of a K x C matrix; ties go to the smallest column."""
    return _rowwise(probmatrix, lambda p: p.max(axis=-1))


def pool_avg(probmatrix):
    return _rowwise(probmatrix, lambda p: p.mean(axis=-1))


# -- output network -----------------------------------------------------------------


class OutputNet:
    """Two affine layers with a ReLU between; K probabilities in, one score out."""

    def __init__(self, K: int, hidden: int, name: str = "D_out"):
        self.fc1 = Affine(f"{name}.fc1", K, hidden)
        self.fc2 = Affine(f"{name}.fc2", hidden, 1)

    def init(self, rng) -> dict:
        return {**self.fc1.init(rng), **self.fc2.init(rng)}

    def __call__(self, P, pooled):
        out = self.fc2(P, self.fc1(P, pooled).relu())
        return out.reshape(*out.shape[:-1])


def predict(pooled, net: OutputNet, P):
    """Sentiment score(s) from pooled probabilities; unclamped."""
    out = net(P, as_tensor(pooled))
    if isinstance(pooled, Tensor):
        return out
    return float(out.data) if out.ndim == 0 else out.data
