"""Global word weighting and local mixture of word states into context states."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qcore
from .autodiff import Tensor, as_tensor
from .errors import InvariantError

__all__ = [
    "GlobalWeights",
    "ContextSet",
    "WindowPlan",
    "softmax",
    "global_weights",
    "modality_weights",
    "sentence_windows",
    "plan_windows",
    "window_weights",
    "local_contexts",
    "global_mixture",
]


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class GlobalWeights:
    lam: object  # (L,) or (B, L); Tensor inside the model, ndarray otherwise
    beta: object  # one weight per active modality


def modality_weights(beta_params, active=None):
    """Softmax over the logits of the ``active`` modality positions."""
    beta_params = as_tensor(beta_params)
    idx = list(range(beta_params.shape[0])) if active is None else list(active)
    logits = beta_params[np.array(idx)]
    e = (logits - float(logits.data.max())).exp()
    return e / e.sum()


def global_weights(norms_t, norms_v, norms_a, beta_params) -> GlobalWeights:
    """``Lambda_i = beta_t |t_i| + beta_v |v_i| + beta_a |a_i|`` with softmax-parametrised beta."""
    tensors = any(isinstance(x, Tensor) for x in (norms_t, norms_v, norms_a, beta_params))
    beta = modality_weights(beta_params)
    lam = beta[0] * as_tensor(norms_t) + beta[1] * as_tensor(norms_v) + beta[2] * as_tensor(norms_a)
    if tensors:
        return GlobalWeights(lam, beta)
    return GlobalWeights(lam.data, beta.data)


# -- windows --------------------------------------------------------------------


def sentence_windows(n: int, window_lengths) -> list[tuple[int, int]]:
    """``(start, length)`` of every context for a sentence with ``n`` real words.

    Ordered by configured length, then start. Lengths longer than the sentence
    collapse into one window covering the whole sentence, emitted once and only
    if no configured length already equals ``n``.
    """
    lengths = sorted(set(int(l) for l in window_lengths))
    if not lengths or lengths[0] < 1:
        raise InvariantError("window lengths must be a non-empty set of positive integers")
    if n < 1:
        return []
    out = []
    fallback_done = n in lengths
    for l in lengths:
        if l <= n:
            out.extend((s, l) for s in range(n - l + 1))
        elif not fallback_done:
            out.append((0, n))
            fallback_done = True
    return out


@dataclass
class WindowPlan:
    """Static gather indices for batched window mixing.

    For each configured length ``l``: ``index[j]`` is ``(C_l, l)`` word
    positions, ``pos_mask[j]`` is ``(B, C_l, l)`` marking positions that take
    part in the mixture, ``valid[j]`` is ``(B, C_l)``. Columns across lengths
    concatenate in (length, start) order.
    """

    index: list = field(default_factory=list)
    pos_mask: list = field(default_factory=list)
    valid: list = field(default_factory=list)

    @property
    def valid_all(self) -> np.ndarray:
        return np.concatenate(self.valid, axis=1)


def plan_windows(mask: np.ndarray, window_lengths=None, mode: str = "local") -> WindowPlan:
    mask = np.asarray(mask, dtype=bool)
    B, L = mask.shape
    n = mask.sum(axis=1)
    plan = WindowPlan()
    if mode == "global":
        plan.index.append(np.arange(L)[None, :])
        plan.pos_mask.append(mask[:, None, :].copy())
        plan.valid.append(np.ones((B, 1), dtype=bool))
        return plan
    if mode != "local":
        raise ValueError(f"unknown context mode {mode!r}")
    lengths = sorted(set(int(l) for l in window_lengths))
    fallback_len = {}
    for b in range(B):
        if n[b] in lengths:
            continue
        longer = [l for l in lengths if l > n[b]]
        if longer:
            fallback_len[b] = longer[0]
    for l in lengths:
        C = max(L - l + 1, 1)
        pos = np.arange(C)[:, None] + np.arange(l)[None, :]
        index = np.minimum(pos, L - 1)
        inside = pos < L
        end = np.arange(C) + l  # exclusive end of each window
        valid = end[None, :] <= n[:, None]
        pm = np.broadcast_to(inside[None], (B, C, l)).copy()
        for b, fl in fallback_len.items():
            if fl == l:
                valid[b, 0] = True
                pm[b, 0] = inside[0] & (pos[0] < n[b])
        # keep invalid columns numerically harmless: mix only their first slot
        pm[~valid] = False
        pm[~valid, 0] = True
        plan.index.append(index)
        plan.pos_mask.append(pm)
        plan.valid.append(valid)
    return plan


def window_weights(lam, plan: WindowPlan) -> list:
    """Softmax of global weights inside each window, masked to its positions."""
    lam = as_tensor(lam)
    out = []
    for index, pm in zip(plan.index, plan.pos_mask):
        g = lam[:, index]  # (B, C, l)
        shift = np.where(pm, g.data, -np.inf).max(axis=-1, keepdims=True)
        e = (g - shift).exp() * pm
        out.append(e / e.sum(axis=-1).reshape(*e.shape[:-1], 1))
    return out


# -- explicit density matrices ---------------------------------------------------


@dataclass
class ContextSet:
    contexts: list  # (start, length, DensityMatrix)

    def __len__(self):
        return len(self.contexts)

    def __iter__(self):
        return iter(self.contexts)

    @property
    def matrices(self) -> list:
        return [rho for _, _, rho in self.contexts]


def _lam_array(weights):
    lam = weights.lam if isinstance(weights, GlobalWeights) else weights
    return np.asarray(lam.data if isinstance(lam, Tensor) else lam, dtype=np.float64)


def local_contexts(word_states, weights, mask, window_lengths, tol: qcore.Tolerances = qcore.TOL) -> ContextSet:
    """One mixed state per sliding window; windows touching padding are dropped.

    A fully masked sentence yields an empty set.
    """
    lam = _lam_array(weights)
    mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n and not mask[:n].all():
        raise InvariantError("mask must mark a contiguous prefix of real words")
    out = []
    for start, length in sentence_windows(n, window_lengths):
        sl = slice(start, start + length)
        rho = qcore.mix(word_states[sl], softmax(lam[sl]), tol)
        out.append((start, length, rho))
    return ContextSet(out)


def global_mixture(word_states, weights, mask, tol: qcore.Tolerances = qcore.TOL) -> qcore.DensityMatrix:
    lam = _lam_array(weights)
    mask = np.asarray(mask, dtype=bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise InvariantError("sentence is fully masked")
    return qcore.mix([word_states[i] for i in idx], softmax(lam[idx]), tol)
