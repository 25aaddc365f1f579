"""Unimodal/bimodal decisions and fragment sentiments read off a trained model.

Nothing here retrains anything. Sub-modality observables are reduced density
matrices of the learned eigenstates, sentence states are rebuilt from the
learned unimodal states, and the learned output network scores the result.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from . import fusion, qcore
from .data import collate
from .embedding import MODALITIES
from .errors import InvariantError
from .measurement import Observable
from .model import QMFModel

__all__ = [
    "ALL_SUBSETS",
    "canonical_subset",
    "reduce_observable",
    "sentence_states",
    "predict_subset",
    "subset_metrics",
    "predict_fragment",
    "entanglement_report",
    "interpretation_report",
]

ALL_SUBSETS = [c for r in (1, 2, 3) for c in combinations(MODALITIES, r)]
NAMES = {"t": "textual", "v": "visual", "a": "acoustic"}


def canonical_subset(subset) -> tuple:
    if isinstance(subset, str):
        subset = subset.replace("+", "").replace(",", "")
    s = tuple(m for m in MODALITIES if m in set(subset))
    if not s:
        raise InvariantError("modality subset must be non-empty")
    unknown = set(subset) - set(MODALITIES)
    if unknown:
        raise InvariantError(f"unknown modalities {sorted(unknown)}")
    return s


def reduce_observable(obs: Observable, subset, modalities=MODALITIES) -> list:
    """Reduced density matrix of each eigenstate over ``subset``."""
    subset = canonical_subset(subset)
    keep = [modalities.index(m) for m in subset]
    out = []
    for ket in obs.kets():
        rho = qcore.pure_density(ket)
        if len(keep) == len(modalities):
            out.append(rho)
        else:
            out.append(qcore.partial_trace(rho, qcore.SubsystemCut.keeping(keep, len(modalities))))
    return out


def sentence_states(model: QMFModel, sentence, subset=None):
    """Word kets over ``subset`` and their global weights for one sentence."""
    cfg = model.config
    subset = canonical_subset(subset or cfg.modalities)
    P = model.leaves(requires_grad=False)
    enc = model.encode(P, collate([sentence]))
    lam = model.lam(P, enc, subset).data[0]
    n = sentence.length
    dims = tuple(cfg.mdim(m) for m in subset)
    kets = []
    for i in range(n):
        vec = None
        for m in subset:
            re, im, _ = enc[m]
            u = re.data[0, i] + 1j * im.data[0, i]
            vec = u if vec is None else np.kron(vec, u)
        kets.append(qcore.Ket(np.abs(vec), np.angle(vec), dims))
    return kets, lam


def _contexts(model: QMFModel, kets, lam, mask):
    if model.config.context_mode == "global":
        return [fusion.global_mixture(kets, lam, mask)]
    return fusion.local_contexts(kets, lam, mask, model.config.window_lengths).matrices


def _score(model: QMFModel, probs: np.ndarray) -> float:
    """Pool a K x C probability matrix and run the output net."""
    pooled = probs.max(axis=1) if model.config.pooling == "max" else probs.mean(axis=1)
    P = model.leaves(requires_grad=False)
    return float(model.out_net(P, pooled[None, :]).data[0])


def predict_subset(model: QMFModel, sentence, subset, reduced=None) -> float:
    """Score a sentence using only the modalities in ``subset``.

    Each context is measured against the reduced observable:
    ``p_k = tr(M_k rho_c)``.
    """
    subset = canonical_subset(subset)
    if not set(subset) <= set(model.config.modalities):
        raise InvariantError(f"model has no {sorted(set(subset) - set(model.config.modalities))} modality")
    if reduced is None:
        reduced = reduce_observable(model.observable, subset, model.config.modalities)
    kets, lam = sentence_states(model, sentence, subset)
    mats = _contexts(model, kets, lam, sentence.mask[: len(kets)])
    M = np.stack([m.entries for m in reduced])
    R = np.stack([r.entries for r in mats])
    # tr(M_k rho_c) = sum_ij M_k[i, j] rho_c[j, i]
    probs = np.real(np.einsum("kij,cji->kc", M, R))
    return _score(model, probs)


def subset_metrics(model: QMFModel, sentences, subset):
    from .trainer import compute_metrics

    sentences = list(sentences)
    reduced = reduce_observable(model.observable, subset, model.config.modalities)
    pred = [predict_subset(model, s, subset, reduced) for s in sentences]
    return compute_metrics(pred, [s.label for s in sentences])


def predict_fragment(model: QMFModel, sentence, start: int, length: int) -> float:
    """Score the words ``start .. start+length-1`` of ``sentence`` as one mixed state.

    Word states are taken in their sentence context; mixture weights are the
    softmax of the fragment's global word weights.
    """
    if length < 1:
        raise InvariantError("fragment must contain at least one word")
    if start < 0 or start + length > sentence.length:
        raise InvariantError("fragment extends beyond the sentence's real words")
    kets, lam = sentence_states(model, sentence)
    sl = slice(start, start + length)
    rho = qcore.mix(kets[sl], fusion.softmax(lam[sl]))
    V = model.observable.vectors()
    probs = np.real(np.einsum("kd,de,ke->k", V.conj(), rho.entries, V))
    return _score(model, probs[:, None])


def entanglement_report(obs: Observable, tol: float = 1e-6, modalities=MODALITIES) -> list:
    """Reduced purity of every eigenstate across each one-vs-rest modality cut."""
    rows = []
    n = len(modalities)
    for k, ket in enumerate(obs.kets(), 1):
        rho = qcore.pure_density(ket)
        purity, separable = {}, {}
        for i, m in enumerate(modalities):
            rest = "".join(x for x in modalities if x != m)
            label = f"{m}|{rest}"
            p = qcore.purity(qcore.partial_trace(rho, qcore.SubsystemCut.keeping([i], n)))
            purity[label] = p
            separable[label] = p >= 1.0 - tol
        rows.append({"aspect": k, "purity": purity, "separable": separable})
    return rows


def interpretation_report(model: QMFModel, sentences, max_fragment_sentences: int = 5) -> dict:
    sentences = list(sentences)
    report = {"subsets": {}, "fragments": [], "entanglement": []}
    labelled = bool(sentences)
    for subset in ALL_SUBSETS:
        if not set(subset) <= set(model.config.modalities):
            continue
        name = "+".join(NAMES[m] for m in subset)
        if labelled:
            report["subsets"][name] = subset_metrics(model, sentences, subset).to_dict()
    for idx, s in enumerate(sentences[:max_fragment_sentences]):
        words = [
            {"position": i, "score": predict_fragment(model, s, i, 1)} for i in range(s.length)
        ]
        report["fragments"].append({"sentence": idx, "label": s.label, "words": words})
    if len(model.config.modalities) == 3:
        report["entanglement"] = entanglement_report(model.observable)
    return report
