"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MultimodalSentence, collate
from .model import ModelConfig, QMFModel, backward, forward_loss


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    per_param: dict
    skipped: bool = False
    reason: str = ""

    def passed(self, rtol=1e-4, atol=1e-7) -> bool:
        return self.skipped or all(e["ok"] for e in self.per_param.values())


def near_kinks(model: QMFModel, batch, tol: float = 1e-6) -> str:
    """Name the non-differentiable point the batch sits near, or ``''``."""
    P = model.leaves(requires_grad=False)
    pred = model.forward(P, batch).data
    if np.any(np.abs(pred - batch.labels) < tol):
        return "L1 kink"
    if model.config.pooling == "max":
        probs, valid = model.context_probabilities(P, batch)
        p = np.where(valid[:, :, None], probs.data, -np.inf)
        if p.shape[1] > 1:
            top2 = -np.sort(-p, axis=1)[:, :2, :]
            gap = top2[:, 0, :] - top2[:, 1, :]
            if np.any(np.isfinite(gap) & (gap < tol)):
                return "max-pool tie"
    return ""


def _loss_value(model, batch) -> float:
    P = model.leaves(requires_grad=False)
    pred = model.forward(P, batch).data
    return float(np.mean(np.abs(pred - batch.labels)))


def check_gradients(model: QMFModel, batch, step: float = 1e-5, rtol: float = 1e-4,
                    atol: float = 1e-7, small: float = 1e-6) -> GradCheckResult:
    reason = near_kinks(model, batch)
    if reason:
        return GradCheckResult(0.0, "", {}, skipped=True, reason=reason)
    _, tape = forward_loss(model, batch)
    analytic = {k: v.copy() for k, v in backward(tape, model).items()}
    per, worst, worst_name = {}, 0.0, ""
    for name, p in model.params.items():
        numeric = np.zeros_like(p.value)
        if p.trainable:
            flat = p.value.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = _loss_value(model, batch)
                flat[i] = orig - step
                down = _loss_value(model, batch)
                flat[i] = orig
                numeric.reshape(-1)[i] = (up - down) / (2 * step)
            for r in p.frozen_rows:
                numeric[r] = 0.0
        a = analytic[name]
        diff = np.abs(a - numeric)
        scale = np.maximum(np.abs(a), np.abs(numeric))
        tiny = scale < small
        rel = np.where(tiny, 0.0, diff / np.where(tiny, 1.0, scale))
        ok = bool(np.all(np.where(tiny, diff < atol, rel < rtol)))
        m = float(rel.max()) if rel.size else 0.0
        per[name] = {"max_rel": m, "max_abs": float(diff.max()) if diff.size else 0.0, "ok": ok}
        if m > worst:
            worst, worst_name = m, name
    return GradCheckResult(worst, worst_name, per)


def tiny_instance(seed: int, variant_kw: dict | None = None):
    """A random small model (L=3, dims 2/2/2, K=2, h=4) with a two-sentence batch."""
    rng = np.random.default_rng(seed)
    vocab_size, e_dim, v_in, a_in, L = 6, 3, 3, 3, 3
    kw = {"window_lengths": (1, 2), **(variant_kw or {})}
    cfg = ModelConfig(vocab_size=vocab_size, e_dim=e_dim, v_in=v_in, a_in=a_in, t_dim=2, v_dim=2,
                      a_dim=2, K=2, hidden=4, **kw)
    model = QMFModel.initialize(cfg, rng, embeddings=rng.normal(size=(vocab_size, e_dim)) * (np.arange(vocab_size) > 0)[:, None])
    # perturb away from the symmetric start so every parameter carries signal
    for name, p in model.params.items():
        if name.endswith(".b") or name == "beta":
            p.value = p.value + 0.3 * rng.normal(size=p.value.shape)
    sents = []
    for n in (3, 2):
        ids = np.zeros(L, dtype=int)
        ids[:n] = rng.integers(1, vocab_size, size=n)
        mask = np.arange(L) < n
        vis = rng.normal(size=(L, v_in)) * mask[:, None]
        ac = rng.normal(size=(L, a_in)) * mask[:, None]
        sents.append(MultimodalSentence(ids, vis, ac, mask, rng.uniform(-3, 3)))
    return model, collate(sents)
