"""Self-verification run by ``qmf check``: randomized state-algebra properties and gradient checks."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from . import qcore
from .gradcheck import check_gradients, tiny_instance


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _rand_vec(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def _rand_dims(rng):
    return tuple(int(d) for d in rng.integers(1, 5, size=int(rng.integers(1, 4))))


def _index_partial_trace(rho, dims, keep):
    """Reference partial trace by summing over the traced indices one entry at a time."""
    n = len(dims)
    traced = [i for i in range(n) if i not in keep]
    kept = list(itertools.product(*[range(dims[i]) for i in keep]))
    out = np.zeros((len(kept), len(kept)), dtype=complex)
    strides = [int(np.prod(dims[i + 1:])) for i in range(n)]
    for r, rk in enumerate(kept):
        for c, ck in enumerate(kept):
            for t in itertools.product(*[range(dims[i]) for i in traced]):
                row = col = 0
                for pos, i in enumerate(keep):
                    row += rk[pos] * strides[i]
                    col += ck[pos] * strides[i]
                for pos, i in enumerate(traced):
                    row += t[pos] * strides[i]
                    col += t[pos] * strides[i]
                out[r, c] += rho[row, col]
    return out


def check_density_invariants(rng, trials: int) -> CheckResult:
    worst = 0.0
    for _ in range(trials):
        dims = _rand_dims(rng)
        d = int(np.prod(dims))
        n = int(rng.integers(1, 6))
        kets = [qcore.Ket.from_vector(_rand_vec(rng, d), dims) for _ in range(n)]
        rho = qcore.mix(kets, rng.dirichlet(np.ones(n)))
        m = rho.entries
        worst = max(worst, np.abs(m - m.conj().T).max(), abs(np.trace(m) - 1),
                    max(0.0, -np.linalg.eigvalsh(m).min()))
    return CheckResult("density matrix invariants", worst <= 1e-8, f"{trials} trials, worst violation {worst:.1e}")


def check_born_completeness(rng, trials: int) -> CheckResult:
    worst = 0.0
    for _ in range(trials):
        dims = _rand_dims(rng)
        d = int(np.prod(dims))
        rho = qcore.mix([qcore.Ket.from_vector(_rand_vec(rng, d), dims) for _ in range(3)], rng.dirichlet(np.ones(3)))
        Q, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
        basis = [qcore.Ket.from_vector(Q[:, i], dims) for i in range(d)]
        worst = max(worst, abs(qcore.measure_all(rho, basis).sum() - 1))
    return CheckResult("Born rule over orthonormal bases", worst <= 1e-8, f"{trials} trials, max |sum-1| {worst:.1e}")


def check_partial_trace(rng, trials: int) -> CheckResult:
    worst_entry = worst_stat = 0.0
    for _ in range(trials):
        dims = tuple(int(d) for d in rng.integers(1, 5, size=int(rng.integers(2, 4))))
        d = int(np.prod(dims))
        rho = qcore.mix([qcore.Ket.from_vector(_rand_vec(rng, d), dims) for _ in range(3)], rng.dirichlet(np.ones(3)))
        k = int(rng.integers(1, len(dims)))
        keep = sorted(rng.choice(len(dims), size=k, replace=False).tolist())
        red = qcore.partial_trace(rho, qcore.SubsystemCut.keeping(keep, len(dims)))
        worst_entry = max(worst_entry, np.abs(red.entries - _index_partial_trace(rho.entries, dims, keep)).max())
        # tr(M rho_A) == tr((M (x) I) rho) with the kept factors moved to the front
        dk = red.dim
        M = rng.normal(size=(dk, dk)) + 1j * rng.normal(size=(dk, dk))
        traced = [i for i in range(len(dims)) if i not in keep]
        perm = keep + traced
        n = len(dims)
        t = rho.entries.reshape(dims + dims).transpose(perm + [p + n for p in perm]).reshape(d, d)
        lhs = np.trace(M @ red.entries)
        rhs = np.trace(np.kron(M, np.eye(d // dk)) @ t)
        worst_stat = max(worst_stat, abs(lhs - rhs))
    ok = worst_entry <= 1e-10 and worst_stat <= 1e-9
    return CheckResult("partial trace", ok, f"{trials} trials, entry err {worst_entry:.1e}, trace identity err {worst_stat:.1e}")


def check_separability(rng, trials: int) -> CheckResult:
    failures = 0
    for _ in range(trials):
        dims = tuple(int(d) for d in rng.integers(1, 5, size=3))
        kets = [qcore.Ket.from_vector(_rand_vec(rng, d)) for d in dims]
        word = qcore.tensor_kets(kets)
        for k in (1, 2):
            for keep in itertools.combinations(range(3), k):
                failures += not qcore.is_separable_pure(word, qcore.SubsystemCut.keeping(list(keep), 3))
    return CheckResult("product states separable", failures == 0, f"{trials} trials, {failures} failures")


def check_gradients_tiny(seeds) -> CheckResult:
    worst, skipped, failed = 0.0, 0, []
    for s in seeds:
        res = check_gradients(*tiny_instance(s))
        if res.skipped:
            skipped += 1
            continue
        worst = max(worst, res.max_rel_error)
        if not res.passed():
            failed.append(s)
    detail = f"{len(seeds)} models, max rel err {worst:.1e}, {skipped} skipped at kinks"
    if failed:
        detail += f", failed seeds {failed}"
    return CheckResult("gradient check", not failed, detail)


def run_all(seed: int = 0, trials: int = 1000, grad_models: int = 20) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    jobs = [
        lambda: check_density_invariants(rng, trials),
        lambda: check_born_completeness(rng, trials),
        lambda: check_partial_trace(rng, max(1, trials // 5)),
        lambda: check_separability(rng, max(1, trials // 5)),
        lambda: check_gradients_tiny(range(seed, seed + grad_models)),
    ]
    out = []
    for job in jobs:
        t = time.perf_counter()
        res = job()
        res.seconds = time.perf_counter() - t
        out.append(res)
    return out


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  time    detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.seconds:5.1f}s  {r.detail}")
    return "\n".join(lines)
