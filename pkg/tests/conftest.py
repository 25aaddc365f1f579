import itertools

import numpy as np
import pytest

from qmf import qcore


def random_vector(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_ket(rng, dims):
    return qcore.Ket.from_vector(random_vector(rng, int(np.prod(dims))), dims)


def random_density(rng, dims, rank=None):
    d = int(np.prod(dims))
    rank = rank or d
    kets = [random_ket(rng, dims) for _ in range(rank)]
    w = rng.dirichlet(np.ones(rank))
    return qcore.mix(kets, w)


def kron_oracle(a, b):
    """Dense complex Kronecker product by explicit index loops."""
    a, b = np.asarray(a), np.asarray(b)
    out = np.zeros(a.size * b.size, dtype=complex)
    for i in range(a.size):
        for j in range(b.size):
            out[i * b.size + j] = a[i] * b[j]
    return out


def partial_trace_oracle(rho, dims, keep):
    """Brute-force sum over traced indices: rho'_{(kept),(kept')} = sum_traced rho_{..}."""
    rho = np.asarray(rho)
    n = len(dims)
    keep = sorted(keep)
    traced = [i for i in range(n) if i not in keep]
    kdims = [dims[i] for i in keep]
    tdims = [dims[i] for i in traced]

    def flat(idx):
        f = 0
        for i, d in zip(idx, dims):
            f = f * d + i
        return f

    dk = int(np.prod(kdims))
    out = np.zeros((dk, dk), dtype=complex)
    kept_states = list(itertools.product(*[range(d) for d in kdims]))
    for r, rk in enumerate(kept_states):
        for c, ck in enumerate(kept_states):
            total = 0j
            for t in itertools.product(*[range(d) for d in tdims]):
                ri, ci = [0] * n, [0] * n
                for pos, i in enumerate(keep):
                    ri[i], ci[i] = rk[pos], ck[pos]
                for pos, i in enumerate(traced):
                    ri[i] = ci[i] = t[pos]
                total += rho[flat(ri), flat(ci)]
            out[r, c] = total
    return out


def born_oracle(rho, v):
    rho, v = np.asarray(rho), np.asarray(v)
    total = 0j
    for i in range(v.size):
        for j in range(v.size):
            total += np.conj(v[i]) * rho[i, j] * v[j]
    return total.real


def assert_valid_density(rho, herm=1e-9, tr=1e-9, psd=1e-8):
    m = rho.entries
    assert np.max(np.abs(m - m.conj().T)) <= herm
    assert abs(np.trace(m) - 1) <= tr
    assert np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() >= -psd
    d = np.real(np.diag(m))
    assert np.all(d >= -psd) and abs(d.sum() - 1) <= tr


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
