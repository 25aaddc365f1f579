import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmf import qcore
from qmf.autodiff import Tensor
from qmf.errors import InvariantError
from qmf.fusion import (
    global_mixture,
    global_weights,
    local_contexts,
    plan_windows,
    sentence_windows,
    softmax,
    window_weights,
)
from qmf.measurement import Observable, init_observable, measure_contexts, measure_windows, overlaps

from conftest import random_ket


def test_beta_selects_one_modality():
    t, v, a = np.array([1.0, 2.0]), np.array([5.0, 5.0]), np.array([7.0, 0.0])
    gw = global_weights(t, v, a, np.array([60.0, -60.0, -60.0]))
    np.testing.assert_allclose(gw.lam, t, rtol=1e-12)
    np.testing.assert_allclose(gw.beta.sum(), 1.0)


def test_equal_beta_is_mean():
    t, v, a = np.array([1.0]), np.array([2.0]), np.array([6.0])
    assert global_weights(t, v, a, np.zeros(3)).lam[0] == pytest.approx(3.0)


@settings(max_examples=40, deadline=None)
@given(lam=st.lists(st.floats(-20, 20), min_size=1, max_size=6), c=st.floats(-50, 50))
def test_window_weights_shift_invariant(lam, c):
    lam = np.array(lam)
    np.testing.assert_allclose(softmax(lam), softmax(lam + c), atol=1e-12)
    mask = np.ones((1, len(lam)), dtype=bool)
    plan = plan_windows(mask, (1, 2))
    a = window_weights(lam[None], plan)
    b = window_weights(lam[None] + c, plan)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x.data, y.data, atol=1e-12)


@pytest.mark.parametrize(
    "n,lengths,expected",
    [
        (3, (1, 2), [(0, 1), (1, 1), (2, 1), (0, 2), (1, 2)]),
        (5, (3,), [(0, 3), (1, 3), (2, 3)]),
        (2, (3, 4), [(0, 2)]),
        (3, (3, 4), [(0, 3)]),
        (2, (1, 3, 4), [(0, 1), (1, 1), (0, 2)]),
        (1, (2,), [(0, 1)]),
        (0, (1, 2), []),
    ],
)
def test_sentence_windows(n, lengths, expected):
    assert sentence_windows(n, lengths) == expected


def test_sentence_windows_rejects_bad_lengths():
    with pytest.raises(InvariantError):
        sentence_windows(3, ())
    with pytest.raises(InvariantError):
        sentence_windows(3, (0, 1))


def test_single_word_window_is_pure(rng):
    kets = [random_ket(rng, (2, 2)) for _ in range(3)]
    cs = local_contexts(kets, np.zeros(3), np.ones(3, bool), (1,))
    for (s, _, rho), k in zip(cs, kets):
        np.testing.assert_allclose(rho.entries, qcore.pure_density(k).entries, atol=1e-14)


def test_contexts_are_valid_and_skip_padding(rng):
    L, n = 6, 4
    kets = [random_ket(rng, (2, 3)) for _ in range(L)]
    mask = np.arange(L) < n
    cs = local_contexts(kets, rng.normal(size=L), mask, (1, 2, 3))
    assert [(s, l) for s, l, _ in cs] == sentence_windows(n, (1, 2, 3))
    for _, _, rho in cs:
        rho.validate()


def test_fully_masked_sentence_has_no_contexts(rng):
    kets = [random_ket(rng, (2,)) for _ in range(3)]
    assert len(local_contexts(kets, np.zeros(3), np.zeros(3, bool), (1, 2))) == 0
    with pytest.raises(InvariantError):
        global_mixture(kets, np.zeros(3), np.zeros(3, bool))


def test_reduced_context_is_unimodal_mixture(rng):
    """Tracing out v and a from a mixture of product words leaves the textual mixture."""
    n = 4
    parts = [[random_ket(rng, (d,)) for d in (3, 2, 2)] for _ in range(n)]
    words = [qcore.tensor_kets(p) for p in parts]
    lam = rng.normal(size=n)
    (_, _, rho), = [c for c in local_contexts(words, lam, np.ones(n, bool), (4,))]
    reduced = qcore.partial_trace(rho, qcore.SubsystemCut.keeping([0], 3))
    expected = qcore.mix([p[0] for p in parts], softmax(lam))
    np.testing.assert_allclose(reduced.entries, expected.entries, atol=1e-12)


def _word_parts(kets, L):
    V = np.stack([k.vector for k in kets]).reshape(1, L, -1)
    return Tensor(V.real), Tensor(V.imag)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 6), lengths=st.sets(st.integers(1, 5), min_size=1))
def test_batched_measurement_matches_explicit_density_matrices(seed, n, lengths):
    rng = np.random.default_rng(seed)
    L, dims = 6, (2, 2)
    kets = [random_ket(rng, dims) for _ in range(L)]
    obs = init_observable(3, dims, rng)
    lam = rng.normal(size=L)
    mask = np.arange(L) < n
    explicit = measure_contexts(local_contexts(kets, lam, mask, lengths).matrices, obs)

    V = obs.vectors()
    q = overlaps(*_word_parts(kets, L), Tensor(V.real), Tensor(V.imag))
    plan = plan_windows(mask[None], lengths)
    probs = measure_windows(q, window_weights(lam[None], plan), plan).data[0]
    batched = probs[plan.valid_all[0]].T
    np.testing.assert_allclose(batched, explicit, atol=1e-12)


def test_global_plan_matches_global_mixture(rng):
    L, n, dims = 5, 3, (2, 3)
    kets = [random_ket(rng, dims) for _ in range(L)]
    obs = init_observable(4, dims, rng)
    lam = rng.normal(size=L)
    mask = np.arange(L) < n
    explicit = measure_contexts([global_mixture(kets, lam, mask)], obs)
    V = obs.vectors()
    q = overlaps(*_word_parts(kets, L), Tensor(V.real), Tensor(V.imag))
    plan = plan_windows(mask[None], mode="global")
    probs = measure_windows(q, window_weights(lam[None], plan), plan).data[0]
    np.testing.assert_allclose(probs.T, explicit, atol=1e-12)


def test_observable_product_with_orthonormal_basis_sums_to_one(rng):
    d = 4
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    obs = Observable(np.abs(Q.T), np.angle(Q.T), (2, 2))
    kets = [random_ket(rng, (2, 2)) for _ in range(3)]
    p = measure_contexts(local_contexts(kets, np.zeros(3), np.ones(3, bool), (2,)).matrices, obs)
    np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-12)
