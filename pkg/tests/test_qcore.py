import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmf import qcore
from qmf.errors import InvariantError
from qmf.qcore import Ket, SubsystemCut

from conftest import (
    assert_valid_density,
    born_oracle,
    kron_oracle,
    partial_trace_oracle,
    random_density,
    random_ket,
    random_vector,
)

S = 1 / np.sqrt(2)
KET0 = Ket([1, 0], [0, 0])
KET1 = Ket([0, 1], [0, 0])
PLUS = Ket([S, S], [0, 0])
PLUS_I = qcore.ket_from_polar([1, 1], [0, np.pi / 2])
BELL = Ket.from_vector([S, 0, 0, S], (2, 2))


# -- ket_from_polar -------------------------------------------------------------


def test_polar_basis_state():
    k = qcore.ket_from_polar([1, 0], [0, 0])
    np.testing.assert_array_equal(k.vector, [1, 0])


def test_polar_rescales_moduli_keeps_arguments():
    k = qcore.ket_from_polar([3, 4], [0, np.pi])
    np.testing.assert_allclose(k.moduli, [0.6, 0.8])
    np.testing.assert_array_equal(k.arguments, [0, np.pi])


def test_polar_expands_to_complex():
    np.testing.assert_allclose(PLUS_I.vector, [S, 1j * S], atol=1e-15)


def test_arguments_are_not_wrapped():
    k = qcore.ket_from_polar([1, 1], [7.0, -9.0])
    np.testing.assert_array_equal(k.arguments, [7.0, -9.0])


@pytest.mark.parametrize("m,a", [([1, 0], [0]), ([0, 0], [0, 0]), ([], [])])
def test_polar_errors(m, a):
    with pytest.raises(InvariantError):
        qcore.ket_from_polar(m, a)


def test_ket_rejects_non_unit_moduli():
    with pytest.raises(InvariantError):
        Ket([1, 1], [0, 0])


# -- pure_density ---------------------------------------------------------------


@pytest.mark.parametrize(
    "ket,expected",
    [
        (KET0, [[1, 0], [0, 0]]),
        (PLUS, [[0.5, 0.5], [0.5, 0.5]]),
        (PLUS_I, [[0.5, -0.5j], [0.5j, 0.5]]),
    ],
)
def test_pure_density(ket, expected):
    rho = qcore.pure_density(ket)
    np.testing.assert_allclose(rho.entries, expected, atol=1e-15)
    assert rho.subsystem_dims == (2,)
    assert np.linalg.matrix_rank(rho.entries) == 1


# -- tensor_ket -----------------------------------------------------------------


def test_tensor_basis():
    np.testing.assert_array_equal(qcore.tensor_ket(KET0, KET0).vector, [1, 0, 0, 0])


def test_tensor_with_superposition():
    np.testing.assert_allclose(qcore.tensor_ket(KET0, PLUS).vector, [S, S, 0, 0])


def test_tensor_matches_kron_oracle(rng):
    for da, db in [(2, 3), (4, 4), (5, 2), (1, 7)]:
        a, b = random_ket(rng, (da,)), random_ket(rng, (db,))
        k = qcore.tensor_ket(a, b)
        assert k.subsystem_dims == (da, db)
        np.testing.assert_allclose(k.vector, kron_oracle(a.vector, b.vector), atol=1e-14)


def test_tensor_associativity(rng):
    for _ in range(50):
        a, b, c = (random_ket(rng, (int(d),)) for d in rng.integers(1, 5, size=3))
        left = qcore.tensor_ket(qcore.tensor_ket(a, b), c)
        right = qcore.tensor_ket(a, qcore.tensor_ket(b, c))
        np.testing.assert_allclose(left.vector, right.vector, atol=1e-12, rtol=0)


# -- mix ------------------------------------------------------------------------


def test_mix_computational_basis_is_maximally_mixed():
    rho = qcore.mix([KET0, KET1], [0.5, 0.5])
    np.testing.assert_allclose(rho.entries, np.eye(2) / 2)


def test_mix_hadamard_basis_is_indistinguishable():
    v3 = Ket.from_vector([S, -S])
    v4 = Ket.from_vector([S, S])
    a = qcore.mix([KET0, KET1], [0.5, 0.5])
    b = qcore.mix([v3, v4], [0.5, 0.5])
    np.testing.assert_allclose(b.entries, np.eye(2) / 2, atol=1e-15)
    np.testing.assert_allclose(a.entries, b.entries, atol=1e-15)


def test_mix_single_state_is_pure(rng):
    k = random_ket(rng, (4,))
    np.testing.assert_allclose(qcore.mix([k], [1.0]).entries, qcore.pure_density(k).entries)


def test_mix_accepts_density_matrices(rng):
    a, b = random_density(rng, (3,)), random_density(rng, (3,))
    rho = qcore.mix([a, b], [0.25, 0.75])
    np.testing.assert_allclose(rho.entries, 0.25 * a.entries + 0.75 * b.entries)


@pytest.mark.parametrize("w", [[0.5, 0.6], [1.2, -0.2], [1.0]])
def test_mix_weight_errors(w):
    with pytest.raises(InvariantError):
        qcore.mix([KET0, KET1], w)


def test_mix_dimension_mismatch(rng):
    with pytest.raises(InvariantError):
        qcore.mix([KET0, random_ket(rng, (3,))], [0.5, 0.5])


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 20), d=st.integers(2, 32), seed=st.integers(0, 2**32 - 1))
def test_mix_always_valid(n, d, seed):
    rng = np.random.default_rng(seed)
    kets = [Ket.from_vector(random_vector(rng, d)) for _ in range(n)]
    rho = qcore.mix(kets, rng.dirichlet(np.ones(n)))
    assert_valid_density(rho)


# -- born_probability / measure_all ----------------------------------------------


def test_born_maximally_mixed(rng):
    rho = qcore.mix([KET0, KET1], [0.5, 0.5])
    for _ in range(10):
        assert qcore.born_probability(rho, random_ket(rng, (2,))) == pytest.approx(0.5, abs=1e-12)


def test_born_pure():
    rho = qcore.pure_density(KET0)
    assert qcore.born_probability(rho, KET0) == 1.0
    # <lambda|rho|lambda> with lambda = (1, i)/sqrt2 expands to |1/sqrt2|^2
    assert qcore.born_probability(rho, PLUS_I) == pytest.approx(0.5, abs=1e-15)


def test_born_dimension_mismatch(rng):
    with pytest.raises(InvariantError):
        qcore.born_probability(qcore.pure_density(KET0), random_ket(rng, (3,)))


def test_measure_all_orthonormal_sums_to_one(rng):
    for d in (2, 5, 16):
        rho = random_density(rng, (d,))
        Q, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
        basis = [Ket.from_vector(Q[:, i]) for i in range(d)]
        assert qcore.measure_all(rho, basis).sum() == pytest.approx(1.0, abs=1e-8)


def test_measure_all_repeated_eigenstate(rng):
    rho = random_density(rng, (4,))
    k = random_ket(rng, (4,))
    p = qcore.measure_all(rho, [k] * 5)
    assert np.all(p == p[0])


def test_measure_all_matches_oracle(rng):
    rho = random_density(rng, (6,))
    kets = [random_ket(rng, (6,)) for _ in range(7)]
    p = qcore.measure_all(rho, kets)
    np.testing.assert_allclose(p, [born_oracle(rho.entries, k.vector) for k in kets], atol=1e-13)
    # non-orthogonal eigenstates: no normalisation across k
    assert abs(p.sum() - 1) > 1e-6


# -- post_measurement_ensemble -----------------------------------------------------


def test_post_measurement_collapsed():
    rho = qcore.post_measurement_ensemble([1, 0], [KET0, KET1])
    np.testing.assert_allclose(rho.entries, [[1, 0], [0, 0]])


def test_post_measurement_uniform():
    rho = qcore.post_measurement_ensemble([0.5, 0.5], [KET0, KET1])
    np.testing.assert_allclose(rho.entries, np.eye(2) / 2)


def test_post_measurement_fixed_point():
    rho = qcore.mix([KET0, KET1], [0.5, 0.5])
    p = qcore.measure_all(rho, [KET0, KET1])
    out = qcore.post_measurement_ensemble(p, [KET0, KET1])
    np.testing.assert_allclose(out.entries, rho.entries, atol=1e-15)


def test_post_measurement_renormalises_non_orthogonal(rng):
    kets = [random_ket(rng, (3,)) for _ in range(4)]
    p = qcore.measure_all(random_density(rng, (3,)), kets)
    assert_valid_density(qcore.post_measurement_ensemble(p, kets))


def test_post_measurement_empty():
    with pytest.raises(InvariantError):
        qcore.post_measurement_ensemble([], [])


# -- partial_trace ------------------------------------------------------------------


def test_partial_trace_product_state(rng):
    a, b = random_density(rng, (3,)), random_density(rng, (2,))
    rho = qcore.DensityMatrix(np.kron(a.entries, b.entries), (3, 2))
    out = qcore.partial_trace(rho, SubsystemCut.keeping([0], 2))
    np.testing.assert_allclose(out.entries, a.entries, atol=1e-14)
    out = qcore.partial_trace(rho, SubsystemCut.keeping([1], 2))
    np.testing.assert_allclose(out.entries, b.entries, atol=1e-14)


@pytest.mark.parametrize("keep", [0, 1])
def test_partial_trace_bell(keep):
    out = qcore.partial_trace(qcore.pure_density(BELL), SubsystemCut.keeping([keep], 2))
    np.testing.assert_allclose(out.entries, np.eye(2) / 2, atol=1e-15)


def test_partial_trace_matches_index_oracle(rng):
    rho = random_density(rng, (2, 2, 3))
    out = qcore.partial_trace(rho, SubsystemCut.keeping([0, 2], 3))
    assert out.subsystem_dims == (2, 3)
    np.testing.assert_allclose(out.entries, partial_trace_oracle(rho.entries, (2, 2, 3), [0, 2]), atol=1e-10, rtol=0)


def test_partial_trace_order_independent(rng):
    rho = random_density(rng, (2, 3, 2))
    once = qcore.partial_trace(rho, SubsystemCut.keeping([0], 3))
    step = qcore.partial_trace(rho, SubsystemCut.keeping([0, 2], 3))
    twice = qcore.partial_trace(step, SubsystemCut.keeping([0], 2))
    np.testing.assert_allclose(twice.entries, once.entries, atol=1e-10, rtol=0)
    step = qcore.partial_trace(rho, SubsystemCut.keeping([0, 1], 3))
    twice = qcore.partial_trace(step, SubsystemCut.keeping([0], 2))
    np.testing.assert_allclose(twice.entries, once.entries, atol=1e-10, rtol=0)


def test_statistical_equivalence(rng):
    rho = random_density(rng, (3, 4))
    reduced = qcore.partial_trace(rho, SubsystemCut.keeping([0], 2))
    for _ in range(10):
        M = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        lhs = np.trace(M @ reduced.entries)
        rhs = np.trace(np.kron(M, np.eye(4)) @ rho.entries)
        assert abs(lhs - rhs) < 1e-9


def test_partial_trace_errors(rng):
    with pytest.raises(InvariantError):
        qcore.partial_trace(random_density(rng, (4,)), SubsystemCut.keeping([0], 1))
    with pytest.raises(InvariantError):
        qcore.partial_trace(random_density(rng, (2, 2)), SubsystemCut.keeping([0], 3))
    with pytest.raises(InvariantError):
        SubsystemCut(frozenset(), frozenset({0, 1}))


# -- purity & separability -------------------------------------------------------------


def test_purity_values():
    assert qcore.purity(qcore.pure_density(PLUS_I)) == pytest.approx(1.0)
    assert qcore.purity(qcore.mix([KET0, KET1], [0.5, 0.5])) == pytest.approx(0.5)
    assert qcore.purity(qcore.mix([KET0, KET1], [0.7, 0.3])) == pytest.approx(0.7**2 + 0.3**2)


def test_purity_bounds(rng):
    for d in (2, 3, 8):
        p = qcore.purity(random_density(rng, (d,)))
        assert 1 / d - 1e-12 <= p <= 1 + 1e-12


def test_separable_product():
    k = qcore.tensor_ket(KET0, KET1)
    assert qcore.is_separable_pure(k, SubsystemCut.keeping([0], 2))
    assert qcore.is_separable_pure(k, SubsystemCut.keeping([1], 2))


def test_bell_is_entangled():
    assert not qcore.is_separable_pure(BELL, SubsystemCut.keeping([0], 2))


def test_three_random_unimodal_kets_separable(rng):
    for _ in range(20):
        k = qcore.tensor_kets([random_ket(rng, (d,)) for d in (2, 3, 4)])
        for keep in ([0], [1], [2], [0, 1], [0, 2], [1, 2]):
            assert qcore.is_separable_pure(k, SubsystemCut.keeping(keep, 3))


def test_separability_needs_a_real_cut():
    with pytest.raises(InvariantError):
        qcore.is_separable_pure(BELL, SubsystemCut.keeping([0, 1], 2))


# -- invariants & serialisation --------------------------------------------------------


def test_density_validation_rejects_bad_matrices():
    with pytest.raises(InvariantError):
        qcore.DensityMatrix([[1, 0.1], [0, 0]])  # not Hermitian
    with pytest.raises(InvariantError):
        qcore.DensityMatrix([[0.7, 0], [0, 0.7]])  # trace
    with pytest.raises(InvariantError):
        qcore.DensityMatrix([[1.5, 0], [0, -0.5]])  # not PSD


def test_values_are_immutable(rng):
    k = random_ket(rng, (3,))
    with pytest.raises(ValueError):
        k.moduli[0] = 0.0
    rho = qcore.pure_density(k)
    with pytest.raises(ValueError):
        rho.entries[0, 0] = 0.0


def test_json_round_trip(rng):
    k = random_ket(rng, (2, 3))
    obj = json.loads(json.dumps(qcore.ket_to_json(k)))
    assert set(obj) >= {"moduli", "args"}
    assert qcore.ket_from_json(obj) == k
    rho = random_density(rng, (2, 3))
    obj = json.loads(json.dumps(qcore.density_to_json(rho)))
    assert set(obj) == {"dims", "re", "im"}
    back = qcore.density_from_json(obj)
    assert back.subsystem_dims == (2, 3)
    np.testing.assert_array_equal(back.entries, rho.entries)
