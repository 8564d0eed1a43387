import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_hermitian
from qlab.core import (
    Ensemble,
    JointDistribution,
    Povm,
    PureState,
    basis_ensemble,
    canonicalize,
    dominating_eigenvector,
    inv_sqrt,
    lambda_max,
    operator_norm,
    partial_trace,
    random_povm,
    random_pure_state,
    spawn,
    tensor,
)
from qlab.errors import DimensionMismatch, InvalidInput, NotPositiveDefinite

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_tensor_of_identities():
    np.testing.assert_array_equal(tensor(np.eye(2), np.eye(2)), np.eye(4))


def test_tensor_of_diagonals():
    np.testing.assert_array_equal(tensor(np.diag([1, 0]), np.diag([0, 1])), np.diag([0, 1, 0, 0]))


def test_tensor_is_bilinear(rng):
    a, b = random_hermitian(2, rng), random_hermitian(2, rng)
    np.testing.assert_allclose(tensor(2 * a, b), 2 * tensor(a, b), atol=1e-14)


def test_operator_norm_simple_cases():
    assert operator_norm(np.eye(3)) == pytest.approx(1.0)
    assert operator_norm(np.diag([0.25, 0.25])) == pytest.approx(0.25)
    assert operator_norm(np.diag([0.1, -0.7])) == pytest.approx(0.7)


def test_operator_norm_matches_rayleigh_sampling(rng):
    h = random_hermitian(2, rng)
    z = rng.standard_normal((10_000, 2)) + 1j * rng.standard_normal((10_000, 2))
    v = z / np.linalg.norm(z, axis=1, keepdims=True)
    sampled = np.max(np.abs(np.einsum("ni,ij,nj->n", v.conj(), h, v)))
    assert sampled <= operator_norm(h) + 1e-12
    assert sampled == pytest.approx(operator_norm(h), abs=1e-3)


def test_dominating_eigenvector_diagonal():
    lam, v = dominating_eigenvector(np.diag([0.7, 0.3]))
    assert lam == pytest.approx(0.7)
    np.testing.assert_allclose(v.amplitudes, [1, 0], atol=1e-15)


def test_dominating_eigenvector_degenerate_residual():
    lam, v = dominating_eigenvector(np.eye(2))
    assert lam == pytest.approx(1.0)
    assert np.linalg.norm(np.eye(2) @ v.amplitudes - lam * v.amplitudes) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(2, 4))
def test_dominating_eigenvector_residual_and_norm(seed, dim):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    a = g @ g.conj().T
    lam, v = dominating_eigenvector(a)
    assert np.linalg.norm(a @ v.amplitudes - lam * v.amplitudes) <= 1e-10 * max(1.0, lam)
    assert lam == pytest.approx(operator_norm(a), abs=1e-10 * max(1.0, lam))


def test_lambda_max_closed_form_agrees_with_eigh(rng):
    a = np.array([random_hermitian(2, rng) for _ in range(50)])
    np.testing.assert_allclose(lambda_max(a), np.linalg.eigvalsh(a)[:, -1], atol=1e-12)


def test_inv_sqrt_cases(rng):
    np.testing.assert_allclose(inv_sqrt(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(inv_sqrt(np.diag([4.0, 1.0])), np.diag([0.5, 1.0]), atol=1e-15)
    g = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    x = g @ g.conj().T + 0.1 * np.eye(3)
    r = inv_sqrt(x)
    np.testing.assert_allclose(r @ x @ r, np.eye(3), atol=1e-9)


def test_inv_sqrt_rejects_singular():
    with pytest.raises(NotPositiveDefinite):
        inv_sqrt(np.diag([1.0, 0.0]))


def test_random_povm_single_outcome_is_identity():
    np.testing.assert_allclose(random_povm(2, 1, seed=3).elements, [np.eye(2)])


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 9))
def test_random_povm_is_complete(seed, dim, outcomes):
    p = random_povm(dim, outcomes, seed=seed)
    np.testing.assert_allclose(p.elements.sum(axis=0), np.eye(dim), atol=1e-10)
    assert np.trace(p.elements, axis1=1, axis2=2).real.sum() == pytest.approx(dim, abs=1e-9)
    assert min(np.linalg.eigvalsh(e)[0] for e in p.elements) >= -1e-10


def test_random_povm_frozen_seed_42():
    a, b = random_povm(2, 4, seed=42), random_povm(2, 4, seed=42)
    np.testing.assert_array_equal(a.elements, b.elements)
    # frozen at first run
    np.testing.assert_allclose(
        a.elements[:, 0, 0].real,
        [0.10736526405305925, 0.18897771609120426, 0.5269918714407444, 0.1766651484149923],
        atol=1e-12,
    )
    assert a.elements[0, 0, 1] == pytest.approx(-0.2032753188991932 - 0.05015332442602556j, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 4))
def test_canonicalize_is_idempotent(seed, dim):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    once = canonicalize(v)
    np.testing.assert_array_equal(canonicalize(once), once)


def test_pure_state_phase_equality():
    a = PureState.from_vector([1, 1j])
    b = PureState.from_vector([1j, -1])
    assert a == b and hash(a) == hash(b)


def test_pure_state_rejects_bad_vectors():
    with pytest.raises(InvalidInput):
        PureState(np.array([1.0, 1.0]))
    with pytest.raises(InvalidInput):
        PureState.from_vector([0, 0])
    with pytest.raises(InvalidInput):
        PureState.from_vector([np.nan, 1])


def test_povm_validation():
    with pytest.raises(InvalidInput):
        Povm([np.diag([1.0, 0.0])])
    with pytest.raises(InvalidInput):
        Povm([np.diag([1.5, 1.0]), np.diag([-0.5, 0.0])])


def test_ensemble_validation(pair_states):
    with pytest.raises(InvalidInput):
        Ensemble([0.6, 0.6], pair_states)
    with pytest.raises(InvalidInput):
        Ensemble([0.5], pair_states)
    with pytest.raises(DimensionMismatch):
        Ensemble([0.5, 0.5], [pair_states[0], PureState.from_vector([1, 0, 0])])


def test_ensemble_keeps_repeated_states(pair_states):
    e = Ensemble([0.2, 0.3, 0.5], [pair_states[0], pair_states[0], pair_states[1]])
    assert len(e) == 3
    assert e.spans()
    assert not Ensemble([0.5, 0.5], [pair_states[0], pair_states[0]]).spans()


def test_basis_ensemble():
    e = basis_ensemble(3)
    np.testing.assert_allclose(e.projectors.sum(axis=0), np.eye(3))


def test_joint_distribution_marginals():
    p = JointDistribution([[0.1, 0.2], [0.3, 0.4]])
    np.testing.assert_allclose(p.marginal(0), [0.3, 0.7])
    np.testing.assert_allclose(p.marginal(1), [0.4, 0.6])
    np.testing.assert_allclose(p.transpose().probs, p.probs.T)
    with pytest.raises(InvalidInput):
        JointDistribution([[0.5, 0.6]])


def test_partial_trace_of_product(rng):
    a, b = random_hermitian(2, rng), random_hermitian(3, rng)
    np.testing.assert_allclose(partial_trace(tensor(a, b), (2, 3), 0), a * np.trace(b), atol=1e-12)
    np.testing.assert_allclose(partial_trace(tensor(a, b), (2, 3), 1), b * np.trace(a), atol=1e-12)


def test_spawn_is_reproducible():
    root = np.random.SeedSequence(9)
    a = [s.generate_state(2).tolist() for s in spawn(root, 3)]
    b = [s.generate_state(2).tolist() for s in spawn(root, 3)]
    assert a == b


def test_random_pure_state_is_seeded():
    assert random_pure_state(3, 5) == random_pure_state(3, 5)
