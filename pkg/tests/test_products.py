import numpy as np
import pytest

from qlab.core import Ensemble, JointDistribution, Povm, PureState, basis_ensemble, random_povm, random_pure_state
from qlab.errors import DimensionMismatch, NotPositiveDefinite
from qlab.fidelity import EavesdropStrategy, FidelityConfig, dual_certificate_search, intercept_resend_fidelity
from qlab.channels import nu_infinity, phi_from_ensemble
from qlab.products import (
    check_feasible_product,
    compose_correlated_strategy,
    joint_ensemble,
    product_ensemble,
    product_povm,
    verify_correlated_bound,
    verify_multiplicativity,
)
from qlab.serialize import fixture_path, load_joint

FAST = FidelityConfig(restarts=6, verify_probes=20_000, verify_restarts=16)


def random_ensemble(rng, n=None):
    n = n or int(rng.integers(2, 4))
    return Ensemble(rng.dirichlet(np.ones(n)), [random_pure_state(2, rng) for _ in range(n)])


def test_product_ensemble_point_masses(pair_states, trine_states):
    e = product_ensemble(Ensemble([1.0], [pair_states[1]]), Ensemble([1.0], [trine_states[2]]))
    assert len(e) == 1
    assert e.states[0] == PureState.from_vector(np.kron(pair_states[1].amplitudes, trine_states[2].amplitudes))


def test_product_ensemble_uniform(pair_states):
    e = product_ensemble(basis_ensemble(2), Ensemble.uniform(pair_states))
    np.testing.assert_allclose(e.weights, np.full(4, 0.25))


def test_product_ensemble_enumeration(pair_states, trine_states):
    e1, e2 = Ensemble([0.2, 0.3, 0.5], trine_states), Ensemble([0.6, 0.4], pair_states)
    e = product_ensemble(e1, e2)
    assert len(e) == 6
    for i in range(3):
        for j in range(2):
            k = 2 * i + j
            assert e.weights[k] == pytest.approx(e1.weights[i] * e2.weights[j])
            assert e.states[k] == PureState.from_vector(np.kron(trine_states[i].amplitudes, pair_states[j].amplitudes))


def test_joint_ensemble_shape_check(pair_states):
    with pytest.raises(DimensionMismatch):
        joint_ensemble(JointDistribution([[1.0]]), pair_states, pair_states)


def test_product_strategies_factorize(rng, pair_states, trine_states):
    e1, e2 = Ensemble([0.4, 0.6], pair_states), Ensemble.uniform(trine_states)
    for _ in range(5):
        a, b = random_povm(2, 3, rng), random_povm(2, 2, rng)
        ra = tuple(random_pure_state(2, rng) for _ in range(3))
        rb = tuple(random_pure_state(2, rng) for _ in range(2))
        joint = EavesdropStrategy(
            Povm(product_povm(a, b)),
            tuple(PureState.from_vector(np.kron(x.amplitudes, y.amplitudes)) for x in ra for y in rb),
        )
        lhs = intercept_resend_fidelity(product_ensemble(e1, e2), joint)
        rhs = intercept_resend_fidelity(e1, EavesdropStrategy(a, ra)) * intercept_resend_fidelity(e2, EavesdropStrategy(b, rb))
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_feasible_product_scalar_certificates(pair_states, trine_states):
    e1, e2 = Ensemble.uniform(pair_states), Ensemble.uniform(trine_states)
    nu1 = nu_infinity(phi_from_ensemble(e1)).value
    nu2 = nu_infinity(phi_from_ensemble(e2)).value
    r = check_feasible_product(e1, e2, nu1 * np.eye(2), nu2 * np.eye(2))
    assert r.passed
    assert r.worst_margin >= -1e-7


def test_feasible_product_rank_one(pair_states):
    a, b = pair_states
    e1, e2 = Ensemble([1.0], [a]), Ensemble([1.0], [b])
    eps = 1e-6
    r = check_feasible_product(e1, e2, a.projector() + eps * np.eye(2), b.projector() + eps * np.eye(2))
    assert r.worst_margin >= -1e-7


@pytest.mark.parametrize("seed", range(3))
def test_feasible_product_from_search(seed):
    rng = np.random.default_rng(seed)
    e1, e2 = random_ensemble(rng), random_ensemble(rng)
    c1 = dual_certificate_search(e1, seed=seed, verify_probes=20_000)
    c2 = dual_certificate_search(e2, seed=seed + 1, verify_probes=20_000)
    r = check_feasible_product(e1, e2, c1, c2, seed=seed)
    assert r.passed, r.worst_margin
    assert r.probe_count == 10_000 + 64


def test_feasible_product_rejects_singular(pair_states):
    e = Ensemble.uniform(pair_states)
    with pytest.raises(NotPositiveDefinite):
        check_feasible_product(e, e, np.diag([1.0, 0.0]), np.eye(2))
    with pytest.raises(DimensionMismatch):
        check_feasible_product(e, e, np.eye(3), np.eye(2))


def test_multiplicativity_basis():
    r = verify_multiplicativity(basis_ensemble(2), basis_ensemble(2), FAST)
    for v in (r.f1.lower, r.f2.lower, r.f12_lower, r.f12_upper):
        assert v == pytest.approx(1.0, abs=5e-3)
    assert r.consistent and r.easy_direction


def test_multiplicativity_point_mass_factor(pair_states, trine_states):
    other = Ensemble.uniform(trine_states)
    r = verify_multiplicativity(Ensemble([1.0, 0.0], pair_states), other, FAST)
    assert r.f1.lower == pytest.approx(1.0, abs=1e-9)
    assert r.f12_lower - 5e-3 <= r.f2.upper and r.f2.lower <= r.f12_upper + 5e-3


@pytest.mark.parametrize("seed", range(3))
def test_multiplicativity_random(seed):
    rng = np.random.default_rng(seed)
    r = verify_multiplicativity(random_ensemble(rng), random_ensemble(rng), FAST.with_seed(seed))
    assert r.consistent
    assert r.easy_direction


def test_composite_for_product_distribution(pair_states, trine_states):
    p, q = np.array([0.3, 0.7]), np.array([0.5, 0.2, 0.3])
    comp = compose_correlated_strategy(JointDistribution.product(p, q), pair_states, trine_states, FAST)
    for b, n in enumerate(comp.norms):
        if n > 1e-14:
            np.testing.assert_allclose(comp.conditionals[b], q, atol=1e-12)


def test_composite_point_mass(pair_states, trine_states):
    P = np.zeros((2, 3))
    P[1, 2] = 1.0
    joint = JointDistribution(P)
    comp = compose_correlated_strategy(joint, pair_states, trine_states, FAST)
    m = phi_from_ensemble(joint_ensemble(joint, pair_states, trine_states))
    value = sum(np.linalg.eigvalsh(m(M))[-1] for M in comp.composite.elements)
    assert value == pytest.approx(1.0, abs=1e-9)


def test_composite_is_complete_and_norms_add_up(rng):
    P = JointDistribution(rng.dirichlet(np.ones(6)).reshape(2, 3))
    s1 = [random_pure_state(2, rng) for _ in range(2)]
    s2 = [random_pure_state(2, rng) for _ in range(3)]
    comp = compose_correlated_strategy(P, s1, s2, FAST)
    np.testing.assert_allclose(comp.composite.elements.sum(axis=0), np.eye(4), atol=1e-9)
    assert comp.norm_total == pytest.approx(comp.marginal_value, abs=1e-9)
    assert comp.mixture.sum() == pytest.approx(1.0)


def test_product_distribution_bound(pair_states, trine_states):
    p, q = np.array([0.3, 0.7]), np.array([0.5, 0.2, 0.3])
    r = verify_correlated_bound(JointDistribution.product(p, q), pair_states, trine_states, FAST)
    comp = r.forward.composite
    f2 = max(comp.conditional_values[comp.norms > 1e-14])
    assert r.forward.lhs >= comp.marginal_value * min(comp.conditional_values[comp.norms > 1e-14]) - 1e-9
    assert f2 <= 1.0 + 1e-12
    assert r.holds


def test_orthonormal_sets_reach_one(rng):
    P = JointDistribution(rng.dirichlet(np.ones(4)).reshape(2, 2))
    basis = basis_ensemble(2).states
    r = verify_correlated_bound(P, basis, basis, FAST)
    assert r.forward.lhs == pytest.approx(1.0, abs=1e-9)
    assert r.swapped.lhs == pytest.approx(1.0, abs=1e-9)


def test_correlated_fixture_regression():
    p, s1, s2 = load_joint(fixture_path("correlated_2x2.json"))
    r = verify_correlated_bound(p, s1, s2)
    # frozen at first run
    for check in (r.forward, r.swapped):
        assert check.composite.marginal_value == pytest.approx(0.9330127018921195, abs=1e-8)
        assert check.composite.norm_total == pytest.approx(check.composite.marginal_value, abs=1e-9)
        assert check.lhs == pytest.approx(0.9499849748267598, abs=1e-8)
        assert check.rhs == pytest.approx(0.9131521772821757, abs=1e-8)
    assert r.holds
    assert r.quantumness_ok is None


@pytest.mark.parametrize("seed", range(3))
def test_correlated_bound_random(seed):
    rng = np.random.default_rng(seed)
    P = JointDistribution(rng.dirichlet(np.ones(4)).reshape(2, 2))
    s1 = [random_pure_state(2, rng) for _ in range(2)]
    s2 = [random_pure_state(2, rng) for _ in range(2)]
    r = verify_correlated_bound(P, s1, s2, FAST.with_seed(seed))
    assert r.holds
    assert r.forward.gap >= -1e-9 and r.swapped.gap >= -1e-9
