"""Product ensembles and numerical checks of fidelity multiplicativity.

Two statements are checked. For independent ensembles the accessible fidelity
of the product is bracketed both by a product-space seesaw and by the tensor
product of the factor certificates. For correlated priors, a composite
measurement is assembled from a marginal strategy and per-outcome conditional
strategies, and its value is compared against the bound that construction
guarantees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import NuInfReport, conjugated, nu_infinity, phi_from_ensemble, tensor_maps
from .core import (
    Ensemble,
    JointDistribution,
    Povm,
    PureState,
    dominating_eigenvector,
    herm,
    inv_sqrt,
    spawn,
)
from .errors import DimensionMismatch, InvalidInput
from .fidelity import (
    Certificate,
    FidelityBracket,
    FidelityConfig,
    accessible_fidelity,
    accessible_fidelity_seesaw,
    strategy_value,
    verify_margin,
)
from .quantumness import QuantumnessConfig, QuantumnessReport, quantumness

CONSISTENCY_TOL = 5e-3
FEASIBILITY_TOL = 1e-7
NU_TOL = 1e-6
CHAIN_TOL = 1e-9
DROP_TOL = 1e-14


def _states(states) -> list[PureState]:
    return [s if isinstance(s, PureState) else PureState.from_vector(s) for s in states]


def product_ensemble(e1: Ensemble, e2: Ensemble) -> Ensemble:
    """Weights p_i q_j and states psi_i x theta_j, with j varying fastest."""
    weights = np.outer(e1.weights, e2.weights).ravel()
    states = [PureState.from_vector(np.kron(a.amplitudes, b.amplitudes)) for a in e1.states for b in e2.states]
    return Ensemble(weights / weights.sum(), states)


def joint_ensemble(p: JointDistribution, states1, states2) -> Ensemble:
    """Weights p_ij on the product letters psi_i x theta_j, j fastest."""
    states1, states2 = _states(states1), _states(states2)
    if p.shape != (len(states1), len(states2)):
        raise DimensionMismatch(f"distribution shape {p.shape} does not match {len(states1)}x{len(states2)} states")
    states = [PureState.from_vector(np.kron(a.amplitudes, b.amplitudes)) for a in states1 for b in states2]
    return Ensemble(p.probs.ravel(), states)


# --- tensor product certificates --------------------------------------------


@dataclass(frozen=True)
class ProductFeasibility:
    """Probe check that X1 x X2 dominates the product map on pure inputs."""

    worst_margin: float
    nu_conjugated: tuple[NuInfReport, NuInfReport]
    probe_count: int
    passed: bool


def _matrix(x) -> np.ndarray:
    return np.asarray(x.X if isinstance(x, Certificate) else x, dtype=complex)


def check_feasible_product(
    e1: Ensemble,
    e2: Ensemble,
    X1,
    X2,
    probes: int = 10_000,
    restarts: int = 64,
    seed=0,
    tol: float = FEASIBILITY_TOL,
) -> ProductFeasibility:
    """Check that X1 x X2 is feasible for the product ensemble.

    Each factor is rescaled to Omega_i(rho) = Phi_i(X_i^{-1/2} rho X_i^{-1/2}),
    whose maximal output norm is at most 1 exactly when X_i is feasible.
    Then bipartite pure probes (random plus ascent) measure the worst margin
    <psi|X1 x X2|psi> - ||(Phi_1 x Phi_2)(psi psi^*)||.
    Non positive definite X_i raise :class:`NotPositiveDefinite`.
    """
    X1, X2 = herm(_matrix(X1)), herm(_matrix(X2))
    if X1.shape != (e1.dim, e1.dim) or X2.shape != (e2.dim, e2.dim):
        raise DimensionMismatch("certificate and ensemble dimensions differ")
    phi1, phi2 = phi_from_ensemble(e1), phi_from_ensemble(e2)
    s1, s2, s12 = spawn(seed, 3)
    nu1 = nu_infinity(conjugated(phi1, inv_sqrt(X1)), seed=s1)
    nu2 = nu_infinity(conjugated(phi2, inv_sqrt(X2)), seed=s2)
    margin, count = verify_margin(tensor_maps(phi1, phi2), np.kron(X1, X2), probes, restarts, s12)
    passed = nu1.value <= 1 + NU_TOL and nu2.value <= 1 + NU_TOL and margin >= -tol
    return ProductFeasibility(margin, (nu1, nu2), count, bool(passed))


@dataclass(frozen=True)
class MultiplicativityReport:
    f1: FidelityBracket
    f2: FidelityBracket
    f12_lower: float
    f12_upper: float
    tol: float

    @property
    def factor_interval(self) -> tuple[float, float]:
        return self.f1.lower * self.f2.lower - self.tol, self.f1.upper * self.f2.upper + self.tol

    @property
    def overlap(self) -> float:
        """Length of the intersection of the factor and product intervals; negative if disjoint."""
        lo, hi = self.factor_interval
        return min(hi, self.f12_upper) - max(lo, self.f12_lower)

    @property
    def consistent(self) -> bool:
        return self.overlap >= 0

    @property
    def easy_direction(self) -> bool:
        """Product strategies alone already reach F1 F2."""
        return self.f12_lower >= self.f1.lower * self.f2.lower - 1e-8


def product_povm(a: Povm, b: Povm) -> np.ndarray:
    """Elements E_b x F_c with c varying fastest."""
    d = a.dim * b.dim
    return np.einsum("bij,ckl->bcikjl", a.elements, b.elements).reshape(len(a) * len(b), d, d)


def verify_multiplicativity(
    e1: Ensemble,
    e2: Ensemble,
    config: FidelityConfig | None = None,
    product_restarts: int = 4,
    tol: float = CONSISTENCY_TOL,
) -> MultiplicativityReport:
    """Bracket F(e1), F(e2) and F(e1 x e2) and compare.

    The product lower end comes from a seesaw on the product space, started
    from the product of the factor strategies among its restarts; the upper
    end is Tr(X1 x X2) = Tr X1 Tr X2.
    """
    config = config or FidelityConfig()
    if e1.dim * e2.dim > 16:
        raise InvalidInput("product dimension above 16 is out of range")
    s1, s2, s12 = spawn(config.seed, 3)
    f1 = accessible_fidelity(e1, config.with_seed(s1))
    f2 = accessible_fidelity(e2, config.with_seed(s2))
    pe = product_ensemble(e1, e2)
    outcomes = pe.dim**2
    starts = []
    joint = product_povm(f1.strategy.povm, f2.strategy.povm)
    if len(joint) <= outcomes:
        padded = np.zeros((outcomes, pe.dim, pe.dim), dtype=complex)
        padded[: len(joint)] = joint
        starts.append(padded)
    low = accessible_fidelity_seesaw(pe, outcomes, product_restarts, s12, initial_povms=starts)
    return MultiplicativityReport(f1, f2, low.value, f1.upper * f2.upper, tol)


# --- correlated priors -------------------------------------------------------


@dataclass(frozen=True)
class CorrelatedComposite:
    """Composite measurement M_{b,c} = E_b x F_{b,c} and the quantities that build it.

    Outcome b of the marginal measurement has resend state phi_b, mass N_b
    and conditional prior q_{b,.} on the second factor; r_b = N_b / sum N.
    Outcomes with N_b <= 1e-14 keep a trivial conditional measurement and
    get r_b = 0.
    """

    marginal_povm: Povm
    marginal_value: float
    phis: tuple[PureState, ...]
    conditionals: np.ndarray
    norms: np.ndarray
    mixture: np.ndarray
    conditional_povms: tuple[Povm, ...]
    conditional_values: np.ndarray
    chis: tuple[tuple[PureState, ...], ...]
    composite: Povm

    @property
    def norm_total(self) -> float:
        return float(self.norms.sum())


def compose_correlated_strategy(
    p: JointDistribution,
    states1,
    states2,
    config: FidelityConfig | None = None,
) -> CorrelatedComposite:
    """Build the composite measurement from the marginal and conditional seesaws."""
    config = config or FidelityConfig()
    states1, states2 = _states(states1), _states(states2)
    if p.shape != (len(states1), len(states2)):
        raise DimensionMismatch(f"distribution shape {p.shape} does not match {len(states1)}x{len(states2)} states")
    P = p.probs
    d1, d2 = states1[0].dim, states2[0].dim
    s_marg, s_cond = spawn(config.seed, 2)

    marginal = Ensemble(P.sum(axis=1), states1)
    low = accessible_fidelity_seesaw(marginal, config.outcomes or d1**2, config.restarts, s_marg)
    E = low.strategy.povm.elements
    phi1 = phi_from_ensemble(marginal)
    phis = [dominating_eigenvector(herm(phi1.apply(Eb)))[1] for Eb in E]

    psi = marginal.vectors
    # w[b, i] = <phi_b|P_i E_b P_i|phi_b> = |<phi_b|psi_i>|^2 <psi_i|E_b|psi_i>
    overlap = np.abs(np.array([ph.amplitudes for ph in phis]).conj() @ psi.T) ** 2
    detect = np.einsum("ni,bij,nj->bn", psi.conj(), E, psi).real
    w = overlap * detect
    mass = w @ P
    norms = mass.sum(axis=1)
    total = norms.sum()
    mixture = norms / total if total > 0 else np.zeros_like(norms)

    cond_seeds = spawn(s_cond, len(E))
    outcomes2 = config.outcomes or d2**2
    q_rows, cond_povms, cond_values, chis, blocks = [], [], [], [], []
    for b, Eb in enumerate(E):
        if norms[b] <= DROP_TOL:
            mixture[b] = 0.0
            q = np.full(len(states2), 1.0 / len(states2))
            trivial = np.zeros((outcomes2, d2, d2), dtype=complex)
            trivial[0] = np.eye(d2)
            F = Povm(trivial)
            value = 0.0
            chi = tuple(PureState.from_vector(np.eye(d2)[0]) for _ in range(outcomes2))
        else:
            q = mass[b] / norms[b]
            cond = accessible_fidelity_seesaw(Ensemble(q, states2), outcomes2, config.restarts, cond_seeds[b])
            F, value, chi = cond.strategy.povm, cond.value, cond.strategy.resend_states
        q_rows.append(q)
        cond_povms.append(F)
        cond_values.append(value)
        chis.append(chi)
        blocks.append(np.einsum("ij,ckl->cikjl", Eb, F.elements).reshape(len(F), d1 * d2, d1 * d2))
    composite = Povm(np.concatenate(blocks))
    return CorrelatedComposite(
        marginal_povm=low.strategy.povm,
        marginal_value=low.value,
        phis=tuple(phis),
        conditionals=np.array(q_rows),
        norms=norms,
        mixture=mixture,
        conditional_povms=tuple(cond_povms),
        conditional_values=np.array(cond_values),
        chis=tuple(chis),
        composite=composite,
    )


@dataclass(frozen=True)
class CorrelatedCheck:
    """One ordering of the correlated bound.

    ``lhs`` is the composite measurement's value on the joint ensemble and
    ``rhs`` is sum_b N_b times sum_b r_b F(q_b); the construction forces
    lhs >= rhs up to roundoff.
    """

    composite: CorrelatedComposite
    lhs: float
    rhs: float
    norm_identity_error: float

    @property
    def gap(self) -> float:
        return self.lhs - self.rhs

    @property
    def holds(self) -> bool:
        return self.gap >= -CHAIN_TOL and self.norm_identity_error <= CHAIN_TOL


@dataclass(frozen=True)
class CorrelatedReport:
    forward: CorrelatedCheck
    swapped: CorrelatedCheck
    q1: QuantumnessReport | None = None
    q2: QuantumnessReport | None = None

    @property
    def holds(self) -> bool:
        return self.forward.holds and self.swapped.holds

    @property
    def quantumness_ok(self) -> bool | None:
        """lhs >= Q1 Q2 - 5e-3 on both orderings, when quantumness was computed."""
        if self.q1 is None or self.q2 is None:
            return None
        floor = self.q1.value_lower * self.q2.value_lower - CONSISTENCY_TOL
        return bool(min(self.forward.lhs, self.swapped.lhs) >= floor)


def _correlated_check(p: JointDistribution, states1, states2, config: FidelityConfig) -> CorrelatedCheck:
    comp = compose_correlated_strategy(p, states1, states2, config)
    m = phi_from_ensemble(joint_ensemble(p, states1, states2))
    lhs, _, _ = strategy_value(m, comp.composite.elements)
    rhs = comp.norm_total * float(comp.mixture @ comp.conditional_values)
    return CorrelatedCheck(comp, lhs, rhs, abs(comp.norm_total - comp.marginal_value))


def verify_correlated_bound(
    p: JointDistribution,
    states1,
    states2,
    config: FidelityConfig | None = None,
    quantumness_config: QuantumnessConfig | None = None,
    with_quantumness: bool = False,
) -> CorrelatedReport:
    """Run the composite construction in both factor orders.

    With ``with_quantumness`` the quantumness of each state set is also
    bracketed and compared with the composite value.
    """
    config = config or FidelityConfig()
    s_fwd, s_swp, s_q1, s_q2 = spawn(config.seed, 4)
    forward = _correlated_check(p, states1, states2, config.with_seed(s_fwd))
    swapped = _correlated_check(p.transpose(), states2, states1, config.with_seed(s_swp))
    q1 = q2 = None
    if with_quantumness:
        q1 = quantumness(states1, quantumness_config, seed=s_q1)
        q2 = quantumness(states2, quantumness_config, seed=s_q2)
    return CorrelatedReport(forward, swapped, q1, q2)
