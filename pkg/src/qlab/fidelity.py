"""Accessible fidelity of a pure-state ensemble.

The lower bound comes from a seesaw over intercept/resend strategies; the
upper bound from a matrix X with X >= Phi(phi phi^*) for every unit phi, so
that Tr X >= F. Such an X is found by an exchange method over a growing set
of probe states.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channels import CpMap, bloch_grid, phi_from_ensemble, restart_starts
from .core import (
    Ensemble,
    Povm,
    PureState,
    herm,
    lambda_max,
    operator_norm,
    random_povm,
    random_unit_vectors,
    spawn,
    top_eigpairs,
)
from .discrimination import discrimination_step, solve_batch
from .errors import DimensionMismatch, InvalidInput

SEESAW_MAX_ITER = 300
SEESAW_TOL = 1e-12
VIOLATION_TOL = 1e-7
PD_FLOOR = 1e-10


@dataclass(frozen=True)
class EavesdropStrategy:
    povm: Povm
    resend_states: tuple[PureState, ...]

    def __post_init__(self):
        states = tuple(self.resend_states)
        if len(states) != len(self.povm):
            raise InvalidInput("need one resend state per POVM element")
        if any(s.dim != self.povm.dim for s in states):
            raise DimensionMismatch("resend states and POVM differ in dimension")
        object.__setattr__(self, "resend_states", states)

    @property
    def dim(self) -> int:
        return self.povm.dim


@dataclass(frozen=True)
class Certificate:
    """Feasible X with its verified margin min_psi <psi|X|psi> - g(psi)."""

    X: np.ndarray
    margin: float
    probe_count: int
    rounds: int = 0
    scalar_fallback: bool = False

    @property
    def upper(self) -> float:
        return float(np.trace(self.X).real)


@dataclass(frozen=True)
class FidelityBracket:
    lower: float
    upper: float
    strategy: EavesdropStrategy
    certificate: Certificate
    outcomes: int = 0

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class FidelityConfig:
    """Knobs of the bracket computation. ``outcomes=None`` means d^2."""

    outcomes: int | None = None
    restarts: int = 16
    seed: int = 0
    max_rounds: int = 60
    search_restarts: int = 8
    verify_probes: int = 100_000
    verify_restarts: int = 64
    seesaw_iter: int = SEESAW_MAX_ITER

    def with_seed(self, seed) -> "FidelityConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class SeesawResult:
    value: float
    strategy: EavesdropStrategy
    history: list[float] = field(default_factory=list)
    restart_values: list[float] = field(default_factory=list)

    def __iter__(self):
        return iter((self.value, self.strategy))


@dataclass(frozen=True)
class DensityEnsemble:
    weights: np.ndarray
    densities: np.ndarray


def intercept_resend_fidelity(e: Ensemble, s: EavesdropStrategy) -> float:
    """sum_i sum_b p_i <psi_i|E_b|psi_i> |<psi_i|phi_b>|^2."""
    if s.dim != e.dim:
        raise DimensionMismatch("strategy and ensemble differ in dimension")
    psi = e.vectors
    detect = np.einsum("ni,bij,nj->nb", psi.conj(), s.povm.elements, psi).real
    phis = np.array([st.amplitudes for st in s.resend_states])
    overlap = np.abs(psi.conj() @ phis.T) ** 2
    return float(e.weights @ (detect * overlap).sum(axis=1))


def g_value(e: Ensemble, rho) -> float:
    """||Phi(rho)|| for the ensemble map Phi."""
    return operator_norm(phi_from_ensemble(e).apply(rho))


def povm_to_ensemble(p: Povm, drop_tol: float = 1e-14) -> DensityEnsemble:
    """alpha_b = Tr(E_b)/d and sigma_b = E_b/(d alpha_b); zero-trace elements are dropped."""
    d = p.dim
    tr = np.einsum("bii->b", p.elements).real
    keep = tr > drop_tol
    alpha = tr[keep] / d
    sigma = p.elements[keep] / (d * alpha[:, None, None])
    return DensityEnsemble(alpha, sigma)


def strategy_value(m: CpMap, elements: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """sum_b ||m(E_b)|| with the top eigenvalues and eigenvectors per outcome."""
    vals, vecs = top_eigpairs(herm(m.apply_many(elements)))
    return float(vals.sum()), vals, vecs


def _batch_values(m: CpMap, elements: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r, nb, d, _ = elements.shape
    vals, vecs = top_eigpairs(herm(m.apply_many(elements.reshape(r * nb, d, d))))
    return vals.reshape(r, nb).sum(axis=1), vecs.reshape(r, nb, -1)


def _seesaw_runs(m: CpMap, elements: np.ndarray, max_iter: int):
    """Advance every start in lockstep; each stops on its own once it stalls."""
    elements = elements.copy()
    values, phis = _batch_values(m, elements)
    histories = [[v] for v in values.tolist()]
    last_gain = np.ones(len(values))
    active = np.ones(len(values), dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        # m is self-adjoint for ensemble maps, so Tr(E m(phi phi^*)) = <phi|m(E)|phi>
        ops = herm(m.adjoint(np.einsum("rba,rbc->rbac", phis[idx], phis[idx].conj())))
        tol = np.clip(1e-3 * last_gain[idx], 1e-11, 1e-8)
        new_E, step_vals, _ = solve_batch(ops, tol)
        new_values, new_phis = _batch_values(m, new_E)
        gain = new_values - values[idx]
        improved = (step_vals > values[idx]) & (gain > 0)
        keep = idx[improved]
        elements[keep] = new_E[improved]
        values[keep] = new_values[improved]
        phis[keep] = new_phis[improved]
        last_gain[keep] = gain[improved]
        for k in keep:
            histories[k].append(float(values[k]))
        converged = gain[improved] <= SEESAW_TOL * np.maximum(1.0, new_values[improved])
        active[idx[~improved]] = False
        active[keep[converged]] = False
    return values, elements, phis, histories


def seesaw(
    m: CpMap,
    outcomes: int,
    restarts: int = 16,
    seed=0,
    initial_povms: list[np.ndarray] | None = None,
    max_iter: int = SEESAW_MAX_ITER,
) -> SeesawResult:
    """Maximize sum_b ||m(E_b)|| over POVMs by alternating resend states and POVMs.

    Each restart begins at a random POVM from its own child seed; extra
    starting POVMs (for example a product strategy) follow, and the
    do-nothing POVM {I, 0, ...} is always tried last.
    """
    d = m.in_dim
    starts = [random_povm(d, outcomes, child).elements for child in spawn(seed, restarts)]
    starts += [np.asarray(p, dtype=complex) for p in (initial_povms or [])]
    trivial = np.zeros((outcomes, d, d), dtype=complex)
    trivial[0] = np.eye(d)
    starts.append(trivial)
    values, elements, phis, histories = _seesaw_runs(m, np.array(starts), max_iter)
    best = int(np.argmax(values))
    strategy = EavesdropStrategy(Povm(elements[best]), tuple(PureState.from_vector(v) for v in phis[best]))
    return SeesawResult(float(values[best]), strategy, histories[best], values.tolist())


def pretty_good_measurement(e: Ensemble, outcomes: int) -> np.ndarray | None:
    """rho^{-1/2} p_i P_i rho^{-1/2} padded with zeros, or None if it needs more outcomes.

    On the kernel of rho the identity is completed into the first element.
    For orthonormal signal states this is the measurement in that basis.
    """
    if len(e) > outcomes:
        return None
    terms = e.weights[:, None, None] * e.projectors
    w, v = np.linalg.eigh(herm(terms.sum(axis=0)))
    keep = w > 1e-12 * max(w[-1], 1e-300)
    r = (v[:, keep] / np.sqrt(w[keep])) @ v[:, keep].conj().T
    elements = np.zeros((outcomes, e.dim, e.dim), dtype=complex)
    elements[: len(e)] = herm(r[None] @ terms @ r[None])
    elements[0] += v[:, ~keep] @ v[:, ~keep].conj().T
    return elements


def accessible_fidelity_seesaw(
    e: Ensemble,
    outcomes: int | None = None,
    restarts: int = 16,
    seed=0,
    initial_povms: list[np.ndarray] | None = None,
    max_iter: int = SEESAW_MAX_ITER,
) -> SeesawResult:
    """Lower bound on F(e) from the best intercept/resend strategy found.

    The pretty good measurement of the ensemble joins the random starts.
    """
    outcomes = e.dim**2 if outcomes is None else outcomes
    if outcomes < 1:
        raise InvalidInput("outcomes must be at least 1")
    starts = list(initial_povms or [])
    pgm = pretty_good_measurement(e, outcomes)
    if pgm is not None:
        starts.append(pgm)
    return seesaw(phi_from_ensemble(e), outcomes, restarts, seed, starts, max_iter)


# --- certificates --------------------------------------------------------


def violation_ascent(m: CpMap, X: np.ndarray, starts: np.ndarray, max_iter: int = 500):
    """Maximize ||m(psi psi^*)|| - <psi|X|psi> from each start.

    Alternates phi = top eigenvector of m(psi psi^*) and psi = top eigenvector
    of m^*(phi phi^*) - X; each half-step cannot decrease the objective.
    Returns values, psis and phis per start.
    """
    psi = starts / np.linalg.norm(starts, axis=1, keepdims=True)
    out_val, phi = top_eigpairs(herm(m.apply_pure(psi)))
    val = out_val - np.einsum("ni,ij,nj->n", psi.conj(), X, psi).real
    for _ in range(max_iter):
        M = herm(m.adjoint(np.einsum("na,nb->nab", phi, phi.conj())) - X[None])
        new_val, psi = top_eigpairs(M)
        out_val, phi = top_eigpairs(herm(m.apply_pure(psi)))
        new_val = out_val - np.einsum("ni,ij,nj->n", psi.conj(), X, psi).real
        gain = np.max(new_val - val)
        val = new_val
        if gain <= 1e-15 * max(1.0, float(np.max(np.abs(val)))):
            break
    return val, psi, phi


def probe_margins(m: CpMap, X: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """<psi|X|psi> - ||m(psi psi^*)|| for each row psi."""
    quad = np.einsum("ni,ij,nj->n", vecs.conj(), X, vecs).real
    return quad - lambda_max(herm(m.apply_pure(vecs)))


def max_violation(m: CpMap, X: np.ndarray, restarts: int, seed, grid_seeds: int = 4):
    """Best found value of max_psi ||m(psi psi^*)|| - <psi|X|psi> and the states reaching it."""
    d = m.in_dim
    starts = restart_starts(d, restarts, seed)
    if d == 2 and grid_seeds:
        pts = bloch_grid(90, 45)
        h = -probe_margins(m, X, pts)
        starts = np.vstack([starts, pts[np.argsort(-h, kind="stable")[:grid_seeds]]])
    return violation_ascent(m, X, starts)


def verify_margin(m: CpMap, X: np.ndarray, probes: int, restarts: int, seed) -> tuple[float, int]:
    """Worst margin over random pure probes plus multistart violation ascent."""
    s_rand, s_asc = spawn(seed, 2)
    rng = np.random.default_rng(s_rand)
    worst = np.inf
    chunk = 20_000
    done = 0
    while done < probes:
        n = min(chunk, probes - done)
        worst = min(worst, float(np.min(probe_margins(m, X, random_unit_vectors(n, m.in_dim, rng)))))
        done += n
    if restarts:
        vals, _, _ = max_violation(m, X, restarts, s_asc)
        worst = min(worst, float(-np.max(vals)))
    return worst, probes + restarts


def _floor_pd(X: np.ndarray) -> np.ndarray:
    lo = float(np.linalg.eigvalsh(X)[0])
    if lo < PD_FLOOR:
        X = X + (PD_FLOOR - lo) * np.eye(X.shape[0])
    return X


def certify(m: CpMap, X: np.ndarray, probes: int, restarts: int, seed, rounds: int = 0, fallback: bool = False) -> Certificate:
    """Inflate X by any violation the probes reveal, then record the final margin."""
    X = _floor_pd(herm(X))
    margin, count = verify_margin(m, X, probes, restarts, seed)
    if margin < 0:
        X = X - margin * np.eye(X.shape[0])
        margin, count = verify_margin(m, X, probes, restarts, seed)
    return Certificate(X, margin, count, rounds, fallback)


def scalar_certificate(m: CpMap, probes: int = 100_000, restarts: int = 64, seed=0) -> Certificate:
    """nu(m) I, feasible by definition of the maximal output norm."""
    vals, _, _ = max_violation(m, np.zeros((m.in_dim, m.in_dim)), restarts, seed)
    nu = float(np.max(vals))
    return certify(m, nu * np.eye(m.in_dim), probes, 0, seed, fallback=True)


def _dedupe(vecs: np.ndarray, existing: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    kept = list(existing)
    new = []
    for v in vecs:
        if all(abs(abs(np.vdot(w, v)) - 1.0) > tol for w in kept):
            kept.append(v)
            new.append(v)
    return np.array(new).reshape(-1, vecs.shape[1])


def certificate_search(
    m: CpMap,
    initial_probes: np.ndarray | None = None,
    max_rounds: int = 60,
    seed=0,
    search_restarts: int = 8,
    verify_probes: int = 100_000,
    verify_restarts: int = 64,
    tol: float = VIOLATION_TOL,
) -> Certificate:
    """Exchange method for min Tr X subject to X >= m^*(phi phi^*) for all unit phi.

    Each round solves the finite problem over the current probe states (its
    optimum is the dual of a discrimination problem), then adds every probe
    state whose constraint the ascent finds violated.
    """
    d = m.in_dim
    s_init, s_rounds, s_verify = spawn(seed, 3)
    probes = np.eye(d, dtype=complex) if initial_probes is None else np.asarray(initial_probes, dtype=complex)
    probes = np.vstack([probes, restart_starts(d, 2, s_init)])
    probes = _dedupe(probes, np.empty((0, d)))
    viol = np.inf
    X = None
    rounds = 0
    round_seeds = spawn(s_rounds, max_rounds)
    for rounds in range(1, max_rounds + 1):
        ops = herm(m.adjoint(np.einsum("na,nb->nab", probes, probes.conj())))
        res = discrimination_step(ops, gap_tol=1e-10)
        X = res.dual_Y
        vals, psis, phis = max_violation(m, X, search_restarts, round_seeds[rounds - 1])
        viol = float(np.max(vals))
        if viol <= tol * max(1.0, float(np.trace(X).real)):
            break
        order = np.argsort(-vals, kind="stable")
        fresh = _dedupe(phis[order][vals[order] > 0], probes)
        if fresh.size == 0:
            break
        probes = np.vstack([probes, fresh])
    X = X + max(viol, 0.0) * np.eye(d)
    cert = certify(m, X, verify_probes, verify_restarts, s_verify, rounds)
    if viol > tol * max(1.0, float(np.trace(X).real)):
        fallback = scalar_certificate(m, verify_probes, verify_restarts, s_verify)
        if fallback.upper < cert.upper:
            return replace(fallback, rounds=rounds)
    return cert


def dual_certificate_search(
    e: Ensemble,
    max_rounds: int = 60,
    seed=0,
    initial_probes: np.ndarray | None = None,
    require_span: bool = True,
    search_restarts: int = 8,
    verify_probes: int = 100_000,
    verify_restarts: int = 64,
) -> Certificate:
    """Certificate X in the feasible set of g(rho) = ||Phi(rho)||, so F(e) <= Tr X."""
    if require_span and not e.spans():
        raise InvalidInput("signal states do not span the state space")
    return certificate_search(
        phi_from_ensemble(e),
        initial_probes,
        max_rounds,
        seed,
        search_restarts,
        verify_probes,
        verify_restarts,
    )


def accessible_fidelity(e: Ensemble, config: FidelityConfig | None = None) -> FidelityBracket:
    """Bracket [lower, upper] on the accessible fidelity."""
    config = config or FidelityConfig()
    if not e.spans():
        raise InvalidInput("signal states do not span the state space")
    outcomes = config.outcomes or e.dim**2
    s_lower, s_upper = spawn(config.seed, 2)
    low = accessible_fidelity_seesaw(e, outcomes, config.restarts, s_lower, max_iter=config.seesaw_iter)
    probes = np.array([s.amplitudes for s in low.strategy.resend_states])
    cert = dual_certificate_search(
        e,
        config.max_rounds,
        s_upper,
        initial_probes=probes,
        search_restarts=config.search_restarts,
        verify_probes=config.verify_probes,
        verify_restarts=config.verify_restarts,
    )
    return FidelityBracket(low.value, cert.upper, low.strategy, cert, outcomes)
