"""Minimum of the accessible fidelity over priors on a fixed set of states."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import Ensemble, PureState, spawn
from .errors import DimensionMismatch, InvalidInput
from .fidelity import (
    FidelityBracket,
    FidelityConfig,
    accessible_fidelity,
    accessible_fidelity_seesaw,
    dual_certificate_search,
)


@dataclass(frozen=True)
class QuantumnessConfig:
    """``probe`` drives the descent; the winning prior is re-bracketed with ``final``.

    The descent reads only the certificate end of each bracket, so probe
    seesaws are capped early: near symmetric priors they crawl along flat ridges.
    """

    probe: FidelityConfig = field(
        default_factory=lambda: FidelityConfig(restarts=4, verify_probes=5_000, verify_restarts=8, seesaw_iter=60)
    )
    final: FidelityConfig = field(default_factory=FidelityConfig)
    starts: int = 3
    max_evals: int = 60
    step: float = 0.15
    xatol: float = 1e-3
    fatol: float = 1e-6


@dataclass(frozen=True)
class QuantumnessReport:
    value_lower: float
    value_upper: float
    worst_prior: np.ndarray
    trace: list[tuple[np.ndarray, FidelityBracket]]

    @property
    def value(self) -> float:
        return self.value_upper


def _check_states(states) -> list[PureState]:
    states = [s if isinstance(s, PureState) else PureState.from_vector(s) for s in states]
    if not states:
        raise InvalidInput("need at least one state")
    if len({s.dim for s in states}) != 1:
        raise DimensionMismatch("states differ in dimension")
    return states


def project_simplex(x: np.ndarray) -> np.ndarray:
    """Clip negative weights and renormalize; the all-zero point maps to uniform."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    total = x.sum()
    return x / total if total > 0 else np.full(len(x), 1.0 / len(x))


def _to_prior(free: np.ndarray) -> np.ndarray:
    return project_simplex(np.append(free, 1.0 - np.sum(free)))


def quantumness(states, config: QuantumnessConfig | None = None, seed=0) -> QuantumnessReport:
    """Multistart Nelder-Mead over priors, minimizing the upper end of the fidelity bracket.

    The search runs in the first n-1 weights; the last weight is whatever
    remains, and infeasible points are clipped back onto the simplex, so
    boundary priors are legitimate probes.
    """
    config = config or QuantumnessConfig()
    states = _check_states(states)
    n = len(states)
    if n == 1:
        # the only prior is a point mass, where F = 1 exactly
        prior = np.ones(1)
        e = Ensemble(prior, states)
        low = accessible_fidelity_seesaw(e, config.final.outcomes, config.final.restarts, config.final.seed)
        bracket = _single_state_bracket(e, low, config.final)
        return QuantumnessReport(bracket.lower, bracket.upper, prior, [(prior, bracket)])
    if not Ensemble.uniform(states).spans():
        raise InvalidInput("signal states do not span the state space")

    probe_seed, start_seed, final_seed = spawn(seed, 3)
    cache: dict[tuple, FidelityBracket] = {}
    trace: list[tuple[np.ndarray, FidelityBracket]] = []

    def evaluate(prior: np.ndarray, cfg: FidelityConfig, cfg_seed) -> FidelityBracket:
        key = (cfg is config.final,) + tuple(np.round(prior, 12))
        if key not in cache:
            cache[key] = accessible_fidelity(Ensemble(prior, states), cfg.with_seed(cfg_seed))
            trace.append((prior, cache[key]))
        return cache[key]

    def objective(free: np.ndarray) -> float:
        return evaluate(_to_prior(free), config.probe, probe_seed).upper

    rng = np.random.default_rng(start_seed)
    starts = [np.full(n, 1.0 / n)] + [rng.dirichlet(np.ones(n)) for _ in range(config.starts - 1)]
    for start in starts:
        x0 = start[:-1]
        simplex = np.vstack([x0] + [x0 + config.step * np.eye(n - 1)[k] for k in range(n - 1)])
        minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "maxfev": config.max_evals,
                "xatol": config.xatol,
                "fatol": config.fatol,
            },
        )

    best_prior, best = min(trace, key=lambda item: item[1].upper)
    final = evaluate(best_prior, config.final, final_seed)
    upper = min(final.upper, best.upper)
    # only probed priors are seen, so this is an estimate rather than a bound on the infimum
    lower = min(b.lower for _, b in trace) - max(final.width, 0.0)
    return QuantumnessReport(min(lower, upper), upper, best_prior, trace)


def _single_state_bracket(e: Ensemble, low, cfg: FidelityConfig) -> FidelityBracket:
    probes = np.array([s.amplitudes for s in low.strategy.resend_states])
    cert = dual_certificate_search(
        e,
        cfg.max_rounds,
        cfg.seed,
        initial_probes=probes,
        require_span=False,
        search_restarts=cfg.search_restarts,
        verify_probes=cfg.verify_probes,
        verify_restarts=cfg.verify_restarts,
    )
    return FidelityBracket(low.value, cert.upper, low.strategy, cert, cfg.outcomes or e.dim**2)


def max_fidelity_over_priors(states) -> tuple[float, np.ndarray]:
    """The maximum over priors is 1, attained at any point mass; index 0 is returned."""
    states = _check_states(states)
    prior = np.zeros(len(states))
    prior[0] = 1.0
    return 1.0, prior
