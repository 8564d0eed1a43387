"""Seeded randomized trials behind ``qlab verify``.

Trial k of a run with root seed S uses seed S + k, so a failing row can be
replayed on its own with ``--seed <row seed> --trials 1``.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .channels import (
    check_eb_multiplicativity,
    eb_chain_check,
    random_holevo_map,
    random_kraus_map,
)
from .core import Ensemble, JointDistribution, random_density_matrix, random_pure_state
from .errors import InvalidInput
from .fidelity import FidelityConfig, dual_certificate_search
from .products import check_feasible_product, verify_correlated_bound, verify_multiplicativity
from .serialize import fixture_path, load_ensemble, load_joint

CSV_COLUMNS = ("suite", "trial", "seed", "lhs", "rhs", "gap", "tolerance", "pass")


@dataclass(frozen=True)
class TrialRow:
    suite: str
    trial: int
    seed: int
    lhs: float
    rhs: float
    gap: float
    tolerance: float
    passed: bool

    def csv_fields(self) -> list[str]:
        return [
            self.suite,
            str(self.trial),
            str(self.seed),
            repr(self.lhs),
            repr(self.rhs),
            repr(self.gap),
            repr(self.tolerance),
            "true" if self.passed else "false",
        ]


def random_qubit_ensemble(rng: np.random.Generator, sizes=(2, 3)) -> Ensemble:
    n = int(rng.integers(sizes[0], sizes[-1] + 1))
    return Ensemble(rng.dirichlet(np.ones(n)), [random_pure_state(2, rng) for _ in range(n)])


def _fidelity_config(seed: int) -> FidelityConfig:
    return FidelityConfig(seed=seed)


def trial_thm1(seed: int, fixtures: bool = False) -> tuple[float, float, float, bool]:
    if fixtures:
        e1 = e2 = load_ensemble(fixture_path("basis_d2.json"))
    else:
        rng = np.random.default_rng(seed)
        e1, e2 = random_qubit_ensemble(rng), random_qubit_ensemble(rng)
    r = verify_multiplicativity(e1, e2, _fidelity_config(seed))
    lo, hi = r.factor_interval
    lhs, rhs = min(hi, r.f12_upper), max(lo, r.f12_lower)
    return lhs, rhs, r.tol, r.consistent and r.easy_direction


def trial_thm2(seed: int, fixtures: bool = False) -> tuple[float, float, float, bool]:
    if fixtures:
        p, s1, s2 = load_joint(fixture_path("correlated_2x2.json"))
    else:
        rng = np.random.default_rng(seed)
        p = JointDistribution(rng.dirichlet(np.ones(4)).reshape(2, 2))
        s1 = [random_pure_state(2, rng) for _ in range(2)]
        s2 = [random_pure_state(2, rng) for _ in range(2)]
    r = verify_correlated_bound(p, s1, s2, _fidelity_config(seed))
    worst = min((r.forward, r.swapped), key=lambda c: c.gap)
    return worst.lhs, worst.rhs, 1e-9, r.holds


def trial_lemma_eb(seed: int, fixtures: bool = False) -> tuple[float, float, float, bool]:
    rng = np.random.default_rng(seed)
    psi = random_holevo_map(2, 2, int(rng.integers(1, 4)), rng)
    omega = random_kraus_map(2, 2, int(rng.integers(1, 4)), rng)
    r = check_eb_multiplicativity(psi, omega, seed=seed)
    tol = 1e-5
    return r.nu12.value, r.nu1.value * r.nu2.value, tol, abs(r.gap) <= tol


def trial_lemma_feas(seed: int, fixtures: bool = False) -> tuple[float, float, float, bool]:
    rng = np.random.default_rng(seed)
    e1, e2 = random_qubit_ensemble(rng), random_qubit_ensemble(rng)
    c1 = dual_certificate_search(e1, seed=seed)
    c2 = dual_certificate_search(e2, seed=seed + 1)
    r = check_feasible_product(e1, e2, c1, c2, seed=seed)
    # lhs - rhs is the worst probe margin
    return r.worst_margin, 0.0, 1e-7, r.passed


def trial_appendix(seed: int, fixtures: bool = False) -> tuple[float, float, float, bool]:
    rng = np.random.default_rng(seed)
    psi = random_holevo_map(2, 2, int(rng.integers(1, 5)), rng)
    omega = random_kraus_map(2, 2, int(rng.integers(1, 4)), rng)
    tau = random_density_matrix(4, rng, rank=int(rng.integers(1, 5)))
    r = eb_chain_check(psi, omega, tau)
    # the chain reads lhs <= rhs, so report it with the larger side first
    return r.rhs, r.lhs, 1e-10, r.holds


SUITES = {
    "thm1": trial_thm1,
    "thm2": trial_thm2,
    "lemma-eb": trial_lemma_eb,
    "lemma-feas": trial_lemma_feas,
    "appendix": trial_appendix,
}
FIXTURE_SUITES = ("thm1", "thm2")


def _run_one(args) -> TrialRow:
    suite, trial, seed, fixtures = args
    lhs, rhs, tol, ok = SUITES[suite](seed, fixtures)
    gap = lhs - rhs
    return TrialRow(suite, trial, seed, float(lhs), float(rhs), float(gap), float(tol), bool(ok))


def worker_count(trials: int) -> int:
    """Honors QLAB_THREADS (0 or unset = one worker per CPU), never more than ``trials``."""
    raw = os.environ.get("QLAB_THREADS", "0").strip() or "0"
    try:
        cap = int(raw)
    except ValueError as exc:
        raise InvalidInput(f"QLAB_THREADS must be an integer, got {raw!r}") from exc
    if cap < 0:
        raise InvalidInput("QLAB_THREADS must be nonnegative")
    auto = os.cpu_count() or 1
    return max(1, min(cap or auto, trials))


def run_suite(suite: str, trials: int, seed: int = 0, fixtures: bool = False, workers: int | None = None) -> list[TrialRow]:
    """Run ``trials`` seeded trials; rows come back in trial order whatever the worker count."""
    if suite not in SUITES:
        raise InvalidInput(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    if trials < 1:
        raise InvalidInput("trials must be at least 1")
    if fixtures and suite not in FIXTURE_SUITES:
        raise InvalidInput(f"suite {suite!r} has no bundled fixtures")
    jobs = [(suite, k, seed + k, fixtures) for k in range(trials)]
    workers = worker_count(trials) if workers is None else workers
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def summarize(rows: list[TrialRow]) -> dict:
    failed = [r for r in rows if not r.passed]
    return {
        "trials": len(rows),
        "passed": len(rows) - len(failed),
        "failed_seeds": [r.seed for r in failed],
        "worst_gap": min((r.gap for r in rows), default=None),
        "rows": [asdict(r) for r in rows],
    }
