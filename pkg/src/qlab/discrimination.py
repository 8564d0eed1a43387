"""Optimal POVM for maximizing sum_b Tr(E_b A_b).

The dual problem is ``min Tr Y  s.t.  Y >= A_b`` for every b. Two outcomes
(Helstrom) and jointly commuting operators are solved in closed form. The
general case follows the central path of the log-det barrier on the dual,
where ``E_b = mu (Y - A_b)^{-1}`` sums to the identity at every centered point
and the duality gap equals ``mu * B * d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Povm, herm, lambda_max
from .errors import InvalidInput, NumericFailure

GAP_TOL = 1e-8
MAX_ITER = 2000
STAGE_ITER = 40


@dataclass(frozen=True)
class DiscriminationResult:
    povm: Povm
    value: float
    dual_Y: np.ndarray
    dual_gap: float
    method: str
    iterations: int = 0

    def __iter__(self):
        # unpacks as (povm, value, dual_Y, dual_gap)
        return iter((self.povm, self.value, self.dual_Y, self.dual_gap))


def _objective(elements: np.ndarray, ops: np.ndarray) -> np.ndarray:
    return np.einsum("...bij,...bji->...", elements, ops).real


def _repair_dual(Y: np.ndarray, ops: np.ndarray) -> np.ndarray:
    """Shift each Y by a multiple of the identity until Y >= A_b for all b."""
    Y = herm(Y)
    excess = np.max(lambda_max(herm(ops - Y[..., None, :, :])), axis=-1)
    return Y + np.clip(excess, 0.0, None)[..., None, None] * np.eye(Y.shape[-1])


def _result(elements, ops, Y, method, iterations=0) -> DiscriminationResult:
    povm = Povm(elements)
    value = float(_objective(povm.elements, ops))
    Y = _repair_dual(Y, ops)
    return DiscriminationResult(povm, value, Y, float(np.trace(Y).real) - value, method, iterations)


def helstrom_elements(ops: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """E_1 projects onto the nonnegative eigenspace of A_1 - A_2; returns (elements, Y)."""
    a1, a2 = ops
    w, v = np.linalg.eigh(herm(a1 - a2))
    vp = v[:, w >= 0]
    e1 = vp @ vp.conj().T
    e2 = np.eye(a1.shape[0]) - e1
    Y = a2 + (v * np.clip(w, 0, None)) @ v.conj().T
    return np.array([e1, e2]), Y


def helstrom(ops: np.ndarray) -> DiscriminationResult:
    elements, Y = helstrom_elements(ops)
    return _result(elements, ops, Y, "helstrom")


def helstrom_value(a1: np.ndarray, a2: np.ndarray) -> float:
    """(Tr A_1 + Tr A_2 + ||A_1 - A_2||_1) / 2."""
    w = np.linalg.eigvalsh(herm(a1 - a2))
    return 0.5 * float(np.trace(a1).real + np.trace(a2).real + np.abs(w).sum())


def _common_basis(ops: np.ndarray, tol: float):
    """Unitary diagonalizing every A_b, or None if they do not commute."""
    comm = ops[:, None] @ ops[None] - ops[None] @ ops[:, None]
    if np.max(np.abs(comm)) > tol:
        return None
    coeffs = 1.0 / (np.arange(len(ops)) + np.pi)
    _, u = np.linalg.eigh(herm(np.einsum("b,bij->ij", coeffs, ops)))
    rot = u.conj().T[None] @ ops @ u[None]
    d = u.shape[0]
    diag = np.einsum("bii->bi", rot).real
    off = rot.copy()
    off[:, np.arange(d), np.arange(d)] = 0
    if np.max(np.abs(off)) > tol:
        return None
    return u, diag


def commuting_elements(ops: np.ndarray, tol: float = 1e-12):
    """Pointwise maximum in a common eigenbasis; None if the A_b do not commute."""
    found = _common_basis(ops, tol)
    if found is None:
        return None
    u, diag = found
    winner = np.argmax(diag, axis=0)
    d = u.shape[0]
    elements = np.zeros((len(ops), d, d), dtype=complex)
    for i, b in enumerate(winner):
        elements[b] += np.outer(u[:, i], u[:, i].conj())
    Y = (u * diag.max(axis=0)) @ u.conj().T
    return elements, Y


def commuting(ops: np.ndarray, tol: float = 1e-12) -> DiscriminationResult | None:
    found = commuting_elements(ops, tol)
    if found is None:
        return None
    return _result(found[0], ops, found[1], "commuting")


def _line_search(c: np.ndarray, lam: np.ndarray, iters: int = 12) -> np.ndarray:
    """Approximate minimizer over t >= 0 of t*c - sum_j log(1 + t*lam_j), one per row.

    This is the barrier restricted to the Newton direction, written through
    the eigenvalues of S^{-1/2} Delta S^{-1/2} so no large terms cancel. Rows
    that have not converged after ``iters`` safeguarded Newton steps return
    the largest point known to lie left of the minimizer, where the barrier
    still decreases.
    """
    neg = lam < 0
    bound = np.where(neg, -1.0 / np.where(neg, lam, -1.0), np.inf).min(axis=1)
    # the exact barrier is bounded along any direction; the cap guards roundoff
    hi = np.minimum(bound, 1e3)
    lo = np.zeros_like(c)
    # the full Newton step is usually close to optimal
    t = np.minimum(1.0, 0.5 * hi)
    done = np.zeros(len(c), dtype=bool)
    for _ in range(iters):
        q = lam / (1.0 + t[:, None] * lam)
        g1 = c - q.sum(axis=1)
        g2 = (q * q).sum(axis=1)
        below = g1 < 0
        lo = np.where(below, t, lo)
        hi = np.where(below, hi, t)
        tn = t - g1 / np.where(g2 > 0, g2, 1.0)
        tn = np.where((tn > lo) & (tn < hi) & (g2 > 0), tn, 0.5 * (lo + hi))
        done = np.abs(tn - t) <= 1e-9 * np.maximum(1.0, t)
        t = tn
        if done.all():
            break
    else:
        t = np.where(done, t, np.where(lo > 0, lo, t))
    # stay a fixed fraction inside the boundary so roundoff cannot cross it
    return np.minimum(t, 0.99 * bound)


@dataclass(frozen=True)
class BatchSolution:
    elements: np.ndarray
    values: np.ndarray
    Y: np.ndarray
    uppers: np.ndarray
    iterations: np.ndarray


def barrier_batch(
    ops: np.ndarray,
    gap_tol=GAP_TOL,
    max_iter: int = MAX_ITER,
    shrink: float = 0.02,
    center_tol: float = 1e-8,
) -> BatchSolution:
    """Path-following Newton method on the dual log-det barrier.

    ``ops`` has shape (N, B, d, d) and holds N independent problems that are
    advanced together; ``gap_tol`` may be a scalar or one value per problem.
    """
    n, nb, d, _ = ops.shape
    eye = np.eye(d)
    gap_tol = np.broadcast_to(np.asarray(gap_tol, dtype=float), (n,))
    scale = np.maximum(np.max(lambda_max(ops), axis=1), 1e-300)
    Y = (2.0 * scale[:, None, None] * eye).astype(complex)
    mu = scale.copy()
    # centered gap is mu*B*d, but renormalizing E costs a little; stop on the real gap
    mu_floor = 1e-15 * scale
    its = np.zeros(n, dtype=int)
    best_val = np.full(n, -np.inf)
    best_up = np.full(n, np.inf)
    best_E = np.zeros_like(ops)
    best_Y = Y.copy()
    prev_gap = np.full(n, np.inf)
    stage_its = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    centered = np.zeros(n, dtype=bool)
    while active.any():
        idx = np.nonzero(active & ~centered)[0]
        if idx.size:
            # one Newton step on f(Y) = Tr Y / mu - sum_b log det(Y - A_b)
            its[idx] += 1
            stage_its[idx] += 1
            Yi = Y[idx]
            s, U = np.linalg.eigh(Yi[:, None] - ops[idx])
            if s[:, :, 0].min() <= 0:
                raise NumericFailure("barrier iterate left the feasible region")
            Uh = np.swapaxes(U, -1, -2).conj()
            W = (U / s[:, :, None, :]) @ Uh
            grad = eye / mu[idx, None, None] - W.sum(axis=1)
            # row-major vec: (sum_b W_b D W_b)[i,l] = sum_jk W_b[i,j] D[j,k] W_b[k,l]
            H = herm(np.einsum("nbij,nbkl->niljk", W, W).reshape(idx.size, d * d, d * d))
            # many nearly active constraints make H badly conditioned; drop its numerically null directions
            hw, hv = np.linalg.eigh(H)
            if not np.all(np.isfinite(hw)):
                raise NumericFailure("Newton system is not finite")
            inv = np.where(hw > 1e-14 * hw[:, -1:], 1.0 / np.where(hw > 0, hw, 1.0), 0.0)
            rhs = np.swapaxes(hv, -1, -2).conj() @ -grad.reshape(idx.size, d * d, 1)
            step = hv @ (inv[:, :, None] * rhs)
            step = herm(step.reshape(idx.size, d, d))
            dec2 = -np.einsum("nij,nij->n", grad.conj(), step).real
            r = 1.0 / np.sqrt(s)
            M = (Uh @ step[:, None] @ U) * r[:, :, :, None] * r[:, :, None, :]
            lam = np.linalg.eigvalsh(herm(M)).reshape(idx.size, nb * d)
            t = _line_search(np.einsum("nii->n", step).real / mu[idx], lam)
            move = t[:, None, None] * step
            # S = Y - A_b is only resolved to ulp(Y); steps below that are noise
            tiny = np.abs(move).max(axis=(1, 2)) <= 4e-16 * np.abs(Yi).max(axis=(1, 2))
            # at tiny mu roundoff can keep the decrement from ever reaching center_tol
            stuck = stage_its[idx] >= STAGE_ITER
            stop = (dec2 < center_tol) | (t <= 0) | tiny | stuck | (its[idx] >= max_iter)
            go = ~stop
            Y[idx[go]] = Yi[go] + move[go]
            centered[idx[stop]] = True
        cidx = np.nonzero(active & centered)[0]
        if cidx.size == 0:
            continue
        oc = ops[cidx]
        E = mu[cidx, None, None, None] * np.linalg.inv(Y[cidx, None] - oc)
        w, v = np.linalg.eigh(herm(E.sum(axis=1)))
        Tm = (v / np.sqrt(w)[:, None, :]) @ np.swapaxes(v, -1, -2).conj()
        E = herm(Tm[:, None] @ E @ Tm[:, None])
        vals = _objective(E, oc)
        Yr = _repair_dual(Y[cidx], oc)
        ups = np.einsum("nii->n", Yr).real
        better = vals > best_val[cidx]
        best_val[cidx[better]] = vals[better]
        best_E[cidx[better]] = E[better]
        lower = ups < best_up[cidx]
        best_up[cidx[lower]] = ups[lower]
        best_Y[cidx[lower]] = Yr[lower]
        gap = best_up[cidx] - best_val[cidx]
        # past the nominal target, a stage that fails to halve the gap means roundoff has taken over
        stalled = (gap > 0.5 * prev_gap[cidx]) & (mu[cidx] * nb * d <= gap_tol[cidx])
        prev_gap[cidx] = gap
        finished = (
            stalled
            | (mu[cidx] <= mu_floor[cidx])
            | (its[cidx] >= max_iter)
            | (gap < 0.5 * gap_tol[cidx])
        )
        active[cidx[finished]] = False
        cont = cidx[~finished]
        mu[cont] = np.maximum(mu[cont] * shrink, mu_floor[cont])
        centered[cont] = False
        stage_its[cont] = 0
    return BatchSolution(best_E, best_val, best_Y, best_up, its)


def barrier(ops: np.ndarray, gap_tol: float = GAP_TOL, max_iter: int = MAX_ITER, **kw) -> DiscriminationResult:
    """Single-problem wrapper around :func:`barrier_batch`."""
    sol = barrier_batch(ops[None], gap_tol, max_iter, **kw)
    return _result(sol.elements[0], ops, sol.Y[0], "barrier", int(sol.iterations[0]))


def solve_batch(ops: np.ndarray, gap_tol=GAP_TOL) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Optimal POVMs for a stack of problems (N, B, d, d).

    Closed forms are used where they apply and the rest go through one
    batched barrier run. Returns raw element stacks, values and repaired duals.
    """
    ops = herm(ops)
    n, nb, d, _ = ops.shape
    E = np.zeros_like(ops)
    Y = np.zeros((n, d, d), dtype=complex)
    rest = []
    for k in range(n):
        if nb == 1:
            found = (np.eye(d, dtype=complex)[None], ops[k, 0])
        else:
            found = commuting_elements(ops[k])
            if found is None and nb == 2:
                found = helstrom_elements(ops[k])
        if found is None:
            rest.append(k)
        else:
            E[k], Y[k] = found
    if rest:
        tol = np.broadcast_to(np.asarray(gap_tol, dtype=float), (n,))[rest]
        sol = barrier_batch(ops[rest], tol)
        E[rest] = sol.elements
        Y[rest] = sol.Y
    return E, _objective(E, ops), _repair_dual(Y, ops)


def discrimination_step(ops, method: str = "auto", gap_tol: float = GAP_TOL) -> DiscriminationResult:
    """Maximize sum_b Tr(E_b A_b) over POVMs {E_b}.

    ``method`` is ``"auto"`` (closed forms when they apply), ``"helstrom"``,
    ``"commuting"`` or ``"iterative"``. The returned ``dual_Y`` always satisfies
    ``Y >= A_b`` so ``Tr(dual_Y)`` is a valid upper bound on the optimum.
    """
    ops = np.asarray(ops, dtype=complex)
    if ops.ndim == 2:
        ops = ops[None]
    if ops.ndim != 3 or ops.shape[1] != ops.shape[2]:
        raise InvalidInput(f"expected a stack of square matrices, got shape {ops.shape}")
    ops = herm(ops)
    if not np.any(ops):
        raise InvalidInput("at least one operator must be nonzero")
    nb, d, _ = ops.shape
    if nb == 1:
        return _result(np.eye(d, dtype=complex)[None], ops, ops[0], "trivial")
    if method in ("auto", "commuting"):
        res = commuting(ops)
        if res is not None or method == "commuting":
            if res is None:
                raise InvalidInput("operators do not commute")
            return res
    if method == "helstrom" or (method == "auto" and nb == 2):
        if nb != 2:
            raise InvalidInput("Helstrom solution needs exactly two operators")
        return helstrom(ops)
    if method not in ("auto", "iterative"):
        raise InvalidInput(f"unknown method {method!r}")
    return barrier(ops, gap_tol=gap_tol)
