"""Completely positive maps, the ensemble map and the maximal output operator norm."""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .core import (
    PSD_TOL,
    Ensemble,
    PureState,
    herm,
    inv_sqrt,
    lambda_max,
    operator_norm,
    partial_trace,
    random_density_matrix,
    random_psd,
    random_unit_vectors,
    spawn,
    top_eigpairs,
)
from .errors import DimensionMismatch, InvalidInput

DEFAULT_RESTARTS = 32
ASCENT_MAX_ITER = 500
ASCENT_RTOL = 1e-11
BLOCH_GRID = (360, 180)
DROP_TOL = 1e-14


class CpMap:
    """Common interface of Kraus and Holevo form maps."""

    in_dim: int
    out_dim: int

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (self.in_dim, self.in_dim):
            raise DimensionMismatch(f"input must be {self.in_dim}x{self.in_dim}, got {rho.shape}")
        return self._apply(rho)

    def __call__(self, rho) -> np.ndarray:
        return self.apply(rho)

    def apply_pure(self, vecs: np.ndarray) -> np.ndarray:
        """Outputs on the pure states given as rows of ``vecs``, shape (N, out, out)."""
        raise NotImplementedError

    def apply_many(self, rhos: np.ndarray) -> np.ndarray:
        """Outputs on a stack of inputs, shape (N, out, out)."""
        raise NotImplementedError

    def adjoint(self, a: np.ndarray) -> np.ndarray:
        """Trace-dual map; works on a single matrix or a stack."""
        raise NotImplementedError

    def to_kraus(self) -> "KrausMap":
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class KrausMap(CpMap):
    """rho -> sum_k A_k rho A_k^*, operators stacked as (K, out, in)."""

    kraus: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kraus, dtype=complex)
        if k.ndim == 2:
            k = k[None]
        if k.ndim != 3 or k.shape[0] == 0:
            raise InvalidInput(f"Kraus operators must be a nonempty stack of matrices, got {k.shape}")
        if not np.all(np.isfinite(k)):
            raise InvalidInput("Kraus operators must be finite")
        k = k.copy()
        k.setflags(write=False)
        object.__setattr__(self, "kraus", k)

    @property
    def in_dim(self) -> int:
        return self.kraus.shape[2]

    @property
    def out_dim(self) -> int:
        return self.kraus.shape[1]

    def _apply(self, rho):
        return herm(np.einsum("kai,ij,kbj->ab", self.kraus, rho, self.kraus.conj()))

    def apply_many(self, rhos):
        return np.einsum("kai,nij,kbj->nab", self.kraus, rhos, self.kraus.conj())

    def apply_pure(self, vecs):
        v = np.einsum("kai,ni->nka", self.kraus, vecs)
        return np.einsum("nka,nkb->nab", v, v.conj())

    def adjoint(self, a):
        return np.einsum("kai,...ab,kbj->...ij", self.kraus.conj(), a, self.kraus)

    def to_kraus(self):
        return self


@dataclass(frozen=True, eq=False)
class HolevoMap(CpMap):
    """Entanglement-breaking map rho -> sum_k R_k Tr(X_k rho) with PSD R_k, X_k."""

    R: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=complex)
        X = np.asarray(self.X, dtype=complex)
        if R.ndim == 2:
            R, X = R[None], X[None]
        if R.ndim != 3 or X.ndim != 3 or R.shape[0] != X.shape[0] or R.shape[0] == 0:
            raise InvalidInput("Holevo form needs equal-length nonempty stacks of R_k and X_k")
        for name, stack in (("R", R), ("X", X)):
            if stack.shape[1] != stack.shape[2]:
                raise InvalidInput(f"{name}_k must be square")
            if np.max(np.abs(stack - np.swapaxes(stack, 1, 2).conj())) > 1e-10:
                raise InvalidInput(f"{name}_k must be Hermitian")
            if np.min(np.linalg.eigvalsh(herm(stack))[:, 0]) < -PSD_TOL:
                raise InvalidInput(f"{name}_k must be positive semidefinite")
        R, X = herm(R), herm(X)
        R.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "X", X)

    @property
    def in_dim(self) -> int:
        return self.X.shape[1]

    @property
    def out_dim(self) -> int:
        return self.R.shape[1]

    def __len__(self):
        return self.R.shape[0]

    def _apply(self, rho):
        w = np.einsum("kij,ji->k", self.X, rho).real
        return np.einsum("k,kab->ab", w, self.R)

    def apply_many(self, rhos):
        w = np.einsum("kij,nji->nk", self.X, rhos).real
        return np.einsum("nk,kab->nab", w, self.R)

    def apply_pure(self, vecs):
        w = np.einsum("ni,kij,nj->nk", vecs.conj(), self.X, vecs).real
        return np.einsum("nk,kab->nab", w, self.R)

    def adjoint(self, a):
        w = np.einsum("kab,...ba->...k", self.R, a).real
        return np.einsum("...k,kij->...ij", w, self.X)

    def to_kraus(self) -> KrausMap:
        """Kraus operators sqrt(r_a x_c) |r_a><x_c| from eigendecompositions of R_k, X_k."""
        ops = []
        for R, X in zip(self.R, self.X):
            rw, rv = np.linalg.eigh(R)
            xw, xv = np.linalg.eigh(X)
            for a in np.nonzero(rw > 0)[0]:
                for c in np.nonzero(xw > 0)[0]:
                    ops.append(np.sqrt(rw[a] * xw[c]) * np.outer(rv[:, a], xv[:, c].conj()))
        if not ops:
            ops = [np.zeros((self.out_dim, self.in_dim))]
        return KrausMap(np.array(ops))


def identity_channel(dim: int) -> KrausMap:
    return KrausMap(np.eye(dim, dtype=complex)[None])


def completely_depolarizing(dim: int) -> HolevoMap:
    """Replace every input by the maximally mixed state."""
    return HolevoMap(np.eye(dim)[None] / dim, np.eye(dim)[None])


def phi_from_ensemble(e: Ensemble) -> HolevoMap:
    """The ensemble map rho -> sum_i p_i P_i rho P_i as R_i = p_i P_i, X_i = P_i."""
    P = e.projectors
    return HolevoMap(e.weights[:, None, None] * P, P)


def tensor_maps(m1: CpMap, m2: CpMap) -> CpMap:
    """Product map; Holevo form is kept when both factors have it."""
    if isinstance(m1, HolevoMap) and isinstance(m2, HolevoMap):
        R = np.einsum("kab,lcd->klacbd", m1.R, m2.R).reshape(len(m1) * len(m2), m1.out_dim * m2.out_dim, -1)
        X = np.einsum("kab,lcd->klacbd", m1.X, m2.X).reshape(len(m1) * len(m2), m1.in_dim * m2.in_dim, -1)
        return HolevoMap(R, X)
    k1, k2 = m1.to_kraus().kraus, m2.to_kraus().kraus
    K = np.einsum("kab,lcd->klacbd", k1, k2)
    return KrausMap(K.reshape(k1.shape[0] * k2.shape[0], k1.shape[1] * k2.shape[1], k1.shape[2] * k2.shape[2]))


def conjugated(m: HolevoMap, B: np.ndarray) -> HolevoMap:
    """rho -> m(B rho B^*) for Hermitian B, still in Holevo form."""
    return HolevoMap(m.R, np.einsum("ij,kjl,lm->kim", B.conj().T, m.X, B))


# --- maximal output norm -------------------------------------------------


@dataclass(frozen=True)
class NuInfReport:
    value: float
    argmax_state: PureState
    restarts_used: int
    best_per_restart: list[float] = field(default_factory=list)
    grid_value: float | None = None


def output_norms(m: CpMap, vecs: np.ndarray) -> np.ndarray:
    return lambda_max(m.apply_pure(vecs))


def bloch_grid(n_azimuth: int = BLOCH_GRID[0], n_polar: int = BLOCH_GRID[1]) -> np.ndarray:
    """Qubit pure states on a midpoint mesh of the Bloch sphere."""
    theta = (np.arange(n_polar) + 0.5) * np.pi / n_polar
    phi = np.arange(n_azimuth) * 2 * np.pi / n_azimuth
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    return np.stack([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)], axis=-1).reshape(-1, 2)


def restart_starts(dim: int, restarts: int, seed) -> np.ndarray:
    """One start vector per restart from its own child seed stream.

    The first ``r`` starts do not depend on the total count, so more restarts
    only ever add candidates.
    """
    children = spawn(seed, restarts)
    return np.array([random_unit_vectors(1, dim, np.random.default_rng(c))[0] for c in children])


def ascend_output_norm(
    m: CpMap,
    starts: np.ndarray,
    max_iter: int = ASCENT_MAX_ITER,
    rtol: float = ASCENT_RTOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Riemannian gradient ascent of psi -> ||m(psi psi^*)|| from each row of ``starts``.

    At the current point the top output eigenvector u gives the minorant
    <psi|m^*(uu^*)|psi>; the tangent step along m^*(uu^*)psi - f psi is
    accepted only if the true objective rises, otherwise it is halved.
    Restarts run as one batch but never interact.
    """
    psi = starts / np.linalg.norm(starts, axis=1, keepdims=True)
    val, u = top_eigpairs(m.apply_pure(psi))
    step = np.ones(len(psi))
    active = np.ones(len(psi), dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        uu = np.einsum("na,nb->nab", u[idx], u[idx].conj())
        G = m.adjoint(uu)
        p = psi[idx]
        grad = np.einsum("nij,nj->ni", G, p) - val[idx, None] * p
        trial = p + step[idx, None] * grad
        trial /= np.linalg.norm(trial, axis=1, keepdims=True)
        tval, tu = top_eigpairs(m.apply_pure(trial))
        up = tval > val[idx]
        gain = np.where(up, tval - val[idx], 0.0)
        acc = idx[up]
        psi[acc], u[acc] = trial[up], tu[up]
        val_old = val[acc].copy()
        val[acc] = tval[up]
        step[acc] *= 2.0
        rej = idx[~up]
        step[rej] *= 0.5
        done_acc = acc[gain[up] <= rtol * np.maximum(np.abs(val_old), 1e-300)]
        active[done_acc] = False
        active[rej[step[rej] < 1e-12]] = False
    return polish_output_norm(m, psi, val, u, max_iter)


def polish_output_norm(m: CpMap, psi: np.ndarray, val: np.ndarray, u: np.ndarray, max_iter: int = ASCENT_MAX_ITER):
    """Alternate psi <- top eigenvector of m^*(uu^*) and u <- top eigenvector of m(psi psi^*).

    Each half-step cannot lower ||m(psi psi^*)||. Gradient steps crawl on
    flat ridges where this fixed-point map still moves quickly.
    """
    psi, val, u = psi.copy(), val.copy(), u.copy()
    for _ in range(max_iter):
        _, trial = top_eigpairs(herm(m.adjoint(np.einsum("na,nb->nab", u, u.conj()))))
        tval, tu = top_eigpairs(herm(m.apply_pure(trial)))
        up = tval > val
        if not up.any():
            break
        gain = np.max(tval[up] - val[up])
        psi[up], val[up], u[up] = trial[up], tval[up], tu[up]
        if gain <= 1e-15 * max(1.0, float(np.max(np.abs(val)))):
            break
    return val, psi


def nu_infinity(m: CpMap, restarts: int = DEFAULT_RESTARTS, seed=0, grid: bool | None = None) -> NuInfReport:
    """Certified lower bound on sup_psi ||m(psi psi^*)|| by multistart ascent.

    For qubit inputs a 360x180 Bloch mesh is also swept and its best point
    refined by one more ascent, reported as the last entry of
    ``best_per_restart``.
    """
    if restarts < 1:
        raise InvalidInput("restarts must be at least 1")
    starts = restart_starts(m.in_dim, restarts, seed)
    grid = m.in_dim == 2 if grid is None else grid
    grid_value = None
    if grid:
        pts = bloch_grid()
        vals = output_norms(m, pts)
        k = int(np.argmax(vals))
        grid_value = float(vals[k])
        starts = np.vstack([starts, pts[k]])
    vals, psis = ascend_output_norm(m, starts)
    k = int(np.argmax(vals))
    return NuInfReport(
        value=float(vals[k]),
        argmax_state=PureState.from_vector(psis[k]),
        restarts_used=len(vals),
        best_per_restart=[float(v) for v in vals],
        grid_value=grid_value,
    )


# --- multiplicativity checks -----------------------------------------------------------


@dataclass(frozen=True)
class EbMultiplicativityReport:
    nu1: NuInfReport
    nu2: NuInfReport
    nu12: NuInfReport
    gap: float
    lower_ok: bool


def check_eb_multiplicativity(
    psi: HolevoMap,
    omega: CpMap,
    restarts: int = DEFAULT_RESTARTS,
    seed=0,
    product_restarts: int = 64,
    tol: float = 1e-6,
) -> EbMultiplicativityReport:
    """Compare nu(psi x omega) against nu(psi) nu(omega) for an entanglement-breaking psi."""
    if not isinstance(psi, HolevoMap):
        raise InvalidInput("the first map must be given in Holevo form")
    s1, s2, s12 = spawn(seed, 3)
    nu1 = nu_infinity(psi, restarts, s1)
    nu2 = nu_infinity(omega, restarts, s2)
    nu12 = nu_infinity(tensor_maps(psi, omega), product_restarts, s12)
    gap = nu12.value - nu1.value * nu2.value
    return EbMultiplicativityReport(nu1, nu2, nu12, gap, bool(gap >= -tol))


@dataclass(frozen=True)
class EbChainReport:
    x: list[float]
    G: list[np.ndarray]
    G_prime: list[np.ndarray]
    lhs: float
    rhs: float
    slack: float
    reconstruction_error: float
    marginal_error: float
    holds: bool


def eb_chain_check(
    psi: HolevoMap,
    omega: CpMap,
    tau12,
    recon_tol: float = 1e-9,
    slack_tol: float = 1e-10,
) -> EbChainReport:
    """Decompose (psi x omega)(tau12) term by term and check the operator-norm chain.

    Terms with weight x_k <= 1e-14 are dropped: their conditional state is
    undefined and they contribute nothing.
    """
    d1, d2 = psi.in_dim, omega.in_dim
    tau = np.asarray(tau12, dtype=complex)
    if tau.shape != (d1 * d2, d1 * d2):
        raise DimensionMismatch(f"tau12 must be {(d1 * d2,) * 2}, got {tau.shape}")
    t4 = tau.reshape(d1, d2, d1, d2)
    x, G, Gp, kept_R = [], [], [], []
    for R, Xk in zip(psi.R, psi.X):
        # Tr_1[(X_k x I) tau]
        cond = np.einsum("ac,cbad->bd", Xk, t4)
        xk = float(np.trace(cond).real)
        if xk <= DROP_TOL:
            continue
        gp = herm(cond / xk)
        gk = omega.apply(gp)
        x.append(xk)
        Gp.append(gp)
        G.append(gk)
        kept_R.append(R)
    direct = tensor_maps(psi, omega).apply(tau)
    recon = sum((xk * np.kron(R, gk) for xk, R, gk in zip(x, kept_R, G)), np.zeros_like(direct))
    recon_err = float(np.max(np.abs(direct - recon)))
    psi_tau1 = psi.apply(partial_trace(tau, (d1, d2), keep=0))
    marg = sum((xk * R for xk, R in zip(x, kept_R)), np.zeros_like(psi_tau1))
    marg_err = float(np.max(np.abs(psi_tau1 - marg)))
    lhs = operator_norm(direct)
    rhs = max((operator_norm(g) for g in G), default=0.0) * operator_norm(psi_tau1)
    slack = rhs - lhs
    holds = recon_err <= recon_tol and marg_err <= recon_tol and slack >= -slack_tol
    return EbChainReport(x, G, Gp, lhs, rhs, slack, recon_err, marg_err, bool(holds))


def random_holevo_map(dim_in: int, dim_out: int, terms: int, rng: np.random.Generator) -> HolevoMap:
    """Random entanglement-breaking channel: density matrices R_k measured by a random POVM {X_k}."""
    R = np.array([random_density_matrix(dim_out, rng, rank=int(rng.integers(1, dim_out + 1))) for _ in range(terms)])
    # the first X_k has full rank so the normalization below exists
    ranks = [dim_in] + [int(rng.integers(1, dim_in + 1)) for _ in range(terms - 1)]
    W = np.array([random_psd(dim_in, rng, rank=r) for r in ranks])
    B = inv_sqrt(herm(W.sum(axis=0)))
    return HolevoMap(R, herm(B[None] @ W @ B[None]))


def random_kraus_map(dim_in: int, dim_out: int, ops: int, rng: np.random.Generator) -> KrausMap:
    g = rng.standard_normal((ops, dim_out, dim_in)) + 1j * rng.standard_normal((ops, dim_out, dim_in))
    return KrausMap(g / np.sqrt(2 * ops * dim_in))
