"""Validated quantum types and the small dense linear algebra they rely on.

Hermitian operators are plain ``numpy`` arrays checked by :func:`as_hermitian`;
states, POVMs, ensembles and joint distributions are immutable dataclasses
whose arrays are flagged read-only on construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidInput, NotPositiveDefinite, NumericFailure

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
COMPLETENESS_TOL = 1e-10
PROB_TOL = 1e-12
PD_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def canonicalize(vec: np.ndarray) -> np.ndarray:
    """Fix the global phase: the first entry of largest modulus becomes real and >= 0."""
    v = np.array(vec, dtype=complex).reshape(-1)
    mod = np.abs(v)
    # near-ties go to the first index so roundoff cannot move the pivot
    k = int(np.argmax(mod >= mod.max() * (1 - 1e-12)))
    c = v[k]
    if c != 0 and not (c.imag == 0 and c.real > 0):
        v = v * (np.conj(c) / abs(c))
        v[k] = abs(c)
    return v


def as_hermitian(a, dim: int | None = None, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``a`` as a complex square array after checking conjugate symmetry."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {m.shape[0]}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput("matrix has non-finite entries")
    if np.max(np.abs(m - m.conj().T), initial=0.0) > tol:
        raise InvalidInput("matrix is not Hermitian")
    return m


def herm(a: np.ndarray) -> np.ndarray:
    """Hermitian part; removes roundoff asymmetry."""
    return 0.5 * (a + np.swapaxes(a, -1, -2).conj())


def projector(vec) -> np.ndarray:
    v = np.asarray(getattr(vec, "amplitudes", vec), dtype=complex)
    return np.outer(v, v.conj())


def tensor(a, b) -> np.ndarray:
    """Kronecker product with row-major subsystem ordering."""
    return np.kron(np.asarray(a), np.asarray(b))


def _eigh(a: np.ndarray):
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK breakdown
        raise NumericFailure(f"eigendecomposition failed: {exc}") from exc


def operator_norm(a) -> float:
    """Largest absolute eigenvalue of a Hermitian matrix."""
    m = np.asarray(a, dtype=complex)
    try:
        w = np.linalg.eigvalsh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericFailure(f"eigendecomposition failed: {exc}") from exc
    return float(max(abs(w[0]), abs(w[-1])))


def dominating_eigenvector(a) -> tuple[float, "PureState"]:
    """Largest eigenvalue and its canonicalized unit eigenvector.

    Eigenpairs are ordered by descending eigenvalue with a stable sort, so on
    an exact tie the eigenvector the solver returned first wins.
    """
    w, v = _eigh(np.asarray(a, dtype=complex))
    order = np.argsort(-w, kind="stable")
    k = order[0]
    return float(w[k]), PureState(v[:, k])


def top_eigpairs(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched largest eigenvalue and eigenvector of a stack of Hermitian matrices."""
    w, v = _eigh(a)
    return w[..., -1], v[..., :, -1]


def lambda_max(a: np.ndarray) -> np.ndarray:
    """Batched largest eigenvalue, closed form for 2x2 blocks."""
    a = np.asarray(a)
    if a.shape[-1] == 2:
        p = a[..., 0, 0].real
        q = a[..., 1, 1].real
        off = np.abs(a[..., 0, 1])
        return 0.5 * (p + q) + np.sqrt(0.25 * (p - q) ** 2 + off**2)
    try:
        return np.linalg.eigvalsh(a)[..., -1]
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericFailure(f"eigendecomposition failed: {exc}") from exc


def inv_sqrt(a) -> np.ndarray:
    """Inverse square root of a positive definite matrix."""
    w, v = _eigh(as_hermitian(a, tol=1e-9))
    if w[0] <= PD_TOL:
        raise NotPositiveDefinite(f"minimum eigenvalue {w[0]:.3e} is not above {PD_TOL}")
    return (v / np.sqrt(w)) @ v.conj().T


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = _eigh(herm(np.asarray(a, dtype=complex)))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def partial_trace(rho: np.ndarray, dims: tuple[int, int], keep: int) -> np.ndarray:
    """Partial trace of a bipartite operator; ``keep`` is 0 or 1."""
    d1, d2 = dims
    r = np.asarray(rho).reshape(d1, d2, d1, d2)
    if keep == 0:
        return np.einsum("ajbj->ab", r)
    return np.einsum("iaib->ab", r)


@dataclass(frozen=True, eq=False)
class PureState:
    """Unit vector with canonical global phase."""

    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise InvalidInput("state amplitudes must be a nonempty finite vector")
        if abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
            raise InvalidInput(f"state norm {np.linalg.norm(v)!r} differs from 1")
        object.__setattr__(self, "amplitudes", _frozen(canonicalize(v)))

    @classmethod
    def from_vector(cls, vec) -> "PureState":
        """Normalize an arbitrary nonzero vector."""
        v = np.asarray(vec, dtype=complex).reshape(-1)
        n = np.linalg.norm(v)
        if not np.isfinite(n):
            raise InvalidInput("state amplitudes must be finite")
        if n == 0:
            raise InvalidInput("zero vector is not a state")
        return cls(v / n)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> np.ndarray:
        return projector(self.amplitudes)

    def __eq__(self, other):
        return isinstance(other, PureState) and np.array_equal(self.amplitudes, other.amplitudes)

    def __hash__(self):
        return hash(self.amplitudes.tobytes())

    def __repr__(self):
        return f"PureState({np.array2string(self.amplitudes, precision=4)})"


@dataclass(frozen=True, eq=False)
class Povm:
    """Finite list of PSD operators summing to the identity, stored as a (B, d, d) stack."""

    elements: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.elements, dtype=complex)
        if e.ndim == 2:
            e = e[None]
        if e.ndim != 3 or e.shape[0] == 0 or e.shape[1] != e.shape[2]:
            raise InvalidInput(f"POVM needs a nonempty stack of square matrices, got {e.shape}")
        for b, el in enumerate(e):
            as_hermitian(el, tol=1e-10)
            if np.linalg.eigvalsh(herm(el))[0] < -PSD_TOL:
                raise InvalidInput(f"POVM element {b} is not positive semidefinite")
        if np.max(np.abs(e.sum(axis=0) - np.eye(e.shape[1]))) > COMPLETENESS_TOL:
            raise InvalidInput("POVM elements do not sum to the identity")
        object.__setattr__(self, "elements", _frozen(herm(e)))

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    def __len__(self) -> int:
        return self.elements.shape[0]

    def __iter__(self):
        return iter(self.elements)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Prior weights over pure signal states."""

    weights: np.ndarray
    states: tuple[PureState, ...]

    def __post_init__(self):
        states = tuple(s if isinstance(s, PureState) else PureState.from_vector(s) for s in self.states)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(states) == 0 or w.size != len(states):
            raise InvalidInput("weights and states need equal nonzero length")
        if len({s.dim for s in states}) != 1:
            raise DimensionMismatch("all states must share a dimension")
        if np.any(w < 0) or abs(w.sum() - 1.0) > PROB_TOL or not np.all(np.isfinite(w)):
            raise InvalidInput("weights must be a probability vector")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "states", states)

    @classmethod
    def uniform(cls, states: Sequence) -> "Ensemble":
        return cls(np.full(len(states), 1.0 / len(states)), tuple(states))

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def __len__(self) -> int:
        return len(self.states)

    @cached_property
    def vectors(self) -> np.ndarray:
        """States stacked as rows, shape (n, d)."""
        return np.array([s.amplitudes for s in self.states])

    @cached_property
    def projectors(self) -> np.ndarray:
        v = self.vectors
        return np.einsum("ni,nj->nij", v, v.conj())

    def spans(self, tol: float = 1e-10) -> bool:
        """Whether the signal states span the whole space."""
        return np.linalg.matrix_rank(self.vectors, tol=tol) == self.dim

    def with_weights(self, weights) -> "Ensemble":
        return Ensemble(weights, self.states)


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Probabilities p_ij over pairs of letters."""

    probs: np.ndarray = field()

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2 or p.size == 0:
            raise InvalidInput("joint distribution must be a nonempty matrix")
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
            raise InvalidInput("joint distribution must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def marginal(self, axis: int) -> np.ndarray:
        """Marginal over the first (axis=0) or second (axis=1) letter."""
        return self.probs.sum(axis=1 - axis)

    def transpose(self) -> "JointDistribution":
        return JointDistribution(self.probs.T)

    @classmethod
    def product(cls, p, q) -> "JointDistribution":
        return cls(np.outer(p, q))


def seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, None or an existing SeedSequence.

    A SeedSequence is copied so that spawning from it never depends on
    earlier spawns from the same object.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    return np.random.SeedSequence(seed)


def spawn(seed, n: int) -> list[np.random.SeedSequence]:
    return seed_sequence(seed).spawn(n)


def random_pure_state(dim: int, seed=None) -> PureState:
    """Haar-random pure state from a normalized complex Gaussian vector."""
    if dim < 1:
        raise InvalidInput("dim must be positive")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return PureState.from_vector(z)


def random_unit_vectors(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def random_povm(dim: int, outcomes: int, seed=None) -> Povm:
    """Random POVM from a frame renormalized by S^{-1/2}(.)S^{-1/2}.

    Elements are rank one when ``outcomes >= dim``; with fewer outcomes a
    rank-one frame cannot span, so full-rank Wishart elements are used instead.
    """
    if dim < 1 or outcomes < 1:
        raise InvalidInput("dim and outcomes must be positive")
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        rng = np.random.default_rng(seed)
    for _ in range(100):
        cols = 1 if outcomes >= dim else dim
        g = rng.standard_normal((outcomes, dim, cols)) + 1j * rng.standard_normal((outcomes, dim, cols))
        raw = g @ np.swapaxes(g, 1, 2).conj()
        s = raw.sum(axis=0)
        try:
            t = inv_sqrt(s)
        except NotPositiveDefinite:
            continue
        elements = herm(t @ raw @ t)
        if outcomes == 1:
            elements = np.eye(dim, dtype=complex)[None]
        return Povm(elements)
    raise NumericFailure("could not draw a nonsingular frame")  # pragma: no cover


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return herm(rho / np.trace(rho).real)


def random_psd(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    return herm(g @ g.conj().T) / dim


def basis_ensemble(dim: int, weights=None) -> Ensemble:
    eye = np.eye(dim, dtype=complex)
    w = np.full(dim, 1.0 / dim) if weights is None else weights
    return Ensemble(w, tuple(PureState(e) for e in eye))
