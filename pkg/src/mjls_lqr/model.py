"""Problem data, matrix collections and the coupling operators.

A *collection* is a stack of ``N`` square matrices, one per Markov mode,
stored as an array of shape ``(N, n, n)``. Collections carry the trace
inner product ``<V; W> = sum_i tr(V_i' W_i)``. The two coupling operators

    K_U(Q)_i = U_i Q_i + Q_i U_i' + sum_j lam_ji Q_j
    H_U(Q)_i = U_i' Q_i + Q_i U_i + sum_j lam_ij Q_j

are adjoint to each other under that inner product. Their restricted
variants only couple modes of a visited set and vanish elsewhere.

Mode indices are 0-based in this API; the CLI and file formats are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import (
    InvalidDistributionError,
    ShapeError,
    SubspaceError,
    ValidationError,
)

TOL_SYM = 1e-10
TOL_ZERO = 1e-10
TOL_PSD = 1e-8
TOL_PD = 1e-12
TOL_GEN = 1e-9
TOL_PROB = 1e-9
TOL_RATE = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MatrixCollection:
    """Immutable stack of ``N`` square ``n x n`` matrices."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim == 2:
            a = a[None]
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise ShapeError(f"expected shape (N, n, n), got {np.shape(self.entries)}")
        object.__setattr__(self, "entries", _frozen(a))

    @classmethod
    def zeros(cls, num_modes, dim):
        return cls(np.zeros((num_modes, dim, dim)))

    @property
    def num_modes(self):
        return self.entries.shape[0]

    @property
    def dim(self):
        return self.entries.shape[1]

    def __len__(self):
        return self.num_modes

    def __getitem__(self, i):
        return self.entries[i]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def is_symmetric(self, tol=TOL_SYM):
        e = self.entries
        return bool(np.all(np.abs(e - e.transpose(0, 2, 1)) <= tol))

    def is_psd(self, tol=TOL_PSD):
        return bool(np.all(min_eigenvalues(self.entries) >= -tol))


@dataclass(frozen=True)
class GainCollection:
    """Immutable stack of ``N`` feedback gains, each ``m x n``."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 3:
            raise ShapeError(f"expected shape (N, m, n), got {a.shape}")
        object.__setattr__(self, "entries", _frozen(a))

    def __len__(self):
        return self.entries.shape[0]

    def __getitem__(self, i):
        return self.entries[i]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True)
class VisitedSet:
    """Modes with positive occupation probability somewhere on [0, T]."""

    members: tuple
    num_modes: int

    def __post_init__(self):
        members = tuple(sorted({int(i) for i in self.members}))
        if any(i < 0 or i >= self.num_modes for i in members):
            raise ValidationError(f"visited modes {members} outside 0..{self.num_modes - 1}")
        object.__setattr__(self, "members", members)

    @classmethod
    def full(cls, num_modes):
        return cls(tuple(range(num_modes)), num_modes)

    @property
    def mask(self):
        m = np.zeros(self.num_modes, dtype=bool)
        m[list(self.members)] = True
        return m

    @property
    def complement(self):
        return tuple(i for i in range(self.num_modes) if i not in self.members)

    def is_full(self):
        return len(self.members) == self.num_modes

    def one_based(self):
        return [i + 1 for i in self.members]

    def __contains__(self, i):
        return i in self.members

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class DeterministicState:
    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", _frozen(np.ravel(self.x0)))


@dataclass(frozen=True)
class GaussianState:
    """Random initial state: common mean, per-mode covariance given theta(0)=i."""

    mean: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(np.ravel(self.mean)))
        object.__setattr__(self, "covariances", _frozen(self.covariances))


InitialState = Union[DeterministicState, GaussianState]


@dataclass(frozen=True)
class ProblemInstance:
    """Finite-horizon LQR problem on a Markov jump linear system.

    ``A``, ``B``, ``Q`` and ``R`` are either constant per-mode stacks of shape
    ``(N, ., .)`` or grid-sampled schedules of shape ``(K+1, N, ., .)`` holding
    the value at every node of a ``K``-step grid. ``Q_terminal`` is always
    constant.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Q_terminal: np.ndarray
    generator: np.ndarray
    phi: np.ndarray
    horizon: float
    initial_state: InitialState
    name: str = field(default="", compare=False)

    def __post_init__(self):
        for name in ("A", "B", "Q", "R", "Q_terminal", "generator", "phi"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "horizon", float(self.horizon))
        self._validate()

    @property
    def num_modes(self):
        return self.generator.shape[0]

    @property
    def state_dim(self):
        return self.A.shape[-1]

    @property
    def input_dim(self):
        return self.B.shape[-1]

    @property
    def is_time_varying(self):
        return any(getattr(self, k).ndim == 4 for k in ("A", "B", "Q", "R"))

    def schedule_length(self):
        """Number of grid nodes the schedules are sampled on, or None."""
        lengths = {getattr(self, k).shape[0] for k in ("A", "B", "Q", "R") if getattr(self, k).ndim == 4}
        return lengths.pop() if lengths else None

    def coefficients(self, num_steps):
        """Return ``(A, B, Q, R)`` each with a leading time axis.

        The time axis has length 1 for constant data and ``num_steps + 1``
        for schedules.
        """
        length = self.schedule_length()
        if length is not None and length != num_steps + 1:
            raise ShapeError(
                f"schedules have {length} nodes but the grid has {num_steps + 1}"
            )
        out = []
        for k in ("A", "B", "Q", "R"):
            a = getattr(self, k)
            out.append(a if a.ndim == 4 else a[None])
        return tuple(out)

    def _validate(self):
        lam = self.generator
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise ShapeError("generator must be square", field="generator")
        N = lam.shape[0]
        if N < 1:
            raise ShapeError("need at least one mode", field="generator")
        A = self.A if self.A.ndim == 4 else self.A[None]
        if A.ndim != 4 or A.shape[1] != N or A.shape[2] != A.shape[3]:
            raise ShapeError(f"expected (N, n, n) with N={N}, got {self.A.shape}", field="A")
        n = A.shape[-1]
        B = self.B if self.B.ndim == 4 else self.B[None]
        if B.ndim != 4 or B.shape[1:3] != (N, n):
            raise ShapeError(f"expected (N, n, m) with N={N}, n={n}, got {self.B.shape}", field="B")
        m = B.shape[-1]
        Q = self.Q if self.Q.ndim == 4 else self.Q[None]
        if Q.ndim != 4 or Q.shape[1:] != (N, n, n):
            raise ShapeError(f"expected (N, n, n), got {self.Q.shape}", field="Q")
        R = self.R if self.R.ndim == 4 else self.R[None]
        if R.ndim != 4 or R.shape[1:] != (N, m, m):
            raise ShapeError(f"expected (N, m, m), got {self.R.shape}", field="R")
        if self.Q_terminal.shape != (N, n, n):
            raise ShapeError(f"expected (N, n, n), got {self.Q_terminal.shape}", field="Q_terminal")
        if self.phi.shape != (N,):
            raise ShapeError(f"expected length {N}, got {self.phi.shape}", field="phi")
        lengths = {a.shape[0] for a in (A, B, Q, R) if a.shape[0] > 1}
        if len(lengths) > 1:
            raise ShapeError("time-varying schedules disagree on node count", field="A")

        for name, arr in (("Q", Q), ("Q_terminal", self.Q_terminal[None])):
            if np.any(np.abs(arr - arr.swapaxes(-1, -2)) > TOL_SYM):
                raise ValidationError("not symmetric", field=name)
            if np.any(min_eigenvalues(arr) < -TOL_PSD):
                raise ValidationError("not positive semidefinite", field=name)
        if np.any(np.abs(R - R.swapaxes(-1, -2)) > TOL_SYM):
            raise ValidationError("not symmetric", field="R")
        bad = np.argwhere(min_eigenvalues(R) <= TOL_PD)
        if bad.size:
            raise ValidationError(f"mode {bad[0][-1] + 1} not positive definite", field="R")

        from .chain import validate_generator

        diag = validate_generator(lam)
        if not diag.ok:
            raise ValidationError("; ".join(diag.messages()), field="generator")
        validate_distribution(self.phi)

        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ValidationError("must be positive", field="horizon")

        s = self.initial_state
        if isinstance(s, DeterministicState):
            if s.x0.shape != (n,):
                raise ShapeError(f"expected length {n}", field="initial_state.x0")
        elif isinstance(s, GaussianState):
            if s.mean.shape != (n,):
                raise ShapeError(f"expected length {n}", field="initial_state.mean")
            if s.covariances.shape != (N, n, n):
                raise ShapeError(f"expected ({N}, {n}, {n})", field="initial_state.covariances")
            c = s.covariances
            if np.any(np.abs(c - c.swapaxes(-1, -2)) > TOL_SYM) or np.any(min_eigenvalues(c) < -TOL_PSD):
                raise ValidationError("not symmetric PSD", field="initial_state.covariances")
        else:
            raise ValidationError("unknown initial state kind", field="initial_state")


def validate_distribution(phi):
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 1 or not np.all(np.isfinite(phi)):
        raise InvalidDistributionError("must be a finite vector", field="phi")
    if np.any(phi < 0):
        raise InvalidDistributionError("negative entries", field="phi")
    if abs(phi.sum() - 1.0) > TOL_PROB:
        raise InvalidDistributionError(f"sums to {phi.sum():.12g}, not 1", field="phi")


def min_eigenvalues(stack):
    """Smallest eigenvalue of the symmetric part of each trailing matrix."""
    a = np.asarray(stack, dtype=float)
    return np.linalg.eigvalsh(0.5 * (a + a.swapaxes(-1, -2)))[..., 0]


def _stack(x, name="collection"):
    a = np.asarray(x, dtype=float)
    if a.ndim != 3:
        raise ShapeError(f"{name} must have shape (N, n, k), got {a.shape}")
    return a


def _check_pair(V, W):
    if V.shape != W.shape:
        raise ShapeError(f"collection shapes differ: {V.shape} vs {W.shape}")


def inner_product(V, W):
    V, W = _stack(V), _stack(W)
    _check_pair(V, W)
    return float(np.einsum("ijk,ijk->", V, W))


def _prepare(U, Q, generator):
    U, Q = _stack(U, "U"), _stack(Q, "Q")
    _check_pair(U, Q)
    lam = np.asarray(generator, dtype=float)
    if lam.shape != (Q.shape[0], Q.shape[0]):
        raise ShapeError(f"generator shape {lam.shape} does not match N={Q.shape[0]}")
    return U, Q, lam


def apply_K(U, Q, generator):
    U, Q, lam = _prepare(U, Q, generator)
    UQ = U @ Q
    out = UQ + Q @ U.transpose(0, 2, 1) + np.einsum("ji,jkl->ikl", lam, Q)
    return MatrixCollection(out)


def apply_H(U, Q, generator):
    U, Q, lam = _prepare(U, Q, generator)
    QU = Q @ U
    out = U.transpose(0, 2, 1) @ Q + QU + np.einsum("ij,jkl->ikl", lam, Q)
    return MatrixCollection(out)


def _as_visited(Z, num_modes):
    if isinstance(Z, VisitedSet):
        if Z.num_modes != num_modes:
            raise ShapeError(f"visited set is over {Z.num_modes} modes, collection has {num_modes}")
        return Z
    return VisitedSet(tuple(Z), num_modes)


def project(V, Z):
    V = _stack(V)
    Z = _as_visited(Z, V.shape[0])
    out = np.where(Z.mask[:, None, None], V, 0.0)
    return MatrixCollection(out)


def _require_subspace(Q, Z):
    off = ~Z.mask
    if off.any() and np.max(np.abs(Q[off])) > TOL_ZERO:
        raise SubspaceError(f"components outside visited modes {Z.one_based()} are nonzero")


def apply_K_restricted(U, Q, generator, Z):
    U, Q, lam = _prepare(U, Q, generator)
    Z = _as_visited(Z, Q.shape[0])
    _require_subspace(Q, Z)
    if Z.is_full():
        return apply_K(U, Q, lam)
    idx = list(Z.members)
    out = np.zeros_like(Q)
    sub = apply_K(U[idx], Q[idx], lam[np.ix_(idx, idx)]).entries
    out[idx] = sub
    return MatrixCollection(out)


def apply_H_restricted(U, Q, generator, Z):
    U, Q, lam = _prepare(U, Q, generator)
    Z = _as_visited(Z, Q.shape[0])
    _require_subspace(Q, Z)
    if Z.is_full():
        return apply_H(U, Q, lam)
    idx = list(Z.members)
    out = np.zeros_like(Q)
    out[idx] = apply_H(U[idx], Q[idx], lam[np.ix_(idx, idx)]).entries
    return MatrixCollection(out)

