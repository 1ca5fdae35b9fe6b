"""Foundational symplectic linear algebra.

A point of the symplectic Stiefel manifold Sp(2k, 2n) is a real 2n-by-2k
matrix X with X^T J_{2n} X = J_{2k}, where J = [[0, I], [-I, 0]] is the
Poisson matrix.  Throughout the package J is applied as a signed block swap
and the perfect shuffle as an index permutation; neither is materialized in
hot paths.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

#: Default absolute tolerance on the Frobenius feasibility residual.
DEFAULT_FEAS_TOL = 1e-8
#: Default absolute tolerance on the Frobenius tangency residual.
DEFAULT_TAN_TOL = 1e-8


class FeasibilityWarning(UserWarning):
    """A constructed point or tangent vector is noticeably off the manifold."""


def poisson(n: int) -> np.ndarray:
    """Dense Poisson matrix J_{2n} = [[0, I_n], [-I_n, 0]]."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


def jmul(a: np.ndarray) -> np.ndarray:
    """J @ a without forming J; `a` has an even number of rows."""
    m = a.shape[0] // 2
    return np.concatenate([a[m:], -a[:m]], axis=0)


def jtmul(a: np.ndarray) -> np.ndarray:
    """J^T @ a = -J @ a without forming J."""
    m = a.shape[0] // 2
    return np.concatenate([-a[m:], a[:m]], axis=0)


def mulj(a: np.ndarray) -> np.ndarray:
    """a @ J without forming J; `a` has an even number of columns."""
    m = a.shape[1] // 2
    return np.concatenate([-a[:, m:], a[:, :m]], axis=1)


def muljt(a: np.ndarray) -> np.ndarray:
    """a @ J^T without forming J."""
    m = a.shape[1] // 2
    return np.concatenate([a[:, m:], -a[:, :m]], axis=1)


def jvec(v: np.ndarray) -> np.ndarray:
    """J @ v for a 1-d vector of even length."""
    m = v.shape[0] // 2
    return np.concatenate([v[m:], -v[:m]])


def skew_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - a.T)


def sym_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class Dims:
    """Half-dimensions (n, k) of a 2n-by-2k subject, with k <= n."""

    n: int
    k: int

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ValueError(f"dimensions must be positive, got n={self.n}, k={self.k}")
        if self.k > self.n:
            raise ValueError(f"k={self.k} exceeds n={self.n}")

    @property
    def rows(self) -> int:
        return 2 * self.n

    @property
    def cols(self) -> int:
        return 2 * self.k


def _dims_of(entries: np.ndarray) -> Dims:
    rows, cols = entries.shape
    if rows % 2 or cols % 2:
        raise ValueError(f"shape {entries.shape} is not (2n, 2k)")
    return Dims(rows // 2, cols // 2)


def symplecticity_residual(x) -> float:
    """Feasibility violation ||X^T J_{2n} X - J_{2k}||_F of a 2n-by-2k matrix."""
    e = np.asarray(getattr(x, "entries", x), dtype=float)
    d = _dims_of(e)
    return float(np.linalg.norm(e.T @ jmul(e) - poisson(d.k)))


def tangency_residual(x, z) -> float:
    """||Z^T J X + X^T J Z||_F, zero exactly when Z is tangent at X."""
    xe = np.asarray(getattr(x, "entries", x), dtype=float)
    ze = np.asarray(getattr(z, "entries", z), dtype=float)
    if ze.shape != xe.shape:
        raise ValueError(f"shape mismatch: {ze.shape} vs {xe.shape}")
    # Z^T J X = -(X^T J Z)^T, so the defect is the skew part of X^T J Z (doubled)
    m = xe.T @ jmul(ze)
    return float(np.linalg.norm(m - m.T))


def _check_residual(kind: str, residual: float, tol: float) -> None:
    # Warn above tol, hard-error above 1e3*tol: iterative schemes are allowed
    # to drift a little, garbage input is not.
    if residual > 1e3 * tol:
        raise ValueError(f"{kind} residual {residual:.3e} exceeds {1e3 * tol:.1e}")
    if residual > tol:
        warnings.warn(
            f"{kind} residual {residual:.3e} above tolerance {tol:.1e}",
            FeasibilityWarning,
            stacklevel=3,
        )


@dataclass(frozen=True)
class SymplecticPoint:
    """A 2n-by-2k matrix on (or numerically near) Sp(2k, 2n).

    Values are immutable by convention; no method mutates ``entries``.
    """

    dims: Dims
    entries: np.ndarray

    @classmethod
    def from_entries(cls, entries, tol_feas: float = DEFAULT_FEAS_TOL,
                     check: bool = True) -> "SymplecticPoint":
        e = np.ascontiguousarray(entries, dtype=float)
        d = _dims_of(e)
        if check:
            _check_residual("symplecticity", symplecticity_residual(e), tol_feas)
        return cls(d, e)

    @property
    def n(self) -> int:
        return self.dims.n

    @property
    def k(self) -> int:
        return self.dims.k

    def residual(self) -> float:
        return symplecticity_residual(self.entries)

    def symplectic_inverse(self) -> np.ndarray:
        return symplectic_inverse(self)


@dataclass(frozen=True)
class TangentVector:
    """An element Z of the tangent space at ``base``: Z^T J X + X^T J Z = 0."""

    base: SymplecticPoint
    entries: np.ndarray

    @classmethod
    def from_entries(cls, base: SymplecticPoint, entries,
                     tol_tan: float = DEFAULT_TAN_TOL, check: bool = True) -> "TangentVector":
        e = np.ascontiguousarray(entries, dtype=float)
        if e.shape != base.entries.shape:
            raise ValueError(f"shape mismatch: {e.shape} vs {base.entries.shape}")
        if check:
            _check_residual("tangency", tangency_residual(base.entries, e), tol_tan)
        return cls(base, e)

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def residual(self) -> float:
        return tangency_residual(self.base.entries, self.entries)


def canonical_point(n: int, k: int) -> SymplecticPoint:
    """The canonical embedding: columns e_1..e_k, e_{n+1}..e_{n+k} of I_{2n}."""
    d = Dims(n, k)
    e = np.zeros((2 * n, 2 * k))
    for j in range(k):
        e[j, j] = 1.0
        e[n + j, k + j] = 1.0
    return SymplecticPoint(d, e)


def symplectic_inverse(x) -> np.ndarray:
    """X^+ = J_{2k}^T X^T J_{2n}; a left inverse of a symplectic X."""
    e = np.asarray(getattr(x, "entries", x), dtype=float)
    xt_j = jtmul(e).T  # X^T J_{2n} = (J_{2n}^T X)^T
    return jtmul(xt_j)


@dataclass(frozen=True)
class PerfectShuffle:
    """Perfect shuffle permutation P_{2k} = [e_1, e_3, ..., e_{2k-1}, e_2, ..., e_{2k}].

    ``permutation`` holds the column indices: P = I[:, permutation].
    Conjugation by P sends J_{2k} to diag(J_2, ..., J_2).
    """

    k: int
    permutation: np.ndarray

    @property
    def inverse(self) -> np.ndarray:
        return np.argsort(self.permutation)

    def matrix(self) -> np.ndarray:
        return np.eye(2 * self.k)[:, self.permutation]

    def shuffle_cols(self, a: np.ndarray) -> np.ndarray:
        """a @ P^T: reorders columns so symplectic pairs (j, k+j) become adjacent."""
        return a[:, self.inverse]

    def unshuffle_cols(self, a: np.ndarray) -> np.ndarray:
        """a @ P."""
        return a[:, self.permutation]

    def conjugate(self, r: np.ndarray) -> np.ndarray:
        """P r P^T."""
        ix = self.inverse
        return r[np.ix_(ix, ix)]

    def unconjugate(self, r_hat: np.ndarray) -> np.ndarray:
        """P^T r_hat P."""
        p = self.permutation
        return r_hat[np.ix_(p, p)]


def perfect_shuffle(k: int) -> PerfectShuffle:
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    perm = np.concatenate([np.arange(0, 2 * k, 2), np.arange(1, 2 * k, 2)])
    return PerfectShuffle(k, perm)
