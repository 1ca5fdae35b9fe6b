"""Application problems: symplectic targets, trace minimization with
Williamson post-processing, and the building blocks of symplectic model
reduction (PSD cost, cotangent lift, DEIM).

Cost functions and their Euclidean gradients are defined on all of matrix
space (smooth extensions), so central finite differences are always a valid
oracle; the PSD gradient in particular is gated behind that check in the test
suite before any model-reduction run trusts it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (
    Dims,
    SymplecticPoint,
    jmul,
    jtmul,
    jvec,
    mulj,
    muljt,
    skew_part,
    sym_part,
)
from .geometry import NotSPD
from .optimizer import Problem, SolverOptions, SolverResult, SolverStatus, minimize
from .sr import sgs

__all__ = [
    "TargetProblem", "TraceProblem", "PsdProblem", "SymplecticSpectrum",
    "sum_gate", "target_cost_grad", "trace_cost_grad", "psd_cost_grad",
    "gauss_transform", "random_symplectic_orthogonal", "spsd_test_matrix",
    "williamson_small", "williamson_spsd", "symplectic_eigenpairs",
    "cotangent_lift", "deim_select", "deim_reduced_rhs",
    "random_symplectic_point", "SingularSelection",
]


class SingularSelection(Exception):
    """An intermediate interpolation block in the greedy selection is singular."""


# ---------------------------------------------------------------------------
# cost functions


@dataclass(frozen=True)
class TargetProblem:
    """Distance-to-target cost f(X) = ||X - W||_F^2."""

    w: np.ndarray

    def cost(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x - self.w) ** 2)

    def euclidean_gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (x - self.w)

    def problem(self) -> Problem:
        rows, cols = self.w.shape
        return Problem(self.cost, self.euclidean_gradient, Dims(rows // 2, cols // 2))


@dataclass(frozen=True)
class TraceProblem:
    """Trace cost f(X) = tr(X^T A X) for symmetric positive-(semi)definite A.

    Its minimum over Sp(2k, 2n) is twice the sum of the k smallest symplectic
    eigenvalues of A.
    """

    a: np.ndarray
    k: int

    def __post_init__(self):
        if np.linalg.norm(self.a - self.a.T) > 1e-12 * max(1.0, np.linalg.norm(self.a)):
            raise ValueError("A must be symmetric")

    def cost(self, x: np.ndarray) -> float:
        return float(np.sum(x * (self.a @ x)))

    def euclidean_gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (self.a @ x)

    def problem(self) -> Problem:
        return Problem(self.cost, self.euclidean_gradient,
                       Dims(self.a.shape[0] // 2, self.k))


@dataclass(frozen=True)
class PsdProblem:
    """Proper symplectic decomposition cost f(X) = ||A - X X^+ A||_F^2.

    Invariant under right-multiplication of X by any symplectic 2k-by-2k
    matrix, since X X^+ depends only on the symplectic subspace.
    """

    snapshots: np.ndarray
    k: int

    def residual(self, x: np.ndarray) -> np.ndarray:
        a = self.snapshots
        return a - x @ (jtmul(x.T @ jmul(a)))

    def cost(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.residual(x)) ** 2)

    def euclidean_gradient(self, x: np.ndarray) -> np.ndarray:
        a = self.snapshots
        e = self.residual(x)
        # adjoint of dPi = dX J^T X^T J + X J^T dX^T J applied to -2E
        t1 = mulj(e @ (a.T @ jtmul(x)))
        t2 = muljt(jmul(a @ (e.T @ x)))
        return -2.0 * (t1 + t2)

    def problem(self) -> Problem:
        return Problem(self.cost, self.euclidean_gradient,
                       Dims(self.snapshots.shape[0] // 2, self.k))


def sum_gate() -> SymplecticPoint:
    """The 4-by-4 SUM gate; symplectic by construction."""
    w = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, -1.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    return SymplecticPoint.from_entries(w)


def target_cost_grad(prob: TargetProblem, x: np.ndarray) -> tuple[float, np.ndarray]:
    return prob.cost(x), prob.euclidean_gradient(x)


def trace_cost_grad(prob: TraceProblem, x: np.ndarray) -> tuple[float, np.ndarray]:
    return prob.cost(x), prob.euclidean_gradient(x)


def psd_cost_grad(prob: PsdProblem, x: np.ndarray) -> tuple[float, np.ndarray]:
    return prob.cost(x), prob.euclidean_gradient(x)


# ---------------------------------------------------------------------------
# constructions


def random_symplectic_point(n: int, k: int, seed: int = 0) -> SymplecticPoint:
    """Seeded feasible point: the symplectic factor of a Gaussian matrix."""
    rng = np.random.default_rng(seed)
    return sgs(rng.standard_normal((2 * n, 2 * k))).s


def gauss_transform(n: int, l: int, c: float, d: float) -> np.ndarray:
    """Symplectic Gauss transformation: identity except a 2-by-2 scaling
    block c at rows l-1, l, its inverse at rows n+l-1, n+l, and the coupling
    entries d at (l-1, n+l) and (l, n+l-1) (1-based indices)."""
    if not 2 <= l <= n:
        raise ValueError(f"need 2 <= l <= n, got l={l}, n={n}")
    if c == 0.0:
        raise ValueError("c must be nonzero")
    out = np.eye(2 * n)
    i, j = l - 2, l - 1  # 0-based row/col of the scaled pair
    out[i, i] = out[j, j] = c
    out[n + i, n + i] = out[n + j, n + j] = 1.0 / c
    out[i, n + j] = d
    out[j, n + i] = d
    return out


def random_symplectic_orthogonal(n: int, seed: int = 0) -> np.ndarray:
    """Orthogonal and symplectic 2n-by-2n matrix from a random unitary.

    Draws a complex Gaussian matrix, orthonormalizes it, fixes the phases of
    the triangular factor's diagonal for uniqueness, and embeds the unitary
    as [[Re U, Im U], [-Im U, Re U]].  Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    diag = np.diag(r)
    q = q * (np.conj(diag) / np.abs(diag))
    return np.block([[q.real, q.imag], [-q.imag, q.real]])


def spsd_test_matrix(n: int, m: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """SPSD matrix with known symplectic spectrum and symplectic null space.

    A = J Q diag(D, D) (J Q)^T with D = diag(0, ..., 0, m+1, ..., n) (m zeros)
    and Q the product of a random symplectic-orthogonal matrix and a Gauss
    transform L(round(n/5), 1.2, -sqrt(n/5)).  Returns (A, diag of D); the
    symplectic spectrum of A equals that diagonal and A has rank 2(n - m).
    """
    if not 0 < m < n:
        raise ValueError(f"need 0 < m < n, got m={m}, n={n}")
    l = int(round(n / 5))
    if l < 2:
        raise ValueError(f"n={n} too small: round(n/5) must be at least 2")
    k_mat = random_symplectic_orthogonal(n, seed)
    q = k_mat @ gauss_transform(n, l, 1.2, -np.sqrt(n / 5))
    d = np.concatenate([np.zeros(m), np.arange(m + 1, n + 1, dtype=float)])
    jq = jmul(q)
    a = jq @ (np.concatenate([d, d])[:, None] * jq.T)
    return sym_part(a), d


# ---------------------------------------------------------------------------
# Williamson post-processing


def williamson_small(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Williamson diagonal form of an SPD 2k-by-2k matrix.

    Returns (S, d) with S symplectic, S^T M S = diag(d, d), and d positive
    nondecreasing.  Construction: the real canonical form of the skew matrix
    M^{-1/2} J M^{-1/2} is obtained from a real Schur decomposition, its 2-by-2
    blocks are normalized and ordered, and the symplectic congruence is
    assembled from M^{-1/2} and the block frequencies.
    """
    m = np.asarray(m, dtype=float)
    lam, u = np.linalg.eigh(sym_part(m))
    if lam[0] <= 0.0:
        raise NotSPD(f"smallest eigenvalue {lam[0]:.3e}")
    inv_sqrt = (u * lam**-0.5) @ u.T
    wt = skew_part(inv_sqrt @ jmul(inv_sqrt))
    t, q = scipy.linalg.schur(wt, output="real")
    k = m.shape[0] // 2
    xs, ys, mus = [], [], []
    for j in range(k):
        b = t[2 * j, 2 * j + 1]
        xcol, ycol = q[:, 2 * j], q[:, 2 * j + 1]
        if b < 0.0:
            xcol, ycol, b = ycol, xcol, -b
        xs.append(xcol)
        ys.append(ycol)
        mus.append(b)
    order = np.argsort(-np.asarray(mus), kind="stable")
    mus = np.asarray(mus)[order]
    qb = np.column_stack([xs[i] for i in order] + [ys[i] for i in order])
    s = inv_sqrt @ (qb * np.concatenate([mus, mus]) ** -0.5)
    return s, 1.0 / mus


def williamson_spsd(m: np.ndarray, null_tol: float = 1e-8,
                    scale_hint: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Williamson form extended to SPSD matrices with a symplectic null space.

    Eigenvectors below ``null_tol`` relative to max(largest eigenvalue,
    ``scale_hint``) are treated as the null space; they are symplectically
    normalized by an SR factorization, the problem is deflated to the
    J-orthogonal complement, and the SPD Williamson form is applied there.
    The reported values are read back from the diagonal of S^T M S, so
    near-zero values reflect the actual residuals rather than being forced to
    zero.  ``scale_hint`` guards the case of a numerically zero input, where
    the largest eigenvalue itself sits at roundoff level.
    """
    m = sym_part(np.asarray(m, dtype=float))
    lam, u = np.linalg.eigh(m)
    scale = max(float(lam[-1]), float(scale_hint), 0.0)
    null = lam <= null_tol * scale
    m_null = int(null.sum())
    if m_null == 0:
        s, d = williamson_small(m)
    elif m_null == m.shape[0]:
        s = sgs(u).s.entries
    else:
        if m_null % 2:
            raise NotSPD(f"odd-dimensional numerical null space ({m_null})")
        s0 = sgs(u[:, null]).s.entries
        basis = scipy.linalg.null_space(s0.T @ jmul(np.eye(m.shape[0])))
        s1 = sgs(basis).s.entries
        m1 = sym_part(s1.T @ m @ s1)
        sw, _ = williamson_small(m1)
        sp = s1 @ sw
        h, r = m_null // 2, (m.shape[0] - m_null) // 2
        s = np.column_stack([s0[:, :h], sp[:, :r], s0[:, h:], sp[:, r:]])
    k = m.shape[0] // 2
    smslike = s.T @ m @ s
    d = 0.5 * (np.diag(smslike)[:k] + np.diag(smslike)[k:])
    order = np.argsort(d, kind="stable")
    s = s[:, np.concatenate([order, order + k])]
    return s, d[order]


@dataclass
class SymplecticSpectrum:
    """Computed symplectic eigenvalues with paired eigenvectors and residuals.

    ``values`` is nondecreasing; the pair (u_j, v_j) satisfies
    A u = d J v and A v = -d J u up to ``residuals[j]``.
    """

    values: np.ndarray
    u_vectors: np.ndarray
    v_vectors: np.ndarray
    residuals: np.ndarray
    diagonalizer_orthogonality: float
    solver_result: SolverResult

    @property
    def vector_pairs(self):
        return [(self.u_vectors[:, j], self.v_vectors[:, j])
                for j in range(self.values.size)]

    @property
    def converged(self) -> bool:
        return self.solver_result.status is SolverStatus.GRAD_TOLERANCE_REACHED


def symplectic_eigenpairs(a: np.ndarray, k: int,
                          solver_options: SolverOptions | None = None,
                          x0: SymplecticPoint | None = None,
                          seed: int = 0,
                          null_tol: float = 1e-8) -> SymplecticSpectrum:
    """The k smallest symplectic eigenvalues of an SPSD matrix by trace
    minimization followed by Williamson post-processing.

    The solver minimizes tr(X^T A X) over Sp(2k, 2n) (trial steps capped at 1
    by default for this problem class), then diagonalizes X*^T A X*; the
    eigenvector pairs are the j-th and (j+k)-th columns of X* S.  Solver
    non-convergence is surfaced as a warning, with residuals reported either
    way.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0] // 2
    prob = TraceProblem(a, k)
    if solver_options is None:
        solver_options = SolverOptions(gtol=1e-12, niter=5000, gamma_max=1.0)
    if x0 is None:
        x0 = random_symplectic_point(n, k, seed)
    result = minimize(prob.problem(), x0, solver_options)
    if result.status is not SolverStatus.GRAD_TOLERANCE_REACHED:
        warnings.warn(
            f"trace minimization ended with {result.status.value}; "
            "eigenvalue residuals may be large", stacklevel=2)
    xs = result.x_final.entries
    small = sym_part(xs.T @ (a @ xs))
    # a numerically zero X^T A X (all requested values zero) must still be
    # classified as null space: floor the scale at null_tol times the ambient
    # problem size so the relative test cannot collapse
    hint = null_tol * np.linalg.norm(a, 2) * np.linalg.norm(xs, 2) ** 2
    s, d = williamson_spsd(small, null_tol=null_tol, scale_hint=hint)
    vecs = xs @ s
    u, v = vecs[:, :k], vecs[:, k:]
    res = np.empty((k, 2))
    for j in range(k):
        res[j, 0] = np.linalg.norm(a @ u[:, j] - d[j] * jvec(v[:, j]))
        res[j, 1] = np.linalg.norm(a @ v[:, j] + d[j] * jvec(u[:, j]))
    ortho_dev = float(np.linalg.norm(s.T @ s - np.eye(2 * k)))
    return SymplecticSpectrum(d, u, v, res, ortho_dev, result)


# ---------------------------------------------------------------------------
# model-reduction building blocks


def cotangent_lift(snapshots: np.ndarray, k: int) -> SymplecticPoint:
    """Block-diagonal orthosymplectic basis diag(Xhat, Xhat) from snapshots.

    Xhat holds the k leading left singular vectors of the stacked matrix
    [top-half snapshots, bottom-half snapshots].
    """
    a = np.asarray(snapshots, dtype=float)
    n = a.shape[0] // 2
    s = a.shape[1]
    if not 1 <= k <= min(n, 2 * s):
        raise ValueError(f"need 1 <= k <= min(n, 2s) = {min(n, 2 * s)}, got {k}")
    stacked = np.column_stack([a[:n], a[n:]])
    u, _, _ = np.linalg.svd(stacked, full_matrices=False)
    return _block_diag_lift(u[:, :k])


def _block_diag_lift(xhat: np.ndarray) -> SymplecticPoint:
    n, k = xhat.shape
    out = np.zeros((2 * n, 2 * k))
    out[:n, :k] = xhat
    out[n:, k:] = xhat
    return SymplecticPoint.from_entries(out)


def deim_select(v: np.ndarray) -> np.ndarray:
    """Greedy interpolation-index selection for a full-column-rank basis V.

    The first index maximizes |V[:, 0]|; each later index maximizes the
    residual of the next column against interpolation at the indices chosen
    so far.  Indices are distinct by the exactness of interpolation at
    selected rows.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[1] < 1:
        raise ValueError(f"expected a (2n, m) basis, got shape {v.shape}")
    first = float(np.max(np.abs(v[:, 0])))
    if first == 0.0:
        raise SingularSelection("first basis column is zero")
    indices = [int(np.argmax(np.abs(v[:, 0])))]
    for j in range(1, v.shape[1]):
        sel = np.array(indices)
        block = v[sel, :j]
        try:
            coef = np.linalg.solve(block, v[sel, j])
        except np.linalg.LinAlgError as exc:
            raise SingularSelection(f"singular interpolation block at step {j}") from exc
        r = v[:, j] - v[:, :j] @ coef
        i = int(np.argmax(np.abs(r)))
        if abs(r[i]) == 0.0:
            raise SingularSelection(f"zero residual at step {j}: basis rank-deficient")
        indices.append(i)
    return np.array(indices)


@dataclass(frozen=True)
class DeimOperator:
    """Reduced gradient-of-Hamiltonian map with an interpolated nonlinearity.

    Precomputes U^T M U and the oblique projection factor
    B = U^T V (P^T V)^{-1} offline.  ``grad_h`` must evaluate components of
    the nonlinear gradient at given indices: grad_h(indices, x_full).  When a
    stencil map is available the selected components are fed only the state
    entries they depend on (rows ``support`` of the basis), so one evaluation
    costs O(|support| k) instead of O(n k).
    """

    reduced_mass: np.ndarray
    oblique: np.ndarray          # B, 2k x m
    basis: np.ndarray            # U entries
    indices: np.ndarray
    grad_h: object
    variant: str
    inner_map: np.ndarray | None   # (V^T P)^{-1} V^T U for the SP variant
    support: np.ndarray | None     # state rows feeding the selected components
    basis_support: np.ndarray | None

    def _nonlinear_values(self, xt: np.ndarray) -> np.ndarray:
        full = np.zeros(self.basis.shape[0])
        if self.variant == "psd-deim":
            if self.support is not None:
                full[self.support] = self.basis_support @ xt
            else:
                full = self.basis @ xt
        else:
            full[self.indices] = self.inner_map @ xt
        return self.grad_h(self.indices, full)

    def __call__(self, xt: np.ndarray) -> np.ndarray:
        return self.reduced_mass @ xt + self.oblique @ self._nonlinear_values(xt)


def deim_reduced_rhs(u, m, v: np.ndarray, indices: np.ndarray, grad_h,
                     variant: str = "psd-deim", stencil=None) -> DeimOperator:
    """Assemble the reduced nonlinear gradient map for a ROM.

    variant "psd-deim":            U^T M U xt + B gradh(U xt) at the indices;
    variant "structure-preserving": the nonlinearity is evaluated at the
    sparse state P (V^T P)^{-1} V^T U xt instead, which keeps the reduced
    model Hamiltonian at the price of approximation quality.

    ``stencil``, when given, maps an index array to the union of state
    entries those components read; it turns the online nonlinear evaluation
    into a stencil-support product.
    """
    if variant not in ("psd-deim", "structure-preserving"):
        raise ValueError(f"unknown variant {variant!r}")
    ue = np.asarray(getattr(u, "entries", u), dtype=float)
    indices = np.asarray(indices, dtype=int)
    reduced_mass = ue.T @ (m @ ue)
    vp = v[indices]  # P^T V, m x m
    try:
        oblique = np.linalg.solve(vp.T, (ue.T @ v).T).T
    except np.linalg.LinAlgError as exc:
        raise SingularSelection("P^T V is singular") from exc
    inner = None
    if variant == "structure-preserving":
        inner = np.linalg.solve(vp.T, v.T @ ue)  # (V^T P)^{-1} V^T U
    support = basis_support = None
    if stencil is not None and variant == "psd-deim":
        support = np.unique(np.asarray(stencil(indices), dtype=int))
        basis_support = ue[support]
    return DeimOperator(np.asarray(reduced_mass), oblique, ue, indices,
                        grad_h, variant, inner, support, basis_support)
