"""Norms, subspaces, orthoprojectors and the l_q distance-to-subspace solver.

Exponents are plain floats; ``math.inf`` is the only representation of the
infinite exponent (never a large finite number).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionMismatchError, InvalidExponentError, SolverFailure

INF = math.inf

ORTHO_TOL = 1e-10
RANK_RTOL = 1e-12


def check_exponent(q):
    q = float(q)
    if math.isnan(q) or q < 1:
        raise InvalidExponentError(f"exponent must lie in [1, inf], got {q}")
    return q


def conjugate(q):
    """Hoelder conjugate q' with 1/q + 1/q' = 1 (1 <-> inf)."""
    q = check_exponent(q)
    if q == 1:
        return INF
    if q == INF:
        return 1.0
    return q / (q - 1.0)


def as_point(x):
    """Validate and return ``x`` as a 1-D float array with finite entries."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionMismatchError(f"a point must be a non-empty vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point has non-finite coordinates")
    return arr


def _lq_rows(X, q):
    """Row-wise l_q norms of a 2-D array."""
    A = np.abs(X)
    if q == INF:
        return A.max(axis=-1) if A.shape[-1] else np.zeros(A.shape[:-1])
    if q == 1:
        return A.sum(axis=-1)
    # scale by the max entry so that |x|^q neither overflows nor underflows
    m = A.max(axis=-1, keepdims=True) if A.shape[-1] else np.zeros(A.shape[:-1] + (1,))
    safe = np.where(m > 0, m, 1.0)
    S = A / safe
    if q == 2:
        return np.sqrt(np.einsum("...i,...i->...", S, S)) * safe[..., 0]
    return (np.sum(S**q, axis=-1)) ** (1.0 / q) * safe[..., 0]


def lq_norm(x, q):
    """(sum |x_k|^q)^(1/q); max |x_k| for q = inf."""
    q = check_exponent(q)
    return float(_lq_rows(as_point(x)[None, :], q)[0])


@dataclass(frozen=True)
class MixedNormSpec:
    """Block layout and exponents of the mixed norm l_{p1,p2}^{s,b}.

    Blocks are contiguous: block j holds coordinates s*j .. s*j + s - 1.
    """

    s: int
    b: int
    p1: float
    p2: float

    def __post_init__(self):
        if self.s < 1 or self.b < 1:
            raise ValueError("block size and block count must be positive")
        object.__setattr__(self, "p1", check_exponent(self.p1))
        object.__setattr__(self, "p2", check_exponent(self.p2))

    @property
    def N(self):
        return self.s * self.b


def mixed_norm(x, spec: MixedNormSpec):
    """Inner p1-norm of every block, then the outer p2-norm of the block values."""
    x = as_point(x)
    if x.size != spec.N:
        raise DimensionMismatchError(f"expected length {spec.N} = {spec.s}*{spec.b}, got {x.size}")
    inner = _lq_rows(x.reshape(spec.b, spec.s), spec.p1)
    return float(_lq_rows(inner[None, :], spec.p2)[0])


@dataclass(frozen=True, eq=False)
class Subspace:
    """n-dimensional subspace of R^N stored by a column-orthonormal basis (N x n)."""

    basis: np.ndarray

    def __post_init__(self):
        B = np.array(self.basis, dtype=float)
        if B.ndim != 2:
            raise DimensionMismatchError("basis must be a 2-D array (N x n)")
        N, n = B.shape
        if N < 1 or n > N:
            raise DimensionMismatchError(f"invalid subspace shape {B.shape}")
        if n and not np.allclose(B.T @ B, np.eye(n), rtol=0, atol=ORTHO_TOL):
            raise ValueError("basis columns are not orthonormal")
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)

    @property
    def N(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    @classmethod
    def zero(cls, N):
        return cls(np.zeros((N, 0)))

    @classmethod
    def full(cls, N):
        return cls(np.eye(N))

    def __repr__(self):
        return f"Subspace(N={self.N}, dim={self.dim})"


def orthonormalize(vectors):
    """Orthonormal basis of the column span of ``vectors`` (N x m).

    Numerical rank counts singular values above 1e-12 times the largest one.
    Signs are fixed so that the largest entry of each basis vector is
    positive, which makes the output deterministic.
    """
    V = np.asarray(vectors, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    N, m = V.shape
    if m > N:
        raise DimensionMismatchError(f"{m} vectors in R^{N}")
    if m == 0:
        return Subspace.zero(N)
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    if s[0] == 0:
        return Subspace.zero(N)
    r = int(np.sum(s > RANK_RTOL * s[0]))
    U = U[:, :r]
    idx = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[idx, np.arange(r)])
    return Subspace(U)


def random_subspace(N, n, rng):
    """Rotation-invariant random n-dimensional subspace (orthonormalized Gaussian frame)."""
    if n == 0:
        return Subspace.zero(N)
    G = rng.standard_normal((N, n))
    Qm, R = np.linalg.qr(G)
    Qm = Qm * np.sign(np.diag(R))
    return Subspace(Qm)


def residual_projector(Q: Subspace):
    """Orthoprojector onto the orthogonal complement of Q: I - B B^T.

    Column k of the result is the projection of e_k.
    """
    B = Q.basis
    P = np.eye(Q.N) - B @ B.T
    return (P + P.T) / 2


class DistanceResult(NamedTuple):
    """Batched distance solve.

    ``value`` are the residual norms of feasible points (upper bounds),
    ``lower`` dual lower bounds, ``coeffs`` the coefficients in the basis
    and ``residual`` the vectors x - B c.
    """

    value: np.ndarray
    lower: np.ndarray
    coeffs: np.ndarray
    residual: np.ndarray


def _phi(r, q):
    return np.sign(r) * np.abs(r) ** (q - 1.0)


def _dual_lower(X, B, R, q):
    """Lower bound on rho from the dual feasible direction P phi(r)."""
    Z = _phi(R, q)
    if B.shape[1]:
        Z = Z - (Z @ B) @ B.T
    nz = _lq_rows(Z, conjugate(q))
    num = np.einsum("ij,ij->i", X, Z)
    with np.errstate(invalid="ignore", divide="ignore"):
        low = np.where(nz > 0, num / np.where(nz > 0, nz, 1.0), 0.0)
    return np.maximum(low, 0.0)


def _repaired_dual_lower(x, B, r, q):
    """Dual lower bound for one row with near-zero residual coordinates.

    phi is infinitely steep at 0 for q < 2, so coordinates where the optimal
    residual almost vanishes carry the whole orthogonality defect of phi(r);
    they are re-solved by least squares before the final projection.
    """
    z = _phi(r, q)
    small = np.abs(r) <= 1e-6 * np.abs(r).max()
    if small.any():
        g = B.T @ z
        delta, *_ = np.linalg.lstsq(B[small].T, -g, rcond=None)
        z = z.copy()
        z[small] += delta
    return _dual_from(x, B, z, q)


def _dual_from(x, B, z, q):
    z = z - B @ (B.T @ z)
    nz = lq_norm(z, conjugate(q)) if np.any(z) else 0.0
    return max(float(x @ z) / nz, 0.0) if nz > 0 else 0.0


def _solve_codim1(X, B, q):
    # Q^perp = span{u}; optimal residual is the l_q' duality map of u
    P = np.eye(B.shape[0]) - B @ B.T
    w, V = np.linalg.eigh(P)
    u = V[:, -1]
    qc = conjugate(q)
    nu = lq_norm(u, qc)
    dual = np.sign(u) * np.abs(u) ** (qc - 1.0)
    t = (X @ u) / nu**qc
    R = t[:, None] * dual[None, :]
    C = (X - R) @ B
    R = X - C @ B.T
    val = _lq_rows(R, q)
    return DistanceResult(val, np.minimum(np.abs(X @ u) / nu, val), C, R)


def _solve_dim1(X, B, q, iters=200):
    # 1-D convex problem; bisection on the monotone derivative of sum |x - c b|^q
    b = B[:, 0]
    nzb = np.abs(b) > 0
    ratios = X[:, nzb] / b[nzb]
    lo = ratios.min(axis=1)
    hi = ratios.max(axis=1)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g = -(_phi(X - mid[:, None] * b[None, :], q) @ b)
        pos = g > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(mid))):
            break
    c = 0.5 * (lo + hi)
    C = c[:, None]
    R = X - C @ B.T
    return DistanceResult(_lq_rows(R, q), _dual_lower(X, B, R, q), C, R)


def _objective(X, C, B, q):
    return np.sum(np.abs(X - C @ B.T) ** q, axis=-1)


def _solve_irls(X, B, q, tol, max_iter, eps0):
    """Smoothed IRLS warm start followed by damped Newton steps.

    Returns the result and a mask of rows whose duality gap is still above
    ``tol * ||x||_q``.
    """
    M, N = X.shape
    xnorm = _lq_rows(X, q)
    scale = np.where(xnorm > 0, xnorm, 1.0)
    C = X @ B
    warm = 30 if q < 2 else 0
    for k in range(warm):
        eps = np.maximum(1e-12, eps0 * 2.0**-k) * scale
        R = X - C @ B.T
        W = (R * R + eps[:, None] ** 2) ** ((q - 2.0) / 2.0)
        G = np.einsum("ki,mk,kj->mij", B, W, B)
        h = np.einsum("ki,mk,mk->mi", B, W, X)
        C = np.linalg.solve(G, h[..., None])[..., 0]
    f = _objective(X, C, B, q)
    lower = np.zeros(M)
    active = np.ones(M, dtype=bool)
    steps = 0.5 ** np.arange(40)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        Xa, Ca = X[idx], C[idx]
        R = Xa - Ca @ B.T
        lower[idx] = np.maximum(lower[idx], _dual_lower(Xa, B, R, q))
        done = f[idx] ** (1.0 / q) - lower[idx] <= tol * scale[idx]
        active[idx[done]] = False
        idx, Xa, Ca, R = idx[~done], Xa[~done], Ca[~done], R[~done]
        if idx.size == 0:
            break
        A = np.maximum(np.abs(R), 1e-15 * scale[idx, None])
        grad = -(_phi(R, q) @ B)
        H = (q - 1.0) * np.einsum("ki,mk,kj->mij", B, A ** (q - 2.0), B)
        H += 1e-14 * np.trace(H, axis1=1, axis2=2)[:, None, None] * np.eye(B.shape[1])
        d = -np.linalg.solve(H, grad[..., None])[..., 0]
        trial = Ca[:, None, :] + steps[None, :, None] * d[:, None, :]
        ft = np.sum(np.abs(Xa[:, None, :] - trial @ B.T) ** q, axis=-1)
        j = np.argmin(ft, axis=1)
        fbest = ft[np.arange(idx.size), j]
        improved = fbest < f[idx]
        # at the floating-point floor of f, keep taking full steps while they
        # shrink the optimality residual
        full = trial[:, 0]
        flat = ~improved & (ft[:, 0] <= f[idx] * (1 + 1e-13))
        if flat.any():
            g_new = np.linalg.norm(_phi(Xa[flat] - full[flat] @ B.T, q) @ B, axis=1)
            flat[flat] = g_new < np.linalg.norm(grad[flat], axis=1)
        C[idx[improved]] = trial[improved, j[improved]]
        f[idx[improved]] = fbest[improved]
        C[idx[flat]] = full[flat]
        f[idx[flat]] = ft[flat, 0]
        if not (improved | flat).any():
            break
    value = f ** (1.0 / q)
    R = X - C @ B.T
    for i in np.nonzero(active)[0]:
        lower[i] = max(lower[i], _repaired_dual_lower(X[i], B, R[i], q))
        if value[i] - lower[i] <= tol * scale[i]:
            active[i] = False
    return DistanceResult(value, np.minimum(lower, value), C, R), active


def _solve_lp(x, B, q):
    N, n = B.shape
    # variables: coefficients c (n), then slack t (N for q=1, 1 for q=inf)
    m = N if q == 1 else 1
    ones = np.eye(N) if q == 1 else np.ones((N, 1))
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    A = np.block([[-B, -ones], [B, -ones]])
    rhs = np.concatenate([-x, x])
    bounds = [(None, None)] * n + [(0, None)] * m
    res = linprog(cost, A_ub=A, b_ub=rhs, bounds=bounds, method="highs")
    if res.status != 0:
        raise SolverFailure(f"linear program failed: {res.message}", lq_norm(x, q), math.nan)
    c = res.x[:n]
    r = x - B @ c
    return float(res.fun), c, r


def distances_lq(X, Q: Subspace, q, tol=1e-10, max_iter=2000, eps0=1e-2):
    """Distances from every row of ``X`` (M x N) to Q in the l_q norm.

    Raises ``SolverFailure`` when the duality gap stays above
    ``tol * ||x||_q`` for some row after ``max_iter`` reweighting steps;
    the exception carries the best (upper-bound) values.
    """
    q = check_exponent(q)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    M, N = X.shape
    if N != Q.N:
        raise DimensionMismatchError(f"points live in R^{N}, subspace in R^{Q.N}")
    B = Q.basis
    n = Q.dim
    if n == 0:
        v = _lq_rows(X, q)
        return DistanceResult(v, v.copy(), np.zeros((M, 0)), X.copy())
    if n == N:
        z = np.zeros(M)
        return DistanceResult(z, z.copy(), X @ B, np.zeros_like(X))
    if q == 2:
        C = X @ B
        R = X - C @ B.T
        v = _lq_rows(R, 2)
        return DistanceResult(v, v.copy(), C, R)
    if q in (1, INF):
        vals, Cs, Rs = [], [], []
        for x in X:
            v, c, r = _solve_lp(x, B, q)
            vals.append(v)
            Cs.append(c)
            Rs.append(r)
        v = np.array(vals)
        return DistanceResult(v, v.copy(), np.array(Cs), np.array(Rs))
    if n == N - 1:
        return _solve_codim1(X, B, q)
    if n == 1:
        res = _solve_dim1(X, B, q)
        if np.all(res.value - res.lower <= max(tol, 1e-12) * np.maximum(_lq_rows(X, q), 1e-300)):
            return res
    res, failed = _solve_irls(X, B, q, tol, max_iter, eps0)
    if failed.any():
        gap = (res.value - res.lower)[failed]
        raise SolverFailure(
            f"{int(failed.sum())} distance solves did not reach tolerance {tol}",
            res.value,
            float(gap.max()),
        )
    return res


def distance_lq(x, Q: Subspace, q, tol=1e-10):
    """inf over y in Q of ||x - y||_q.

    q = 2 uses the orthoprojector, q = 1 and q = inf are linear programs and
    the remaining exponents use smoothed iteratively reweighted least
    squares certified by a duality gap.
    """
    x = as_point(x)
    return float(distances_lq(x[None, :], Q, q, tol=tol).value[0])
