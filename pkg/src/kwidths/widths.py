"""Upper bounds on widths: evaluation at a fixed subspace and best-subspace search.

Everything returned here comes from an explicit subspace, so it is an upper
bound on the corresponding width. Lower bounds come only from certificates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from . import rng as rng_mod
from .certify import Certificate
from .ensembles import EXACT, DiscreteEnsemble
from .errors import DimensionMismatchError, IncomparableError
from .vecspace import (
    Subspace,
    _lq_rows,
    check_exponent,
    distances_lq,
    random_subspace,
)

DEFAULTS = {"iters": 200, "restarts": 8, "tol": 1e-8}


@dataclass(frozen=True)
class MonteCarlo:
    m: int
    seed: int


@dataclass(frozen=True, eq=False)
class WidthEstimate:
    kind: str
    q: float
    n: int
    value: float
    subspace: Subspace
    method: str
    rng_seed: Optional[int] = None
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("avg", "sup"):
            raise ValueError(f"kind must be 'avg' or 'sup', got {self.kind!r}")
        if self.value < 0 or self.subspace.dim > self.n:
            raise ValueError("invalid width estimate")

    @property
    def N(self):
        return self.subspace.N

    def to_dict(self):
        return {
            "kind": self.kind,
            "q": self.q,
            "N": self.N,
            "n": self.n,
            "value": self.value,
            "method": self.method,
            "rng_seed": self.rng_seed,
            "settings": self.settings,
            "basis": self.subspace.basis.tolist(),
        }


def avg_width_at(e: DiscreteEnsemble, Q: Subspace, q, mode=EXACT, tol=1e-10):
    """(E rho(xi, Q)_q^q)^(1/q): an upper bound on d_n^avg(xi, l_q^N)_q, n = dim Q."""
    q = check_exponent(q)
    if e.N != Q.N:
        raise DimensionMismatchError(f"ensemble in R^{e.N}, subspace in R^{Q.N}")
    if mode == EXACT:
        pts, w = e.points, e.weights
    else:
        gen = rng_mod.stream(mode.seed, "avg_width_at")
        idx = gen.choice(e.size, size=mode.m, p=e.weights)
        pts, w = e.points[idx], np.full(mode.m, 1.0 / mode.m)
    rho = distances_lq(pts, Q, q, tol=tol).value
    if q == math.inf:
        return float(rho.max())
    return math.fsum(w * rho**q) ** (1.0 / q)


def best_subspace_l2(e: DiscreteEnsemble, n):
    """Exact d_n^avg(xi, l_2^N)_2: span of the top-n eigenvectors of E xi xi^T."""
    if not (0 <= n <= e.N):
        raise ValueError(f"need 0 <= n <= N, got {n}")
    lam, V = np.linalg.eigh(e.second_moment())
    tail = np.clip(lam[: e.N - n], 0.0, None)
    Q = Subspace(V[:, e.N - n:][:, ::-1]) if n else Subspace.zero(e.N)
    return WidthEstimate("avg", 2.0, n, float(math.sqrt(math.fsum(tail))), Q, "spectral")


def _orth(B):
    Qm, R = np.linalg.qr(B)
    sgn = np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))
    return Qm * sgn, R * sgn[:, None]


def _raw_grad(X, B, q):
    """Residual powers rho^q per row and their gradients w.r.t. a raw frame B.

    Uses the envelope theorem: d rho^q / dB = -q phi(r) c^T with c the optimal
    coefficients in the raw frame.
    """
    Qm, R = _orth(B)
    res = distances_lq(X, Subspace(Qm), q)
    c_raw = np.linalg.solve(R, res.coeffs.T).T
    phi = np.sign(res.residual) * np.abs(res.residual) ** (q - 1.0)
    grads = -q * phi[:, :, None] * c_raw[:, None, :]
    return res.value, grads


def _l2_start(X, w, n):
    lam, V = np.linalg.eigh((X * w[:, None]).T @ X)
    return V[:, X.shape[1] - n:]


class _Tracker:
    """Keeps the best subspace seen across every objective evaluation."""

    def __init__(self):
        self.value = math.inf
        self.basis = None
        self.evals = 0

    def offer(self, value, B):
        self.evals += 1
        if value < self.value:
            self.value = float(value)
            self.basis = _orth(B)[0]


def best_subspace_lq(e: DiscreteEnsemble, n, q, iters=200, restarts=8, seed=0, tol=1e-8):
    """Heuristic minimizer of (E rho(xi, Q)_q^q)^(1/q) over n-dimensional Q.

    Alternates a reweighted spectral step (per-atom weights w_a rho_a^(q-2),
    then top-n eigenvectors) with L-BFGS refinement of the frame. Starts from
    the q = 2 optimum plus ``restarts`` random orthonormal frames; returns the
    best value found, which is always an upper bound on the width.
    """
    q = check_exponent(q)
    if not (1 < q < math.inf):
        raise ValueError(f"need 1 < q < inf, got {q}")
    N = e.N
    settings = dict(iters=iters, restarts=restarts, tol=tol)
    if n == 0 or n >= N:
        Q = Subspace.zero(N) if n == 0 else Subspace.full(N)
        return WidthEstimate("avg", q, n, avg_width_at(e, Q, q), Q, "trivial", seed, settings)
    X, w = e.points, e.weights
    track = _Tracker()

    def objective(B):
        rho, grads = _raw_grad(X, B, q)
        f = float(w @ rho**q)
        track.offer(f ** (1.0 / q), B)
        return f, np.tensordot(w, grads, axes=(0, 0))

    gen = rng_mod.stream(seed, "best_subspace_lq")
    starts = [_l2_start(X, w, n)] + [random_subspace(N, n, gen).basis for _ in range(restarts)]
    for B in starts:
        f, _ = objective(B)
        if q == 2:
            continue
        for _ in range(iters):
            prev = f
            # reweighted spectral step
            rho, _ = _raw_grad(X, B, q)
            omega = w * np.where(rho > 0, rho, 1.0) ** (q - 2.0)
            Bs = _l2_start(X, omega, n)
            fs, _ = objective(Bs)
            if fs < f:
                B, f = Bs, fs
            # frame refinement
            r = minimize(lambda b: _flat(objective, b, N, n), B.ravel(), jac=True, method="L-BFGS-B",
                         options={"maxiter": 20})
            if r.fun < f:
                B, f = _orth(r.x.reshape(N, n))[0], float(r.fun)
            if prev - f <= tol * max(prev, 1e-300):
                break
    Q = Subspace(track.basis)
    value = avg_width_at(e, Q, q)
    return WidthEstimate("avg", q, n, value, Q, "alternating reweighted spectral + L-BFGS", seed, settings)


def _flat(objective, b, N, n):
    f, g = objective(b.reshape(N, n))
    return f, g.ravel()


def sup_width_upper(points, n, q, iters=200, restarts=8, seed=0, tol=1e-8):
    """Upper bound on d_n(conv(points), l_q^N) by minimizing max_a rho(x_a, Q)_q.

    The max is replaced by a log-sum-exp with temperature beta, starting at
    8 / (largest initial residual) and doubling per epoch until the smoothing
    gap drops below 1e-4 relative. For a polytope the point list must contain
    all vertices, since rho(., Q) is convex.
    """
    q = check_exponent(q)
    X = np.atleast_2d(np.asarray(points, dtype=float))
    N = X.shape[1]
    settings = dict(iters=iters, restarts=restarts, tol=tol)
    if n == 0 or n >= N:
        Q = Subspace.zero(N) if n == 0 else Subspace.full(N)
        return WidthEstimate("sup", q, n, float(distances_lq(X, Q, q).value.max()), Q, "trivial", seed, settings)
    smooth = 1 < q < math.inf
    track = _Tracker()
    gen = rng_mod.stream(seed, "sup_width_upper")
    starts = [_l2_start(X, np.full(X.shape[0], 1.0 / X.shape[0]), n)]
    starts += [random_subspace(N, n, gen).basis for _ in range(restarts)]
    for B in starts:
        rho0 = distances_lq(X, Subspace(_orth(B)[0]), q).value
        track.offer(rho0.max(), B)
        if not smooth or iters == 0:
            continue
        beta = 8.0 / max(rho0.max(), 1e-300)
        for _ in range(60):
            def objective(b, beta=beta):
                Bm = b.reshape(N, n)
                rho, grads = _raw_grad(X, Bm, q)
                track.offer(rho.max(), Bm)
                # d rho / dB from d rho^q / dB
                scale = np.where(rho > 0, rho, 1.0) ** (1.0 - q) / q
                lse = logsumexp(beta * rho) / beta
                p = np.exp(beta * rho - beta * lse)
                g = np.tensordot(p * scale, grads, axes=(0, 0))
                return lse, g.ravel()

            r = minimize(objective, B.ravel(), jac=True, method="L-BFGS-B",
                         options={"maxiter": iters, "gtol": 1e-14, "ftol": 1e-15})
            B = _orth(r.x.reshape(N, n))[0]
            rho = distances_lq(X, Subspace(B), q).value
            gap = r.fun - rho.max()
            if gap <= 1e-4 * rho.max():
                break
            beta *= 2.0
    Q = Subspace(track.basis)
    value = float(distances_lq(X, Q, q).value.max())
    return WidthEstimate("sup", q, n, value, Q, "smoothed max + L-BFGS", seed, settings)


@dataclass(frozen=True)
class GapReport:
    ratio: float
    consistent: bool


def gap_report(cert: Certificate, est: WidthEstimate):
    """Ratio of an upper estimate to a certified lower bound (consistent iff >= 1 - 1e-8)."""
    if cert.target != est.kind:
        raise IncomparableError(f"certificate bounds a {cert.target} width, estimate is {est.kind}")
    if (cert.q, cert.N, cert.n) != (est.q, est.N, est.n):
        raise IncomparableError(f"(q, N, n) mismatch: {(cert.q, cert.N, cert.n)} vs {(est.q, est.N, est.n)}")
    ratio = est.value / cert.lower_bound
    return GapReport(ratio, ratio >= 1 - 1e-8)


def lq_sup_over(points, q):
    """max_a ||x_a||_q, i.e. d_0 of the convex hull."""
    return float(_lq_rows(np.atleast_2d(np.asarray(points, float)), check_exponent(q)).max())


def mixed_ball_d0(s, b, p1, p2, q):
    """s^((1/q - 1/p1)_+) * b^((1/q - 1/p2)_+): sup of ||x||_q over the l_{p1,p2}^{s,b} ball."""
    def e(p):
        return max(1.0 / q - (0.0 if p == math.inf else 1.0 / p), 0.0)
    return s ** e(float(p1)) * b ** e(float(p2))
