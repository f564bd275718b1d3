"""Biorthogonal duals, weak moments and provable lower bounds on averaged widths.

The chain implemented here: rescale xi to unit q-th moments, build the dual
eta_i = phi(xi_i) - E phi(xi_i) with phi(t) = |t|^(q-1) sign t, bound the
weak q'-moment of eta from above, and plug that bound into the uniform
lower bound over all n-dimensional subspaces.
"""
from __future__ import annotations

import contextlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .ensembles import CoupledPair, DiscreteEnsemble, GroupSpec, moments, orbit_ensemble
from .errors import (
    DegenerateCoordinateError,
    InvalidPairError,
    UnsupportedExponentError,
    UnsupportedStructureError,
)
from .vecspace import INF, Subspace, as_point, check_exponent, conjugate, lq_norm, residual_projector

METHODS = ("theorem2_q_le_2", "theorem2_q_ge_2", "lemma_per_subspace", "set_rigidity")
BIORTHO_TOL = 1e-8
RUD_ROUNDING = 1e-12

# test hook: multiplies the Khintchine constant; anything below 1 breaks soundness
_KHINTCHINE_SCALE = 1.0


@contextlib.contextmanager
def perturbed_khintchine(scale):
    """Temporarily scale C_p (used by the soundness canary)."""
    global _KHINTCHINE_SCALE
    old = _KHINTCHINE_SCALE
    _KHINTCHINE_SCALE = float(scale)
    try:
        yield
    finally:
        _KHINTCHINE_SCALE = old


def khintchine_constant(p):
    """C_p = sqrt(p - 1), a valid upper Khintchine constant for p >= 2."""
    return math.sqrt(p - 1.0) * _KHINTCHINE_SCALE


@dataclass(frozen=True)
class Certificate:
    q: float
    N: int
    n: int
    sigma_upper: float
    lower_bound: float
    method: str
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown certificate method {self.method!r}")
        if not (self.n < self.N):
            raise ValueError("certificates need n < N")
        if not (self.sigma_upper > 0 and self.lower_bound > 0):
            raise ValueError("sigma_upper and lower_bound must be positive")

    @property
    def target(self):
        return "sup" if self.method == "set_rigidity" else "avg"

    def to_dict(self):
        return {
            "method": self.method,
            "q": self.q,
            "N": self.N,
            "n": self.n,
            "sigma_upper": self.sigma_upper,
            "lower_bound": self.lower_bound,
            "provenance": self.inputs,
        }

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class WeakMomentBracket:
    p: float
    lower: float
    upper: float
    method_lower: str
    method_upper: str

    def __post_init__(self):
        if not (0 < self.lower <= self.upper * (1 + 1e-12)):
            raise ValueError(f"invalid bracket [{self.lower}, {self.upper}]")


def _phi(t, q):
    return np.sign(t) * np.abs(t) ** (q - 1.0)


def _check_structure_flags(xi):
    f = xi.flags
    if not (f.has_star() or f.block_structure):
        raise UnsupportedStructureError(
            "ensemble must be unconditional, independent with zero means, or block-unconditional")


def _check_q(q, upper=2.0):
    q = check_exponent(q)
    if q == 1:
        raise UnsupportedExponentError("q = 1 needs the VC-dimension technique and is not certified here")
    if not (1 < q <= upper):
        raise UnsupportedExponentError(f"q must lie in (1, {upper}], got {q}")
    return q


def biorthogonal_dual(xi: DiscreteEnsemble, q):
    """Rescale xi to unit q-th moments and pair it with eta = phi(xi) - E phi(xi)."""
    q = _check_q(q)
    _check_structure_flags(xi)
    m = moments(xi, q)
    zero = np.nonzero(m <= 0)[0]
    if zero.size:
        raise DegenerateCoordinateError(int(zero[0]))
    scale = m ** (-1.0 / q)
    X = xi.points * scale
    Phi = _phi(X, q)
    E = Phi - xi.expect(Phi)
    prov = dict(xi.provenance, rescale=scale.tolist(), dual_exponent=q)
    xs = xi.with_points(X, provenance=prov)
    eta = xi.with_points(E, provenance=dict(prov, role="dual"))
    return CoupledPair(xs, eta)


def check_biorthogonal(pair: CoupledPair):
    """E eta xi^T computed atom by atom (identity for a biorthogonal pair)."""
    w = pair.weights
    return (pair.eta.points * w[:, None]).T @ pair.xi.points


def weak_moment_exact2(eta: DiscreteEnsemble):
    """sigma_2(eta) = sqrt of the top eigenvalue of E eta eta^T."""
    lam = np.linalg.eigvalsh(eta.second_moment())
    return float(math.sqrt(max(lam[-1], 0.0)))


def _pth(eta, v, p):
    return float(eta.weights @ np.abs(eta.points @ v) ** p) ** (1.0 / p)


def weak_moment_lower(eta: DiscreteEnsemble, p, restarts=16, seed=0, iters=500):
    """Multistart ascent of v -> (E|<eta, v>|^p)^(1/p) over the unit sphere.

    Each step moves to the normalized gradient. For the convex, p-homogeneous
    objective this never decreases the value, so the best iterate is a valid
    lower bound on sigma_p. Start 0 is the top eigenvector of E eta eta^T.

    Returns ``(value, witness)``.
    """
    p = check_exponent(p)
    if p == INF:
        raise UnsupportedExponentError("weak moments need a finite exponent")
    N = eta.N
    w, P = eta.weights, eta.points
    _, V = np.linalg.eigh(eta.second_moment())
    gen = rng_mod.stream(seed, "weak_moment_lower")
    starts = [V[:, -1]] + [gen.standard_normal(N) for _ in range(max(restarts - 1, 0))]
    best, best_v = -1.0, None
    for v in starts:
        nv = np.linalg.norm(v)
        if nv == 0:
            continue
        v = v / nv
        val = _pth(eta, v, p)
        for _ in range(iters):
            t = P @ v
            g = (w * np.sign(t) * np.abs(t) ** (p - 1.0)) @ P
            ng = np.linalg.norm(g)
            if ng == 0:
                break
            u = g / ng
            new = _pth(eta, u, p)
            if new <= val * (1 + 1e-15):
                if new > val:
                    v, val = u, new
                break
            v, val = u, new
        if val > best:
            best, best_v = val, v
    return best, best_v


def rud_constant(eta: DiscreteEnsemble, p):
    """Multiplier in sigma_p <= const * max_i ||eta_i||_p, with its description."""
    cp = khintchine_constant(p)
    f = eta.flags
    if f.unconditional:
        return cp, "unconditional: D=1, C_p=sqrt(p-1)"
    if f.independent_mean_zero:
        return 2.0 * cp, "independent mean-zero: D=2 (symmetrization), C_p=sqrt(p-1)"
    if f.block_structure:
        return cp * cp, "block-unconditional: C_p^2 (within and between blocks)"
    raise UnsupportedStructureError("no rigorous weak-moment bound without (star) or block structure")


def weak_moment_upper_rud(eta: DiscreteEnsemble, p):
    """Rigorous upper bound on sigma_p(eta), p >= 2, from unconditionality or independence."""
    p = check_exponent(p)
    if not (2 <= p < INF):
        raise UnsupportedExponentError(f"the RUD bound needs 2 <= p < inf, got {p}")
    const, _ = rud_constant(eta, p)
    mx = max(math.fsum(eta.weights * np.abs(eta.points[:, i]) ** p) ** (1.0 / p) for i in range(eta.N))
    # widen by a few ulps so rounding in the moment sums cannot undercut sigma_p
    return const * mx * (1.0 + RUD_ROUNDING)


def weak_moment_bracket(eta: DiscreteEnsemble, p, restarts=16, seed=0):
    low, _ = weak_moment_lower(eta, p, restarts, seed)
    return WeakMomentBracket(p, low, weak_moment_upper_rud(eta, p), "sphere ascent", "RUD + Khintchine")


def sigma_upper(eta: DiscreteEnsemble, p):
    """Smallest rigorous upper bound on sigma_p(eta) available here.

    For p <= 2 the weak p-moment is at most the exact weak 2-moment; for
    p >= 2 the RUD bound is used, or the exact value when p == 2.
    """
    p = check_exponent(p)
    exact2 = weak_moment_exact2(eta)
    if p < 2:
        return exact2, "exact sigma_2 (monotone in p)"
    rud = weak_moment_upper_rud(eta, p)
    if p == 2 and exact2 <= rud:
        return exact2, "exact sigma_2"
    return rud, rud_constant(eta, p)[1]


def theorem2_bound(N, n, q, sigma_upper, inputs=None):
    """Uniform lower bound on the averaged width from a weak-moment bound of the dual."""
    q = check_exponent(q)
    if not (1 < q < INF):
        raise UnsupportedExponentError(f"need 1 < q < inf, got {q}")
    if n >= N:
        raise ValueError(f"need n < N, got n={n}, N={N}")
    if q <= 2:
        lb = (N - n) ** (1.0 / q) / sigma_upper
        method = "theorem2_q_le_2"
    else:
        lb = math.sqrt(N - n) * N ** (1.0 / q - 0.5) / sigma_upper
        method = "theorem2_q_ge_2"
    return Certificate(q, int(N), int(n), float(sigma_upper), float(lb), method, dict(inputs or {}))


@dataclass(frozen=True)
class LemmaTerms:
    """Pieces of the per-subspace dual bound for one subspace.

    ``numerator`` is E<xi, P eta>, ``denominator_pow`` is E||P eta||_{q'}^{q'}
    and ``vk_sum`` is sum_k |P e_k|^{q'}.
    """

    numerator: float
    denominator_pow: float
    vk_sum: float
    q: float

    @property
    def bound(self):
        qc = conjugate(self.q)
        den = self.denominator_pow ** (1.0 / qc)
        return self.numerator / den if den > 0 else 0.0


def lemma_terms(pair: CoupledPair, Q: Subspace, q):
    q = check_exponent(q)
    if not (1 < q < INF):
        raise UnsupportedExponentError(f"need 1 < q < inf, got {q}")
    G = check_biorthogonal(pair)
    if not np.allclose(G, np.eye(pair.N), rtol=0, atol=BIORTHO_TOL):
        raise InvalidPairError(f"pair is not biorthogonal: max deviation {np.abs(G - np.eye(pair.N)).max():.3g}")
    qc = conjugate(q)
    P = residual_projector(Q)
    PE = pair.eta.points @ P
    w = pair.weights
    num = math.fsum(w * np.einsum("ij,ij->i", pair.xi.points, PE))
    den = math.fsum(w * np.sum(np.abs(PE) ** qc, axis=1))
    vk = math.fsum(np.linalg.norm(P, axis=0) ** qc)
    return LemmaTerms(num, den, vk, q)


def lemma_bound(pair: CoupledPair, Q: Subspace, q):
    """Lower bound on (E rho(xi, Q)_q^q)^(1/q) for one fixed subspace Q."""
    return lemma_terms(pair, Q, q).bound


def certify_ensemble(xi: DiscreteEnsemble, q, n):
    """Certified lower bound on d_n^avg(xi, l_q^N)_q for 1 < q <= 2.

    The bound is stated for the ensemble as given: the normalized bound is
    multiplied by min_i (E|xi_i|^q)^(1/q), which is valid because shrinking
    coordinates by factors at most 1 never increases distances.
    """
    q = _check_q(q)
    N = xi.N
    if not (0 <= n < N):
        raise ValueError(f"need 0 <= n < N, got n={n}, N={N}")
    pair = biorthogonal_dual(xi, q)
    qc = conjugate(q)
    sig, how = sigma_upper(pair.eta, qc)
    m = moments(xi, q)
    factor = float(m.min()) ** (1.0 / q)
    base = theorem2_bound(N, n, q, sig)
    inputs = {
        "ensemble": xi.provenance,
        "flags": xi.flags.to_dict(),
        "atoms": xi.size,
        "exact": xi.exact,
        "dual_exponent": qc,
        "sigma_method": how,
        "khintchine": "C_p = sqrt(p - 1)",
        "min_moment": float(m.min()),
        "moment_factor": factor,
        "normalized_lower_bound": base.lower_bound,
        "applies_to": "original" if xi.exact else "sampled empirical ensemble",
    }
    return Certificate(q, N, n, sig, base.lower_bound * factor, base.method, inputs)


def certify_set(x, q, n, group: GroupSpec):
    """Lower bound on d_n(K, l_q^N) for every K containing x and invariant under ``group``."""
    x = as_point(x)
    if not np.any(x):
        raise ValueError("x must be nonzero")
    q = _check_q(q)
    e = orbit_ensemble(x, group)
    c = certify_ensemble(e, q, n)
    inputs = dict(c.inputs, x=x.tolist(), group=group.kind, x_norm=lq_norm(x, q))
    return Certificate(q, c.N, n, c.sigma_upper, c.lower_bound, "set_rigidity", inputs)


def certify_pair(pair: CoupledPair, q, n, sigma_upper_value, how):
    """Uniform bound for an explicitly given biorthogonal pair (any 1 < q < inf)."""
    G = check_biorthogonal(pair)
    if not np.allclose(G, np.eye(pair.N), rtol=0, atol=BIORTHO_TOL):
        raise InvalidPairError("pair is not biorthogonal")
    return theorem2_bound(pair.N, n, q, sigma_upper_value, {"sigma_method": how, "pair": pair.xi.provenance})


def rotate_pair(pair: CoupledPair, U):
    """Apply one orthogonal matrix to both members of a pair."""
    U = np.asarray(U, float)
    return CoupledPair(pair.xi.with_points(pair.xi.points @ U.T), pair.eta.with_points(pair.eta.points @ U.T))
