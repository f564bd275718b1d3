"""Finitely supported random vectors and the rigid constructions built from them.

An ensemble is a list of weighted atoms in R^N. Exact constructions
enumerate the whole orbit of a finite group; since the pushforward of the
uniform measure on a group is uniform on the orbit, exact ensembles are
stored as the distinct orbit points with equal weights.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import rng as rng_mod
from .errors import DimensionMismatchError, EnsembleError, GroupTooLargeError, InvalidLawError
from .vecspace import as_point, check_exponent

MAX_GROUP_ORDER = 10**7
MAX_SIGN_CLOSURE_SUPPORT = 12
WEIGHT_TOL = 1e-12
GROUP_KINDS = ("cyclic_signs", "permutations_signs", "signs_only")


@dataclass(frozen=True)
class Flags:
    """Structural claims about the law of an ensemble."""

    unconditional: bool = False
    independent_mean_zero: bool = False
    block_structure: Optional[tuple] = None

    def has_star(self):
        return self.unconditional or self.independent_mean_zero

    def to_dict(self):
        return {
            "unconditional": self.unconditional,
            "independent_mean_zero": self.independent_mean_zero,
            "block_structure": list(self.block_structure) if self.block_structure else None,
        }

    @classmethod
    def from_dict(cls, d):
        bs = d.get("block_structure")
        return cls(bool(d.get("unconditional", False)), bool(d.get("independent_mean_zero", False)),
                   tuple(int(v) for v in bs) if bs else None)


@dataclass(frozen=True)
class Atom:
    weight: float
    point: np.ndarray


@dataclass(frozen=True)
class Sample:
    """Monte Carlo construction mode: ``m`` random group elements."""

    m: int
    seed: int


EXACT = "exact"


def _canon(points):
    # -0.0 and 0.0 must compare equal when atoms are merged
    return np.asarray(points, dtype=float) + 0.0


@dataclass(frozen=True, eq=False)
class DiscreteEnsemble:
    points: np.ndarray
    weights: np.ndarray
    flags: Flags = Flags()
    provenance: dict = field(default_factory=dict)
    exact: bool = True

    def __post_init__(self):
        P = _canon(np.atleast_2d(self.points))
        w = np.asarray(self.weights, dtype=float).ravel()
        if P.shape[0] != w.size or P.shape[0] == 0:
            raise EnsembleError("points and weights must be non-empty and of equal length")
        if P.shape[1] < 1:
            raise EnsembleError("dimension must be at least 1")
        if not np.all(np.isfinite(P)):
            raise EnsembleError("atoms must have finite coordinates")
        if np.any(w <= 0):
            raise EnsembleError("atom weights must be positive")
        if abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
            raise EnsembleError(f"weights sum to {math.fsum(w)!r}, not 1")
        if self.flags.block_structure is not None and sum(self.flags.block_structure) != P.shape[1]:
            raise EnsembleError("block sizes do not add up to the dimension")
        P.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, points, weights=None, flags=Flags(), provenance=None, exact=True, dedupe=True):
        P = _canon(np.atleast_2d(points))
        w = np.full(P.shape[0], 1.0 / P.shape[0]) if weights is None else np.asarray(weights, float)
        if dedupe:
            P, w = merge_atoms(P, w)
        return cls(P, w, flags, dict(provenance or {}), exact)

    @property
    def N(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def atoms(self):
        return [Atom(float(w), p) for w, p in zip(self.weights, self.points)]

    def expect(self, values):
        """Atom-weighted sum over the first axis of ``values``."""
        values = np.asarray(values, dtype=float)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def second_moment(self):
        return (self.points * self.weights[:, None]).T @ self.points

    def with_points(self, points, flags=None, provenance=None):
        """Same atom index set and weights, new points (used for coupled pairs)."""
        return DiscreteEnsemble(points, self.weights, self.flags if flags is None else flags,
                                dict(self.provenance if provenance is None else provenance), self.exact)

    def to_json(self):
        doc = {
            "N": self.N,
            "flags": self.flags.to_dict(),
            "exact": self.exact,
            "provenance": self.provenance,
            "atoms": [{"w": float(w), "point": [float(v) for v in p]}
                      for w, p in zip(self.weights, self.points)],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        pts = np.array([a["point"] for a in doc["atoms"]], dtype=float).reshape(-1, doc["N"])
        w = np.array([a["w"] for a in doc["atoms"]], dtype=float)
        return cls(pts, w, Flags.from_dict(doc.get("flags", {})), doc.get("provenance", {}),
                   bool(doc.get("exact", True)))


def merge_atoms(points, weights):
    """Merge atoms with identical points (exact comparison), summing weights."""
    P = _canon(points)
    uniq, inv = np.unique(P, axis=0, return_inverse=True)
    w = np.bincount(inv.ravel(), weights=np.asarray(weights, float), minlength=uniq.shape[0])
    return uniq, w


@dataclass(frozen=True, eq=False)
class CoupledPair:
    """Two random vectors defined on the same atoms (same weights, same N)."""

    xi: DiscreteEnsemble
    eta: DiscreteEnsemble

    def __post_init__(self):
        if self.xi.points.shape != self.eta.points.shape:
            raise EnsembleError("coupled ensembles must share atoms and dimension")
        if not np.array_equal(self.xi.weights, self.eta.weights):
            raise EnsembleError("coupled ensembles must have identical weights atom by atom")

    @property
    def N(self):
        return self.xi.N

    @property
    def weights(self):
        return self.xi.weights


@dataclass(frozen=True)
class GroupSpec:
    kind: str
    N: int

    def __post_init__(self):
        if self.kind not in GROUP_KINDS:
            raise ValueError(f"unknown group kind {self.kind!r}; expected one of {GROUP_KINDS}")
        if self.N < 1:
            raise ValueError("N must be positive")

    @property
    def order(self):
        signs = 2**self.N
        if self.kind == "cyclic_signs":
            return self.N * signs
        if self.kind == "permutations_signs":
            return math.factorial(self.N) * signs
        return signs


def sign_patterns(k):
    """All 2^k vectors in {+1, -1}^k, first row all +1."""
    if k == 0:
        return np.ones((1, 0))
    return 1.0 - 2.0 * np.array(list(itertools.product((0, 1), repeat=k)), dtype=float)


def sign_closure(points, weights=None):
    """Symmetrize atoms over all coordinate sign flips (weights split evenly).

    Only the support of each point is flipped, so a point with k nonzero
    coordinates contributes 2^k atoms.
    """
    P = _canon(np.atleast_2d(points))
    w = np.full(P.shape[0], 1.0 / P.shape[0]) if weights is None else np.asarray(weights, float)
    out_p, out_w = [], []
    for p, wt in zip(P, w):
        supp = np.nonzero(p)[0]
        if supp.size > MAX_SIGN_CLOSURE_SUPPORT:
            raise GroupTooLargeError(f"sign closure of a point with {supp.size} nonzero coordinates")
        S = sign_patterns(supp.size)
        block = np.repeat(p[None, :], S.shape[0], axis=0)
        block[:, supp] *= S
        out_p.append(block)
        out_w.append(np.full(S.shape[0], wt / S.shape[0]))
    return merge_atoms(np.vstack(out_p), np.concatenate(out_w))


def _arrangements(a, kind):
    """Distinct coordinate arrangements of ``a`` under the permutation part of the group."""
    N = a.size
    if kind == "signs_only":
        return a[None, :]
    if kind == "cyclic_signs":
        rows = np.array([np.roll(a, -k) for k in range(N)])
    else:
        rows = np.array(sorted(set(itertools.permutations(a.tolist()))))
    return np.unique(rows, axis=0)


def _group_element_images(x, kind, gen, m):
    N = x.size
    signs = 1.0 - 2.0 * gen.integers(0, 2, size=(m, N))
    if kind == "cyclic_signs":
        shifts = gen.integers(0, N, size=m)
        idx = (np.arange(N)[None, :] + shifts[:, None]) % N
        return signs * x[idx]
    if kind == "permutations_signs":
        perms = np.argsort(gen.random((m, N)), axis=1)
        return signs * x[perms]
    return signs * x[None, :]


def _sampled(points, law_flags, provenance):
    """Wrap sampled atoms; exact sign-symmetrization keeps the law unconditional."""
    supp = int(np.max(np.count_nonzero(points, axis=1))) if points.size else 0
    if law_flags.unconditional and supp <= MAX_SIGN_CLOSURE_SUPPORT:
        P, w = sign_closure(points)
        provenance = dict(provenance, sign_closure=True)
        return DiscreteEnsemble(P, w, law_flags, provenance, exact=False)
    P, w = merge_atoms(points, np.full(points.shape[0], 1.0 / points.shape[0]))
    provenance = dict(provenance, sign_closure=False, law_flags=law_flags.to_dict())
    return DiscreteEnsemble(P, w, Flags(block_structure=law_flags.block_structure), provenance, exact=False)


def orbit_ensemble(x, group: GroupSpec, mode=EXACT):
    """Uniform random element of the orbit G x.

    ``mode`` is ``"exact"`` (full enumeration, group order at most 1e7) or a
    :class:`Sample`.
    """
    x = as_point(x)
    if x.size != group.N:
        raise DimensionMismatchError(f"point in R^{x.size} but group acts on R^{group.N}")
    prov = {"construction": "orbit", "group": group.kind, "x": x.tolist()}
    flags = Flags(unconditional=True)
    if mode == EXACT:
        if group.order > MAX_GROUP_ORDER:
            raise GroupTooLargeError(f"group order {group.order} exceeds {MAX_GROUP_ORDER} for exact mode")
        rows = []
        for a in _arrangements(np.abs(x), group.kind):
            supp = np.nonzero(a)[0]
            S = sign_patterns(supp.size)
            block = np.repeat(a[None, :], S.shape[0], axis=0)
            block[:, supp] *= S
            rows.append(block)
        P = np.unique(_canon(np.vstack(rows)), axis=0)
        return DiscreteEnsemble(P, np.full(P.shape[0], 1.0 / P.shape[0]), flags, prov)
    gen = rng_mod.stream(mode.seed, "orbit_ensemble")
    pts = _group_element_images(x, group.kind, gen, mode.m)
    return _sampled(pts, flags, dict(prov, m=mode.m, seed=mode.seed))


def gluskin_extreme(N, k):
    """0/1 vector with k leading ones, an extreme point of B_inf^N intersected with k B_1^N."""
    if not (1 <= k <= N):
        raise ValueError(f"k must satisfy 1 <= k <= N, got k={k}, N={N}")
    x = np.zeros(N)
    x[:k] = 1.0
    return x


def gluskin_vertices(N, k):
    """All vertices of V_k^N for integer k: k coordinates equal to +-1, the rest 0."""
    if not (1 <= k <= N):
        raise ValueError(f"k must satisfy 1 <= k <= N, got k={k}, N={N}")
    S = sign_patterns(k)
    out = []
    for supp in itertools.combinations(range(N), k):
        block = np.zeros((S.shape[0], N))
        block[:, list(supp)] = S
        out.append(block)
    return np.vstack(out)


def _product_size(kind, s, b):
    return GroupSpec(kind, b).order * GroupSpec(kind, s).order ** b


def mixed_product_ensemble(y, z, mode=EXACT, kind="cyclic_signs"):
    """Random vector with blocks xi[j] = zeta_j * eta^j.

    zeta is the orbit of ``z`` in R^b and eta^1..eta^b are independent orbits
    of ``y`` in R^s; blocks are contiguous in the output (dimension s*b).
    """
    y, z = as_point(y), as_point(z)
    s, b = y.size, z.size
    prov = {"construction": "mixed_product", "y": y.tolist(), "z": z.tolist(), "group": kind}
    flags = Flags(unconditional=True)
    if mode == EXACT:
        size = _product_size(kind, s, b)
        if size > MAX_GROUP_ORDER:
            raise GroupTooLargeError(f"exact product enumeration needs {size} group elements")
        zeta = orbit_ensemble(z, GroupSpec(kind, b))
        eta = orbit_ensemble(y, GroupSpec(kind, s))
        Mz, My = zeta.size, eta.size
        grids = np.meshgrid(np.arange(Mz), *([np.arange(My)] * b), indexing="ij")
        iz = grids[0].ravel()
        blocks = [zeta.points[iz, j][:, None] * eta.points[grids[j + 1].ravel()] for j in range(b)]
        wts = zeta.weights[iz] * np.prod([eta.weights[g.ravel()] for g in grids[1:]], axis=0)
        P, w = merge_atoms(np.hstack(blocks), wts)
        return DiscreteEnsemble(P, w / math.fsum(w), flags, prov)
    gen = rng_mod.stream(mode.seed, "mixed_product_ensemble")
    zs = _group_element_images(z, kind, gen, mode.m)
    blocks = [zs[:, j][:, None] * _group_element_images(y, kind, gen, mode.m) for j in range(b)]
    return _sampled(np.hstack(blocks), flags,
                    dict(prov, m=mode.m, seed=mode.seed))


def mixed_ball_witness(s, b, p1, p2, q):
    """Maximizers of ||.||_q on the unit balls of l_p1^s and l_p2^b.

    Returns ``(y, z)``; the block product x[j] = z_j y lies in the unit ball
    of the mixed norm and maximizes the l_q norm over it.
    """
    def extremal(m, p):
        if p <= q:
            v = np.zeros(m)
            v[0] = 1.0
            return v
        return np.full(m, m ** (-1.0 / p) if p != math.inf else 1.0)

    return extremal(s, check_exponent(p1)), extremal(b, check_exponent(p2))


def block_product(y, z):
    """x[j] = z_j * y for every block j."""
    return (np.asarray(z, float)[:, None] * np.asarray(y, float)[None, :]).ravel()


def mixed_ball_vertices(s, b, p1, p2):
    """Extreme points of the l_{p1,p2}^{s,b} unit ball for p1, p2 in {1, inf}."""
    def inner(p):
        if p == 1:
            return np.vstack([np.eye(s), -np.eye(s)])
        if p == math.inf:
            return sign_patterns(s)
        raise ValueError("finite vertex set only exists for exponents 1 and inf")

    V = inner(float(p1))
    if float(p2) == 1:
        out = []
        for j in range(b):
            block = np.zeros((V.shape[0], s * b))
            block[:, j * s:(j + 1) * s] = V
            out.append(block)
        return np.vstack(out)
    if float(p2) == math.inf:
        combos = itertools.product(range(V.shape[0]), repeat=b)
        return np.array([np.concatenate([V[i] for i in c]) for c in combos])
    raise ValueError("finite vertex set only exists for exponents 1 and inf")


def matrix_group_order(N1, N2):
    return math.factorial(N1) * math.factorial(N2) * 2 ** (N1 + N2)


def matrix_orbit_ensemble(M, mode=EXACT):
    """Uniform random image of M under row/column permutations and row/column sign changes.

    The matrix is flattened column-major, so the output consists of N2
    contiguous blocks (the columns), each of size N1.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    N1, N2 = M.shape
    prov = {"construction": "matrix_orbit", "M": M.tolist()}
    flags = Flags(block_structure=(N1,) * N2)
    if mode == EXACT:
        order = matrix_group_order(N1, N2)
        if order > MAX_GROUP_ORDER:
            raise GroupTooLargeError(f"group order {order} exceeds {MAX_GROUP_ORDER} for exact mode")
        perms = {M[list(r)][:, list(c)].tobytes()
                 for r in itertools.permutations(range(N1)) for c in itertools.permutations(range(N2))}
        S1, S2 = sign_patterns(N1), sign_patterns(N2)
        signs = (S1[:, None, :, None] * S2[None, :, None, :]).reshape(-1, N1, N2)
        signs = np.unique(signs.reshape(signs.shape[0], -1), axis=0).reshape(-1, N1, N2)
        acc = None
        for raw in sorted(perms):
            A = np.frombuffer(raw, dtype=float).reshape(N1, N2)
            imgs = (signs * A).transpose(0, 2, 1).reshape(signs.shape[0], -1)
            acc = imgs if acc is None else np.unique(np.vstack([acc, _canon(imgs)]), axis=0)
        P = np.unique(_canon(acc), axis=0)
        return DiscreteEnsemble(P, np.full(P.shape[0], 1.0 / P.shape[0]), flags, prov)
    gen = rng_mod.stream(mode.seed, "matrix_orbit_ensemble")
    rows = np.argsort(gen.random((mode.m, N1)), axis=1)
    cols = np.argsort(gen.random((mode.m, N2)), axis=1)
    s1 = 1.0 - 2.0 * gen.integers(0, 2, size=(mode.m, N1))
    s2 = 1.0 - 2.0 * gen.integers(0, 2, size=(mode.m, N2))
    imgs = M[rows[:, :, None], cols[:, None, :]] * s1[:, :, None] * s2[:, None, :]
    pts = imgs.transpose(0, 2, 1).reshape(mode.m, -1)
    P, w = merge_atoms(pts, np.full(mode.m, 1.0 / mode.m))
    return DiscreteEnsemble(P, w, flags, dict(prov, m=mode.m, seed=mode.seed), exact=False)


def vkk_matrix(N1, N2, k1, k2):
    """Generator of V_{k1,k2}^{N1,N2}: ones in the leading k1 x k2 corner."""
    if not (1 <= k1 <= N1 and 1 <= k2 <= N2):
        raise ValueError("need 1 <= k1 <= N1 and 1 <= k2 <= N2")
    M = np.zeros((N1, N2))
    M[:k1, :k2] = 1.0
    return M


@dataclass(frozen=True)
class ScalarLaw:
    """Finitely supported real law; mean must vanish within 1e-12."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        v = np.asarray(self.values, float)
        p = np.asarray(self.probs, float)
        if v.shape != p.shape or v.ndim != 1 or v.size == 0:
            raise InvalidLawError("values and probs must be equal-length non-empty sequences")
        if np.any(p <= 0) or abs(math.fsum(p) - 1.0) > WEIGHT_TOL:
            raise InvalidLawError("probabilities must be positive and sum to 1")
        mean = math.fsum(v * p)
        if abs(mean) > WEIGHT_TOL:
            raise InvalidLawError(f"law has nonzero mean {mean!r}")
        object.__setattr__(self, "values", tuple(float(a) for a in v))
        object.__setattr__(self, "probs", tuple(float(a) for a in p))

    def is_symmetric(self):
        law = dict(zip(self.values, self.probs))
        return all(abs(law.get(-v, 0.0) - p) <= WEIGHT_TOL for v, p in law.items())


RADEMACHER = ScalarLaw((-1.0, 1.0), (0.5, 0.5))


def independent_ensemble(laws: Sequence[ScalarLaw]):
    """Product law of independent mean-zero scalar laws."""
    laws = [law if isinstance(law, ScalarLaw) else ScalarLaw(*law) for law in laws]
    size = math.prod(len(law.values) for law in laws)
    if size > MAX_GROUP_ORDER:
        raise GroupTooLargeError(f"product support has {size} atoms")
    idx = np.array(list(itertools.product(*[range(len(law.values)) for law in laws])))
    P = np.column_stack([np.asarray(law.values)[idx[:, i]] for i, law in enumerate(laws)])
    w = np.prod(np.column_stack([np.asarray(law.probs)[idx[:, i]] for i, law in enumerate(laws)]), axis=1)
    flags = Flags(unconditional=all(law.is_symmetric() for law in laws), independent_mean_zero=True)
    prov = {"construction": "independent", "laws": [[list(l.values), list(l.probs)] for l in laws]}
    P, w = merge_atoms(P, w)
    return DiscreteEnsemble(P, w / math.fsum(w), flags, prov)


def rademacher(N):
    return independent_ensemble([RADEMACHER] * N)


def moment(e: DiscreteEnsemble, i, r):
    """E |xi_i|^r, summed with compensation over the atoms."""
    r = check_exponent(r)
    if not (0 <= i < e.N):
        raise IndexError(f"coordinate {i} out of range for N={e.N}")
    return math.fsum(e.weights * np.abs(e.points[:, i]) ** r)


def moments(e: DiscreteEnsemble, r):
    return np.array([moment(e, i, r) for i in range(e.N)])


@dataclass(frozen=True)
class StructureReport:
    unconditional: bool
    independent_mean_zero: bool
    isotropic: bool
    block_unconditional: Optional[bool] = None


def _law(points, weights):
    P, w = merge_atoms(points, weights)
    return {p.tobytes(): wt for p, wt in zip(P, w)}


def _same_law(a, b):
    if a.keys() != b.keys():
        return False
    return all(abs(a[k] - b[k]) <= WEIGHT_TOL for k in a)


def _invariant_under(points, weights, flips):
    base = _law(points, weights)
    for f in flips:
        if not _same_law(base, _law(points * f, weights)):
            return False
    return True


def _is_unconditional(points, weights):
    # single-coordinate flips generate the whole sign group, so this check is complete
    N = points.shape[1]
    return _invariant_under(points, weights, [np.where(np.arange(N) == i, -1.0, 1.0) for i in range(N)])


def _is_independent_mean_zero(e):
    if np.any(np.abs(e.expect(e.points)) > WEIGHT_TOL):
        return False
    marg = []
    for i in range(e.N):
        vals, inv = np.unique(e.points[:, i] + 0.0, return_inverse=True)
        marg.append((vals, np.bincount(inv.ravel(), weights=e.weights), inv.ravel()))
    if math.prod(len(m[0]) for m in marg) != e.size:
        return False
    prod = np.prod([m[1][m[2]] for m in marg], axis=0)
    return bool(np.all(np.abs(prod - e.weights) <= WEIGHT_TOL))


def check_structure(e: DiscreteEnsemble):
    """Verify unconditionality, independence with zero means and isotropy from the atoms.

    Sign invariance is checked under the N single-coordinate flips, which
    generate the full sign group; the check is therefore exhaustive for any N.
    """
    uncond = _is_unconditional(e.points, e.weights)
    indep = _is_independent_mean_zero(e)
    iso = bool(np.allclose(e.second_moment(), np.eye(e.N), rtol=0, atol=1e-9))
    block = None
    if e.flags.block_structure:
        block = block_unconditional(e, e.flags.block_structure)
    return StructureReport(uncond, indep, iso, block)


def block_bounds(sizes):
    ends = np.cumsum(sizes)
    return [(int(a), int(b)) for a, b in zip(np.concatenate([[0], ends[:-1]]), ends)]


def block_unconditional(e: DiscreteEnsemble, sizes):
    """Each block is unconditional, and flipping whole blocks preserves the joint law."""
    bounds = block_bounds(sizes)
    for lo, hi in bounds:
        if not _is_unconditional(e.points[:, lo:hi], e.weights):
            return False
    flips = []
    for lo, hi in bounds:
        f = np.ones(e.N)
        f[lo:hi] = -1.0
        flips.append(f)
    return _invariant_under(e.points, e.weights, flips)
