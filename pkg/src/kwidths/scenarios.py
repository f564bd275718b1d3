"""Declarative scenarios: build a set or ensemble, certify it and estimate it on a (q, n) grid."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import rng as rng_mod
from .certify import (
    Certificate,
    certify_ensemble,
    certify_pair,
    certify_set,
    weak_moment_exact2,
    weak_moment_upper_rud,
)
from .ensembles import (
    EXACT,
    GROUP_KINDS,
    CoupledPair,
    GroupSpec,
    Sample,
    ScalarLaw,
    block_product,
    check_structure,
    gluskin_extreme,
    gluskin_vertices,
    independent_ensemble,
    matrix_orbit_ensemble,
    mixed_ball_vertices,
    mixed_ball_witness,
    mixed_product_ensemble,
    orbit_ensemble,
    rademacher,
    vkk_matrix,
)
from .errors import ConfigError, WidthsError
from .vecspace import INF, conjugate
from .widths import DEFAULTS, WidthEstimate, best_subspace_l2, best_subspace_lq, mixed_ball_d0, sup_width_upper

KINDS = ("orbit_set", "gluskin", "mixed_ball", "matrix_polytope", "independent", "isotropic_check")
VERTEX_CAP = 4096


@dataclass(frozen=True)
class Row:
    scenario: str
    q: float
    N: int
    n: int
    lower_bound: Optional[float] = None
    sigma_upper: Optional[float] = None
    upper_estimate: Optional[float] = None
    ratio: Optional[float] = None
    seed: int = 0
    runtime_ms: Optional[float] = None
    status: str = "ok"


COLUMNS = tuple(f.name for f in fields(Row))


@dataclass
class ScenarioConfig:
    kind: str
    params: dict
    seed: int = 0
    mode: object = EXACT
    optimizer: dict = field(default_factory=lambda: dict(DEFAULTS))
    out: Optional[str] = None
    format: str = "csv"
    timings: bool = False

    @classmethod
    def from_dict(cls, doc):
        if "scenario" not in doc:
            raise ConfigError("scenario: missing (one of " + ", ".join(KINDS) + ")")
        kind = doc["scenario"]
        if kind not in KINDS:
            raise ConfigError(f"scenario: unknown kind {kind!r}; expected one of {KINDS}")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed: must be a non-negative integer")
        params = dict(doc.get("params", {}))
        mode = params.pop("mode", "exact")
        if mode == "exact":
            mode = EXACT
        elif isinstance(mode, dict) and mode.get("kind") == "sample":
            m = mode.get("m")
            if not isinstance(m, int) or m < 1:
                raise ConfigError("params.mode.m: must be a positive integer")
            mode = Sample(m, seed)
        else:
            raise ConfigError("params.mode: expected \"exact\" or {kind = \"sample\", m = ...}")
        opt = dict(DEFAULTS)
        for key, val in doc.get("optimizer", {}).items():
            if key not in opt:
                raise ConfigError(f"optimizer.{key}: unknown setting")
            if key in ("iters", "restarts") and (not isinstance(val, int) or val < 0):
                raise ConfigError(f"optimizer.{key}: must be a non-negative integer")
            opt[key] = val
        output = doc.get("output", {})
        fmt = output.get("format", "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError("output.format: must be \"csv\" or \"json\"")
        cfg = cls(kind, params, seed, mode, opt, output.get("path"), fmt, bool(output.get("timings", False)))
        cfg.validate()
        return cfg

    # validation -----------------------------------------------------------

    def _get(self, key, required=True, default=None):
        if key not in self.params:
            if required:
                raise ConfigError(f"params.{key}: required for scenario {self.kind}")
            return default
        return self.params[key]

    def _int(self, key, lo=1, hi=None, required=True, default=None):
        v = self._get(key, required, default)
        if not isinstance(v, int) or isinstance(v, bool) or v < lo or (hi is not None and v > hi):
            bound = f" and <= {hi}" if hi is not None else ""
            raise ConfigError(f"params.{key}: must be an integer >= {lo}{bound}, got {v!r}")
        return v

    def _exponent(self, key, v):
        if v in ("inf", "infinity"):
            return INF
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not v >= 1:
            raise ConfigError(f"params.{key}: exponents must be numbers >= 1 or \"inf\", got {v!r}")
        return float(v)

    def q_list(self):
        qs = self._get("q")
        qs = qs if isinstance(qs, list) else [qs]
        if not qs:
            raise ConfigError("params.q: must be non-empty")
        return [self._exponent("q", v) for v in qs]

    def n_list(self, N):
        if "n" in self.params and "eps" in self.params:
            raise ConfigError("params: give either n or eps, not both")
        if "eps" in self.params:
            eps = self.params["eps"]
            eps = eps if isinstance(eps, list) else [eps]
            out = []
            for e in eps:
                if not isinstance(e, (int, float)) or not (0 < e < 1):
                    raise ConfigError(f"params.eps: values must lie in (0, 1), got {e!r}")
                out.append(int(math.floor(N * (1 - e))))
            return out
        ns = self._get("n")
        ns = ns if isinstance(ns, list) else [ns]
        for n in ns:
            if not isinstance(n, int) or not (0 <= n <= N):
                raise ConfigError(f"params.n: values must be integers in [0, {N}], got {n!r}")
        if not ns:
            raise ConfigError("params.n: must be non-empty")
        return ns

    def dimension(self):
        k = self.kind
        if k == "orbit_set":
            x = self._get("x")
            if not isinstance(x, list) or not x or not all(isinstance(v, (int, float)) for v in x):
                raise ConfigError("params.x: must be a non-empty list of numbers")
            if not any(x):
                raise ConfigError("params.x: must be nonzero")
            return len(x)
        if k in ("gluskin", "isotropic_check"):
            return self._int("N", 1, 64)
        if k == "mixed_ball":
            return self._int("s", 1, 3) * self._int("b", 1, 3)
        if k == "matrix_polytope":
            return self._int("N1", 1, 5) * self._int("N2", 1, 5)
        if "laws" in self.params:
            laws = self.params["laws"]
            if not isinstance(laws, list) or not laws:
                raise ConfigError("params.laws: must be a non-empty list of [values, probs] pairs")
            return len(laws)
        return self._int("N", 1, 20)

    def validate(self):
        N = self.dimension()
        self.q_list()
        self.n_list(N)
        k = self.kind
        if k == "orbit_set":
            group = self._get("group", False, "cyclic_signs")
            if group not in GROUP_KINDS:
                raise ConfigError(f"params.group: must be one of {GROUP_KINDS}")
        elif k == "gluskin":
            ks = self._get("k")
            ks = ks if isinstance(ks, list) else [ks]
            for v in ks:
                if not isinstance(v, int) or not (1 <= v <= N):
                    raise ConfigError(f"params.k: values must be integers in [1, {N}], got {v!r}")
        elif k == "mixed_ball":
            self._exponent("p1", self._get("p1"))
            self._exponent("p2", self._get("p2"))
        elif k == "matrix_polytope":
            self._int("k1", 1, self._get("N1"))
            self._int("k2", 1, self._get("N2"))
        elif k == "independent" and "laws" in self.params:
            for i, law in enumerate(self.params["laws"]):
                try:
                    ScalarLaw(tuple(law[0]), tuple(law[1]))
                except Exception as exc:
                    raise ConfigError(f"params.laws[{i}]: {exc}") from None
        return N


# execution ----------------------------------------------------------------


@dataclass
class _Target:
    """What a scenario certifies and estimates for one label."""

    label: str
    N: int
    certify: callable
    estimate: callable


def _opt(cfg):
    return dict(iters=cfg.optimizer["iters"], restarts=cfg.optimizer["restarts"],
                tol=cfg.optimizer["tol"], seed=cfg.seed)


def _as_set_certificate(c: Certificate, extra):
    return Certificate(c.q, c.N, c.n, c.sigma_upper, c.lower_bound, "set_rigidity", dict(c.inputs, **extra))


def _trivial_sup(N, n, q, d0, what):
    from .vecspace import Subspace
    return WidthEstimate("sup", q, n, float(d0), Subspace.zero(N), f"d_0 bound ({what})")


def _sup_estimator(points, cfg):
    def est(q, n):
        return sup_width_upper(points, n, q, **_opt(cfg))
    return est


def _avg_estimator(e, cfg):
    def est(q, n):
        if q == 2:
            return best_subspace_l2(e, n)
        return best_subspace_lq(e, n, q, **_opt(cfg))
    return est


def _targets(cfg: ScenarioConfig):
    k, p = cfg.kind, cfg.params
    if k == "orbit_set":
        x = np.asarray(p["x"], float)
        g = GroupSpec(p.get("group", "cyclic_signs"), x.size)
        orbit = orbit_ensemble(x, g)
        yield _Target("orbit_set", x.size, lambda q, n: certify_set(x, q, n, g), _sup_estimator(orbit.points, cfg))
    elif k == "gluskin":
        N = p["N"]
        ks = p["k"] if isinstance(p["k"], list) else [p["k"]]
        g = GroupSpec("cyclic_signs", N)
        for kk in ks:
            x = gluskin_extreme(N, kk)
            if math.comb(N, kk) * 2**kk <= VERTEX_CAP:
                est = _sup_estimator(gluskin_vertices(N, kk), cfg)
            else:
                est = (lambda kk: lambda q, n: _trivial_sup(N, n, q, kk ** (1.0 / q), "k^(1/q)"))(kk)
            yield _Target(f"gluskin[k={kk}]", N, (lambda x: lambda q, n: certify_set(x, q, n, g))(x), est)
    elif k == "mixed_ball":
        s, b = p["s"], p["b"]
        p1, p2 = cfg._exponent("p1", p["p1"]), cfg._exponent("p2", p["p2"])
        N = s * b

        def cert(q, n):
            y, z = mixed_ball_witness(s, b, p1, p2, q)
            e = mixed_product_ensemble(y, z, cfg.mode)
            return _as_set_certificate(certify_ensemble(e, q, n), {"witness": block_product(y, z).tolist()})

        if p1 in (1.0, INF) and p2 in (1.0, INF):
            V = mixed_ball_vertices(s, b, p1, p2)
            est = _sup_estimator(V, cfg) if V.shape[0] <= VERTEX_CAP else None
        else:
            est = None
        if est is None:
            def est(q, n):
                return _trivial_sup(N, n, q, mixed_ball_d0(s, b, p1, p2, q), "mixed-ball d_0")
        yield _Target("mixed_ball", N, cert, est)
    elif k == "matrix_polytope":
        M = vkk_matrix(p["N1"], p["N2"], p["k1"], p["k2"])
        e = matrix_orbit_ensemble(M, cfg.mode)
        yield _Target("matrix_polytope", e.N,
                      lambda q, n: _as_set_certificate(certify_ensemble(e, q, n), {"matrix": M.tolist()}),
                      _sup_estimator(e.points, cfg))
    elif k == "independent":
        if "laws" in p:
            e = independent_ensemble([ScalarLaw(tuple(v), tuple(w)) for v, w in p["laws"]])
        else:
            e = rademacher(p["N"])
        yield _Target("independent", e.N, lambda q, n: certify_ensemble(e, q, n), _avg_estimator(e, cfg))
    elif k == "isotropic_check":
        N = p["N"]
        base = rademacher(N)
        G = rng_mod.stream(cfg.seed, "isotropic_check.rotation").standard_normal((N, N))
        U, R = np.linalg.qr(G)
        U = U * np.sign(np.diag(R))
        rotated = base.with_points(base.points @ U.T, provenance={"construction": "rotated Rademacher"})
        if not check_structure(rotated).isotropic:
            raise WidthsError("rotated ensemble is not isotropic")
        pair = CoupledPair(rotated, rotated)

        def cert(q, n):
            qc = conjugate(q)
            # sigma is rotation invariant: bound it on the unrotated cube
            if qc <= 2:
                sig, how = weak_moment_exact2(rotated), "exact sigma_2 (monotone in p)"
            else:
                sig, how = weak_moment_upper_rud(base, qc), "RUD on the unrotated ensemble"
            return certify_pair(pair, q, n, sig, how)

        yield _Target("isotropic_check", N, cert, _avg_estimator(rotated, cfg))


def _cell(cfg, target, q, n, do_certify, do_estimate):
    t0 = time.perf_counter()
    lb = sig = up = ratio = None
    status = "ok"
    try:
        cert = target.certify(q, n) if do_certify else None
        if cert is not None:
            lb, sig = cert.lower_bound, cert.sigma_upper
    except (WidthsError, ValueError) as exc:
        status = f"certify: {exc}"
    try:
        est = target.estimate(q, n) if do_estimate else None
        if est is not None:
            up = est.value
    except (WidthsError, ValueError) as exc:
        status = (status + "; " if status != "ok" else "") + f"estimate: {exc}"
    if lb is not None and up is not None:
        ratio = up / lb
        if ratio < 1 - 1e-8:
            status = "inconsistent: upper estimate below certified lower bound"
    ms = (time.perf_counter() - t0) * 1e3 if cfg.timings else None
    return Row(target.label, q, target.N, n, lb, sig, up, ratio, cfg.seed, ms, status)


def run_scenario(cfg: ScenarioConfig, threads=1, do_certify=True, do_estimate=True):
    """One row per (target, q, n) in declared order."""
    jobs = []
    for target in _targets(cfg):
        for q in cfg.q_list():
            for n in cfg.n_list(target.N):
                jobs.append((target, q, n))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda j: _cell(cfg, *j, do_certify, do_estimate), jobs))
    return [_cell(cfg, *j, do_certify, do_estimate) for j in jobs]
