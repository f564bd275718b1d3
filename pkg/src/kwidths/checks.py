"""Acceptance criteria as callable checks.

Each check returns a :class:`CheckResult`; ``tests/test_acceptance.py`` runs
all of them and ``kwidths selfcheck`` runs the fast ones.
"""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .certify import (
    biorthogonal_dual,
    certify_ensemble,
    certify_set,
    lemma_terms,
    weak_moment_exact2,
    weak_moment_lower,
    weak_moment_upper_rud,
)
from .ensembles import (
    GroupSpec,
    ScalarLaw,
    block_product,
    gluskin_extreme,
    independent_ensemble,
    mixed_ball_vertices,
    mixed_ball_witness,
    mixed_product_ensemble,
    moment,
    moments,
    orbit_ensemble,
    rademacher,
    sign_closure,
    DiscreteEnsemble,
    Flags,
)
from .vecspace import INF, MixedNormSpec, conjugate, distances_lq, lq_norm, mixed_norm, random_subspace
from .widths import avg_width_at, best_subspace_l2, gap_report, lq_sup_over, mixed_ball_d0, sup_width_upper


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(name, budget):
    def deco(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            ok, detail = fn(*args, **kwargs)
            dt = time.perf_counter() - t0
            if budget is not None and dt > budget:
                ok, detail = False, f"{detail}; runtime {dt:.1f}s exceeds {budget}s"
            return CheckResult(name, bool(ok), detail, dt)
        run.__name__ = fn.__name__
        return run
    return deco


def random_unconditional_ensemble(gen, max_n=6, max_atoms=4096):
    """Random exact unconditional ensemble with every coordinate nondegenerate."""
    while True:
        e = _random_unconditional(gen, max_n, max_atoms)
        if np.all(np.any(e.points != 0, axis=0)):
            return e


def _random_unconditional(gen, max_n, max_atoms):
    N = int(gen.integers(2, max_n + 1))
    kind = int(gen.integers(0, 4))
    if kind == 0:
        g = ["cyclic_signs", "signs_only", "permutations_signs"][int(gen.integers(0, 3 if N <= 5 else 2))]
        x = gen.standard_normal(N) * (gen.random(N) < 0.8)
        if not np.any(x):
            x[0] = 1.0
        return orbit_ensemble(x, GroupSpec(g, N))
    if kind == 1:
        m = int(gen.integers(1, max(2, max_atoms // 2**N) + 1))
        pts = gen.standard_normal((m, N)) * gen.exponential(1.0, size=(m, 1))
        P, w = sign_closure(pts, gen.dirichlet(np.ones(m)))
        return DiscreteEnsemble(P, w / math.fsum(w), Flags(unconditional=True), {"construction": "random closure"})
    if kind == 2:
        laws = []
        for _ in range(N):
            k = int(gen.integers(1, 3))
            vals = gen.exponential(1.0, size=k) + 0.1
            probs = gen.dirichlet(np.ones(k)) / 2
            laws.append(ScalarLaw(tuple(np.concatenate([vals, -vals])), tuple(np.concatenate([probs, probs]))))
        return independent_ensemble(laws)
    s, b = 2, 2 if N < 6 else 3
    return mixed_product_ensemble(gen.standard_normal(s), gen.standard_normal(b))


def random_star_ensemble(gen, max_n=5):
    """Random ensemble with the (star) property, mixing unconditional and independent laws."""
    if gen.random() < 0.6:
        return random_unconditional_ensemble(gen, max_n, 1024)
    N = int(gen.integers(2, max_n + 1))
    laws = []
    for _ in range(N):
        a, c = gen.exponential(1.0) + 0.1, gen.exponential(1.0) + 0.1
        # two-point law with mean zero: P(a) = c / (a + c), P(-c) = a / (a + c)
        laws.append(ScalarLaw((a, -c), (c / (a + c), a / (a + c))))
    return independent_ensemble(laws)


@_timed("1 Rademacher exactness (N=8, q=2)", 10)
def check_rademacher_exactness(subspaces=200, seed=1):
    N = 8
    e = rademacher(N)
    gen = rng_mod.stream(seed, "acceptance.rademacher")
    worst_c = worst_w = worst_r = 0.0
    for n in range(N):
        target = math.sqrt(N - n)
        cert = certify_ensemble(e, 2, n)
        worst_c = max(worst_c, abs(cert.lower_bound - target))
        for _ in range(subspaces):
            worst_w = max(worst_w, abs(avg_width_at(e, random_subspace(N, n, gen), 2) - target))
        worst_r = max(worst_r, abs(gap_report(cert, best_subspace_l2(e, n)).ratio - 1))
    ok = worst_c <= 1e-9 and worst_w <= 1e-9 and worst_r <= 1e-8
    return ok, f"max |cert-sqrt(8-n)|={worst_c:.2e}, max |avg-sqrt(8-n)|={worst_w:.2e}, max |ratio-1|={worst_r:.2e}"


@_timed("2 Octahedron identity (q=2)", 60)
def check_octahedron(dims=(4, 6, 8), seed=0):
    worst = 0.0
    for N in dims:
        X = np.vstack([np.eye(N), -np.eye(N)])
        for n in range(N + 1):
            est = sup_width_upper(X, n, 2, seed=seed)
            worst = max(worst, abs(est.value - math.sqrt(1 - n / N)))
    return worst <= 1e-6, f"max |sup width - sqrt(1-n/N)| = {worst:.2e} over N in {list(dims)}"


@_timed("3+8 Certificate soundness sweep and proof chain", 300)
def check_soundness(ensembles=50, subspaces=200, qs=(1.25, 1.5, 2.0), seed=3):
    gen = rng_mod.stream(seed, "acceptance.soundness")
    violations = chain_fail = 0
    worst_margin = math.inf
    worst_num = 0.0
    count = 0
    for _ in range(ensembles):
        e = random_unconditional_ensemble(gen)
        N = e.N
        for q in qs:
            pair = biorthogonal_dual(e, q)
            qc = conjugate(q)
            for n in sorted({1, N - 1}):
                cert = certify_ensemble(e, q, n)
                for _ in range(subspaces):
                    Q = random_subspace(N, n, gen)
                    rho = distances_lq(e.points, Q, q).value
                    val = math.fsum(e.weights * rho**q) ** (1.0 / q)
                    count += 1
                    margin = val - cert.lower_bound
                    worst_margin = min(worst_margin, margin / cert.lower_bound)
                    if margin < -1e-8:
                        violations += 1
                    t = lemma_terms(pair, Q, q)
                    worst_num = max(worst_num, abs(t.numerator - (N - n)))
                    if abs(t.numerator - (N - n)) > 1e-8:
                        chain_fail += 1
                    if t.denominator_pow > cert.sigma_upper**qc * (N - n) * (1 + 1e-12) + 1e-12:
                        chain_fail += 1
    ok = violations == 0 and chain_fail == 0
    return ok, (f"{count} (ensemble, q, n, subspace) cases: {violations} soundness violations, "
                f"{chain_fail} chain failures, max |E<xi,P eta> - (N-n)| = {worst_num:.2e}, "
                f"min relative slack {worst_margin:.2e}")


@_timed("4 Weak-moment bracket", 120)
def check_weak_moments(ensembles=30, ps=(2.0, 3.0, 4.0), seed=4):
    gen = rng_mod.stream(seed, "acceptance.weak")
    bad = 0
    worst2 = 0.0
    for i in range(ensembles):
        e = random_star_ensemble(gen)
        for p in ps:
            low, _ = weak_moment_lower(e, p, restarts=16, seed=i)
            if low > weak_moment_upper_rud(e, p) * (1 + 1e-12):
                bad += 1
            if p == 2:
                worst2 = max(worst2, abs(low - weak_moment_exact2(e)))
    rad, _ = weak_moment_lower(rademacher(2), 4, restarts=16, seed=0)
    err = abs(rad - 2**0.25)
    ok = bad == 0 and worst2 <= 1e-6 and err <= 1e-4
    return ok, f"{bad} lower>upper cases, p=2 max gap {worst2:.2e}, Rademacher p=4 error {err:.2e}"


@_timed("5 Gluskin scaling (N=16, n=8)", 120)
def check_gluskin(ks=(1, 2, 4, 8), qs=(1.5, 2.0)):
    N, n = 16, 8
    parts, ok = [], True
    for q in qs:
        lbs = [certify_set(gluskin_extreme(N, k), q, n, GroupSpec("cyclic_signs", N)).lower_bound for k in ks]
        slope = np.polyfit(np.log(ks), np.log(lbs), 1)[0]
        ok &= abs(slope - 1 / q) <= 0.05
        parts.append(f"q={q}: slope {slope:.4f} (1/q={1 / q:.4f})")
    return ok, "; ".join(parts)


@_timed("6 Orbit moment identity", 60)
def check_orbit_moments(count=20, seed=6):
    gen = rng_mod.stream(seed, "acceptance.orbit")
    worst = 0.0
    for _ in range(count):
        N = int(gen.integers(1, 11))
        x = gen.standard_normal(N)
        e = orbit_ensemble(x, GroupSpec("cyclic_signs", N))
        for q in (1.0, 1.5, 2.0):
            target = lq_norm(x, q) ** q / N
            worst = max(worst, max(abs(moment(e, i, q) - target) for i in range(N)))
    return worst <= 1e-12, f"max |E|xi_i|^q - ||x||_q^q/N| = {worst:.2e}"


@_timed("7 Mixed-norm formulas", 120)
def check_mixed_norms(shapes=((2, 2), (2, 3), (3, 2)), exps=(1.0, 2.0, INF), qs=(1.5, 2.0)):
    worst_sup = worst_fact = 0.0
    for s, b in shapes:
        for p1 in exps:
            for p2 in exps:
                spec = MixedNormSpec(s, b, p1, p2)
                for q in qs:
                    y, z = mixed_ball_witness(s, b, p1, p2, q)
                    x = block_product(y, z)
                    if mixed_norm(x, spec) > 1 + 1e-12:
                        return False, f"witness outside the ball for {(s, b, p1, p2)}"
                    got = lq_norm(x, q)
                    if p1 in (1.0, INF) and p2 in (1.0, INF):
                        got = max(got, lq_sup_over(mixed_ball_vertices(s, b, p1, p2), q))
                    worst_sup = max(worst_sup, abs(got - mixed_ball_d0(s, b, p1, p2, q)))
                    e = mixed_product_ensemble(y, z)
                    target = (lq_norm(z, q) ** q / b) * (lq_norm(y, q) ** q / s)
                    worst_fact = max(worst_fact, float(np.max(np.abs(moments(e, q) - target))))
    ok = worst_sup <= 1e-9 and worst_fact <= 1e-12
    return ok, f"max sup-norm error {worst_sup:.2e}, max moment factorization error {worst_fact:.2e}"


DETERMINISM_CONFIG = """\
scenario = "orbit_set"
seed = 7
[params]
x = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
group = "cyclic_signs"
n = [0, 2, 4]
q = [1.5, 2.0]
[optimizer]
iters = 10
restarts = 2
"""


@_timed("9 Determinism of `run`", 120)
def check_determinism():
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "scenario.toml"
        cfg.write_text(DETERMINISM_CONFIG)
        outs = []
        for i in range(2):
            out = Path(tmp) / f"out{i}.csv"
            code = main(["run", "--config", str(cfg), "--out", str(out), "--format", "csv"])
            if code != 0:
                return False, f"run exited with code {code}"
            outs.append(out.read_bytes())
    return outs[0] == outs[1], f"{len(outs[0])} bytes, identical={outs[0] == outs[1]}"


@_timed("canary: soundness at q=1.5", 60)
def check_soundness_canary(subspaces=50, seed=11):
    """Small soundness check sensitive to the Khintchine constant."""
    gen = rng_mod.stream(seed, "canary")
    cases = [(rademacher(4), 2), (orbit_ensemble([1.0, 1.0, 0.0, 0.0], GroupSpec("cyclic_signs", 4)), 1)]
    worst = math.inf
    for e, n in cases:
        cert = certify_ensemble(e, 1.5, n)
        for _ in range(subspaces):
            Q = random_subspace(e.N, n, gen)
            worst = min(worst, avg_width_at(e, Q, 1.5) - cert.lower_bound)
    return worst >= -1e-8, f"min (E rho^q)^(1/q) - lower bound = {worst:.3e}"


ALL = [
    check_rademacher_exactness,
    check_octahedron,
    check_soundness,
    check_weak_moments,
    check_gluskin,
    check_orbit_moments,
    check_mixed_norms,
    check_determinism,
]


def fast_checks():
    """Subset for ``selfcheck`` (well under a minute)."""
    return [
        check_rademacher_exactness,
        lambda: check_octahedron(dims=(4, 6)),
        lambda: check_soundness(ensembles=4, subspaces=20),
        lambda: check_weak_moments(ensembles=8),
        check_gluskin,
        check_orbit_moments,
        check_mixed_norms,
        check_determinism,
        check_soundness_canary,
    ]
