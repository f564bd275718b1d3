import math

import numpy as np
import pytest

from kwidths.certify import Certificate, certify_ensemble, certify_set
from kwidths.ensembles import DiscreteEnsemble, GroupSpec, Sample, orbit_ensemble, rademacher
from kwidths.errors import IncomparableError
from kwidths.vecspace import Subspace, random_subspace
from kwidths.widths import (
    MonteCarlo,
    WidthEstimate,
    avg_width_at,
    best_subspace_l2,
    best_subspace_lq,
    gap_report,
    lq_sup_over,
    mixed_ball_d0,
    sup_width_upper,
)


def cross_polytope(N):
    return np.vstack([np.eye(N), -np.eye(N)])


def uniform_pm_e(N):
    return DiscreteEnsemble.from_atoms(cross_polytope(N))


# -- oracles ------------------------------------------------------------------

@pytest.mark.parametrize("N", [4, 6])
def test_octahedron_sup_width(N):
    for n in range(N + 1):
        est = sup_width_upper(cross_polytope(N), n, 2.0, restarts=2)
        assert est.value == pytest.approx(math.sqrt(1 - n / N), abs=1e-6)


def test_cross_polytope_avg_width_subspace_independent(gen):
    N = 6
    e = uniform_pm_e(N)
    for n in range(N + 1):
        Q = random_subspace(N, n, gen)
        assert avg_width_at(e, Q, 2.0) == pytest.approx(math.sqrt(1 - n / N), abs=1e-12)


def test_rademacher_avg_width_200_subspaces(gen):
    e = rademacher(8)
    vals = [avg_width_at(e, random_subspace(8, 4, gen), 2.0) for _ in range(200)]
    assert np.allclose(vals, 2.0, atol=1e-9)


def test_best_subspace_lq_matches_brute_force_in_r2():
    # n = 1 in R^2: scan all lines through the origin
    e = orbit_ensemble([1.0, 0.3], GroupSpec("cyclic_signs", 2))
    q = 1.5
    t = np.linspace(0, np.pi, 20001)
    ref = min(avg_width_at(e, Subspace(np.array([[math.cos(a)], [math.sin(a)]])), q) for a in t[::50])
    est = best_subspace_lq(e, 1, q, restarts=4)
    assert est.value <= ref + 1e-9
    assert est.value >= ref - 1e-3


# -- examples -------------------------------------------------------------------

def test_avg_width_full_space_is_zero(gen):
    e = orbit_ensemble(gen.standard_normal(4), GroupSpec("cyclic_signs", 4))
    for q in (1.5, 2.0, 3.0):
        assert avg_width_at(e, Subspace.full(4), q) == pytest.approx(0.0, abs=1e-12)


def test_avg_width_monte_carlo_mode():
    e = rademacher(6)
    v = avg_width_at(e, Subspace.zero(6), 2.0, mode=MonteCarlo(200, 1))
    assert v == pytest.approx(math.sqrt(6))


def test_best_subspace_l2_examples():
    assert best_subspace_l2(rademacher(8), 4).value == pytest.approx(2.0)
    e = DiscreteEnsemble.from_atoms([[1.0, 0.0], [-1.0, 0.0]])
    assert best_subspace_l2(e, 1).value == pytest.approx(0.0, abs=1e-12)
    assert best_subspace_l2(uniform_pm_e(4), 2).value == pytest.approx(math.sqrt(0.5))


def test_best_subspace_l2_is_optimal(gen):
    e = orbit_ensemble(gen.standard_normal(5), GroupSpec("permutations_signs", 5))
    e = e.with_points(e.points * np.array([3.0, 1, 1, 0.5, 0.2]))
    best = best_subspace_l2(e, 2)
    assert avg_width_at(e, best.subspace, 2.0) == pytest.approx(best.value, abs=1e-10)
    for _ in range(50):
        assert avg_width_at(e, random_subspace(5, 2, gen), 2.0) >= best.value - 1e-10


def test_best_subspace_lq_at_q2_is_spectral(gen):
    e = orbit_ensemble(gen.standard_normal(4), GroupSpec("cyclic_signs", 4))
    e = e.with_points(e.points * np.array([2.0, 1.0, 1.0, 0.3]))
    for n in (1, 2, 3):
        assert best_subspace_lq(e, n, 2.0, restarts=2).value == pytest.approx(best_subspace_l2(e, n).value, abs=1e-8)


def test_best_subspace_lq_rademacher_sandwich():
    e = rademacher(4)
    q = 1.5
    est = best_subspace_lq(e, 2, q)
    cert = certify_ensemble(e, q, 2)
    upper = math.sqrt(2) * 4 ** (1 / q - 0.5)  # norm comparison with the exact l_2 width
    assert cert.lower_bound <= est.value <= upper + 1e-9
    assert gap_report(cert, est).consistent


def test_best_subspace_lq_supported_in_subspace():
    pts = np.array([[1.0, 1.0, 0.0], [-1.0, -1.0, 0.0], [2.0, 2.0, 0.0]])
    e = DiscreteEnsemble.from_atoms(pts)
    assert best_subspace_lq(e, 1, 1.5, restarts=2).value == pytest.approx(0.0, abs=1e-9)


def test_best_subspace_lq_monotone_in_n():
    e = orbit_ensemble([1.0, 0.5, 0.2, 0.0, 0.0], GroupSpec("cyclic_signs", 5))
    vals = [best_subspace_lq(e, n, 1.5, iters=30, restarts=2).value for n in range(6)]
    assert all(a >= b - 1e-9 for a, b in zip(vals, vals[1:]))


def test_best_subspace_lq_monotone_in_iters():
    e = orbit_ensemble([1.0, 0.5, 0.2, 0.1], GroupSpec("cyclic_signs", 4))
    vals = [best_subspace_lq(e, 2, 1.3, iters=it, restarts=1).value for it in (0, 1, 5, 50)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_sup_width_examples():
    pts = np.array([[1.0, 2.0, 0.0], [-2.0, -4.0, 0.0]])
    assert sup_width_upper(pts, 1, 1.5, restarts=2).value == pytest.approx(0.0, abs=1e-7)
    x = np.array([[3.0, -4.0]])
    for q in (1.0, 2.0, math.inf):
        assert sup_width_upper(x, 0, q).value == pytest.approx(lq_sup_over(x, q))
    assert sup_width_upper(x, 0, 2.0).value == pytest.approx(5.0)


def test_sup_width_upper_iters_zero_is_still_upper():
    est = sup_width_upper(cross_polytope(4), 2, 2.0, iters=0, restarts=0)
    assert est.value >= math.sqrt(0.5) - 1e-12


def test_sup_width_q_not_smooth_returns_start_value():
    est = sup_width_upper(cross_polytope(4), 2, 1.0, restarts=3)
    assert est.value >= 0.5 - 1e-9   # d_2(B_1^4, l_1^4) > 0; any subspace gives an upper bound


def test_gap_report_examples():
    e = rademacher(8)
    rep = gap_report(certify_ensemble(e, 2.0, 4), best_subspace_l2(e, 4))
    assert rep.ratio == pytest.approx(1.0, abs=1e-12) and rep.consistent
    cert = certify_set(np.eye(6)[0], 2.0, 3, GroupSpec("cyclic_signs", 6))
    est = sup_width_upper(cross_polytope(6), 3, 2.0, restarts=2)
    rep = gap_report(cert, est)
    assert math.isfinite(rep.ratio) and rep.ratio >= 1 and rep.consistent


def test_gap_report_canary():
    e = rademacher(4)
    est = best_subspace_l2(e, 2)
    fake = Certificate(2.0, 4, 2, 0.5, 2 * est.value, "theorem2_q_le_2")
    assert not gap_report(fake, est).consistent


def test_gap_report_incomparable():
    e = rademacher(4)
    with pytest.raises(IncomparableError):
        gap_report(certify_set(np.ones(4), 2.0, 2, GroupSpec("cyclic_signs", 4)), best_subspace_l2(e, 2))
    with pytest.raises(IncomparableError):
        gap_report(certify_ensemble(e, 2.0, 1), best_subspace_l2(e, 2))


def test_width_estimate_records_settings():
    est = best_subspace_lq(rademacher(3), 1, 1.5, iters=5, restarts=1, seed=4)
    d = est.to_dict()
    assert d["settings"] == {"iters": 5, "restarts": 1, "tol": 1e-8}
    assert d["rng_seed"] == 4 and len(d["basis"]) == 3
    with pytest.raises(ValueError):
        WidthEstimate("bogus", 2.0, 1, 1.0, Subspace.zero(2), "x")


def test_best_subspace_lq_deterministic():
    e = orbit_ensemble([1.0, 0.4, 0.0, 0.2], GroupSpec("cyclic_signs", 4))
    a = best_subspace_lq(e, 2, 1.5, iters=20, restarts=2, seed=5)
    b = best_subspace_lq(e, 2, 1.5, iters=20, restarts=2, seed=5)
    assert a.value == b.value and np.array_equal(a.subspace.basis, b.subspace.basis)


@pytest.mark.parametrize("p1,p2", [(1, 1), (2, math.inf), (math.inf, 1), (math.inf, math.inf)])
def test_mixed_ball_d0(p1, p2):
    assert mixed_ball_d0(2, 2, math.inf, math.inf, 2.0) == pytest.approx(2.0)
    v = mixed_ball_d0(2, 3, p1, p2, 1.5)
    assert v >= 1.0


def test_sampled_ensemble_certificate_is_sandwiched():
    e = orbit_ensemble([1.0, 0.5, 0.0, 0.0], GroupSpec("cyclic_signs", 4), Sample(400, 2))
    c = certify_ensemble(e, 1.5, 1)
    est = best_subspace_lq(e, 1, 1.5, iters=30, restarts=2)
    assert gap_report(c, est).consistent
