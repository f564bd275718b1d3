import math

import numpy as np
import pytest

from kwidths.certify import (
    Certificate,
    biorthogonal_dual,
    certify_ensemble,
    certify_pair,
    certify_set,
    check_biorthogonal,
    khintchine_constant,
    lemma_bound,
    lemma_terms,
    perturbed_khintchine,
    rotate_pair,
    sigma_upper,
    theorem2_bound,
    weak_moment_bracket,
    weak_moment_exact2,
    weak_moment_lower,
    weak_moment_upper_rud,
)
from kwidths.ensembles import (
    CoupledPair,
    DiscreteEnsemble,
    Flags,
    GroupSpec,
    ScalarLaw,
    independent_ensemble,
    orbit_ensemble,
    rademacher,
)
from kwidths.errors import (
    DegenerateCoordinateError,
    InvalidPairError,
    UnsupportedExponentError,
    UnsupportedStructureError,
)
from kwidths.vecspace import Subspace, random_subspace
from kwidths.widths import avg_width_at

CS = "cyclic_signs"


def sphere_grid_weak_moment(eta, p, m=10_000):
    """max over m equispaced unit vectors in R^2 of (E|<eta, v>|^p)^(1/p)."""
    t = np.linspace(0, np.pi, m, endpoint=False)
    V = np.stack([np.cos(t), np.sin(t)])
    return float((eta.weights @ np.abs(eta.points @ V) ** p).max() ** (1 / p))


# -- oracles ----------------------------------------------------------------

def test_weak_moment_rademacher_p4_grid_oracle():
    eta = rademacher(2)
    oracle = sphere_grid_weak_moment(eta, 4)
    assert oracle == pytest.approx(2 ** 0.25, abs=1e-6)
    val, v = weak_moment_lower(eta, 4)
    assert val == pytest.approx(oracle, abs=1e-4)
    assert val <= 2 ** 0.25 + 1e-12
    assert abs(abs(v[0]) - abs(v[1])) < 1e-3


def test_weak_moment_lower_below_grid_oracle(gen):
    for _ in range(5):
        P = gen.standard_normal((6, 2))
        e = DiscreteEnsemble.from_atoms(np.vstack([P, -P]), flags=Flags(unconditional=False))
        for p in (2.0, 3.0, 5.0):
            oracle = sphere_grid_weak_moment(e, p, 100_000)
            val, _ = weak_moment_lower(e, p)
            assert val <= oracle * (1 + 1e-9)
            assert val >= oracle * (1 - 1e-4)


def test_rademacher_certificate_matches_exact_width():
    e = rademacher(8)
    for n in range(8):
        c = certify_ensemble(e, 2.0, n)
        assert c.lower_bound == pytest.approx(math.sqrt(8 - n), abs=1e-9)
        Q = random_subspace(8, n, np.random.default_rng(n))
        assert avg_width_at(e, Q, 2.0) == pytest.approx(c.lower_bound, abs=1e-9)


# -- examples ---------------------------------------------------------------

def test_biorthogonal_dual_examples():
    pair = biorthogonal_dual(rademacher(3), 2.0)
    assert np.allclose(pair.eta.points, pair.xi.points)
    assert np.allclose(check_biorthogonal(pair), np.eye(3), atol=1e-12)
    e = orbit_ensemble([1.0, 1.0, 0.0, 0.0], GroupSpec(CS, 4))
    assert e.size == 64 or e.size <= 64
    pair = biorthogonal_dual(e, 1.5)
    assert np.allclose(check_biorthogonal(pair), np.eye(4), atol=1e-10)
    e = independent_ensemble([ScalarLaw((-1.0, 1.0), (0.5, 0.5)), ScalarLaw((-2.0, 2.0), (0.5, 0.5))])
    pair = biorthogonal_dual(e, 2.0)
    assert np.allclose(pair.xi.second_moment(), np.eye(2))
    assert np.allclose(pair.eta.points, pair.xi.points)


def test_biorthogonal_for_independent_asymmetric_law():
    law = ScalarLaw((-1.0, 2.0), (2 / 3, 1 / 3))
    pair = biorthogonal_dual(independent_ensemble([law, law, law]), 1.25)
    assert np.allclose(check_biorthogonal(pair), np.eye(3), atol=1e-10)


def test_check_biorthogonal_examples():
    r = rademacher(2)
    G = check_biorthogonal(CoupledPair(r, r.with_points(2 * r.points)))
    assert np.allclose(G, 2 * np.eye(2))
    iso = orbit_ensemble([math.sqrt(2), 0.0], GroupSpec(CS, 2))
    assert np.allclose(check_biorthogonal(CoupledPair(iso, iso)), np.eye(2))


def test_weak_moment_exact2_examples():
    assert weak_moment_exact2(rademacher(4)) == pytest.approx(1.0)
    e = DiscreteEnsemble.from_atoms([[1.0, 1.0], [-1.0, -1.0]])
    assert weak_moment_exact2(e) == pytest.approx(math.sqrt(2))
    iso = orbit_ensemble([math.sqrt(2), 0.0], GroupSpec(CS, 2))
    assert weak_moment_exact2(iso) == pytest.approx(1.0)


def test_weak_moment_lower_examples(gen):
    e = DiscreteEnsemble.from_atoms(gen.standard_normal((10, 3)))
    val, _ = weak_moment_lower(e, 2.0)
    assert val == pytest.approx(weak_moment_exact2(e), abs=1e-6)
    e1 = DiscreteEnsemble.from_atoms([[1.0, 0.0], [-1.0, 0.0]])
    for p in (2.0, 3.0, 6.0):
        val, v = weak_moment_lower(e1, p)
        assert val == pytest.approx(1.0, abs=1e-12) and abs(v[0]) == pytest.approx(1.0)


def test_rud_examples():
    assert weak_moment_upper_rud(rademacher(2), 4.0) == pytest.approx(math.sqrt(3))
    e = orbit_ensemble([2.0, 0.0, 0.0], GroupSpec(CS, 3))
    m = max((e.weights @ np.abs(e.points[:, i]) ** 2) ** 0.5 for i in range(3))
    assert weak_moment_upper_rud(e, 2.0) == pytest.approx(m)
    law = ScalarLaw((-1.0, 2.0), (2 / 3, 1 / 3))
    e = independent_ensemble([law, law])
    assert weak_moment_upper_rud(e, 2.0) == pytest.approx(2 * math.sqrt(2.0))
    assert weak_moment_upper_rud(e, 2.0) >= weak_moment_exact2(e)


def test_rud_rejects_unstructured():
    e = DiscreteEnsemble.from_atoms([[1.0, 0.0], [-1.0, 0.5]])
    with pytest.raises(UnsupportedStructureError):
        weak_moment_upper_rud(e, 2.0)


def test_bracket_ordering(gen):
    e = orbit_ensemble(gen.standard_normal(4), GroupSpec(CS, 4))
    for p in (2.0, 3.0, 4.0):
        b = weak_moment_bracket(e, p)
        assert b.lower <= b.upper


def test_sigma_upper_dominates_lower(gen):
    e = orbit_ensemble(gen.standard_normal(3), GroupSpec("permutations_signs", 3))
    for p in (1.5, 2.0, 3.0):
        s, how = sigma_upper(e, p)
        if p >= 2:
            assert weak_moment_lower(e, p)[0] <= s * (1 + 1e-12)
        assert isinstance(how, str)


def test_khintchine_hook():
    assert khintchine_constant(4.0) == pytest.approx(math.sqrt(3))
    with perturbed_khintchine(0.5):
        assert khintchine_constant(4.0) == pytest.approx(0.5 * math.sqrt(3))
    assert khintchine_constant(4.0) == pytest.approx(math.sqrt(3))


def test_theorem2_examples():
    assert theorem2_bound(8, 4, 2.0, 1.0).lower_bound == pytest.approx(2.0)
    assert theorem2_bound(8, 0, 2.0, 1.0).lower_bound == pytest.approx(math.sqrt(8))
    c = theorem2_bound(9, 5, 4.0, 1.0)
    assert c.lower_bound == pytest.approx(2 / math.sqrt(3))
    assert c.method == "theorem2_q_ge_2"
    with pytest.raises(ValueError):
        theorem2_bound(4, 4, 2.0, 1.0)


@pytest.mark.parametrize("N,n", [(5, 2), (9, 0), (3, 2)])
def test_theorem2_continuous_at_q2(N, n):
    lo = theorem2_bound(N, n, 2.0 - 1e-12, 1.0).lower_bound
    hi = theorem2_bound(N, n, 2.0 + 1e-12, 1.0).lower_bound
    at = theorem2_bound(N, n, 2.0, 1.0).lower_bound
    assert lo == pytest.approx(at, rel=1e-10) and hi == pytest.approx(at, rel=1e-10)
    assert (N - n) ** 0.5 == pytest.approx(at)


def test_lemma_examples():
    r = rademacher(2)
    pair = CoupledPair(r, r)
    e1 = Subspace(np.array([[1.0], [0.0]]))
    assert lemma_bound(pair, e1, 2.0) == pytest.approx(1.0)
    assert avg_width_at(r, e1, 2.0) == pytest.approx(1.0)
    r4 = rademacher(4)
    assert lemma_bound(CoupledPair(r4, r4), Subspace.zero(4), 2.0) == pytest.approx(2.0)
    t = lemma_terms(CoupledPair(r4, r4), Subspace.full(4), 2.0)
    assert t.numerator == pytest.approx(0.0, abs=1e-12) and t.bound == 0.0


def test_lemma_rejects_non_biorthogonal():
    r = rademacher(2)
    with pytest.raises(InvalidPairError):
        lemma_bound(CoupledPair(r, r.with_points(2 * r.points)), Subspace.zero(2), 2.0)


def test_lemma_dominates_theorem2_at_q2(gen):
    for _ in range(5):
        e = orbit_ensemble(gen.standard_normal(5), GroupSpec(CS, 5))
        pair = biorthogonal_dual(e, 2.0)
        sig = weak_moment_exact2(pair.eta)
        for n in (1, 3):
            bound = theorem2_bound(5, n, 2.0, sig).lower_bound
            for _ in range(10):
                Q = random_subspace(5, n, gen)
                assert lemma_bound(pair, Q, 2.0) >= bound - 1e-10


def test_unitary_invariance(gen):
    e = orbit_ensemble([1.0, 2.0, 0.0, -1.0], GroupSpec(CS, 4))
    pair = biorthogonal_dual(e, 2.0)
    U, _ = np.linalg.qr(gen.standard_normal((4, 4)))
    rot = rotate_pair(pair, U)
    assert np.allclose(check_biorthogonal(rot), check_biorthogonal(pair), atol=1e-9)
    assert weak_moment_exact2(rot.eta) == pytest.approx(weak_moment_exact2(pair.eta), abs=1e-9)


def test_certify_ensemble_rademacher():
    c = certify_ensemble(rademacher(8), 2.0, 4)
    assert c.lower_bound == pytest.approx(2.0) and c.sigma_upper == pytest.approx(1.0)
    assert c.method == "theorem2_q_le_2" and c.target == "avg"


def test_certify_bound_degrades_as_q_to_1():
    e = rademacher(4)
    vals = [certify_ensemble(e, q, 1).lower_bound for q in (1.9, 1.5, 1.2, 1.05)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_certify_set_examples():
    c = certify_set(np.ones(8), 2.0, 4, GroupSpec(CS, 8))
    assert c.lower_bound == pytest.approx(2.0) and c.method == "set_rigidity" and c.target == "sup"
    e1 = np.eye(5)[0]
    for q in (1.5, 2.0):
        c = certify_set(e1, q, 0, GroupSpec(CS, 5))
        assert c.lower_bound <= 1.0 + 1e-12
        assert c.lower_bound == pytest.approx(1.0 / c.sigma_upper)


def test_certify_set_gluskin_scaling():
    ks = np.array([1, 2, 4, 8])
    from kwidths.ensembles import gluskin_extreme
    lb = [certify_set(gluskin_extreme(16, int(k)), 2.0, 8, GroupSpec(CS, 16)).lower_bound for k in ks]
    slope = np.polyfit(np.log(ks), np.log(lb), 1)[0]
    assert slope == pytest.approx(0.5, abs=0.05)


def test_certify_rejects_q1_and_large_q():
    with pytest.raises(UnsupportedExponentError):
        certify_ensemble(rademacher(2), 1.0, 0)
    with pytest.raises(UnsupportedExponentError):
        certify_ensemble(rademacher(2), 3.0, 0)


def test_degenerate_coordinate():
    e = DiscreteEnsemble.from_atoms([[1.0, 0.0], [-1.0, 0.0]], flags=Flags(unconditional=True))
    with pytest.raises(DegenerateCoordinateError) as info:
        certify_ensemble(e, 1.5, 0)
    assert info.value.index == 1


def test_certify_requires_star():
    e = DiscreteEnsemble.from_atoms([[1.0, 1.0], [-1.0, -1.0]])
    with pytest.raises(UnsupportedStructureError):
        certify_ensemble(e, 2.0, 0)


def test_certify_pair_large_q():
    r = rademacher(3)
    c = certify_pair(CoupledPair(r, r), 4.0, 1, 1.0, "exact")
    assert c.lower_bound == pytest.approx(math.sqrt(2) * 3 ** (0.25 - 0.5))


def test_certificate_json_field_order():
    c = certify_ensemble(rademacher(2), 2.0, 1)
    d = c.to_dict()
    assert list(d) == ["method", "q", "N", "n", "sigma_upper", "lower_bound", "provenance"]
    assert '"method"' in c.to_json()


def test_certificate_invariants():
    with pytest.raises(ValueError):
        Certificate(2.0, 3, 3, 1.0, 1.0, "theorem2_q_le_2")
    with pytest.raises(ValueError):
        Certificate(2.0, 3, 1, 1.0, 0.0, "theorem2_q_le_2")
