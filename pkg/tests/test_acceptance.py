"""Acceptance criteria 1-9, one pass/fail line each.

Run directly (``python tests/test_acceptance.py``) for the summary table, or
through pytest (``pytest -s tests/test_acceptance.py`` shows the lines).
Tolerances and budgets are pinned inside ``kwidths.checks``.
"""
import functools

import pytest

from kwidths import checks


@functools.lru_cache(maxsize=None)
def _run(name):
    return getattr(checks, name)()


# criteria 3 and 8 are evaluated by the same sweep over the same subspaces
CRITERIA = [
    ("1", "check_rademacher_exactness"),
    ("2", "check_octahedron"),
    ("3", "check_soundness"),
    ("4", "check_weak_moments"),
    ("5", "check_gluskin"),
    ("6", "check_orbit_moments"),
    ("7", "check_mixed_norms"),
    ("8", "check_soundness"),
    ("9", "check_determinism"),
]


@pytest.mark.parametrize("number,name", CRITERIA, ids=[f"criterion_{c}" for c, _ in CRITERIA])
def test_criterion(number, name):
    res = _run(name)
    print(f"criterion {number}: {res.line()}")
    assert res.passed, res.detail


def test_canary_detects_weakened_constant():
    from kwidths.certify import perturbed_khintchine

    assert checks.check_soundness_canary().passed
    with perturbed_khintchine(0.5):
        res = checks.check_soundness_canary()
    print(f"canary (C_p halved, must fail): {res.line()}")
    assert not res.passed


if __name__ == "__main__":
    ok = True
    for number, name in CRITERIA:
        res = _run(name)
        ok &= res.passed
        print(f"criterion {number}: {res.line()}")
    raise SystemExit(0 if ok else 1)
