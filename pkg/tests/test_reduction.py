import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lschjb.models import builtin, check_condition_A
from lschjb.reduction import (Representation, ReductionError, abs_hamiltonian, barron_jensen_diagnostic,
                              barron_jensen_hbar, build_hbar, build_representation, convexify_representation,
                              coverage_audit, hbar_identities, lambda_hat, sec3_printed, sup_refinement,
                              with_lambda_hat, zero_hamiltonian)


@pytest.fixture(scope="module")
def hbar():
    return build_hbar(sec3_printed())


def test_printed_hbar_closed_form(hbar):
    rng = np.random.default_rng(1)
    t, x, r, p, q = (rng.uniform(lo, hi, 500) for lo, hi in ((0, 1), (-3, 3), (-1, 1), (-4, 4), (-3, 3)))
    np.testing.assert_allclose(hbar(t, x, r, p, q), np.maximum(np.abs(p * x) + q, 0.0), rtol=0, atol=1e-12)


def test_hbar_identities(hbar):
    ids = hbar_identities(hbar, builtin("sec3"))
    assert ids["homogeneity_max_rel_error"] <= 1e-12
    assert ids["restriction_max_error"] <= 1e-12
    assert hbar(0.3, 1.5, 0.0, 2.0 * 1.2, 2.0 * 0.4) == pytest.approx(2.0 * hbar(0.3, 1.5, 0.0, 1.2, 0.4), abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-4, 4), st.floats(-3, 3), st.floats(0.0, 20.0))
def test_hbar_positively_homogeneous(x, p, q, s):
    hb = build_hbar(sec3_printed(33))
    assert hb(0.5, x, 0.0, s * p, s * q) == pytest.approx(s * hb(0.5, x, 0.0, p, q), rel=1e-12, abs=1e-12)


def test_barron_jensen_jumps():
    bj = barron_jensen_diagnostic(builtin("sec3"), {"q": [1.0, -1.0], "p": 1.0})
    pos, neg = bj["cases"]
    assert [j["x"] for j in pos["jumps"]] == [0.0]
    assert pos["jumps"][0]["magnitude"] == pytest.approx(1.0, abs=1e-6)
    assert neg["continuous"]
    flat = barron_jensen_diagnostic(zero_hamiltonian(), {"q": [1.0, 2.0]})
    assert all(c["continuous"] for c in flat["cases"])
    # at x = 0 the Lagrangian domain collapses to {0}
    assert barron_jensen_hbar(builtin("sec3"), 0.5, 0.0, 0.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("H", [builtin("sec3"), zero_hamiltonian(), abs_hamiltonian()], ids=lambda h: h.name)
def test_projection_representation(H):
    rep = build_representation(H, per_axis=33, audit_points=2)
    au = rep.audit
    assert au["sup_excess_max"] <= 1e-9
    assert au["epi_inclusion_ok"]
    for env in au["envelopes"].values():
        assert env["within_K_R"] in (True, None) and env["within_C"] in (True, None)


def test_condition_a_failure_blocks_construction():
    with pytest.raises(ReductionError):
        build_representation(builtin("ex1"), per_axis=9)


def test_empty_sample_rejected():
    with pytest.raises(ReductionError):
        Representation(np.zeros((0, 1)), lambda t, x: (np.zeros(0), np.zeros(0)), "printed")


def _points_rep(fs, ls):
    fs, ls = np.asarray(fs, float), np.asarray(ls, float)
    return Representation(np.arange(len(fs))[:, None], lambda t, x: (fs, ls), "printed", abs_hamiltonian())


def test_convexification_examples():
    one = convexify_representation(_points_rep([0.3], [0.1]))
    f, l = one.images(0.5, 0.0)
    np.testing.assert_array_equal(f, [0.3])
    np.testing.assert_array_equal(l, [0.1])
    two = convexify_representation(_points_rep([-1.0, 1.0], [0.0, 0.0]), combos=200)
    f, _ = two.images(0.5, 0.0)
    assert f.min() == -1.0 and f.max() == 1.0
    assert np.max(np.diff(np.unique(f))) <= 2.0 / 8 + 1e-12
    conv = convexify_representation(sec3_printed())
    cov = coverage_audit(conv, builtin("sec3"), [(0.5, 2.0)])
    assert cov["covered"] and cov["A_bounds_hold"]


def test_lambda_hat_passes_condition_a():
    rep = sec3_printed(65)
    lam = lambda_hat(rep)
    assert lam(0.5, 2.0) == pytest.approx(3.0)
    assert check_condition_A(with_lambda_hat(builtin("sec3"), rep)).verdict == "pass"


def test_sup_refinement_exact_for_sec3():
    out = sup_refinement(builtin("sec3"), sizes=(9, 17))
    assert max(out["deficit"]) <= 1e-9 and out["excess_max"] <= 1e-9


def test_zero_hamiltonian_projection():
    # epi of the indicator of {0} is {0} x [0, inf): l keeps the nonnegative part of a2
    rep = build_representation(zero_hamiltonian(), per_axis=9, audit_points=1)
    f, l = rep.images(0.5, 0.3)
    np.testing.assert_allclose(f, 0.0, atol=1e-12)
    np.testing.assert_allclose(l, np.maximum(rep.params[:, 1], 0.0), atol=1e-9)
