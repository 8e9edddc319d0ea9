import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lschjb.models import (REGISTRY, ConditionReport, InvalidConfigError, SamplerConfig, UnknownModelError, builtin,
                           check_condition_A, check_H, check_L6_transfer, conjugate_pair_fidelity,
                           control_hamiltonian, freeze_x, model_from_spec, sec4_segment_cost, sec4_V)


def test_printed_values():
    assert builtin("sec3").eval(0.0, 2.0, 3.0) == 5.0
    assert builtin("ex1").eval(0.0, 1.0, 1.0) == 0.0
    np.testing.assert_allclose(builtin("sec4-V").eval(0.0, 1.0), math.exp(-2) - 1, rtol=1e-12)
    np.testing.assert_allclose(math.exp(-2) - 1, -0.864665, atol=1e-6)


def test_registry_complete():
    for name in REGISTRY:
        assert builtin(name).name.startswith(name.split("-")[0])
    with pytest.raises(UnknownModelError):
        builtin("nope")


def test_sec4_value_branches():
    assert sec4_V(0.8, 0.0) == 1.0
    np.testing.assert_allclose(sec4_V(0.5, 0.25), 1 - math.exp(-1.0))
    # jump across x = 2t - T
    assert sec4_V(0.6, 0.2 - 1e-12) == 1.0
    assert sec4_V(0.6, 0.2) < 1.0


def test_sec4_segment_cost_matches_quadrature():
    from scipy.integrate import quad
    L = builtin("sec4-L")
    for t0, x0, v, dt in [(0.1, 0.5, 1.5, 0.2), (0.3, -0.5, -1.0, 0.1), (0.2, 0.9, 0.0, 0.3)]:
        ref, _ = quad(lambda s: float(L.eval(t0 + s, x0 + v * s, v)), 0.0, dt)
        np.testing.assert_allclose(sec4_segment_cost(t0, x0, v, dt), ref, rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex4", "sec3", "sec4-L"])
def test_printed_pairs(name):
    assert conjugate_pair_fidelity(name)["pass"]


def test_check_H_examples():
    r = check_H(builtin("rem29"), "H3")
    assert r.verdict == "fail" and r.witnesses
    assert min(w["t"] for w in r.witnesses) < 0.01
    assert check_H(builtin("sec3"), "H2").verdict == "pass"
    r = check_H(builtin("ex1"), "H3")
    assert r.verdict == "pass"
    for R, c in r.estimates["C_R_hat"].items():
        assert c <= float(R) + 1e-9


def test_condition_A_examples():
    r = check_condition_A(builtin("ex1"))
    assert r.verdict == "fail" and r.witnesses
    r = check_condition_A(builtin("ex2"))
    assert r.verdict == "fail"
    assert any("t->0" in w["kind"] for w in r.witnesses)
    r = check_condition_A(builtin("sec3"))
    assert r.verdict == "pass"
    assert all(s["lambda_hat"] <= abs(s["x"]) + 1 + 1e-9 for s in r.estimates["samples"])


def test_L6_transfer():
    r = check_L6_transfer(builtin("sec3"))
    assert r.verdict == "pass"
    for env in r.estimates["envelopes"].values():
        a, b = max(env["k_hat_L6"]), max(env["k_hat_H5"])
        assert a <= 3 * b and b <= 3 * a
    assert check_L6_transfer(builtin("ex1")).verdict == "pass"
    r = check_L6_transfer(freeze_x(builtin("sec3"), 0.5))
    assert r.verdict == "pass"
    assert all(max(e["k_hat_L6"]) <= 1e-9 for e in r.estimates["envelopes"].values())


def test_checks_deterministic():
    a = check_H(builtin("sec3"), "H5", {"seed": 3}).to_dict()
    b = check_H(builtin("sec3"), "H5", {"seed": 3}).to_dict()
    assert a == b


def test_fail_needs_witness():
    with pytest.raises(ValueError):
        ConditionReport("(H2)", "fail", [], {})


def test_sampler_validation():
    with pytest.raises(InvalidConfigError):
        SamplerConfig.from_dict({"samples": 0})
    with pytest.raises(InvalidConfigError):
        check_H(builtin("sec3"), "H9")


def test_control_instances_agree_with_printed():
    for ctrl, plain in (("ex5-fl-check", "ex4"), ("ex5-fl-hat", "ex1")):
        a = control_hamiltonian(builtin(ctrl), 0.5, 1.0, 2.0)
        b = builtin(plain).eval(0.5, 1.0, 2.0)
        assert abs(a - b) < 1e-2


def test_model_from_spec():
    m = model_from_spec({"expr": "max(abs(p)*abs(x)-1, 0)"})
    assert m.eval(0.0, 2.0, 3.0) == 5.0
    with pytest.raises(InvalidConfigError):
        model_from_spec({"expr": "__import__('os')"})


@settings(max_examples=50)
@given(st.floats(0.01, 1), st.floats(-3, 3), st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 1))
def test_builtin_hamiltonians_convex(t, x, p, q, s):
    for name in ("ex1", "ex2", "ex4", "sec3", "rem29"):
        H = builtin(name)
        mid = H.eval(t, x, s * p + (1 - s) * q)
        assert mid <= s * H.eval(t, x, p) + (1 - s) * H.eval(t, x, q) + 1e-9
