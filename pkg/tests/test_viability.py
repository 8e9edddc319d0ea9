import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lschjb.acceptance import START, sec4_field
from lschjb.extreal import PLUS_INF
from lschjb.models import LagrangianModel, builtin, sec4_V
from lschjb.valuefn import QSegmentError, Trajectory, extract_trajectory
from lschjb.viability import (EpsApproxSolution, NoValidStepError, audit_eps_approx, build_eps_approx,
                              check_invariance, step_bound, window_limits)

ZERO = LagrangianModel("zero", 1, 1.0,
                       lambda t, x, v: np.where(np.abs(v) <= 1.0, 0.0, PLUS_INF) + 0 * np.asarray(x, float),
                       domain=lambda t, x: (-1.0, 1.0), known_CR=lambda R: 1.0)


def test_step_bound_examples():
    sb = step_bound((1, 0, 0), (0, 0, 0), (0, 0, 0))
    assert sb.h_max == pytest.approx(2.0)
    sb = step_bound((1, 0, 0), (0, 0, 0), (0, 0.5, 0))
    assert sb.h_max == pytest.approx(1.6)
    # |(1, 0) + 1.5 ((0, 0.5) - (1, 0))| = |(-0.5, 0.75)|
    assert np.hypot(-0.5, 0.75) == pytest.approx(0.9014, abs=1e-4)
    assert sb.holds(1.5) and sb.holds(1.6) and not sb.holds(1.7)
    with pytest.raises(NoValidStepError):
        step_bound((1, 2, 3), (0, 1, 1), (1, 1, 2))
    with pytest.raises(NoValidStepError):
        step_bound((1, 0, 0), (0, 0, 0), (2, 0, 0))


vec = st.lists(st.floats(-10, 10), min_size=3, max_size=3).map(np.array)


@settings(max_examples=1000, deadline=None)
@given(vec, vec, vec, st.floats(0.0, 1.0))
def test_step_bound_property(y, w, f, frac):
    d = y - w
    if not f @ d < d @ d or np.array_equal(f, d):
        with pytest.raises(NoValidStepError):
            step_bound(y, w, f)
        return
    sb = step_bound(y, w, f)
    assert sb.holds(frac * sb.h_max, rtol=1e-9)
    # |d + h (f - d)|^2 - |d|^2 has roots 0 and h_max, so a longer step overshoots
    if d @ d > 1e-6 and (f - d) @ (f - d) > 1e-6:
        assert not sb.holds(sb.h_max * 1.01 + 1e-6, rtol=0)


def test_window_limits():
    eps0, T0 = window_limits(0.2, 1.0, 2.0)
    assert eps0 == pytest.approx(0.2)
    assert T0 == pytest.approx(0.2 + 1 / 3)
    assert window_limits(0.0, 1.0, 0.0)[1] == pytest.approx(0.5)


def test_flat_epigraph():
    U = lambda t, x: 0.0 * np.asarray(t, float) * np.asarray(x, float)  # noqa: E731
    sol = build_eps_approx(U, ZERO, (0.0, 0.0, 0.0), 0.05)
    au = audit_eps_approx(sol, U)
    assert au["verdict"] == "pass"
    assert au["worst"]["dist"] <= 0.05
    assert sol.times[0] == 0.0 and sol.times[-1] == pytest.approx(sol.T0)


def test_sec4_build_and_roundtrip():
    V = builtin("sec4-V")
    start = (START[0], START[1], float(sec4_V(*START)))
    sol = build_eps_approx(V, builtin("sec4-L"), start, 0.1)
    au = audit_eps_approx(sol, V)
    assert au["verdict"] == "pass" and au["worst"]["dist"] <= 0.1
    back = EpsApproxSolution.from_dict(sol.to_dict())
    np.testing.assert_array_equal(back.nodes, sol.nodes)
    np.testing.assert_array_equal(back.f, sol.f)
    assert back.to_json() == sol.to_json()
    # the end node is the broken line evaluated at its last time
    np.testing.assert_allclose(sol.y(sol.times[-1]), sol.nodes[-1], atol=1e-12)


def test_invariance_on_dp_trajectories():
    f, _ = sec4_field(101, 201)
    L = builtin("sec4-L")
    tr = extract_trajectory(f, (0.2, 0.9))
    r = check_invariance(f, L, tr, tol=1e-3)
    assert r["verdict"] == "pass"
    lifted = dataclasses.replace(tr, u=tr.u + 1.0)
    assert check_invariance(f, L, lifted, tol=1e-3)["worst_margin"] >= 1.0 - 1e-3


def test_invariance_rejects_paths_outside_q():
    f, _ = sec4_field(101, 201)
    t = np.linspace(0.2, 1.0, 9)
    fast = Trajectory(t, 0.5 + 3.0 * (t - 0.2), np.zeros_like(t))
    with pytest.raises(QSegmentError):
        check_invariance(f, builtin("sec4-L"), fast)
    rising = Trajectory(t, -1.0 + 0 * t, t)
    with pytest.raises(QSegmentError):
        check_invariance(f, builtin("sec4-L"), rising)
