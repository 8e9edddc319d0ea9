import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lschjb.acceptance import sec4_field
from lschjb.extreal import PLUS_INF, Axis, GridFn, Grid
from lschjb.models import LagrangianModel, builtin, sec4_V
from lschjb.valuefn import (CoverageError, DPConfig, backward_step, closed_form_error, extract_trajectory,
                            lagrangian_conjugate, q_segment_violations, scaled_hamiltonian, segment_cost,
                            solve_value, verify_lsc_solution, verify_thm52_54)


def lag(name, fn, domain=None, CR=None):
    return LagrangianModel(name, 1, 1.0, fn, domain=domain, known_CR=CR)


ZERO = lag("zero", lambda t, x, v: np.where(np.abs(v) <= 1.0, 0.0, PLUS_INF) + 0 * np.asarray(x, float),
           domain=lambda t, x: (-1.0, 1.0))
FROZEN = lag("frozen", lambda t, x, v: np.where(np.asarray(v) == 0, 0.0, PLUS_INF) + 0 * np.asarray(x, float),
             domain=lambda t, x: (0.0, 0.0))
QUAD = lag("quad", lambda t, x, v: 0.5 * np.asarray(v, float) ** 2 + 0 * np.asarray(x, float), CR=lambda R: 2.0)


def space(n=81):
    return Axis(-2.0, 2.0, n, "x")


def test_free_motion_minimizes_terminal_data():
    g = lambda x: (x - 0.3) ** 2  # noqa: E731
    f = solve_value(DPConfig(Axis(0, 1, 11, "t"), space(), ZERO, g))
    xs = f.value.grid.nodes(1)
    for j, t in enumerate(f.times):
        reach = [np.min(g(np.linspace(x - (1 - t), x + (1 - t), 2001))) for x in xs]
        assert np.max(np.abs(f.value.values[j] - reach)) <= 1e-2


def test_frozen_dynamics_keep_terminal_data():
    g = lambda x: np.sin(3 * x)  # noqa: E731
    f = solve_value(DPConfig(Axis(0, 1, 11, "t"), space(), FROZEN, g, velocity=Axis(-1.0, 1.0, 3, "v")))
    for row in f.value.values:
        np.testing.assert_allclose(row, g(f.value.grid.nodes(1)), rtol=0, atol=1e-12)
    tr = extract_trajectory(f, (0.0, 0.5))
    np.testing.assert_array_equal(tr.x, 0.5)
    np.testing.assert_allclose(tr.u, g(0.5), rtol=0, atol=1e-12)


def test_terminal_slice_and_coverage():
    f = solve_value(DPConfig(Axis(0, 1, 5, "t"), space(), ZERO, lambda x: x))
    np.testing.assert_array_equal(f.value.values[-1], f.value.grid.nodes(1))
    with pytest.raises(CoverageError):
        solve_value(DPConfig(Axis(0, 1, 5, "t"), space(), ZERO, lambda x: x, velocity=Axis(-0.5, 0.5, 5, "v")))


def test_sec4_value_at_origin_line():
    f, dt = sec4_field(201, 401)
    assert abs(f.eval(0.0, 1.0) - (math.exp(-2) - 1)) <= 5e-2
    assert dt < 60
    tr = extract_trajectory(f, (0.0, 1.0))
    assert abs(tr.u[0] - f.eval(0.0, 1.0)) <= 5e-2
    assert not q_segment_violations(tr, builtin("sec4-L"))


def test_quadratic_cost_against_brute_force():
    f = solve_value(DPConfig(Axis(0, 1, 21, "t"), Axis(-3, 3, 121, "x"), QUAD, lambda x: x,
                             velocity=Axis(-2.0, 2.0, 81, "v")))
    tr = extract_trajectory(f, (0.0, 0.5))
    # piecewise-constant controls with three switch times at the quarter points
    vs = np.linspace(-2, 2, 41)
    best = min(0.5 + sum(0.25 * v + 0.125 * v * v for v in c) for c in itertools.product(vs, repeat=2))
    best = 0.5 + 2 * (best - 0.5)
    assert abs(tr.u[0] - best) <= 1e-2
    assert np.all(np.abs(np.diff(tr.x) / np.diff(tr.t) + 1.0) <= 0.05 + 1e-12)


def test_refinement_on_right_of_diagonal():
    errs = [closed_form_error(sec4_field(*n)[0], sec4_V, kink=lambda t: 2 * t - 1, region="x>=t")["sup_error"]
            for n in ((101, 201), (201, 401))]
    # the scheme is exact up to rounding there: the factor-1.5 target is met modulo a 1e-9 floor
    assert errs[1] <= max(errs[0] / 1.5, 1e-9)


def test_dp_step_is_deterministic():
    f, _ = sec4_field(101, 201)
    cfg = f.config
    j = 40
    t = f.times[j]
    c = segment_cost(cfg.lagrangian, t, f.padded_x[:, None], f.velocity[None, :], cfg.time.spacing, cfg.quadrature)
    again, _ = backward_step(f.padded_value[j + 1], f.padded_x, t, cfg.time.spacing, f.velocity, c)
    np.testing.assert_array_equal(again, f.padded_value[j])


@settings(max_examples=10, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_shift_and_monotone(c, seed):
    rng = np.random.default_rng(seed)
    coef = rng.normal(size=3)
    g1 = lambda x: coef[0] * x ** 2 + coef[1] * np.abs(x) + coef[2] * x  # noqa: E731
    g2 = lambda x: g1(x) + np.abs(np.sin(5 * x))  # noqa: E731
    base = dict(time=Axis(0, 1, 6, "t"), space=Axis(-1, 1, 21, "x"), lagrangian=QUAD, velocity=Axis(-2, 2, 17, "v"))
    v1 = solve_value(DPConfig(terminal=g1, **base)).value.values
    v2 = solve_value(DPConfig(terminal=g2, **base)).value.values
    vc = solve_value(DPConfig(terminal=lambda x: g1(x) + c, **base)).value.values
    assert np.all(v1 <= v2 + 1e-12)
    np.testing.assert_allclose(vc, v1 + c, rtol=0, atol=1e-12)


def test_trajectory_stays_above_value():
    f, _ = sec4_field(101, 201)
    for x0 in (-1.5, 0.0, 0.9, 1.7):
        tr = extract_trajectory(f, (0.2, x0))
        # compared with the exact V; the interpolated field smears the cusp at x = t
        assert np.min(tr.u - sec4_V(tr.t, tr.x)) >= -1e-9
        assert tr.u[-1] == pytest.approx(float(sec4_V(1.0, tr.x[-1])), abs=1e-12)


def test_lsc_verification_examples():
    L = builtin("sec4-L")
    H = lagrangian_conjugate(L)
    g = lambda x: sec4_V(1.0, x)  # noqa: E731
    probes = [(t, x) for t in np.linspace(0, 1, 6) for x in np.linspace(-2, 2, 9)]
    ok = verify_lsc_solution(builtin("sec4-V"), H, g, probes)
    assert ok.verdict == "pass" and ok.summary["max_violation"] <= 1e-6
    assert verify_lsc_solution(builtin("sec4-V"), scaled_hamiltonian(H, 2.0), g, probes).verdict == "fail"
    shifted = verify_lsc_solution(lambda t, x: sec4_V(t, x) + 0.5, H, g, probes[:6])
    assert shifted.verdict == "fail" and shifted.summary["terminal_error"] == pytest.approx(0.5)


def test_directional_inequalities_examples():
    r = verify_thm52_54(builtin("sec4-V"), builtin("sec4-L"), [(0.5, 1.2), (0.5, 0.5)])
    rows = {(tuple(row["probe"]), row["quantity"][:3]): row for row in r.rows}
    back = rows[((0.5, 1.2), "all")]
    assert back["margin"] >= -1e-3
    witness = rows[((0.5, 0.5), "exi")]
    assert witness["verdict"] == "pass" and abs(witness["v0"] - 1.0) <= 0.1 and not witness["v0_in_dom"]
    frozen = verify_thm52_54(lambda t, x: np.sin(np.asarray(x, float)), FROZEN, [(0.5, 0.3)],
                             velocity=Axis(-1.0, 1.0, 3, "v"))
    row = [r for r in frozen.rows if r["quantity"].startswith("exists")][0]
    assert row["verdict"] == "pass" and row["v0"] == 0.0
