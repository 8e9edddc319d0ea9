import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lschjb.extreal import PLUS_INF, Axis, Grid, GridFn
from lschjb.models import builtin
from lschjb.transform import (ConjugatePlan, ImproperConjugateError, biconjugate, conjugate_nd, conjugate_slice,
                              domain_bounds, effective_domain)


def on(axis, f):
    return GridFn(Grid((axis,)), f(axis.nodes()))


def test_point_indicator_conjugates_to_zero():
    plan = ConjugatePlan.symmetric(4.0, 41)
    f = on(plan.source, lambda p: np.where(p == 0, 0.0, PLUS_INF))
    np.testing.assert_array_equal(conjugate_slice(f, plan).values, 0.0)


def test_all_infinite_rejected():
    plan = ConjugatePlan.symmetric(1.0, 11)
    with pytest.raises(ImproperConjugateError):
        conjugate_slice(on(plan.source, lambda p: np.full_like(p, PLUS_INF)), plan)


def test_sec3_slice_at_x2():
    plan = ConjugatePlan.symmetric(50.0, 2001, target_radius=3.0, target_count=301)
    f = on(plan.source, lambda p: np.maximum(np.abs(p) * 2.0 - 1.0, 0.0))
    g = conjugate_slice(f, plan)
    v = plan.target.nodes()
    inside = np.abs(v) <= 2.0
    tol = 2 * plan.source.spacing
    assert np.max(np.abs(g.values[inside] - np.abs(v[inside] / 2))) <= tol
    # outside the domain the values keep growing with the truncation radius
    assert np.all(g.values[np.abs(v) >= 2.5] > 10.0)


def test_ex1_conjugate_value():
    H = builtin("ex1")
    plan = ConjugatePlan.symmetric(64.0, 2001, target_radius=2.0, target_count=2001)
    g = conjugate_slice(on(plan.source, lambda p: H.eval(0.5, 2.0, p)), plan)
    j = np.argmin(np.abs(plan.target.nodes() - 1.0))
    assert abs(g.values[j] - 1.0) <= 5e-2


def test_square_is_self_conjugate_2d():
    ax = Axis(-3.0, 3.0, 61, "p")
    f = GridFn.from_callable(Grid((ax, ax)), lambda a, b: 0.5 * (a * a + b * b))
    plan = ConjugatePlan(ax, Axis(-1.0, 1.0, 21, "v"))
    g = conjugate_nd(f, [plan, plan])
    V1, V2 = g.grid.mesh()
    assert np.max(np.abs(g.values - 0.5 * (V1 ** 2 + V2 ** 2))) <= ax.spacing ** 2


def test_2d_point_indicator():
    ax = Axis(-1.0, 1.0, 5)
    f = GridFn.from_callable(Grid((ax, ax)), lambda a, b: np.where((a == 0) & (b == 0), 0.0, PLUS_INF))
    plan = ConjugatePlan(ax, Axis(-2.0, 2.0, 9))
    np.testing.assert_array_equal(conjugate_nd(f, [plan, plan]).values, 0.0)


def brute_2d(vals, p, v):
    P1, P2 = np.meshgrid(p, p, indexing="ij")
    fin = np.isfinite(vals)
    out = np.empty((len(v), len(v)))
    for i, a in enumerate(v):
        for j, b in enumerate(v):
            out[i, j] = np.max((a * P1 + b * P2 - vals)[fin])
    return out


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nd_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    ax = Axis(-1.0, 1.0, 9)
    p = ax.nodes()
    P1, P2 = np.meshgrid(p, p, indexing="ij")
    a, b = rng.uniform(0.1, 2.0, 2)
    vals = a * P1 ** 2 + b * P2 ** 2 + rng.uniform(-1, 1) * P1 + np.abs(P2)
    f = GridFn(Grid((ax, ax)), vals)
    tgt = Axis(-2.0, 2.0, 9, "v")
    plan = ConjugatePlan(ax, tgt)
    np.testing.assert_allclose(conjugate_nd(f, [plan, plan]).values, brute_2d(vals, p, tgt.nodes()),
                               rtol=0, atol=1e-12)


def test_biconjugate_examples():
    plan = ConjugatePlan.symmetric(2.0, 201, target_radius=8.0, target_count=801)
    f = on(plan.source, lambda p: np.minimum((p - 1) ** 2, (p + 1) ** 2))
    g = biconjugate(f, plan)
    p = plan.source.nodes()
    flat = np.abs(p) <= 1.0
    assert np.max(np.abs(g.values[flat])) <= 1e-9
    convex = on(plan.source, lambda p: p ** 2)
    inner = np.abs(p) <= 1.5
    assert np.max(np.abs(biconjugate(convex, plan).values - convex.values)[inner]) <= 2 * plan.source.spacing


def test_biconjugate_ex2_lagrangian():
    L = builtin("ex2").lagrangian
    ax = Axis(-1.0, 1.0, 201, "v")
    f = on(ax, lambda v: L.eval(0.25, 0.0, v))
    plan = ConjugatePlan(ax, Axis(-20.0, 20.0, 801, "p"), truncated=False)
    g = biconjugate(f, plan)
    assert np.max(np.abs(g.values - f.values)) <= 2 * ax.spacing


def test_effective_domain_examples():
    from lschjb.models import lagrangian_slice
    g = lagrangian_slice(builtin("ex1"), 0.5, 2.0)
    lo, hi = g.meta["domain"]
    assert abs(lo + 2.0) < 1e-5 and abs(hi - 2.0) < 1e-5
    fin = g.grid.axes[0].nodes()[np.isfinite(g.values)]
    assert np.all(np.abs(fin) <= 2.0 + g.grid.axes[0].spacing)
    ind = on(Axis(-1, 1, 5), lambda p: np.where(p == 0, 0.0, PLUS_INF))
    assert effective_domain(ind) == [(2, 2)]
    L2 = GridFn(Grid((Axis(-2, 2, 401),)), builtin("ex2").lagrangian.eval(0.25, 0.0, Axis(-2, 2, 401).nodes()))
    np.testing.assert_allclose(domain_bounds(L2), (-1.0, 1.0))


convex_tables = st.lists(st.floats(-5, 5), min_size=3, max_size=25)


@settings(max_examples=40)
@given(convex_tables, st.floats(0, 3))
def test_order_reversal_and_young(vals, shift):
    ax = Axis(-2.0, 2.0, len(vals), "p")
    plan = ConjugatePlan(ax, Axis(-3.0, 3.0, 31, "v"))
    f = GridFn(Grid((ax,)), np.asarray(vals))
    g = f.with_values(f.values + shift)
    cf, cg = conjugate_slice(f, plan).values, conjugate_slice(g, plan).values
    assert np.all(cf >= cg - 1e-12)
    P, V = np.meshgrid(ax.nodes(), plan.target.nodes(), indexing="ij")
    assert np.all(f.values[:, None] + cf[None, :] >= P * V - 1e-9)


@settings(max_examples=40)
@given(convex_tables)
def test_biconjugate_idempotent(vals):
    ax = Axis(-2.0, 2.0, len(vals), "p")
    plan = ConjugatePlan(ax, Axis(-40.0, 40.0, 801, "v"))
    f = GridFn(Grid((ax,)), np.asarray(vals))
    b1 = biconjugate(f, plan)
    b2 = biconjugate(b1, plan)
    np.testing.assert_allclose(b2.values, b1.values, rtol=0, atol=1e-9)
