import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lschjb.extreal import PLUS_INF, Grid, GridFn
from lschjb.geometry import (EmptySetError, EpiSet, OutsideDomainError, QSample, ball_support, box_support,
                             dist_to_epi, parametrize_theta, polytope_support, q_membership, steiner_point,
                             subderivative, subdifferential_probe, theta_lipschitz)
from lschjb.models import builtin, sec4_V, sec4_V_gradient

SEC3_L = builtin("sec3").lagrangian
SEC4_L = builtin("sec4-L")


def test_q_membership_examples():
    q = QSample(0.5, 2.0, SEC3_L)
    assert q_membership(q, 1.0, -0.5)
    assert not q_membership(q, 3.0, -0.5)
    assert q_membership(q, 0.0, -1.0)


def flat(value=0.0):
    return GridFn.from_callable(Grid.uniform([(0, 1), (-2, 2)], [51, 101]), lambda t, x: value + 0 * t)


def test_dist_flat_epigraph():
    e = EpiSet(flat())
    p = dist_to_epi(e, (0.5, 0.3, -1.0))
    assert p.distance == pytest.approx(1.0)
    np.testing.assert_allclose(p.w, (0.5, 0.3, 0.0), atol=1e-12)
    assert p.normal.direction[2] <= 0 and p.normal.accepted
    inside = dist_to_epi(e, (0.5, 0.3, 2.0))
    assert inside.distance == 0.0 and inside.w == (0.5, 0.3, 2.0)


def test_empty_epigraph():
    g = GridFn.from_callable(Grid.uniform([(0, 1), (0, 1)], [3, 3]), lambda t, x: PLUS_INF + 0 * t)
    with pytest.raises(EmptySetError):
        EpiSet(g)


def test_dist_sec4_against_dense_search():
    e = EpiSet(lambda t, x: sec4_V(t, x), box=((0, 1), (-2, 2)))
    y = np.array([0.5, 0.5, float(sec4_V(0.5, 0.5)) - 0.3])
    p = dist_to_epi(e, y)
    assert p.distance <= 0.3
    # dense oracle over graph points near y
    T, X = np.meshgrid(np.linspace(0.2, 0.8, 601), np.linspace(0.2, 0.8, 601), indexing="ij")
    d = np.sqrt((T - y[0]) ** 2 + (X - y[1]) ** 2 + np.maximum(sec4_V(T, X) - y[2], 0.0) ** 2)
    assert p.distance <= d.min() + 1e-3
    assert e.contains(p.w, tol=1e-9)


def test_subderivative_examples():
    G = GridFn.from_callable(Grid.uniform([(0, 1), (-1, 1)], [21, 41]), lambda t, x: np.abs(x))
    assert subderivative(G, (0.5, 0.0), (0, 1)).value == pytest.approx(1.0, abs=1e-5)
    quad = lambda t, x: t ** 2 + 3 * x ** 2  # noqa: E731
    est = subderivative(quad, (0.3, 0.2), (0.6, 0.8))
    assert est.value == pytest.approx(2 * 0.3 * 0.6 + 6 * 0.2 * 0.8, abs=1e-3)
    assert subderivative(lambda t, x: sec4_V(t, x), (0.5, 0.5), (1, 0)).trend == "plus_inf"
    with pytest.raises(OutsideDomainError):
        subderivative(lambda t, x: PLUS_INF + 0 * t, (0.0, 0.0), (1, 0))


def test_subdifferential_probe_examples():
    quad = lambda t, x: t ** 2 + 3 * x ** 2  # noqa: E731
    grad = (0.6, 1.2)
    assert subdifferential_probe(quad, (0.3, 0.2), grad, tol=1e-3)
    assert not subdifferential_probe(quad, (0.3, 0.2), (grad[0] + 0.5, grad[1]), tol=1e-3)
    G = GridFn.from_callable(Grid.uniform([(0, 1), (-1, 1)], [21, 41]), lambda t, x: np.abs(x))
    assert subdifferential_probe(G, (0.5, 0.0), (0, 0.5))
    assert not subdifferential_probe(G, (0.5, 0.0), (0, 1.5))
    V = lambda t, x: sec4_V(t, x)  # noqa: E731
    assert subdifferential_probe(V, (0.3, 0.8), sec4_V_gradient(0.3, 0.8))


def test_steiner_examples():
    np.testing.assert_allclose(steiner_point(box_support([-1, -1], [1, 1]), 2), (0, 0), atol=1e-12)
    np.testing.assert_allclose(steiner_point(ball_support([1, 2], 3.0), 2), (1, 2), atol=1e-12)
    tri = polytope_support([[0, 0], [1, 0], [0, 1]])
    oracle = steiner_point(tri, 2, 100_000)
    np.testing.assert_allclose(steiner_point(tri, 2, 512), oracle, atol=1e-2)
    # exterior-angle weights give (3/8, 3/8)
    np.testing.assert_allclose(oracle, (0.375, 0.375), atol=1e-4)


def test_theta_examples():
    q = QSample(0.5, 2.0, SEC3_L)
    assert parametrize_theta(q, (0.0, 5.0)) == pytest.approx((0.0, 0.0))
    assert parametrize_theta(q, (1.0, -10.0)) == (1.0, -10.0)
    # far outside the velocity box: the answer minimizes distance over the boundary
    a = np.array([6.0, 3.0])
    v, eta = parametrize_theta(q, a)
    vs = np.linspace(-2, 2, 40001)
    boundary = np.column_stack([vs, -np.abs(vs) / 2])
    dense = np.min(np.linalg.norm(boundary - a, axis=1))
    assert np.hypot(v - a[0], eta - a[1]) <= dense + 1e-6


def random_q(data):
    t = data.draw(st.floats(0.0, 1.0))
    x = data.draw(st.floats(-2.0, 2.0))
    return QSample(t, x, SEC4_L)


@settings(max_examples=200)
@given(st.data())
def test_theta_fixed_point_and_idempotent(data):
    q = random_q(data)
    lo, hi = q.box()
    v = data.draw(st.floats(lo, hi))
    eta = -float(q.L(v)) - data.draw(st.floats(0.0, 5.0))
    assert parametrize_theta(q, (v, eta)) == (v, eta)
    a = (data.draw(st.floats(-5, 5)), data.draw(st.floats(-5, 5)))
    pa = parametrize_theta(q, a)
    assert parametrize_theta(q, pa) == pa
    assert q_membership(q, *pa, tol=1e-12)


@settings(max_examples=200)
@given(st.data())
def test_theta_nonexpansive(data):
    q = random_q(data)
    a = np.array([data.draw(st.floats(-5, 5)), data.draw(st.floats(-5, 5))])
    b = np.array([data.draw(st.floats(-5, 5)), data.draw(st.floats(-5, 5))])
    pa, pb = np.array(parametrize_theta(q, a)), np.array(parametrize_theta(q, b))
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-9


@settings(max_examples=100)
@given(st.data())
def test_q_convex(data):
    q = QSample(0.5, data.draw(st.floats(0.1, 2.0)), SEC3_L)
    lo, hi = q.box()
    pts = []
    for _ in range(2):
        v = data.draw(st.floats(lo, hi))
        pts.append((v, -float(q.L(v)) - data.draw(st.floats(0, 3))))
    mid = np.mean(pts, axis=0)
    assert q_membership(q, mid[0], mid[1], tol=1e-12)


def test_theta_lipschitz_report():
    r = theta_lipschitz(SEC4_L, 2.0, pairs=100)
    assert r["max_quotient_in_a"] <= 1.0 + 1e-9
    assert r["max_quotient_in_x_a"] <= r["P3_constant"]


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-1.8, 1.8), st.floats(-1, 1))
def test_dist_zero_on_members(t, x, lift):
    e = EpiSet(flat())
    p = dist_to_epi(e, (t, x, abs(lift)))
    assert p.distance == 0.0
    q = dist_to_epi(e, (t, x, -abs(lift) - 0.01))
    assert q.normal.direction[2] <= 0
    assert math.isclose(q.distance, abs(lift) + 0.01, rel_tol=1e-9)
