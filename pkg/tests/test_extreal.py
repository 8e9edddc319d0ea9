import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lschjb.extreal import (MINUS_INF, PLUS_INF, Axis, ExtRealError, Grid, GridFn, ImproperFunctionError,
                            OutOfDomainError, eval_interp, ext_add, interp_many, lsc_regularize)


def line(values, lo=0.0, hi=1.0):
    return GridFn(Grid((Axis(lo, hi, len(values)),)), np.asarray(values, dtype=float))


def test_ordering_and_addition():
    assert PLUS_INF > 1e308 and MINUS_INF < -1e308
    assert ext_add(PLUS_INF, 3.0) == PLUS_INF
    with pytest.raises(ExtRealError):
        ext_add(PLUS_INF, MINUS_INF)


def test_axis_needs_two_nodes():
    with pytest.raises(ValueError):
        Axis(0.0, 1.0, 1)
    with pytest.raises(ValueError):
        Axis(1.0, 1.0, 3)


def test_values_length_checked():
    with pytest.raises(ValueError):
        GridFn(Grid((Axis(0, 1, 3),)), np.zeros(4))


def test_interp_examples():
    assert eval_interp(line([3.0, 3.0, 3.0]), [0.7]) == 3.0
    assert eval_interp(line([0.0, 1.0]), [0.25]) == 0.25
    assert eval_interp(line([0.0, PLUS_INF]), [0.5]) == PLUS_INF
    # exact node hit does not see the infinite neighbour
    assert eval_interp(line([0.0, 2.0, PLUS_INF]), [0.5]) == 2.0


def test_interp_outside_box():
    with pytest.raises(OutOfDomainError):
        eval_interp(line([0.0, 1.0]), [1.5])


def test_bilinear():
    g = Grid.uniform([(0, 1), (0, 1)], [2, 2])
    f = GridFn.from_callable(g, lambda x, y: x + 2 * y)
    np.testing.assert_allclose(eval_interp(f, [0.3, 0.6]), 1.5)


def test_lsc_regularize():
    f = line([0.0, 0.0])
    assert np.array_equal(lsc_regularize(f).values, f.values)
    g = lsc_regularize(line([0.0, PLUS_INF]))
    assert g.meta["proper"] and g.proper
    with pytest.raises(ImproperFunctionError):
        lsc_regularize(line([0.0, MINUS_INF]))
    with pytest.raises(ImproperFunctionError):
        lsc_regularize(line([PLUS_INF, PLUS_INF]))


def test_csv_json_roundtrip():
    f = GridFn.from_callable(Grid.uniform([(0, 1), (-1, 1)], [3, 4], ["t", "x"]), lambda t, x: t * x)
    f = f.with_values(np.where(f.values > 0.5, PLUS_INF, f.values))
    text = f.to_csv()
    assert text.splitlines()[0].split(",")[-1] == "value"
    assert "inf" in text
    back = GridFn.from_csv(text, f.grid)
    np.testing.assert_array_equal(back.values, f.values)
    np.testing.assert_array_equal(GridFn.from_json(f.to_json()).values, f.values)


values = st.lists(st.floats(-100, 100), min_size=2, max_size=12)


@given(values)
def test_interp_at_nodes_is_exact(vals):
    f = line(vals)
    np.testing.assert_array_equal(interp_many(f, f.grid.nodes(0)), np.asarray(vals))


@settings(max_examples=50)
@given(values, st.lists(st.floats(0, 10), min_size=12, max_size=12), st.floats(0, 1))
def test_interp_monotone(vals, bumps, s):
    f = line(vals)
    g = line(np.asarray(vals) + np.asarray(bumps[:len(vals)]))
    assert eval_interp(g, [s]) >= eval_interp(f, [s]) - 1e-12
