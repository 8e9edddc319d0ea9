"""The nine acceptance criteria at their stated tolerances; run with ``-s`` to see one line each."""

import pytest

from lschjb import acceptance


@pytest.mark.parametrize("k", sorted(acceptance.CRITERIA))
def test_criterion(k):
    res = acceptance.CRITERIA[k]()
    print("\n" + acceptance.line(k, res))
    assert res["passed"], acceptance.line(k, res)
