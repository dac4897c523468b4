import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from digiq import kernels
from digiq.decompose import decomposition_of
from digiq.errors import RegisterOverflow
from digiq.fixedpoint import FixedPointFormat
from digiq.operators import random_hermitian
from digiq.state import _combine, from_vector, norm_squared_exact

pytestmark = pytest.mark.skipif(not kernels.compiled_available(), reason="compiled kernels not built")


def _both(fn):
    out = {}
    for name in ("compiled", "python"):
        prev = kernels.set_backend(name)
        try:
            out[name] = fn()
        finally:
            kernels.set_backend(prev)
    return out


@given(st.integers(0, 2**32), st.integers(2, 8), st.sampled_from([(64, 48), (40, 20), (64, 60)]))
def test_backends_bit_identical(seed, d, qf):
    fmt = FixedPointFormat(*qf)
    op = random_hermitian(32, d, seed=seed)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    x = from_vector(v / np.linalg.norm(v) / 4, fmt)
    b = from_vector(rng.standard_normal(32) / 8, fmt)
    step = decomposition_of(op).transformed(scale=0.125, shift=0.5)
    res = _both(lambda: _combine(fmt, x.n, op=step, x=x, terms=[(0.3 - 0.1j, b), (-1, x)]))
    assert res["compiled"].same_bits(res["python"])
    sq = _both(lambda: norm_squared_exact(res["python"]))
    assert sq["compiled"] == sq["python"]


def test_both_backends_detect_overflow():
    fmt = FixedPointFormat(16, 8)
    x = from_vector([100.0, 1.0], fmt)
    for name in ("compiled", "python"):
        prev = kernels.set_backend(name)
        try:
            with pytest.raises(RegisterOverflow) as exc:
                _combine(fmt, 1, terms=[(2, x)])
            assert exc.value.index == 0
        finally:
            kernels.set_backend(prev)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("gpu")
