import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from digiq import kernels
from digiq.chebyshev import (
    ExpmJob,
    bessel_coeffs,
    bessel_series,
    chebyshev_forward,
    clenshaw_apply,
    expm_apply,
    miller_start,
    tail_bound_analytic,
    truncation_order,
)
from digiq.errors import DomainError
from digiq.fixedpoint import FixedPointFormat
from digiq.operators import diagonal, from_dense, identity, laplacian1d, random_hermitian
from digiq.spectral import dense_spectral_estimate, rescale_affine
from digiq.state import from_vector

from conftest import BACKENDS, dense_expm

WIDE = FixedPointFormat(96, 80)


# --- truncation order --------------------------------------------------------

def test_truncation_order_examples():
    assert truncation_order(0, 1) == 0
    assert truncation_order(1, 1e-6) == 16
    r = truncation_order(20, 1e-3)
    assert r == 42 and r + 2 >= 20


@pytest.mark.parametrize("t", [0.5, 1, 5, 20])
@pytest.mark.parametrize("eps0", [1e-3, 1e-6, 1e-9])
def test_tail_certified_by_series(t, eps0):
    r = truncation_order(t, eps0)
    with mpmath.workprec(128):
        tail = 2 * mpmath.fsum(bessel_series(k, t) for k in range(r + 1, r + 201))
    assert tail < eps0
    assert tail <= tail_bound_analytic(t, r)


@given(t=st.floats(0.01, 50), eps0=st.floats(1e-12, 0.5))
def test_truncation_order_monotone(t, eps0):
    r = truncation_order(t, eps0)
    assert truncation_order(t, eps0 / 10) >= r
    assert truncation_order(t * 1.5, eps0) >= r
    assert r + 2 >= t


def test_truncation_order_domain():
    with pytest.raises(DomainError):
        truncation_order(-1, 1e-3)
    with pytest.raises(DomainError):
        truncation_order(1, 0)


# --- Bessel coefficients -----------------------------------------------------

def test_bessel_t1_values():
    co = bessel_coeffs(1, 3)
    np.testing.assert_allclose([float(v) for v in co.I], [1.266066, 0.565159, 0.135748, 0.022168], atol=5e-7)


def test_bessel_t0():
    co = bessel_coeffs(0, 5)
    assert [float(c) for c in co.C] == [1, 0, 0, 0, 0, 0]


@pytest.mark.parametrize("t", [0.1, 1, 7.5, 30])
def test_miller_matches_series(t):
    co = bessel_coeffs(t, 60)
    for k in range(61):
        want = bessel_series(k, t)
        assert abs(co.I[k] - want) <= 1e-10 * want
    assert miller_start(t, 60) == 60 + math.ceil(15 + t / 2)


@pytest.mark.parametrize("t", [0.5, 1, 10, 30])
def test_normalisation_identity(t):
    # all orders sum to e^t; the even orders alone give cosh t
    with mpmath.workprec(160):
        I = [bessel_series(k, t) for k in range(200)]
        full = I[0] + 2 * mpmath.fsum(I[1:])
        even = I[0] + 2 * mpmath.fsum(I[2::2])
        assert abs(full / mpmath.exp(t) - 1) < 1e-10
        assert abs(even / mpmath.cosh(t) - 1) < 1e-10


@pytest.mark.parametrize("t", [2.0, 9.0, 25.0])
def test_coefficient_decay(t):
    co = bessel_coeffs(t, 80)
    C = [abs(c) for c in co.C]
    for k in range(math.ceil(t) + 1, 80):
        assert C[k + 1] < C[k]


# --- Clenshaw ----------------------------------------------------------------

def _rescaled(op):
    est = dense_spectral_estimate(op)
    return rescale_affine(op, est, (-1, 1))


def test_clenshaw_zero_operator():
    # T_k(0) alternates over even k; the expansion of e^0 collapses to the identity
    t = 3.0
    co = bessel_coeffs(t, truncation_order(t, 1e-12))
    b = from_vector(np.array([0.6, -0.8]), WIDE)
    out = clenshaw_apply(co, diagonal([0, 0]), b)
    np.testing.assert_allclose(out.values(), [0.6, -0.8], atol=1e-11)


@pytest.mark.parametrize("m,b,want", [
    (np.diag([0.0, 1.0]), np.array([1, 1]) / math.sqrt(2), [0.707107, 0.260130]),
    (np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 0.0]), [0.567668, -0.432332]),
])
def test_expm_two_level_examples(m, b, want):
    job = ExpmJob(from_dense(m), 1, eps0=1e-9, spectral=dense_spectral_estimate(from_dense(m)))
    out = expm_apply(job, b)
    np.testing.assert_allclose(out.values().real, want, atol=5e-7)
    np.testing.assert_allclose(out.values(), dense_expm(m, 1) @ b, atol=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_clenshaw_equals_forward(seed):
    op = random_hermitian(48, 4, seed=seed)
    A_hat, rec = _rescaled(op)
    r = 20 + 10 * seed
    co = bessel_coeffs(1.7 * (seed + 1), r)
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(48) + 1j * rng.standard_normal(48)
    s = from_vector(b, FixedPointFormat(64, 40), shadow=True)
    out = clenshaw_apply(co, A_hat, s)
    ref = chebyshev_forward(co, A_hat.dense(), b)
    np.testing.assert_allclose(out.shadow[:48], ref, rtol=0, atol=1e-12 * np.linalg.norm(ref))


def test_clenshaw_product_count():
    op = laplacian1d(8)
    A_hat, _ = _rescaled(op)
    co = bessel_coeffs(2, 12)
    s = from_vector(np.ones(8) / math.sqrt(8), WIDE)
    assert clenshaw_apply(co, A_hat, s).product_count == 12


# --- expm_apply --------------------------------------------------------------

def test_expm_t0_unchanged():
    b = from_vector(np.array([0.25, 0.5]), WIDE)
    assert expm_apply(ExpmJob(laplacian1d(2), 0), b).same_bits(b)


def test_expm_identity_scalar_path():
    b = np.array([0.3, -0.4, 0.5])
    res = expm_apply(ExpmJob(identity(3), 1, eps0=1e-12), b, return_info=True)
    np.testing.assert_allclose(res.state.values()[:3], math.exp(-1) * b, atol=1e-12)
    assert res.r == 0 and res.log_prefactor == -1


@pytest.mark.parametrize("eps0", [1e-4, 1e-8])
def test_expm_laplacian(eps0):
    op = laplacian1d(8)
    b = np.random.default_rng(8).standard_normal(8)
    b /= np.linalg.norm(b)
    res = expm_apply(ExpmJob(op, 2, eps0=eps0), b, return_info=True)
    want = dense_expm(op.dense(), 2) @ b
    assert np.linalg.norm(res.state.values() - want) <= eps0 * res.prefactor


def test_expm_log_scale():
    op = laplacian1d(6)
    b = np.ones(6) / math.sqrt(6)
    a = expm_apply(ExpmJob(op, 1.5, eps0=1e-10), b)
    c = expm_apply(ExpmJob(op, 1.5, eps0=1e-10, log_scale=0.75), b)
    np.testing.assert_allclose(c.values(), math.exp(0.75) * a.values(), atol=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_semigroup(seed):
    op = random_hermitian(32, 4, seed=seed)
    est = dense_spectral_estimate(op)
    b = np.random.default_rng(seed).standard_normal(32)
    b /= np.linalg.norm(b)
    eps0 = 1e-8
    t = 1.3
    full = expm_apply(ExpmJob(op, t, eps0, est), b, return_info=True)
    half = expm_apply(ExpmJob(op, t / 2, eps0, est), b, return_info=True)
    twice = expm_apply(ExpmJob(op, t / 2, eps0, est), half.state, return_info=True)
    scale = full.prefactor
    assert np.linalg.norm(twice.state.values() - full.state.values()) <= 3 * eps0 * scale


@given(seed=st.integers(0, 10_000), t=st.floats(0.1, 6))
def test_psd_contraction(seed, t):
    m = random_hermitian(16, 3, seed=seed).dense()
    m = m - np.linalg.eigvalsh(m)[0] * np.eye(16)  # positive semidefinite
    op = from_dense(m)
    b = np.random.default_rng(seed).standard_normal(16)
    b /= np.linalg.norm(b)
    eps0 = 1e-9
    res = expm_apply(ExpmJob(op, t, eps0, dense_spectral_estimate(op)), b, return_info=True)
    assert np.linalg.norm(res.state.values()) <= 1 + eps0 * res.prefactor


def test_backends_identical():
    op = laplacian1d(64)
    b = np.ones(64) / 8
    out = []
    for name in BACKENDS:
        prev = kernels.set_backend(name)
        try:
            out.append(expm_apply(ExpmJob(op, 3, eps0=1e-8), b))
        finally:
            kernels.set_backend(prev)
    assert all(o.same_bits(out[0]) for o in out)
