import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from digiq import kernels
from digiq.errors import DomainError, MaxIterationsExceeded, SingularOperator, ZeroMatrix
from digiq.fixedpoint import FixedPointFormat
from digiq.nrsolve import NRConfig, iteration_count, register_width, solve
from digiq.operators import diagonal, from_dense, identity, random_hermitian
from digiq.spectral import frobenius_alpha

from conftest import BACKENDS, conditioned, indefinite


# --- a-priori formulas -------------------------------------------------------

def test_iteration_count_examples():
    assert iteration_count(0, 1e-6) == 0
    assert iteration_count(15 / 17, 1e-6) == 111
    assert iteration_count(99 / 101, 1e-6) == 691


@given(c=st.floats(0.01, 0.999), eps=st.floats(1e-12, 0.5))
def test_iteration_count_is_minimal(c, eps):
    r = iteration_count(c, eps)
    assert c**r <= eps * (1 + 1e-9)
    assert r == 0 or c ** (r - 1) > eps * (1 - 1e-9)


def test_iteration_count_domain():
    with pytest.raises(DomainError):
        iteration_count(1.0, 1e-6)
    with pytest.raises(DomainError):
        iteration_count(0.5, 0)


def test_register_width_examples():
    assert register_width(4, 100, 1e-4, 10, 1, 1) == 19 + 8
    assert register_width(4, 100, 1e-4, 10, 1, 1, guard=0) == 19
    # d r |A| = kappa eps |b| gives log2(1) = 0
    assert register_width(2, 5, 0.5, 20, 1, 1, guard=0) == 0


@given(d=st.integers(1, 16), r=st.integers(1, 10_000), eps=st.floats(1e-10, 1e-2), kappa=st.floats(1, 1e4))
def test_register_width_doubling_r(d, r, eps, kappa):
    a = register_width(d, r, eps, kappa, 1, 1, guard=0)
    b = register_width(d, 2 * r, eps, kappa, 1, 1, guard=0)
    assert b - a in (0, 1) if a == 0 else b - a == 1


# --- solves ------------------------------------------------------------------

def test_identity_one_iteration():
    res = solve(identity(4), np.ones(4), NRConfig(eps=1e-6, fmt="auto"))
    assert res.iterations == 1
    np.testing.assert_array_equal(res.solution.values(), np.ones(4))


def test_diag_1_4():
    A = diagonal([1, 4])
    res = solve(A, np.array([1.0, 1.0]), NRConfig(alpha_mode=2 / 17, eps=1e-9, fmt="auto"),
                keep_iterates=True)
    assert res.contraction_bound == pytest.approx(15 / 17)
    np.testing.assert_allclose(res.solution.values(), [1, 0.25], atol=1e-8)
    # dense iteration oracle on the shadow: each error shrinks by at most 15/17
    errs = [np.linalg.norm(x.shadow - [1, 0.25]) for x in res.iterates]
    for a, b in zip(errs[:-1], errs[1:]):
        assert b <= 15 / 17 * a + 1e-15


@pytest.mark.parametrize("b", [(1.0, 0.0), (0.3, -0.7), (2.0, 5.0)])
def test_swap_indefinite(b):
    A = from_dense(np.array([[0, 1], [1, 0]]))
    res = solve(A, np.array(b), NRConfig(eps=1e-10, fmt="auto"))
    np.testing.assert_allclose(res.solution.values(), [b[1], b[0]], atol=1e-9 * np.linalg.norm(b))


def test_zero_rhs_rejected():
    with pytest.raises(ZeroMatrix):
        solve(identity(2), np.zeros(2))


def test_singular_rejected():
    with pytest.raises(SingularOperator):
        solve(diagonal([1, 0]), np.ones(2))


def test_max_iterations():
    A = diagonal([1, 100])
    with pytest.raises(MaxIterationsExceeded) as e:
        solve(A, np.ones(2), NRConfig(eps=1e-10, max_iterations=5, fmt="auto"))
    assert len(e.value.residual_history) == 6


def _pd_cases():
    return [conditioned(N, 3, kappa, seed) for seed, (N, kappa) in
            enumerate([(16, 2), (16, 20), (32, 5), (32, 50), (64, 10), (64, 30)])]


@pytest.mark.parametrize("op", _pd_cases(), ids=lambda o: o.describe())
def test_geometric_error_law(op):
    b = np.random.default_rng(op.dim).standard_normal(op.dim)
    res = solve(op, b, NRConfig(eps=1e-6, fmt="auto", residual_stop=False), keep_iterates=True)
    x_star = np.linalg.solve(op.dense(), b)
    c = res.contraction_bound
    budget = 2.0 ** (-res.fmt.f) * op.dim * res.iterations
    for r, x in enumerate(res.iterates):
        err = np.linalg.norm(x.values() - x_star)
        assert err <= c ** (r + 1) * np.linalg.norm(x_star) * (1 + 1e-6) + budget
    assert res.fractional_residual <= 1e-6


@pytest.mark.parametrize("op", _pd_cases()[:3], ids=lambda o: o.describe())
def test_shadow_residual_identity(op):
    b = np.random.default_rng(1).standard_normal(op.dim)
    res = solve(op, b, NRConfig(eps=1e-4, fmt="auto", residual_stop=False), keep_iterates=True)
    A = op.dense()
    x_star = np.linalg.solve(A, b)
    M = np.eye(op.dim) - res.alpha * A.conj().T @ A
    xs = [np.zeros(op.dim)] + [x.shadow for x in res.iterates]
    for a, nxt in zip(xs[:-1], xs[1:]):
        np.testing.assert_allclose(nxt - x_star, M @ (a - x_star), rtol=0,
                                   atol=1e-12 * np.linalg.norm(x_star))


@pytest.mark.parametrize("formula", [1, 2])
@pytest.mark.parametrize("seed", range(5))
def test_frobenius_alpha_contracts(formula, seed):
    op = random_hermitian(32, 4, seed=seed, complex_entries=True)
    A = op.dense()
    alpha = frobenius_alpha(op, formula)
    rho = max(abs(np.linalg.eigvalsh(np.eye(32) - alpha * A.conj().T @ A)))
    assert rho < 1


def test_fixed_point_matches_shadow():
    op = conditioned(64, 4, 25, seed=3)
    b = np.random.default_rng(3).standard_normal(64)
    res = solve(op, b, NRConfig(eps=1e-6, fmt="auto"))
    x_star = np.linalg.solve(op.dense(), b)
    assert np.linalg.norm(res.solution.values() - res.shadow_solution) <= 1e-6 * np.linalg.norm(x_star)


@pytest.mark.parametrize("seed", range(3))
def test_indefinite_solve(seed):
    op = indefinite(32, 4, seed)
    A = op.dense()
    assert np.linalg.eigvalsh(A).min() < 0 < np.linalg.eigvalsh(A).max()
    b = np.random.default_rng(seed).standard_normal(32)
    res = solve(op, b, NRConfig(eps=1e-8, fmt="auto"))
    x_star = np.linalg.solve(A, b)
    assert np.linalg.norm(A @ res.solution.values() - b) <= 1e-8 * np.linalg.norm(b) * 1.01
    kappa = np.linalg.cond(A)
    assert np.linalg.norm(res.solution.values() - x_star) <= 1.01e-8 * kappa * np.linalg.norm(x_star)


def test_complex_nonhermitian_solve():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)) + 4 * np.eye(8)
    b = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    res = solve(from_dense(A), b, NRConfig(eps=1e-8, fmt="auto"))
    np.testing.assert_allclose(res.solution.values(), np.linalg.solve(A, b), atol=1e-7 * np.linalg.norm(b))


def test_explicit_format_used():
    fmt = FixedPointFormat(40, 30)
    res = solve(diagonal([1, 2]), np.ones(2), NRConfig(eps=1e-6, fmt=fmt))
    assert res.solution.fmt == fmt


def test_backends_identical():
    op = conditioned(32, 3, 10, seed=9)
    out = {}
    for name in BACKENDS:
        prev = kernels.set_backend(name)
        try:
            out[name] = solve(op, np.ones(32), NRConfig(eps=1e-6, fmt="auto"))
        finally:
            kernels.set_backend(prev)
    first = out[BACKENDS[0]]
    assert first.fractional_residual <= 1e-6
    for res in out.values():
        assert res.solution.same_bits(first.solution)
        assert res.residual_history == first.residual_history
