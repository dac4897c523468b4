import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from digiq.errors import DimensionMismatch, DomainError, NonHermitianBlock, UnnormalizedState
from digiq.fixedpoint import FixedPointFormat
from digiq.pauli import (
    ChernoffPlan,
    KLocalSpec,
    PauliString,
    PauliSum,
    chernoff_plan,
    chernoff_trials,
    expectation_unnormalized,
    operator_expectation,
    pauli_decompose,
    rotate_to_eigenbasis,
    sample_sigma,
    sigma_expectation_exact,
    sigma_sums,
)
from digiq.state import basis_state, from_vector

FMT = FixedPointFormat(64, 48)


def _random_unit(rng, n):
    v = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return v / np.linalg.norm(v)


def _random_hermitian(rng, s):
    m = rng.standard_normal((1 << s, 1 << s)) + 1j * rng.standard_normal((1 << s, 1 << s))
    # dyadic entries keep the Pauli coefficients exact in double precision
    m = np.round((m + m.conj().T) * 8) / 8
    return m


# --- strings and sums --------------------------------------------------------

@pytest.mark.parametrize("label", ["X", "Y", "Z", "XY", "ZIX", "YYZI"])
def test_string_unitary_hermitian_pm1(label):
    p = PauliString(label).dense()
    np.testing.assert_array_equal(p, p.conj().T)
    np.testing.assert_allclose(p @ p, np.eye(p.shape[0]), atol=0)
    assert set(np.round(np.linalg.eigvalsh(p), 12)) <= {-1.0, 1.0}


def test_string_locality_and_sites():
    s = PauliString.from_sites(4, {0: "X", 2: "Z"})
    assert s.label == "XIZI"
    assert s.k == 2 and s.n == 4
    with pytest.raises(DomainError):
        PauliString("XQ")
    with pytest.raises(DomainError):
        PauliString.from_sites(2, {3: "X"})


def test_mixed_length_sum_rejected():
    with pytest.raises(DimensionMismatch):
        PauliSum(((1.0, PauliString("X")), (1.0, PauliString("XX"))))


# --- decomposition -----------------------------------------------------------

def _terms(ps):
    return {s.label: b for b, s in ps.terms}


def test_projector_zero():
    spec = KLocalSpec(1, (((0,), np.diag([1.0, 0.0])),))
    assert _terms(pauli_decompose(spec)) == {"I": 0.5, "Z": 0.5}


def test_single_x_two_qubits():
    spec = KLocalSpec(2, (((0,), PauliString("X").dense()),))
    assert _terms(pauli_decompose(spec)) == {"XI": 1.0}


def test_two_site_projector():
    spec = KLocalSpec(2, (((0, 1), np.diag([1.0, 0, 0, 0])),))
    assert _terms(pauli_decompose(spec)) == {"II": 0.25, "IZ": 0.25, "ZI": 0.25, "ZZ": 0.25}


def test_nonhermitian_block_rejected():
    with pytest.raises(NonHermitianBlock):
        pauli_decompose(KLocalSpec(1, (((0,), np.array([[0, 1], [0, 0]])),)))


def test_overlapping_clusters_rejected():
    with pytest.raises(DomainError):
        KLocalSpec(2, (((0,), np.eye(2)), ((0, 1), np.eye(4))))


@given(seed=st.integers(0, 2**32 - 1), sizes=st.sampled_from([(1,), (2,), (3,), (1, 1), (2, 1), (1, 1, 1)]))
def test_decomposition_round_trip(seed, sizes):
    rng = np.random.default_rng(seed)
    n = sum(sizes) + 1
    sites = list(rng.permutation(n))
    clusters = []
    for s in sizes:
        clusters.append((tuple(int(x) for x in sites[:s]), _random_hermitian(rng, s)))
        sites = sites[s:]
    spec = KLocalSpec(n, tuple(clusters))
    ps = pauli_decompose(spec)
    # dyadic blocks: every coefficient and the reconstruction are exact
    np.testing.assert_array_equal(ps.dense(), spec.dense())
    assert ps.K <= 4 ** spec.k


@pytest.mark.parametrize("label", ["X", "Y", "Z", "XI", "IY", "XYZ", "YZXI", "ZIIY"])
def test_rotation_diagonalises(label):
    # rotating every basis vector and reading parity reproduces the string's spectrum
    sigma = PauliString(label)
    N = 1 << sigma.n
    R = np.zeros((N, N), dtype=complex)
    for j in range(N):
        re, im, g = rotate_to_eigenbasis(np.eye(N, dtype=np.int64)[j], np.zeros(N, dtype=np.int64), sigma)
        R[:, j] = (np.array(re, float) + 1j * np.array(im, float)) / math.sqrt(2**g)
    D = R @ sigma.dense() @ R.conj().T
    parity = [(-1) ** bin(j & sigma.z_mask).count("1") for j in range(N)]
    np.testing.assert_allclose(D, np.diag(parity), atol=1e-12)


# --- exact readout -----------------------------------------------------------

def test_zz_on_00():
    assert sigma_expectation_exact(basis_state(2, 0, FMT), PauliString("ZZ")) == 1.0


def test_bell_state():
    s = from_vector(np.array([1, 0, 0, 1]) / math.sqrt(2), FMT)
    assert sigma_expectation_exact(s, PauliString("XX")) == pytest.approx(1.0, abs=2**-44)
    assert sigma_expectation_exact(s, PauliString("ZI")) == 0.0


def test_operator_examples():
    plus = from_vector(np.array([1, 1]) / math.sqrt(2), FMT)
    zero = basis_state(1, 0, FMT)
    assert operator_expectation(plus, PauliSum.identity(1)).value == 1.0
    assert operator_expectation(plus, PauliSum.single("Z")).value == 0.0
    proj = PauliSum(((0.5, PauliString("I")), (0.5, PauliString("Z"))))
    assert operator_expectation(zero, proj).value == 1.0


def test_unnormalized_rejected():
    s = from_vector(np.array([1.0, 1.0]), FMT)
    with pytest.raises(UnnormalizedState):
        sigma_expectation_exact(s, PauliString("Z"))


@pytest.mark.parametrize("n", [1, 3, 5])
def test_exact_matches_dense(rng, n):
    v = _random_unit(rng, n)
    s = from_vector(v, FMT)
    for k in range(1, min(n, 3) + 1):
        for sites in itertools.combinations(range(n), k):
            for ps in itertools.product("XYZ", repeat=k):
                sigma = PauliString.from_sites(n, dict(zip(sites, ps)))
                oracle = np.vdot(v, sigma.dense() @ v).real
                got = sigma_expectation_exact(s, sigma)
                assert abs(got - oracle) <= k * 2.0 ** (2 - FMT.f)


def test_place_value_readout_equals_direct(rng):
    s = from_vector(_random_unit(rng, 3), FixedPointFormat(32, 24))
    for label in ["ZII", "XYZ", "IXI"]:
        assert sigma_sums(s, PauliString(label)) == sigma_sums(s, PauliString(label), "place_value")


def test_unnormalized_expectation_is_exact():
    s = from_vector(np.array([0.5, 0.25]), FMT)
    assert expectation_unnormalized(s, PauliSum.single("Z")) == Fraction(3, 16)


def test_value_within_l1_norm(rng):
    s = from_vector(_random_unit(rng, 2), FMT)
    O = PauliSum(((0.7, PauliString("XZ")), (-1.3, PauliString("YY")), (0.2, PauliString("II"))))
    r = operator_expectation(s, O)
    assert abs(r.value) <= O.l1_norm
    assert r.value == pytest.approx(np.vdot(s.values(), O.dense() @ s.values()).real, abs=r.error_bound)


# --- Chernoff sampling -------------------------------------------------------

@pytest.mark.parametrize("delta,p,eps_m,m", [(0.5, 1, 0.01, 191), (0.5, 0.5, 0.001, 153), (0.25, 1, 0.01, 721)])
def test_chernoff_examples(delta, p, eps_m, m):
    assert chernoff_trials(delta, p, eps_m) == m


@given(delta=st.floats(0.05, 1), p=st.floats(0.01, 1), eps_m=st.floats(1e-6, 0.5))
def test_chernoff_formula(delta, p, eps_m):
    m = chernoff_trials(delta, p, eps_m)
    need = math.log(2 / eps_m) * (8 * p + 2 * delta) / delta**2
    assert need <= m < need + 1


def test_chernoff_monotone_in_p():
    assert chernoff_trials(0.5, 0.3, 0.01) <= chernoff_trials(0.5, 0.6, 0.01) <= chernoff_trials(0.5, 1, 0.01)


def test_chernoff_domain():
    with pytest.raises(DomainError):
        chernoff_trials(0, 1, 0.01)
    with pytest.raises(DomainError):
        chernoff_trials(0.5, 1, 1.5)


def test_sample_eigenstate_exact():
    est, m = sample_sigma(basis_state(1, 0, FMT), PauliString("Z"), chernoff_plan())
    assert est == 1.0 and m == 191


def test_sampling_deterministic(rng):
    s = from_vector(_random_unit(rng, 3), FMT)
    O = PauliSum(((0.5, PauliString("XZI")), (0.25, PauliString("IYY"))))
    a = operator_expectation(s, O, "sampled", chernoff_plan(), seed=7)
    b = operator_expectation(s, O, "sampled", chernoff_plan(), seed=7)
    assert a == b
    c = operator_expectation(s, O, "sampled", chernoff_plan(), seed=8)
    assert c.value != a.value


def test_sampling_error_slope():
    # RMS error over seeds scales as m^(-1/2): slope of log error vs log m near -1/2
    s = from_vector(np.array([math.cos(0.4), math.sin(0.4)]), FMT)
    sigma = PauliString("Z")
    exact = sigma_expectation_exact(s, sigma)
    ms = [100, 1000, 10000]
    rms = []
    for m in ms:
        plan = ChernoffPlan(1.0, 0.5, 1.0, max(m, chernoff_trials(1.0, 1.0, 0.5)))
        errs = [sample_sigma(s, sigma, plan, seed)[0] - exact for seed in range(200)]
        rms.append(math.sqrt(np.mean(np.square(errs))))
    slope = np.polyfit(np.log(ms), np.log(rms), 1)[0]
    assert -0.65 <= slope <= -0.35


@pytest.mark.parametrize("delta,eps_m", [(0.5, 0.01), (0.5, 0.05), (0.25, 0.05)])
def test_chernoff_failure_rate(delta, eps_m):
    s = from_vector(np.array([math.cos(0.7), math.sin(0.7)]), FMT)
    sigma = PauliString("Z")
    mu = sigma_expectation_exact(s, sigma)
    plan = chernoff_plan(delta, eps_m, 1.0)
    runs = 2000
    fails = sum(abs(sample_sigma(s, sigma, plan, seed)[0] - mu) > delta for seed in range(runs))
    assert fails / runs <= 2 * eps_m
