import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from digiq import kernels

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

BACKENDS = ["python"] + (["compiled"] if kernels.compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def dense_expm(m, t):
    """``e^{-M t}`` for Hermitian ``M`` via an eigendecomposition."""
    w, v = np.linalg.eigh(m)
    return (v * np.exp(-w * t)) @ v.conj().T



def _operator(m, family):
    from digiq.operators import from_entries

    N = m.shape[0]
    nz = zip(*np.nonzero(m))
    return from_entries(N, {(int(r), int(c)): m[r, c] for r, c in nz}, family=family)


def conditioned(N, d, kappa, seed):
    """Seeded positive definite ``d``-sparse operator with spectrum exactly ``[1/kappa, 1]``.

    The sparsity pattern comes from ``random_hermitian``; the diagonal is
    shifted and the matrix scaled, which keeps the pattern.
    """
    from digiq.operators import random_hermitian

    m = random_hermitian(N, d, seed=seed, diagonal=True).dense()
    ev = np.linalg.eigvalsh(m)
    c = (ev[-1] - ev[0]) / (kappa - 1)
    m = (m + (c - ev[0]) * np.eye(N)) / (ev[-1] - ev[0] + c)
    return _operator(m, {"name": "conditioned", "N": N, "d": d, "kappa": kappa, "seed": seed})


def indefinite(N, d, seed):
    """Seeded Hermitian operator with eigenvalues of both signs and ``|lambda| <= 1``.

    The diagonal shift sits in the middle of the widest interior eigenvalue
    gap, so the smallest singular value stays away from zero.
    """
    from digiq.operators import random_hermitian

    m = random_hermitian(N, d, seed=seed, diagonal=True).dense()
    ev = np.linalg.eigvalsh(m)
    lo = N // 4
    i = lo + int(np.argmax(np.diff(ev)[lo:N - lo]))
    shift = 0.5 * (ev[i] + ev[i + 1])
    m = m - shift * np.eye(N)
    m = m / np.max(np.abs(ev - shift))
    return _operator(m, {"name": "indefinite", "N": N, "d": d, "seed": seed})


# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
