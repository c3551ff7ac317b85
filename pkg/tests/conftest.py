import numpy as np
import pytest

from ecmedoa import ModelParams, Scenario, sample_covariance, sample_snapshots

REF_DELTA = np.array([1.0, 2.0, 3.0, 4.0, 2.0, 10.0])
REF_BETAS = np.deg2rad([50.0, 100.0])
COHERENT_O = np.array([[2.0, 2.0], [2.0, 2.0]])
CORRELATED_O = np.array([[5.0, 4.0], [4.0, 5.0]])

_ACCEPTANCE = []


def random_psd(rng, V, rank=None, scale=3.0):
    rank = V if rank is None else rank
    X = rng.standard_normal((V, rank)) + 1j * rng.standard_normal((V, rank))
    O = scale * X @ X.conj().T / max(rank, 1)
    return 0.5 * (O + O.conj().T)


def random_betas(rng, V, min_sep_deg=12.0, lo=15.0, hi=165.0):
    while True:
        b = np.sort(rng.uniform(lo, hi, size=V))
        if V == 1 or np.min(np.diff(b)) >= min_sep_deg:
            return np.deg2rad(b)


def random_instance(rng, W=None, V=None, rank=None, L=None):
    """Random scenario, true parameters and a simulated sample covariance."""
    W = W or int(rng.choice([4, 6, 8]))
    V = V or int(rng.integers(1, min(3, W - 1) + 1))
    O = random_psd(rng, V, rank)
    delta = rng.uniform(0.5, 10.0, size=W)
    betas = random_betas(rng, V)
    sc = Scenario(W, betas, O, delta)
    L = L or int(rng.choice([20, 100, 500]))
    R = sample_covariance(sample_snapshots(sc, L, int(rng.integers(1 << 31))))
    return sc, ModelParams(betas, O, delta), R


def unpack_theta(p, theta):
    """(beta, rho, delta) real vector -> (beta, O, delta), rho in the documented order."""
    V, W = p.V, p.W
    betas = theta[:V]
    rho = theta[V:V + V * V]
    O = np.diag(rho[:V]).astype(complex)
    k = V
    for a in range(V):
        for b in range(a + 1, V):
            O[a, b] = rho[k] + 1j * rho[k + 1]
            O[b, a] = np.conj(O[a, b])
            k += 2
    return betas, O, theta[V + V * V:]


def pack_theta(p):
    rho = list(np.diag(p.source_cov).real)
    for a in range(p.V):
        for b in range(a + 1, p.V):
            rho += [p.source_cov[a, b].real, p.source_cov[a, b].imag]
    return np.concatenate([p.betas, rho, p.noise])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ref_scenario():
    return Scenario(6, REF_BETAS, COHERENT_O, REF_DELTA)


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)`` for the acceptance summary."""

    def record(number, passed, detail):
        _ACCEPTANCE.append((number, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
