import os

# small dense factorizations dominate the workload; oversubscribed BLAS
# threads are counterproductive, so pin before numpy spins anything up
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np
import pytest

try:
    from threadpoolctl import threadpool_limits
    threadpool_limits(1)
except ImportError:
    pass

from ibcmps.groundstate import ItebdSchedule, itebd_ground_state
from ibcmps.imps import BOND_LABELS, canonicalize
from ibcmps.mpo import heisenberg_s1_mpo, spin_operators
from ibcmps.tensor import DenseTensor


@pytest.fixture(scope="session")
def ops1():
    return spin_operators(1.0)


@pytest.fixture(scope="session")
def heis_h2(ops1):
    return (np.kron(ops1.sx, ops1.sx) + np.kron(ops1.sy, ops1.sy)
            + np.kron(ops1.sz, ops1.sz))


@pytest.fixture(scope="session")
def heis_mpo():
    return heisenberg_s1_mpo()


@pytest.fixture(scope="session")
def psi16(heis_h2):
    """Well-converged chi=16 Heisenberg ground state (one-site cell)."""
    sched = ItebdSchedule(steps=((0.1, 300), (0.01, 300), (0.001, 300)), chi=16,
                          energy_tol=1e-7)
    psi = itebd_ground_state(heis_h2, sched, seed=3)
    assert psi.d == 3, "expected a one-site unit cell"
    return psi


@pytest.fixture(scope="session")
def psi32(heis_h2):
    """chi=32 ground state used by the acceptance suite."""
    sched = ItebdSchedule(steps=((0.1, 300), (0.01, 300), (0.001, 200)), chi=32,
                          energy_tol=1e-7)
    psi = itebd_ground_state(heis_h2, sched, seed=3)
    assert psi.d == 3
    return psi


def random_canonical(chi, d, seed):
    """Canonical iMPS from a random tensor (helper, not a fixture)."""
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(chi, d, chi)) + 1j * rng.normal(size=(chi, d, chi))
    lam = np.abs(rng.normal(size=chi)) + 0.5
    lam = np.sort(lam)[::-1]
    lam /= np.linalg.norm(lam)
    return canonicalize(g, lam)


def aklt_pair():
    """AKLT (gamma, lambda) in the standard normalization."""
    sp = np.array([[0, 1], [0, 0]], dtype=complex)
    sz = np.diag([1.0, -1.0]).astype(complex)
    a = np.zeros((2, 3, 2), dtype=complex)
    a[:, 0, :] = np.sqrt(2 / 3) * sp
    a[:, 1, :] = -np.sqrt(1 / 3) * sz
    a[:, 2, :] = -np.sqrt(2 / 3) * sp.T
    lam = np.array([1.0, 1.0]) / np.sqrt(2)
    return a / lam[:, None, None], lam


def as_site_tensor(arr):
    return DenseTensor(BOND_LABELS, arr)
