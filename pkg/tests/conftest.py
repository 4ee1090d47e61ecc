import numpy as np
import pytest

from hyxc.grid import Field, Grid, InteractionKernel
from hyxc.integrals import DerivativeKernels, build_tensors
from hyxc.ks import inner_scf
from hyxc.potentials import external_potential
from hyxc.zm import build_orbitals, enumerate_wavevectors


@pytest.fixture(scope="session")
def well():
    """1D two-electron soft-Coulomb well: grid, potential, kernel and converged KS state."""
    grid = Grid(1, ((-10.0, 10.0),), 201)
    v_ext = external_potential(grid, "soft_coulomb", charge=2.0)
    kernel = InteractionKernel()
    ks = inner_scf(grid, v_ext, kernel, 2)
    return grid, v_ext, kernel, ks


@pytest.fixture(scope="session")
def basis(well):
    _, _, _, ks = well
    return build_orbitals(ks.density, enumerate_wavevectors(4, 1), 2)


@pytest.fixture(scope="session")
def tensors(well, basis):
    _, v_ext, kernel, _ = well
    return build_tensors(basis, v_ext, kernel)


@pytest.fixture(scope="session")
def kernels(well, basis):
    _, v_ext, kernel, _ = well
    return DerivativeKernels(basis, v_ext, kernel)


def two_peak_density(points, n=2.0, box=(-10.0, 10.0)):
    grid = Grid(1, (box,), points)
    x = grid.coords[0]
    raw = np.exp(-((x - 2.0) ** 2)) + 0.7 * np.exp(-((x + 2.5) ** 2) / 1.5)
    raw = raw * np.sin(np.pi * (x - box[0]) / (box[1] - box[0])) ** 2
    return Field(grid, n * raw / np.sum(grid.weights * raw), "density")


def uniform_density(points, length=10.0, n=1.0):
    grid = Grid(1, ((0.0, length),), points)
    return Field(grid, np.full(grid.shape, n / length), "density")


def random_rdm1(m, n, rng):
    """Hermitian matrix with trace n (not necessarily N-representable)."""
    a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    h = 0.1 * (a + a.conj().T)
    return h + np.eye(m) * (n - np.trace(h).real) / m
