import math

import numpy as np
import pytest
from scipy.integrate import quad

from hyxc.checks import check_dvee, check_dvext, sample_cells
from hyxc.grid import Field, InteractionKernel, apply_kernel, kernel_matrix
from hyxc.integrals import (
    HamiltonianTensors,
    ResourceError,
    build_tensors,
    dvee_kernel,
    dvext_kernel,
    ee_tensor,
    external_matrix,
    kinetic_matrix,
    random_tensors,
    read_tensor,
    write_tensor,
)
from hyxc.ks import hartree_potential
from hyxc.zm import build_orbitals

from conftest import uniform_density

K5 = [0, 1, -1, 2, -2]


@pytest.fixture(scope="module")
def plane_waves():
    return build_orbitals(uniform_density(401, length=10.0, n=1.0), K5, 1)


def test_plane_wave_kinetic_matrix(plane_waves):
    t = kinetic_matrix(plane_waves)
    for i, k in enumerate(K5):
        assert t[i, i].real == pytest.approx(0.5 * (2 * math.pi * k / 10.0) ** 2, rel=1e-2)
    off = t - np.diag(np.diag(t))
    assert np.max(np.abs(off)) < 1e-10
    assert np.max(np.abs(t - t.conj().T)) <= 1e-10


def test_constant_potential_is_diagonal(plane_waves, basis):
    for b in (plane_waves, basis):
        c = Field(b.grid, np.full(b.grid.shape, -0.8), "potential")
        v = external_matrix(b, c)
        assert np.max(np.abs(v + 0.8 * b.gram())) < 1e-12


def test_external_diagonal_and_routes(well, basis):
    _, v_ext, _, ks = well
    v = external_matrix(basis, v_ext)
    expected = float(np.sum(basis.grid.weights * ks.density.values * v_ext.values)) / 2
    assert np.allclose(np.diag(v), expected, atol=1e-14)
    assert np.max(np.abs(v - external_matrix(basis, v_ext, route="orbital"))) < 1e-12


def test_tensor_symmetries(tensors):
    errs = tensors.symmetry_errors()
    assert max(errs.values()) <= 1e-10
    tensors.check(1e-10)


def test_paired_diagonal_ee_elements(basis, tensors, well):
    _, _, kernel, ks = well
    w = basis.grid.weights
    kmat = kernel_matrix(basis.grid, kernel)
    rho = ks.density.values
    direct = float(np.sum(w * rho * apply_kernel(basis.grid, kmat, rho))) / 4
    for i in range(4):
        for k in range(4):
            assert tensors.v_ee[i, i, k, k] == pytest.approx(direct, abs=1e-12)


def _box_plane_wave_integral(a, b, length, softening=1.0):
    """(1/L^2) int_0^L int_0^L exp(i a x) exp(i b x') / sqrt((x - x')^2 + s^2), via x' = x - u."""
    def overlap(u):
        lo, hi = max(0.0, u), min(length, length + u)
        s = a + b
        inner = hi - lo if s == 0 else (np.exp(1j * s * hi) - np.exp(1j * s * lo)) / (1j * s)
        return np.exp(-1j * b * u) * inner / math.sqrt(u * u + softening**2)

    re = quad(lambda u: overlap(u).real, -length, length, limit=400, epsabs=1e-11)[0]
    im = quad(lambda u: overlap(u).imag, -length, length, limit=400, epsabs=1e-11)[0]
    return (re + 1j * im) / length**2


def test_plane_wave_ee_tensor_matches_box_integrals(plane_waves):
    v = ee_tensor(plane_waves, InteractionKernel())
    two_pi_l = 2 * math.pi / 10.0
    for i, j, k, l in [(0, 0, 0, 0), (0, 1, 1, 0), (0, 1, 0, 2), (1, 3, 4, 2), (2, 0, 3, 1)]:
        a = two_pi_l * (K5[j] - K5[i])
        b = two_pi_l * (K5[l] - K5[k])
        assert abs(v[i, j, k, l] - _box_plane_wave_integral(a, b, 10.0)) < 1e-4


def test_diagonal_external_kernel(basis, kernels, well):
    v_ext = well[1]
    for i in range(4):
        assert np.array_equal(kernels.dvext(i, i), v_ext.values / 2)
    assert np.allclose(dvext_kernel(basis, v_ext, 2, 2).values, v_ext.values / 2)


def test_external_kernel_finite_differences(basis, kernels):
    cells = sample_cells(basis, 5, np.random.default_rng(11))
    assert check_dvext(basis, kernels, cells).error <= 1e-3


def test_ee_kernel_finite_differences(basis, kernels):
    cells = sample_cells(basis, 5, np.random.default_rng(12))
    assert check_dvee(basis, kernels, cells).error <= 1e-3


def test_paired_diagonal_ee_kernel_is_hartree(basis, kernels, well):
    kernel, ks = well[2], well[3]
    v_h = hartree_potential(ks.density, kernel).values
    for i in range(4):
        for k in range(4):
            assert np.max(np.abs(kernels.dvee(i, i, k, k) - 2 * v_h / 4)) <= 1e-6 * np.max(v_h)


def test_ee_kernel_swap_symmetry(kernels):
    rng = np.random.default_rng(2)
    for i, j, k, l in rng.integers(0, 4, size=(10, 4)):
        assert np.array_equal(kernels.dvee(i, j, k, l), kernels.dvee(k, l, i, j))


def test_dvee_kernel_field(basis, kernels, well):
    f = dvee_kernel(basis, well[2], 0, 1, 2, 3)
    assert np.allclose(f.values, kernels.dvee(0, 1, 2, 3))


def test_resource_guard(basis, well):
    with pytest.raises(ResourceError):
        ee_tensor(basis, well[2], budget=10.0)
    with pytest.raises(ResourceError):
        dvee_kernel(basis, well[2], 0, 0, 0, 0, budget=10.0)


def test_tensor_dump_format(tmp_path, tensors):
    path = write_tensor(tensors.v_ee, tmp_path / "vee.bin")
    raw = path.read_bytes()
    assert raw[:6] == b"HYXCT1"
    assert int.from_bytes(raw[6:10], "little") == 4
    assert np.array_equal(read_tensor(path, rank=4), tensors.v_ee)
    tensors.dump(tmp_path)
    back = HamiltonianTensors.load(tmp_path)
    assert np.array_equal(back.t, tensors.t) and np.array_equal(back.v_ext, tensors.v_ext)


def test_random_tensors_have_hamiltonian_symmetries():
    t = random_tensors(4, np.random.default_rng(0))
    assert max(t.symmetry_errors().values()) < 1e-14


def test_build_tensors_records_basis(basis, tensors):
    assert tensors.basis_id == basis.basis_id
    assert tensors.size == 4
    with pytest.raises(ValueError):
        HamiltonianTensors(np.eye(2), np.eye(2) * 1j, np.zeros((2,) * 4)).check()


def test_build_tensors_on_plane_waves(plane_waves):
    zero = Field(plane_waves.grid, np.zeros(plane_waves.grid.shape), "potential")
    t = build_tensors(plane_waves, zero, InteractionKernel(strength=0.0))
    assert np.all(t.v_ee == 0)
    assert np.max(np.abs(t.v_ext)) == 0
