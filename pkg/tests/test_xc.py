import numpy as np
import pytest

from conftest import random_rdm1
from hyxc.fci import solve_ground
from hyxc.grid import Field, Grid, InteractionKernel, integrate, laplacian
from hyxc.integrals import build_tensors
from hyxc.ks import energy_breakdown, hartree_potential, inner_scf, ks_hamiltonian_matrix
from hyxc.potentials import external_potential
from hyxc.rdm import RdmPair
from hyxc.vqe import Ansatz, measure_rdms, prepare_state
from hyxc.xc import (
    HermiticityError,
    KsIngredients,
    ProvenanceError,
    build_corrections,
    corrected_hamiltonian_matrix,
    apply_corrected_hamiltonian,
    delta_rho,
    exchange_correlation_energy,
    kinetic_correction_matrix,
    ks_reference_rdm,
    many_body_density,
    orbital_density,
    vxc_local,
)
from hyxc.zm import build_orbitals, enumerate_wavevectors


def determinant_rdms(m, occupied):
    rho = np.zeros((m, m), complex)
    gam = np.zeros((m,) * 4, complex)
    for i in occupied:
        rho[i, i] = 1.0
        for k in occupied:
            if i != k:
                gam[i, i, k, k] += 1.0
                gam[i, k, k, i] -= 1.0
    return RdmPair(rho, gam)


def zero_field(grid, kind="potential"):
    return Field(grid, np.zeros(grid.shape), kind)


# -- delta rho -------------------------------------------------------------------


def test_diagonal_rdm_gives_no_correction(basis):
    d = delta_rho(np.diag([0.7, 0.5, 0.5, 0.3]).astype(complex), basis)
    assert np.max(np.abs(d.values)) <= 1e-14
    mb = many_body_density(np.diag([1.0, 1.0, 0.0, 0.0]), basis)
    assert np.array_equal(mb.values, basis.source_density.values)


def test_two_density_routes_agree(basis):
    rng = np.random.default_rng(11)
    for _ in range(3):
        rho1 = random_rdm1(4, 2, rng)
        d = delta_rho(rho1, basis)
        assert not np.iscomplexobj(d.values)
        direct = orbital_density(rho1, basis).values
        assert np.max(np.abs(direct.imag)) < 1e-14
        via = many_body_density(rho1, basis).values
        assert np.max(np.abs(direct.real - via)) <= 1e-10 * np.max(np.abs(via))


def test_many_body_density_particle_number(basis):
    # the integral of delta_rho * rho_KS is N times the Gram overlaps weighted by rho1
    rho1 = random_rdm1(4, 2, np.random.default_rng(12))
    gram = basis.gram()
    leak = sum(2 * np.real(rho1[i, j] * gram[i, j]) for i in range(4) for j in range(i + 1, 4))
    total = integrate(many_body_density(rho1, basis))
    assert total - 2.0 == pytest.approx(leak, abs=1e-12)
    assert abs(total - 2.0) <= 2 * np.sum(np.abs(rho1)) * basis.orthonormality_error()


def test_trace_mismatch_rejected(basis):
    with pytest.raises(ValueError):
        delta_rho(np.eye(4) * 0.6, basis)


# -- local potential -------------------------------------------------------------


def test_vanishing_rdms_leave_hartree_correction(well, basis, kernels):
    _, _, kernel, ks = well
    v_h = hartree_potential(basis.source_density, kernel)
    empty = RdmPair(np.diag([1.0, 1.0, 0, 0]).astype(complex), np.zeros((4,) * 4, complex))
    out = vxc_local(empty, kernels, v_h, 2, basis.basis_id)
    assert np.array_equal(out.values, -v_h.values / 2)


def test_determinant_keeps_exchange_terms(well, basis, kernels):
    _, _, kernel, _ = well
    v_h = hartree_potential(basis.source_density, kernel)
    det = determinant_rdms(4, (0, 1))
    out = vxc_local(det, kernels, v_h, 2).values
    expect = 0.5 * (-kernels.dvee(0, 1, 1, 0) - kernels.dvee(1, 0, 0, 1)) - v_h.values / 2
    assert np.max(np.abs(out - expect.real)) <= 1e-12 * np.max(np.abs(expect))
    # the i=j, k=l part alone is v_H N(N-1)/N^2
    hartree_part = 0.5 * (kernels.dvee(0, 0, 1, 1) + kernels.dvee(1, 1, 0, 0)).real
    assert np.max(np.abs(hartree_part - v_h.values / 2)) <= 1e-6 * np.max(v_h.values)


def test_off_diagonal_terms_are_linear(well, basis, kernels):
    _, _, kernel, _ = well
    v_h = hartree_potential(basis.source_density, kernel)
    rng = np.random.default_rng(13)
    a = Ansatz.zeros(4, 2, 2)
    rdms = measure_rdms(prepare_state(a.with_parameters(rng.normal(size=a.parameters.size))), 4)
    pair_diag = np.zeros_like(rdms.gamma2)
    for i in range(4):
        for k in range(4):
            pair_diag[i, i, k, k] = rdms.gamma2[i, i, k, k]
    rho_d = np.diag(np.diag(rdms.rho1))

    def scaled(lam):
        return RdmPair(rho_d + lam * (rdms.rho1 - rho_d), pair_diag + lam * (rdms.gamma2 - pair_diag))

    f0 = vxc_local(scaled(0.0), kernels, v_h, 2).values
    f1 = vxc_local(scaled(1.0), kernels, v_h, 2).values
    f3 = vxc_local(scaled(3.0), kernels, v_h, 2).values
    assert np.array_equal(f0, -v_h.values / 2)
    assert np.allclose(f3 - f0, 3 * (f1 - f0), atol=1e-12)


def test_provenance_checked(well, basis, kernels):
    _, _, kernel, _ = well
    v_h = hartree_potential(basis.source_density, kernel)
    det = determinant_rdms(4, (0, 1))
    with pytest.raises(ProvenanceError):
        vxc_local(det, kernels, v_h, 2, basis_id="other")
    with pytest.raises(ProvenanceError):
        vxc_local(determinant_rdms(3, (0, 1)), kernels, v_h, 2)


# -- corrected Hamiltonian -------------------------------------------------------


@pytest.fixture(scope="module")
def ingredients(well, basis):
    grid, v_ext, kernel, _ = well
    return KsIngredients(v_ext, hartree_potential(basis.source_density, kernel))


def test_reference_rdm_reduces_to_ks_matrix(well, basis, ingredients):
    grid, _, _, ks = well
    v_eff = ingredients.v_ext + ingredients.v_hartree
    ks_mat = ks_hamiltonian_matrix(grid, v_eff)
    vxc = zero_field(grid)
    h, dev = corrected_hamiltonian_matrix(ingredients, basis, np.eye(4), vxc)
    assert dev == 0.0 and np.max(np.abs(h - ks_mat)) <= 1e-10
    ref = ks_reference_rdm(basis, ks)
    h, dev = corrected_hamiltonian_matrix(ingredients, basis, ref, vxc, reference=ref)
    assert np.max(np.abs(h - ks_mat)) <= 1e-10
    assert np.all(np.isreal(np.linalg.eigvalsh(h)))


def test_kinetic_term_on_basis_orbital(well, basis):
    grid = basis.grid
    inner = grid.interior
    rho1 = random_rdm1(4, 2, np.random.default_rng(14))
    x = np.eye(4) - rho1
    zero = zero_field(grid)
    ing = KsIngredients(zero, zero)
    lap = [laplacian(o).values for o in basis.orbitals]
    gram = basis.gram()
    bound = 0.5 * np.sum(np.abs(x)) * basis.orthonormality_error() * max(np.max(np.abs(v)) for v in lap)
    for m in range(4):
        out = apply_corrected_hamiltonian(basis.orbitals[m], ing, basis, rho1, zero, hermitian=False).values
        # with the quadrature overlaps the expansion is exact
        coeff = x.T @ gram[:, m]
        exact = -0.5 * lap[m] + 0.5 * sum(coeff[j] * lap[j] for j in range(4))
        assert np.max(np.abs(out[inner] - exact[inner])) <= 1e-12 * np.max(np.abs(exact))
        # orthonormality collapses it to -1/2 sum_j rho_mj lap phi_j up to the Gram error
        collapsed = sum(-0.5 * rho1[m, j] * lap[j] for j in range(4))
        assert np.max(np.abs(out[inner] - collapsed[inner])) <= bound


def test_operator_hermiticity_and_matrix_agreement(well, basis, ingredients):
    grid = basis.grid
    rng = np.random.default_rng(15)
    rho1 = random_rdm1(4, 2, rng)
    vxc = zero_field(grid)
    h, _ = corrected_hamiltonian_matrix(ingredients, basis, rho1, vxc, max_deviation=np.inf)

    def span_vector():
        c = rng.normal(size=4) + 1j * rng.normal(size=4)
        return Field(grid, sum(ci * o.values for ci, o in zip(c, basis.orbitals)))

    psi, chi = span_vector(), span_vector()
    h_psi = apply_corrected_hamiltonian(psi, ingredients, basis, rho1, vxc)
    h_chi = apply_corrected_hamiltonian(chi, ingredients, basis, rho1, vxc)
    w = grid.cell_volume
    lhs = np.vdot(chi.values, h_psi.values) * w
    rhs = np.conj(np.vdot(psi.values, h_chi.values) * w)
    assert abs(lhs - rhs) <= 1e-8 * abs(lhs)
    inner = grid.interior
    assert np.max(np.abs(h @ psi.values[inner] - h_psi.values[inner])) <= 1e-10


def test_hermiticity_limit_enforced(basis, ingredients):
    rho1 = random_rdm1(4, 2, np.random.default_rng(16))
    with pytest.raises(HermiticityError):
        kinetic_correction_matrix(basis, rho1, max_deviation=1e-12)
    c, dev = kinetic_correction_matrix(basis, rho1)
    assert dev > 0 and np.array_equal(c, c.conj().T)


# -- exchange-correlation energy -------------------------------------------------


def test_ks_energy_gives_zero(well):
    grid, v_ext, kernel, ks = well
    p = energy_breakdown(ks, v_ext, kernel)
    assert exchange_correlation_energy(p.t_ks + p.e_ext + p.e_hartree, ks, v_ext, kernel) == pytest.approx(0.0, abs=1e-12)


def test_one_electron_cancels_hartree():
    grid = Grid(1, ((-10.0, 10.0),), 801)
    v_ext = external_potential(grid, "soft_coulomb", charge=1.0)
    free = InteractionKernel(strength=0.0)
    ks = inner_scf(grid, v_ext, free, 1)
    basis = build_orbitals(ks.density, enumerate_wavevectors(3, 1), 1)
    energy = solve_ground(build_tensors(basis, v_ext, free), 3, 1).ground_energy
    assert energy == pytest.approx(ks.eigenvalues[0], abs=1e-6)
    kernel = InteractionKernel()
    e_h = energy_breakdown(ks, v_ext, kernel).e_hartree
    assert e_h > 0.1
    assert exchange_correlation_energy(energy, ks, v_ext, kernel) == pytest.approx(-e_h, abs=1e-6)


def test_repulsive_well_has_negative_xc(well, basis, tensors, kernels):
    _, v_ext, kernel, ks = well
    sol = solve_ground(tensors, 4, 2)
    e_xc = exchange_correlation_energy(sol.ground_energy, ks, v_ext, kernel)
    assert e_xc < 0
    bundle = build_corrections(sol.rdms, basis, kernels, ks, v_ext, hartree_potential(ks.density, kernel),
                               kernel, sol.ground_energy)
    assert bundle.e_xc == e_xc and bundle.basis_id == basis.basis_id
    assert integrate(bundle.many_body_density) == pytest.approx(2.0, abs=1e-4)
    assert np.array_equal(bundle.many_body_density.values,
                          (1 + bundle.delta_rho.values) * basis.source_density.values)
    with pytest.raises(ValueError):
        build_corrections(sol.rdms, basis, kernels, ks, v_ext, hartree_potential(ks.density, kernel),
                          kernel, sol.ground_energy, reference="bogus")
