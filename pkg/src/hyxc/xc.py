"""Many-body corrections fed back from the RDMs into the Kohn-Sham problem.

The corrected Hamiltonian acting on a grid function is

    H psi = -1/2 lap psi + 1/2 sum_mj X_mj <phi_m|psi> lap phi_j + (v_ext + v_H + v_xc^loc) psi

with ``X = R - rho1``. The reference ``R`` is either the identity, which
makes the operator ``-1/2 sum_mj rho_mj <phi_m|psi> lap phi_j + ...`` on the
ZM span, or the Kohn-Sham one-body density matrix expressed in the ZM basis
(``ks_reference_rdm``). In both cases ``rho1 = R`` gives exactly the
Kohn-Sham operator. The identity reference removes all kinetic energy from
unoccupied ZM directions when ``M > N``, so the Kohn-Sham reference is the
default in the driver.

The kinetic part is not Hermitian for a general ``rho1``; the dense matrix
is Hermitized by averaging with its adjoint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .grid import Field, laplacian_matrix
from .integrals import DerivativeKernels, _distinct_q
from .ks import EnergyBreakdown, KsState, energy_breakdown
from .rdm import RdmPair
from .zm import ZmOrbitalSet

log = logging.getLogger(__name__)

IMAG_TOL = 1e-8
TRACE_TOL = 1e-6


class ProvenanceError(ValueError):
    """Inputs were built from different bases or densities."""


class HermiticityError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CorrectionBundle:
    delta_rho: Field
    many_body_density: Field
    vxc_loc: Field
    kinetic_correction: np.ndarray
    e_xc: float
    basis_id: str = ""


@dataclass(frozen=True, eq=False)
class KsIngredients:
    """Local pieces of the Kohn-Sham Hamiltonian the correction is added to."""

    v_ext: Field
    v_hartree: Field


def _check_trace(rho1: np.ndarray, n: int) -> None:
    tr = np.trace(rho1)
    if abs(tr - n) > TRACE_TOL:
        raise ValueError(f"trace of rho1 is {tr.real:.10g}, expected {n}")


def delta_rho(rho1: np.ndarray, basis: ZmOrbitalSet) -> Field:
    """``(2/N) sum_{i<j} Re(rho_ij exp(i (xi_j - xi_i)))`` on the grid.

    Raises:
        ValueError: if ``trace(rho1)`` differs from ``N`` by more than 1e-6.
    """
    n = basis.n_electrons
    _check_trace(rho1, n)
    out = np.zeros(basis.grid.shape)
    for i in range(basis.size):
        for j in range(i + 1, basis.size):
            if rho1[i, j] != 0:
                out += np.real(rho1[i, j] * basis.phase_factor(basis.k_diff(i, j)))
    return Field(basis.grid, 2.0 / n * out)


def _density_field(grid, values) -> Field:
    scale = float(np.max(np.abs(values), initial=0.0))
    kind = "density" if np.min(values, initial=0.0) >= -1e-12 * max(scale, 1.0) else "generic"
    return Field(grid, values, kind)


def many_body_density(rho1: np.ndarray, basis: ZmOrbitalSet) -> Field:
    """``(1 + delta_rho) rho_KS``."""
    d = delta_rho(rho1, basis)
    return _density_field(basis.grid, (1.0 + d.values) * basis.source_density.values)


def orbital_density(rho1: np.ndarray, basis: ZmOrbitalSet) -> Field:
    """``sum_ij rho_ij conj(phi_i) phi_j`` evaluated from the orbitals directly."""
    phi = np.array([o.values for o in basis.orbitals])
    vals = np.einsum("ij,i...,j...->...", rho1, phi.conj(), phi)
    return Field(basis.grid, vals)


def exchange_correlation_energy(many_body_e: float, ks: KsState, v_ext1: Field, kernel,
                                xc_model: str = "none") -> float:
    """``E - T_KS - E_ext - E_H`` with the Kohn-Sham pieces taken from ``ks``."""
    parts: EnergyBreakdown = energy_breakdown(ks, v_ext1, kernel, xc_model, e_xc=0.0)
    return float(many_body_e - parts.t_ks - parts.e_ext - parts.e_hartree)


def vxc_local(rdms: RdmPair, kernels: DerivativeKernels, v_h: Field, n_electrons: int,
              basis_id: str | None = None) -> Field:
    """Local exchange-correlation potential built from the RDMs.

    ``sum_{i!=j} rho_ij dv_ij^ext/drho + 1/2 sum' gamma_ijkl dv_ijkl^ee/drho - v_H/N``,
    where the primed sum leaves out exactly the terms with ``i = j`` and
    ``k = l`` (those reproduce the Hartree potential).

    Raises:
        ProvenanceError: if the RDMs, kernels and ``basis_id`` disagree.
        ValueError: if the result has an imaginary part above 1e-8.
    """
    basis = kernels.basis
    if basis_id is not None and basis_id != kernels.basis_id:
        raise ProvenanceError(f"kernels belong to basis {kernels.basis_id}, RDMs to {basis_id}")
    if rdms.size != basis.size:
        raise ProvenanceError(f"RDMs are {rdms.size}-orbital, kernels {basis.size}-orbital")
    if n_electrons != basis.n_electrons:
        raise ProvenanceError(f"N={n_electrons} but the basis was built for N={basis.n_electrons}")
    if v_h.grid != basis.grid:
        raise ProvenanceError("v_H lives on a different grid")
    qs, index = _distinct_q(basis)
    nq = len(qs)
    # collect RDM weights per wavevector difference
    c_ext = np.zeros(nq, dtype=complex)
    np.add.at(c_ext, index.ravel(), rdms.rho1.ravel())
    zero = index[0, 0]
    c_ext[zero] = 0.0  # diagonal entries; off-diagonal pairs never have q = 0
    c_ee = np.zeros((nq, nq), dtype=complex)
    q1 = np.broadcast_to(index[:, :, None, None], rdms.gamma2.shape)
    q2 = np.broadcast_to(index[None, None, :, :], rdms.gamma2.shape)
    np.add.at(c_ee, (q1.ravel(), q2.ravel()), rdms.gamma2.ravel())
    c_ee[zero, zero] = 0.0
    total = np.zeros(basis.grid.shape, dtype=complex)
    for a in range(nq):
        if c_ext[a] != 0:
            total += c_ext[a] * kernels.dvext_q(qs[a])
    # gamma_ijkl = gamma_klij, so the two halves of each ee kernel contribute equally
    for a in range(nq):
        for b in range(nq):
            if c_ee[a, b] != 0:
                total += c_ee[a, b] * kernels.vee_half(qs[a], qs[b])
    total -= v_h.values / n_electrons
    resid = float(np.max(np.abs(total.imag), initial=0.0))
    if resid > IMAG_TOL:
        raise ValueError(f"v_xc^loc has an imaginary residue of {resid:.3e}")
    return Field(basis.grid, total.real, "potential")


def _interior_orbitals(basis: ZmOrbitalSet) -> np.ndarray:
    interior = basis.grid.interior
    return np.array([o.values[interior] for o in basis.orbitals]).T


def ks_reference_rdm(basis: ZmOrbitalSet, ks: KsState) -> np.ndarray:
    """``R_mj = sum_a <phi_j|psi_a><psi_a|phi_m>`` over occupied Kohn-Sham orbitals."""
    w = basis.grid.weights.ravel()
    phi = np.array([o.values.ravel() for o in basis.orbitals])
    occ = np.array([p.values.ravel() for f, p in zip(ks.occupations, ks.orbitals) if f])
    proj = (phi.conj() * w) @ occ.T
    return proj.conj() @ proj.T


def _weights(basis, rho1, reference):
    ref = np.eye(basis.size) if reference is None else np.asarray(reference)
    return ref - rho1


def kinetic_correction_matrix(basis: ZmOrbitalSet, rho1: np.ndarray, hermitian: bool = True,
                              max_deviation: float | None = None, reference: np.ndarray | None = None):
    """Dense interior-node matrix of ``1/2 sum_mj X_mj lap|phi_j><phi_m|``, ``X = R - rho1``.

    ``reference`` is ``R``; the identity when omitted.

    Returns ``(matrix, deviation)``; ``deviation`` is ``max|C - C^+|`` of the
    raw operator, and ``hermitian=True`` returns ``(C + C^+)/2``.

    Raises:
        HermiticityError: if ``max_deviation`` is given and exceeded.
    """
    grid = basis.grid
    x = _weights(basis, rho1, reference)
    phi = _interior_orbitals(basis)
    lap_phi = laplacian_matrix(grid) @ phi
    c = 0.5 * (lap_phi @ x.T) @ phi.conj().T * grid.cell_volume
    dev = float(np.max(np.abs(c - c.conj().T), initial=0.0))
    log.info("kinetic correction Hermitization deviation %.3e", dev)
    if max_deviation is not None and dev > max_deviation:
        raise HermiticityError(
            f"corrected Hamiltonian deviates from Hermitian by {dev:.3e} (limit {max_deviation:.1e}); "
            f"max|R - rho1| = {np.max(np.abs(x)):.3e}"
        )
    if hermitian:
        c = 0.5 * (c + c.conj().T)
    return c, dev


def apply_corrected_hamiltonian(psi: Field, ingredients: KsIngredients, basis: ZmOrbitalSet,
                                rho1: np.ndarray, vxc_loc: Field, hermitian: bool = True,
                                reference: np.ndarray | None = None) -> Field:
    """Action of the corrected Hamiltonian on a grid function.

    ``hermitian=False`` applies the raw operator; the default applies its
    Hermitian part, which is what ``corrected_hamiltonian_matrix`` diagonalizes.
    """
    grid = basis.grid
    if psi.grid != grid or vxc_loc.grid != grid or ingredients.v_ext.grid != grid:
        raise ValueError("all fields must share the basis grid")
    interior = grid.interior
    v = psi.values[interior]
    phi = _interior_orbitals(basis)
    lap = laplacian_matrix(grid)
    x = _weights(basis, rho1, reference)
    w = grid.cell_volume
    lap_phi = lap @ phi
    local = ingredients.v_ext.values + ingredients.v_hartree.values + vxc_loc.values
    raw = 0.5 * lap_phi @ (x.T @ (phi.conj().T @ v * w))
    if hermitian:
        adj = 0.5 * phi @ (x.conj() @ (lap_phi.conj().T @ v * w))
        corr = 0.5 * (raw + adj)
    else:
        corr = raw
    out = np.zeros(grid.shape, dtype=complex)
    out[interior] = -0.5 * (lap @ v) + corr + local[interior] * v
    return Field(grid, out)


def corrected_hamiltonian_matrix(ingredients: KsIngredients, basis: ZmOrbitalSet, rho1: np.ndarray,
                                 vxc_loc: Field, max_deviation: float = 1e-6,
                                 reference: np.ndarray | None = None):
    """Dense Hermitian interior-node matrix of the corrected Hamiltonian.

    Returns ``(matrix, deviation)``.

    Raises:
        HermiticityError: if the raw operator's anti-Hermitian part exceeds
            ``max_deviation``.
    """
    grid = basis.grid
    corr, dev = kinetic_correction_matrix(basis, rho1, max_deviation=max_deviation, reference=reference)
    local = ingredients.v_ext.values + ingredients.v_hartree.values + vxc_loc.values
    h = -0.5 * laplacian_matrix(grid) + corr
    h[np.diag_indices_from(h)] += np.real(local[grid.interior])
    return h, dev


def build_corrections(rdms: RdmPair, basis: ZmOrbitalSet, kernels: DerivativeKernels, ks: KsState,
                      v_ext1: Field, v_h: Field, kernel, many_body_e: float,
                      reference: str = "ks") -> CorrectionBundle:
    """Everything the next outer iteration needs from one set of RDMs.

    ``reference`` selects ``R`` in the kinetic weights ``R - rho1``: ``ks`` or ``identity``.
    """
    if reference not in ("ks", "identity"):
        raise ValueError(f"unknown kinetic reference {reference!r}")
    ref = ks_reference_rdm(basis, ks) if reference == "ks" else np.eye(basis.size)
    n = basis.n_electrons
    d = delta_rho(rdms.rho1, basis)
    mb = _density_field(basis.grid, (1.0 + d.values) * basis.source_density.values)
    vloc = vxc_local(rdms, kernels, v_h, n, basis.basis_id)
    e_xc = exchange_correlation_energy(many_body_e, ks, v_ext1, kernel)
    return CorrectionBundle(d, mb, vloc, ref - rdms.rho1, e_xc, basis.basis_id)
