"""Invariant suite behind ``hyxc check``.

Every check returns a :class:`CheckResult` holding the measured error, the
tolerance it was held to and a pass flag. ``run_checks`` builds the first
outer iteration's objects for a configuration and runs the whole suite.

Finite-difference checks perturb the density at single interior nodes and
hold ``N`` fixed. A node value change of ``eps`` is a density change of
``eps * w`` in the integral sense, so the functional derivative at that node
is estimated by ``(Q(rho + eps) - Q(rho - eps)) / (2 eps w)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .fci import enumerate_basis, hamiltonian_matrix, solve_ground, to_mask
from .grid import Field
from .integrals import DerivativeKernels, HamiltonianTensors, ee_tensor, external_matrix
from .ks import hartree_potential
from .rdm import energy_from_rdms
from .secondq import QubitOperator, build_qubit_hamiltonian, jordan_wigner
from .vqe import Ansatz, prepare_state
from .zm import ZmOrbitalSet, phase_functional_derivative

log = logging.getLogger(__name__)

FD_TOL = 1e-3
DENSITY_FRACTION = 0.01
N_CELLS = 5


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tolerance)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name:<28s} error {self.error:.3e}  (tol {self.tolerance:.1e})"


# -- helpers -------------------------------------------------------------------


def sample_cells(basis: ZmOrbitalSet, count: int, rng: np.random.Generator,
                 fraction: float = DENSITY_FRACTION) -> list[tuple[int, ...]]:
    """Random interior nodes where the density exceeds ``fraction`` of its maximum."""
    rho = basis.source_density.values
    mask = basis.grid.interior & (rho > fraction * rho.max())
    flat = np.flatnonzero(mask)
    if flat.size < count:
        raise ValueError(f"only {flat.size} interior nodes carry enough density")
    chosen = rng.choice(flat, size=count, replace=False)
    return [tuple(int(i) for i in np.unravel_index(c, basis.grid.shape)) for c in np.sort(chosen)]


def _fd_step(basis: ZmOrbitalSet) -> float:
    return float(np.cbrt(np.finfo(float).eps) * basis.source_density.values.max())


def _perturbed(basis: ZmOrbitalSet, cell, eps: float) -> ZmOrbitalSet:
    vals = basis.source_density.values.copy()
    vals[cell] += eps
    return basis.with_density(Field(basis.grid, vals, "density"))


def _central(basis: ZmOrbitalSet, cell, quantity):
    eps = _fd_step(basis)
    w = basis.grid.weights[cell]
    return (quantity(_perturbed(basis, cell, eps)) - quantity(_perturbed(basis, cell, -eps))) / (2 * eps * w)


def _relative(analytic, numeric) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    floor = 1e-8 * max(float(np.max(np.abs(numeric))), 1e-300)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), floor)))


# -- individual checks ---------------------------------------------------------


def check_orthonormality(basis: ZmOrbitalSet, tol: float) -> CheckResult:
    return CheckResult("zm_orthonormality", basis.orthonormality_error(), tol)


def check_phase_derivative(basis: ZmOrbitalSet, cells, tol: float = FD_TOL) -> CheckResult:
    """Pointwise phase derivative against finite differences of ``k . f(r')``.

    ``r'`` is the last sampled cell and the derivative is compared at the
    others; at ``r = r'`` the pointwise step takes the value one while the
    trapezoid rule weights the node by one half.
    """
    r_prime, others = cells[-1], cells[:-1]
    worst = 0.0
    for i in range(basis.size):
        for j in range(basis.size):
            q = basis.k_diff(i, j)
            if not np.any(q):
                continue
            analytic = phase_functional_derivative(basis.phase, q, r_prime).values().values
            for c in others:
                fd = _central(basis, c, lambda b, q=q: b.phase.phase(q)[r_prime])
                worst = max(worst, _relative(analytic[c], fd))
    return CheckResult("fd_phase_derivative", worst, tol)


def check_dvext(basis: ZmOrbitalSet, kernels: DerivativeKernels, cells, tol: float = FD_TOL) -> CheckResult:
    v = kernels.v_ext1
    m = basis.size
    worst = 0.0
    for c in cells:
        fd = _central(basis, c, lambda b: external_matrix(b, v))
        analytic = np.array([[kernels.dvext(i, j)[c] for j in range(m)] for i in range(m)])
        worst = max(worst, _relative(analytic, fd))
    return CheckResult("fd_external_kernel", worst, tol)


def check_dvee(basis: ZmOrbitalSet, kernels: DerivativeKernels, cells, tol: float = FD_TOL) -> CheckResult:
    kernel = kernels.kernel
    m = basis.size
    quads = list(np.ndindex(m, m, m, m))
    worst = 0.0
    for c in cells:
        fd = _central(basis, c, lambda b: ee_tensor(b, kernel))
        analytic = np.array([kernels.dvee(*t)[c] for t in quads]).reshape((m,) * 4)
        worst = max(worst, _relative(analytic, fd))
    return CheckResult("fd_ee_kernel", worst, tol)


def check_pair_diagonal(basis: ZmOrbitalSet, kernels: DerivativeKernels, tol: float = 1e-6) -> CheckResult:
    """``dvee(i, i, k, k) = 2 v_H / N^2`` wherever the Hartree potential is non-negligible."""
    v_h = hartree_potential(basis.source_density, kernels.kernel).values
    n = basis.n_electrons
    target = 2.0 * v_h / n**2
    scale = float(np.max(np.abs(target)))
    if scale == 0.0:
        return CheckResult("pair_diagonal_kernel", 0.0, tol)
    worst = 0.0
    for i in range(basis.size):
        for k in range(basis.size):
            worst = max(worst, float(np.max(np.abs(kernels.dvee(i, i, k, k) - target))) / scale)
    return CheckResult("pair_diagonal_kernel", worst, tol)


def check_tensor_symmetries(tensors: HamiltonianTensors, tol: float = 1e-10) -> CheckResult:
    return CheckResult("tensor_symmetries", max(tensors.symmetry_errors().values()), tol)


def car_error(m: int) -> float:
    """Largest coefficient deviation of ``{a_p, a_q^+} = delta_pq`` and ``{a_p, a_q} = 0``."""
    worst = 0.0
    ident = QubitOperator.identity(m)
    for p in range(m):
        ap = jordan_wigner(p, False, m)
        for q in range(m):
            aq = jordan_wigner(q, False, m)
            aqd = jordan_wigner(q, True, m)
            mixed = ap * aqd + aqd * ap
            target = ident if p == q else QubitOperator(m)
            worst = max(worst, mixed.max_difference(target), (ap * aq + aq * ap).max_difference(QubitOperator(m)))
    return worst


def check_car(m: int, tol: float = 1e-14) -> CheckResult:
    return CheckResult("car_algebra", car_error(m), tol)


def jw_fci_error(tensors: HamiltonianTensors, n: int) -> float:
    """Max deviation between the mapped Hamiltonian's N-sector block and the FCI matrix."""
    m = tensors.size
    basis = enumerate_basis(m, n)
    rows = [to_mask(b) for b in basis]
    dense = build_qubit_hamiltonian(tensors).to_matrix()
    block = dense[np.ix_(rows, rows)]
    return float(np.max(np.abs(block - hamiltonian_matrix(tensors, basis))))


def check_jw_fci(tensors: HamiltonianTensors, n: int, tol: float = 1e-10) -> CheckResult:
    return CheckResult("jw_vs_fci_matrix", jw_fci_error(tensors, n), tol)


def check_rdm_traces(rdms, n: int, name: str, tol: float = 1e-10) -> CheckResult:
    errs = rdms.invariant_errors(n)
    return CheckResult(name, max(errs["rho_trace"], errs["gamma_trace"]), tol)


def check_rdm_energy(rdms, tensors: HamiltonianTensors, psi: np.ndarray, tol: float = 1e-10) -> CheckResult:
    direct = build_qubit_hamiltonian(tensors).expectation(psi).real
    return CheckResult("rdm_energy_trace", abs(energy_from_rdms(rdms, tensors) - direct), tol)


# -- suite ---------------------------------------------------------------------


def run_checks(config: RunConfig, gram_tol: float = 1e-3, with_vqe: bool = True) -> list[CheckResult]:
    """Run the invariant suite on the first outer iteration of ``config``.

    Args:
        config: run configuration; its seed also picks the sampled cells.
        gram_tol: orthonormality tolerance. The Gram error is a quadrature
            error and shrinks with the grid spacing.
        with_vqe: also minimize with the VQE and check its RDMs.
    """
    from .driver import stage_basis, stage_dft, stage_tensors, stage_vqe

    rng = np.random.default_rng(config.seed)
    n = config.system.n_electrons
    ks = stage_dft(config)
    basis = stage_basis(config, ks.density)
    tensors = stage_tensors(config, basis)
    kernels = DerivativeKernels(basis, config.v_ext(basis.grid), config.kernel())
    cells = sample_cells(basis, N_CELLS + 1, rng)
    results = [
        check_orthonormality(basis, gram_tol),
        check_tensor_symmetries(tensors),
        check_phase_derivative(basis, cells),
        check_dvext(basis, kernels, cells[:-1]),
        check_dvee(basis, kernels, cells[:-1]),
        check_pair_diagonal(basis, kernels),
        check_car(basis.size),
        check_jw_fci(tensors, n),
    ]
    fci = solve_ground(tensors, basis.size, n)
    results.append(check_rdm_traces(fci.rdms, n, "fci_rdm_traces"))
    if with_vqe:
        vqe = stage_vqe(config, tensors)
        results.append(check_rdm_traces(vqe.rdms, n, "vqe_rdm_traces"))
        psi = prepare_state(Ansatz.zeros(basis.size, n, config.vqe.layers).with_parameters(vqe.parameters))
        results.append(check_rdm_energy(vqe.rdms, tensors, psi))
        results.append(CheckResult("vqe_vs_fci_energy", abs(vqe.energy - fci.ground_energy), 1e-6))
    for r in results:
        log.info(r.line())
    return results

