"""Real-space Kohn-Sham solver: potentials, dense diagonalization, Aufbau, SCF."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .grid import (
    Field,
    Grid,
    InteractionKernel,
    apply_kernel,
    integrate,
    kernel_matrix,
    laplacian_matrix,
)

log = logging.getLogger(__name__)


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class KsState:
    orbitals: tuple[Field, ...]
    eigenvalues: np.ndarray
    occupations: np.ndarray
    density: Field | None = None
    converged: bool = True
    history: tuple[tuple[int, float, float], ...] = ()

    @property
    def n_electrons(self) -> int:
        return int(round(float(np.sum(self.occupations))))

    def iteration_log_csv(self) -> str:
        rows = ["iter,max_abs_drho,total_energy"]
        rows += [f"{i},{d:.17g},{e:.17g}" for i, d, e in self.history]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class EnergyBreakdown:
    t_ks: float
    e_ext: float
    e_hartree: float
    e_xc: float
    many_body_total: float = float("nan")

    @property
    def total(self) -> float:
        return self.t_ks + self.e_ext + self.e_hartree + self.e_xc


class _KernelCache:
    """Memoizes the dense interaction matrix for the most recent (grid, kernel)."""

    def __init__(self):
        self._key = None
        self._mat = None

    def __call__(self, grid: Grid, kernel: InteractionKernel) -> np.ndarray:
        if self._key != (grid, kernel):
            self._mat = kernel_matrix(grid, kernel)
            self._key = (grid, kernel)
        return self._mat


kernel_cache = _KernelCache()


def hartree_potential(rho: Field, kernel: InteractionKernel) -> Field:
    """``v_H(r) = int w(r, r') rho(r') dr'`` by quadrature."""
    if rho.kind != "density":
        raise ValueError("hartree_potential expects a density field")
    if kernel.strength == 0.0:
        return Field(rho.grid, np.zeros(rho.grid.shape), "potential")
    kmat = kernel_cache(rho.grid, kernel)
    return Field(rho.grid, apply_kernel(rho.grid, kmat, rho.values), "potential")


def seed_xc(rho: Field, model: str = "none") -> Field:
    """Initial exchange-correlation potential: ``none`` or ``slater_x_3d``."""
    if model == "none":
        return Field(rho.grid, np.zeros(rho.grid.shape), "potential")
    if model == "slater_x_3d":
        if rho.grid.dim != 3:
            raise ValueError("slater_x_3d is only defined for 3D grids")
        return Field(rho.grid, -np.cbrt(3.0 * rho.values / math.pi), "potential")
    raise ValueError(f"unknown xc model {model!r}")


def seed_xc_energy(rho: Field, model: str = "none") -> float:
    if model == "none":
        return 0.0
    if model == "slater_x_3d":
        c = -0.75 * (3.0 / math.pi) ** (1.0 / 3.0)
        return c * float(np.sum(rho.grid.weights * rho.values ** (4.0 / 3.0)))
    raise ValueError(f"unknown xc model {model!r}")


def kinetic_matrix_grid(grid: Grid) -> np.ndarray:
    return -0.5 * laplacian_matrix(grid)


def ks_hamiltonian_matrix(grid: Grid, v_eff: Field) -> np.ndarray:
    """Dense ``-1/2 lap + v_eff`` on the interior nodes."""
    h = kinetic_matrix_grid(grid)
    h[np.diag_indices_from(h)] += np.real(v_eff.values[grid.interior])
    return h


def _interior_to_field(grid: Grid, vec: np.ndarray, kind="orbital") -> Field:
    full = np.zeros(grid.shape, dtype=vec.dtype)
    full[grid.interior] = vec
    return Field(grid, full, kind)


def diagonalize(grid: Grid, hmat: np.ndarray, n_states: int):
    """Lowest ``n_states`` eigenpairs of a dense interior-node Hamiltonian.

    Returns eigenvalues (ascending) and orbitals normalized under ``integrate``.
    """
    if n_states > hmat.shape[0]:
        raise ValueError(f"asked for {n_states} states on {hmat.shape[0]} interior nodes")
    try:
        evals, evecs = scipy.linalg.eigh(hmat, subset_by_index=(0, n_states - 1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"dense eigensolver failed: {exc}") from exc
    evecs = evecs / math.sqrt(grid.cell_volume)
    orbitals = []
    for k in range(n_states):
        v = evecs[:, k]
        # deterministic phase: largest-magnitude component real positive
        j = int(np.argmax(np.abs(v)))
        v = v * (np.abs(v[j]) / v[j])
        if not np.iscomplexobj(hmat):
            v = v.real
        orbitals.append(_interior_to_field(grid, v))
    return evals, tuple(orbitals)


def solve_ks(v_eff: Field, grid: Grid, n_states: int) -> KsState:
    """Lowest eigenpairs of ``-1/2 lap + v_eff`` (occupations left empty)."""
    evals, orbitals = diagonalize(grid, ks_hamiltonian_matrix(grid, v_eff), n_states)
    return KsState(orbitals, evals, np.zeros(n_states))


def fill_occupations(eigenvalues, n_electrons: int) -> np.ndarray:
    """Zero-temperature Aufbau; ties go to the lower index."""
    eps = np.asarray(eigenvalues, dtype=float)
    if n_electrons > eps.size:
        raise ValueError("more electrons than states")
    order = np.argsort(eps, kind="stable")
    f = np.zeros(eps.size)
    f[order[:n_electrons]] = 1.0
    return f


def build_density(orbitals, occupations) -> Field:
    grid = orbitals[0].grid
    rho = np.zeros(grid.shape)
    for f, psi in zip(occupations, orbitals):
        if f:
            rho += f * np.abs(psi.values) ** 2
    return Field(grid, rho, "density")


def kinetic_energy(orbitals, occupations) -> float:
    """``sum_i f_i <psi_i| -1/2 lap |psi_i>`` on the interior nodes."""
    grid = orbitals[0].grid
    t = 0.0
    tmat = None
    for f, psi in zip(occupations, orbitals):
        if not f:
            continue
        if tmat is None:
            tmat = kinetic_matrix_grid(grid)
        v = psi.values[grid.interior]
        t += f * float(np.real(np.vdot(v, tmat @ v))) * grid.cell_volume
    return t


def energy_breakdown(
    ks: KsState,
    v_ext: Field,
    kernel: InteractionKernel,
    xc_model: str = "none",
    e_xc: float | None = None,
    many_body_total: float = float("nan"),
) -> EnergyBreakdown:
    rho = ks.density
    t = kinetic_energy(ks.orbitals, ks.occupations)
    e_ext = float(integrate(rho * v_ext).real) if np.iscomplexobj(v_ext.values) else integrate(rho * v_ext)
    v_h = hartree_potential(rho, kernel)
    e_h = 0.5 * integrate(rho * v_h)
    if e_xc is None:
        e_xc = seed_xc_energy(rho, xc_model)
    return EnergyBreakdown(float(t), float(e_ext), float(e_h), float(e_xc), many_body_total)


def inner_scf(
    grid: Grid,
    v_ext: Field,
    kernel: InteractionKernel,
    n_electrons: int,
    xc: Field | str = "none",
    mixing: float = 0.3,
    tol: float = 1e-8,
    max_iter: int = 500,
    extra_operator: np.ndarray | None = None,
    initial_density: Field | None = None,
    n_states: int | None = None,
) -> KsState:
    """Self-consistent field loop with linear density mixing.

    ``xc`` is either a seed model name (re-evaluated from the current density)
    or a fixed potential field. ``extra_operator`` is a fixed dense
    interior-node matrix added to the Hamiltonian (the non-local kinetic
    correction in later outer iterations).

    Iterates until the largest pointwise density change is below ``tol``.
    Non-convergence is logged and flagged on the returned state.
    """
    if not 0.0 < mixing <= 1.0:
        raise ValueError("mixing must be in (0, 1]")
    n_states = n_states or min(n_electrons + 4, grid.n_interior)
    base = kinetic_matrix_grid(grid)
    if extra_operator is not None:
        base = base + extra_operator
    diag = np.diag_indices_from(base)

    def xc_potential(rho: Field) -> Field:
        if isinstance(xc, Field):
            return xc
        return seed_xc(rho, xc)

    def solve(rho_in: Field):
        v_eff = np.real(v_ext.values + hartree_potential(rho_in, kernel).values + xc_potential(rho_in).values)
        hmat = base.copy()
        hmat[diag] += v_eff[grid.interior]
        evals, orbitals = diagonalize(grid, hmat, n_states)
        occ = fill_occupations(evals, n_electrons)
        return evals, orbitals, occ, build_density(orbitals, occ)

    if initial_density is None:
        # start from the density of the Hartree-free problem
        rho = solve(Field(grid, np.zeros(grid.shape), "density"))[3]
    else:
        rho = initial_density
    history = []
    converged = False
    for it in range(1, max_iter + 1):
        evals, orbitals, occ, rho_out = solve(rho)
        drho = float(np.max(np.abs(rho_out.values - rho.values)))
        rho_new = Field(grid, (1.0 - mixing) * rho.values + mixing * rho_out.values, "density")
        state = KsState(orbitals, evals, occ, rho_out)
        e_xc = None if isinstance(xc, str) else float(integrate(rho_out * xc).real)
        energy = energy_breakdown(state, v_ext, kernel, xc if isinstance(xc, str) else "none", e_xc).total
        history.append((it, drho, energy))
        if drho < tol:
            converged = True
            rho = rho_out
            break
        rho = rho_new
    if not converged:
        log.warning(
            "inner SCF not converged after %d iterations; residuals %s",
            max_iter,
            [f"{d:.2e}" for _, d, _ in history[-5:]],
        )
        evals, orbitals, occ, rho = solve(rho)
    return KsState(orbitals, evals, occ, rho, converged, tuple(history))
