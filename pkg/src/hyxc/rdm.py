"""Reduced density matrices and the energy trace formula."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


def symmetrize_gamma(g: np.ndarray) -> np.ndarray:
    """Project onto fermionic antisymmetry and pair-matrix Hermiticity."""
    g = 0.25 * (g - g.transpose(2, 1, 0, 3) - g.transpose(0, 3, 2, 1) + g.transpose(2, 3, 0, 1))
    return 0.5 * (g + g.transpose(1, 0, 3, 2).conj())


@dataclass(frozen=True, eq=False)
class RdmPair:
    """``rho1[i, j] = <a_i^+ a_j>`` and ``gamma2[i, j, k, l] = <a_i^+ a_k^+ a_l a_j>``."""

    rho1: np.ndarray
    gamma2: np.ndarray

    @property
    def size(self) -> int:
        return self.rho1.shape[0]

    def symmetrized(self) -> RdmPair:
        return RdmPair(0.5 * (self.rho1 + self.rho1.conj().T), symmetrize_gamma(self.gamma2))

    def invariant_errors(self, n_electrons: int) -> dict[str, float]:
        r, g = self.rho1, self.gamma2
        n = n_electrons
        return {
            "rho_hermitian": float(np.max(np.abs(r - r.conj().T))),
            "rho_trace": float(abs(np.trace(r) - n)),
            "gamma_trace": float(abs(np.einsum("iikk->", g) - n * (n - 1))),
            "gamma_swap_creation": float(np.max(np.abs(g + g.transpose(2, 1, 0, 3)))),
            "gamma_swap_annihilation": float(np.max(np.abs(g + g.transpose(0, 3, 2, 1)))),
        }

    def check(self, n_electrons: int, tol: float = 1e-10) -> None:
        bad = {k: e for k, e in self.invariant_errors(n_electrons).items() if e > tol}
        if bad:
            raise ValueError(f"RDM invariants violated: {bad}")


def energy_from_rdms(rdms: RdmPair, tensors) -> float:
    """``sum (t + v_ext)_ij rho_ij + 1/2 sum v_ijkl gamma_ijkl``."""
    if rdms.size != tensors.size:
        raise ValueError(f"RDMs are {rdms.size}-orbital, tensors {tensors.size}-orbital")
    e = np.sum(tensors.one_body * rdms.rho1) + 0.5 * np.sum(tensors.v_ee * rdms.gamma2)
    if abs(e.imag) > 1e-8 * max(1.0, abs(e.real)):
        log.warning("energy trace has imaginary part %.3e", e.imag)
    return float(e.real)
