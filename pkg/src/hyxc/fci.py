"""Exact diagonalization in the N-particle occupation basis.

Occupation vectors are tuples of 0/1 per orbital. Internally each is a bit
mask with orbital ``q`` on bit ``M - 1 - q``, the same layout as the qubit
statevector, and ``a_i`` carries the sign ``(-1)^{sum_{q<i} n_q}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg

from .rdm import RdmPair
from .secondq import count_configurations

DEFAULT_CAP = 10**6


class BasisTooLarge(ValueError):
    pass


def enumerate_basis(m: int, n: int, cap: int = DEFAULT_CAP) -> list[tuple[int, ...]]:
    """All ``C(m, n)`` occupation vectors, lexicographic in the occupied-orbital lists."""
    size = count_configurations(m, n)
    if size > cap:
        raise BasisTooLarge(f"C({m},{n}) = {size} exceeds the cap of {cap}")
    out = []
    for occ in combinations(range(m), n):
        bits = [0] * m
        for q in occ:
            bits[q] = 1
        out.append(tuple(bits))
    return out


def to_mask(bits) -> int:
    return int("".join(str(b) for b in bits) or "0", 2)


def _ladder(masks, mode: int, dagger: bool, m: int):
    """Apply ``a_mode`` (or its adjoint) to an array of masks: new masks, signs, validity."""
    bit = np.int64(1) << (m - 1 - mode)
    occupied = (masks & bit) != 0
    valid = ~occupied if dagger else occupied
    parity = np.bitwise_count(masks >> (m - mode)).astype(np.int64) & 1
    return masks ^ bit, 1 - 2 * parity, valid


def _apply_string(masks, ops, m):
    """Apply a product of ladder operators, rightmost first."""
    sign = np.ones(masks.shape, dtype=np.int64)
    valid = np.ones(masks.shape, dtype=bool)
    for mode, dagger in reversed(ops):
        masks, s, v = _ladder(masks, mode, dagger, m)
        sign *= s
        valid &= v
    return masks, sign, valid


class _Sector:
    def __init__(self, basis):
        self.m = len(basis[0])
        self.masks = np.array([to_mask(b) for b in basis], dtype=np.int64)
        self._order = np.argsort(self.masks)
        self._sorted = self.masks[self._order]

    def index(self, masks):
        return self._order[np.searchsorted(self._sorted, masks)]

    def action(self, ops):
        """Columns, rows and signs of a number-conserving operator string."""
        new, sign, valid = _apply_string(self.masks, ops, self.m)
        cols = np.nonzero(valid)[0]
        return cols, self.index(new[cols]), sign[cols]


def _one_body_ops(i, j):
    return [(i, True), (j, False)]


def _two_body_ops(i, j, k, l):
    return [(i, True), (k, True), (l, False), (j, False)]


def hamiltonian_matrix(tensors, basis) -> np.ndarray:
    """``<beta| H |alpha>`` by direct application of ladder strings to the basis."""
    sector = _Sector(basis)
    m = sector.m
    if tensors.size != m:
        raise ValueError(f"tensors are {tensors.size}-orbital, basis is {m}-orbital")
    h = tensors.one_body
    v = tensors.v_ee
    p = len(basis)
    mat = np.zeros((p, p), dtype=complex)
    for i in range(m):
        for j in range(m):
            if h[i, j] != 0:
                cols, rows, sign = sector.action(_one_body_ops(i, j))
                np.add.at(mat, (rows, cols), h[i, j] * sign)
    for i, j, k, l in zip(*np.nonzero(v)):
        if i == k or j == l:
            continue
        cols, rows, sign = sector.action(_two_body_ops(i, j, k, l))
        np.add.at(mat, (rows, cols), 0.5 * v[i, j, k, l] * sign)
    return mat


def _expect(sector, c, ops):
    cols, rows, sign = sector.action(ops)
    return np.sum(np.conj(c[rows]) * sign * c[cols])


def rdms_from_coefficients(basis, c) -> RdmPair:
    sector = _Sector(basis)
    m = sector.m
    rho = np.zeros((m, m), dtype=complex)
    gam = np.zeros((m,) * 4, dtype=complex)
    for i in range(m):
        for j in range(m):
            rho[i, j] = _expect(sector, c, _one_body_ops(i, j))
    for i in range(m):
        for k in range(m):
            if i == k:
                continue
            for j in range(m):
                for l in range(m):
                    if j != l:
                        gam[i, j, k, l] = _expect(sector, c, _two_body_ops(i, j, k, l))
    return RdmPair(rho, gam).symmetrized()


@dataclass(frozen=True, eq=False)
class FciSolution:
    basis: list
    ground_energy: float
    coefficients: np.ndarray
    rdms: RdmPair
    energies: np.ndarray

    @property
    def n_electrons(self) -> int:
        return int(sum(self.basis[0]))


def solve_ground(tensors, m: int, n: int, cap: int = DEFAULT_CAP) -> FciSolution:
    """Lowest eigenpair of the ``n``-electron Hamiltonian and its RDMs."""
    basis = enumerate_basis(m, n, cap)
    mat = hamiltonian_matrix(tensors, basis)
    dev = float(np.max(np.abs(mat - mat.conj().T)))
    if dev > 1e-10:
        raise ValueError(f"N-sector Hamiltonian is not Hermitian (max deviation {dev:.3e})")
    evals, evecs = scipy.linalg.eigh(0.5 * (mat + mat.conj().T))
    c = evecs[:, 0]
    j = int(np.argmax(np.abs(c)))
    c = c * (abs(c[j]) / c[j])
    return FciSolution(basis, float(evals[0]), c, rdms_from_coefficients(basis, c), evals)
