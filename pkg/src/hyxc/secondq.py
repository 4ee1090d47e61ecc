"""Occupation combinatorics, Pauli-string algebra and the Jordan-Wigner map.

Conventions
-----------
A Pauli word on ``M`` qubits is stored as a pair of bit masks ``(x, z)``;
the pair denotes ``i^{|x & z|} X^x Z^z`` so that a set bit in both masks is a
``Y``. Qubit ``q`` (= basis orbital ``q``) lives on bit ``M - 1 - q``, which
makes the occupation string ``"1100"`` equal to the statevector index
``0b1100``. Qubit state ``|1>`` means the orbital is occupied.
"""

from __future__ import annotations

import math
from functools import lru_cache
from pathlib import Path

import numpy as np

DROP_TOL = 1e-14

_SUPERSCRIPT = str.maketrans("0123456789-", "⁰¹²³⁴⁵⁶⁷⁸⁹⁻")


def count_configurations(m: int, n: int) -> int:
    """Number of ``n``-electron occupation vectors over ``m`` orbitals (exact)."""
    if not 0 <= n <= m:
        raise ValueError(f"need 0 <= N <= M, got N={n}, M={m}")
    return math.comb(m, n)


def format_count(value: int, digits: int = 3) -> str:
    """Scientific notation with a unicode exponent, e.g. ``1.26×10¹⁴``."""
    mant, exp = f"{value:.{digits - 1}e}".split("e")
    return f"{mant}×10{str(int(exp)).translate(_SUPERSCRIPT)}"


def _popcount(a):
    return np.bitwise_count(a) if isinstance(a, np.ndarray) else int(a).bit_count()


def _product_phase(x1: int, z1: int, x2: int, z2: int) -> complex:
    """Phase of ``P(x1,z1) P(x2,z2) = phase * P(x1^x2, z1^z2)``."""
    x3, z3 = x1 ^ x2, z1 ^ z2
    e = _popcount(x1 & z1) + _popcount(x2 & z2) + 2 * _popcount(z1 & x2) - _popcount(x3 & z3)
    return 1j ** (e % 4)


class QubitOperator:
    """Linear combination of Pauli words, kept simplified.

    Terms with ``|coeff| < 1e-14`` are dropped whenever an operator is built.
    """

    __slots__ = ("n_qubits", "terms")

    def __init__(self, n_qubits: int, terms: dict | None = None):
        self.n_qubits = int(n_qubits)
        self.terms: dict[tuple[int, int], complex] = {}
        for key, c in (terms or {}).items():
            if abs(c) >= DROP_TOL:
                self.terms[key] = complex(c)

    # -- construction -----------------------------------------------------
    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> QubitOperator:
        return cls(n_qubits, {(0, 0): coeff})

    @classmethod
    def from_word(cls, word: str, coeff: complex = 1.0) -> QubitOperator:
        m = len(word)
        x = z = 0
        for q, ch in enumerate(word.upper()):
            bit = 1 << (m - 1 - q)
            if ch in "XY":
                x |= bit
            if ch in "ZY":
                z |= bit
            if ch not in "IXYZ":
                raise ValueError(f"bad Pauli letter {ch!r}")
        return cls(m, {(x, z): coeff})

    def word(self, key: tuple[int, int]) -> str:
        x, z = key
        out = []
        for q in range(self.n_qubits):
            bit = 1 << (self.n_qubits - 1 - q)
            out.append("IXZY"[bool(x & bit) + 2 * bool(z & bit)])
        return "".join(out)

    def items(self):
        """``(coeff, word)`` pairs in a deterministic order."""
        return [(self.terms[k], self.word(k)) for k in sorted(self.terms)]

    # -- algebra ----------------------------------------------------------
    def _check(self, other: QubitOperator):
        if other.n_qubits != self.n_qubits:
            raise ValueError(f"qubit count mismatch: {self.n_qubits} vs {other.n_qubits}")

    def __add__(self, other):
        if not isinstance(other, QubitOperator):
            return self + QubitOperator.identity(self.n_qubits, other)
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return QubitOperator(self.n_qubits, out)

    __radd__ = __add__

    def __neg__(self):
        return QubitOperator(self.n_qubits, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, QubitOperator):
            return QubitOperator(self.n_qubits, {k: c * other for k, c in self.terms.items()})
        self._check(other)
        out: dict = {}
        for (x1, z1), c1 in self.terms.items():
            for (x2, z2), c2 in other.terms.items():
                key = (x1 ^ x2, z1 ^ z2)
                out[key] = out.get(key, 0.0) + c1 * c2 * _product_phase(x1, z1, x2, z2)
        return QubitOperator(self.n_qubits, out)

    def __rmul__(self, scalar):
        return self * scalar

    def adjoint(self) -> QubitOperator:
        # every Pauli word is Hermitian
        return QubitOperator(self.n_qubits, {k: np.conj(c) for k, c in self.terms.items()})

    def is_zero(self, tol: float = DROP_TOL) -> bool:
        return all(abs(c) < tol for c in self.terms.values())

    def max_difference(self, other: QubitOperator) -> float:
        diff = (self - other).terms.values()
        return max((abs(c) for c in diff), default=0.0)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= tol for c in self.terms.values())

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        body = " + ".join(f"({c.real:.6g}{c.imag:+.6g}j) {w}" for c, w in self.items()[:6])
        more = "" if len(self) <= 6 else f" + ... ({len(self)} terms)"
        return f"QubitOperator({body or '0'}{more})"

    # -- action on statevectors ------------------------------------------
    def _arrays(self):
        keys = list(self.terms)
        x = np.array([k[0] for k in keys], dtype=np.int64)
        z = np.array([k[1] for k in keys], dtype=np.int64)
        c = np.array([self.terms[k] for k in keys], dtype=complex)
        c = c * 1j ** (np.bitwise_count(x & z).astype(np.int64) % 4)
        return x, z, c

    def apply(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        if psi.size != 1 << self.n_qubits:
            raise ValueError(f"statevector has {psi.size} amplitudes, expected {1 << self.n_qubits}")
        idx = np.arange(psi.size, dtype=np.int64)
        out = np.zeros_like(psi)
        for x, z, c in zip(*self._arrays()):
            sign = 1 - 2 * (np.bitwise_count(idx & z).astype(np.int64) & 1)
            out[idx ^ x] += c * sign * psi
        return out

    def expectation(self, psi: np.ndarray) -> complex:
        """``<psi|O|psi>``, evaluated term by term without forming the matrix."""
        psi = np.asarray(psi, dtype=complex)
        if psi.size != 1 << self.n_qubits:
            raise ValueError(f"statevector has {psi.size} amplitudes, expected {1 << self.n_qubits}")
        if not self.terms:
            return 0.0 + 0.0j
        idx = np.arange(psi.size, dtype=np.int64)
        x, z, c = self._arrays()
        sign = 1 - 2 * (np.bitwise_count(idx[None, :] & z[:, None]).astype(np.int64) & 1)
        amp = np.conj(psi[idx[None, :] ^ x[:, None]]) * sign * psi[None, :]
        return complex(c @ amp.sum(axis=1))

    def to_matrix(self) -> np.ndarray:
        dim = 1 << self.n_qubits
        mat = np.zeros((dim, dim), dtype=complex)
        idx = np.arange(dim, dtype=np.int64)
        for x, z, c in zip(*self._arrays()):
            sign = 1 - 2 * (np.bitwise_count(idx & z).astype(np.int64) & 1)
            mat[idx ^ x, idx] += c * sign
        return mat

    # -- persistence ------------------------------------------------------
    def dump(self, path) -> Path:
        """Text lines ``coeff_re coeff_im word``."""
        path = Path(path)
        lines = [f"{c.real:.17g} {c.imag:.17g} {w}" for c, w in self.items()]
        path.write_text("\n".join(lines) + ("\n" if lines else ""))
        return path

    @classmethod
    def load(cls, path, n_qubits: int | None = None) -> QubitOperator:
        op = None
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            re_, im_, word = line.split()
            term = cls.from_word(word, complex(float(re_), float(im_)))
            op = term if op is None else op + term
        if op is None:
            if n_qubits is None:
                raise ValueError(f"{path} is empty and no qubit count was given")
            return cls(n_qubits)
        return op


@lru_cache(maxsize=None)
def jordan_wigner(mode: int, dagger: bool, m: int) -> QubitOperator:
    """``a_p -> Z_0 ... Z_{p-1} (X_p + i Y_p)/2``; the creator takes ``- i Y_p``."""
    if not 0 <= mode < m:
        raise ValueError(f"mode {mode} out of range for {m} orbitals")
    bit = 1 << (m - 1 - mode)
    zstring = sum(1 << (m - 1 - q) for q in range(mode))
    s = -1.0 if dagger else 1.0
    ladder = QubitOperator(m, {(bit, 0): 0.5, (bit, bit): 0.5j * s})
    return QubitOperator(m, {(0, zstring): 1.0}) * ladder


@lru_cache(maxsize=None)
def excitation(i: int, j: int, m: int) -> QubitOperator:
    """``E_ij = a_i^+ a_j``."""
    return jordan_wigner(i, True, m) * jordan_wigner(j, False, m)


def number_operator(m: int) -> QubitOperator:
    total = QubitOperator(m)
    for i in range(m):
        total = total + excitation(i, i, m)
    return total


def _accumulate(acc: dict, op: QubitOperator, coeff: complex):
    for k, c in op.terms.items():
        acc[k] = acc.get(k, 0.0) + coeff * c


def build_qubit_hamiltonian(tensors, tol: float = 1e-8) -> QubitOperator:
    """``sum h_ij a_i^+ a_j + 1/2 sum v_ijkl a_i^+ a_k^+ a_l a_j`` mapped to Pauli words.

    Uses ``a_i^+ a_k^+ a_l a_j = E_ij E_kl - delta_jk E_il``.

    Raises:
        ValueError: if the tensors violate Hermiticity or index symmetry.
    """
    tensors.check(tol)
    h = tensors.one_body
    v = tensors.v_ee
    m = h.shape[0]
    acc: dict = {}
    for i in range(m):
        for j in range(m):
            if abs(h[i, j]) >= DROP_TOL:
                _accumulate(acc, excitation(i, j, m), h[i, j])
    for i, j, k, l in zip(*np.nonzero(np.abs(v) >= DROP_TOL)):
        c = 0.5 * v[i, j, k, l]
        _accumulate(acc, excitation(i, j, m) * excitation(k, l, m), c)
        if j == k:
            _accumulate(acc, excitation(i, l, m), -c)
    op = QubitOperator(m, acc)
    if not op.is_hermitian(1e-10):
        raise ValueError("assembled qubit Hamiltonian is not Hermitian")
    # drop the round-off imaginary parts of Hermitian words
    return QubitOperator(m, {k: c.real for k, c in op.terms.items()})


def pair_index(m: int) -> list[tuple[int, int]]:
    """Ordered pairs ``(a, b)`` with ``a < b``: the independent rows of the pair matrix."""
    return [(a, b) for a in range(m) for b in range(a + 1, m)]


def _hermitian_parts(op: QubitOperator):
    adj = op.adjoint()
    re = (op + adj) * 0.5
    im = (op - adj) * (-0.5j)
    return re, im


@lru_cache(maxsize=None)
def rdm_observables(m: int) -> tuple[tuple[str, QubitOperator], ...]:
    """Hermitian observables whose expectations fix every independent RDM entry.

    One-body: ``rho[i,i]`` and ``rho[i,j].re/.im`` for ``i < j``.
    Two-body: over creation pairs ``(i<k)`` and annihilation pairs ``(j<l)``,
    ``gamma[i,j,k,l] = <a_i^+ a_k^+ a_l a_j>`` is Hermitian as a pair matrix,
    so its diagonal and the real and imaginary parts of its upper triangle
    suffice; the remaining entries follow from fermionic antisymmetry.
    """
    if m < 1:
        raise ValueError("need at least one orbital")
    out: list[tuple[str, QubitOperator]] = []
    for i in range(m):
        out.append((f"rho[{i},{i}]", excitation(i, i, m)))
        for j in range(i + 1, m):
            re, im = _hermitian_parts(excitation(i, j, m))
            out.append((f"rho[{i},{j}].re", re))
            out.append((f"rho[{i},{j}].im", im))
    pairs = pair_index(m)
    for a, (i, k) in enumerate(pairs):
        for b in range(a, len(pairs)):
            j, l = pairs[b]
            op = jordan_wigner(i, True, m) * jordan_wigner(k, True, m) * jordan_wigner(l, False, m) * jordan_wigner(j, False, m)
            if a == b:
                out.append((f"gamma[{i},{j},{k},{l}]", op))
            else:
                re, im = _hermitian_parts(op)
                out.append((f"gamma[{i},{j},{k},{l}].re", re))
                out.append((f"gamma[{i},{j},{k},{l}].im", im))
    return tuple(out)
