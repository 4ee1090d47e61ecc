"""Second-quantized Hamiltonian tensors in a ZM basis and their density derivatives.

All ZM pair products depend on the density and the wavevector difference
only: ``conj(phi_i) phi_j = rho exp(i q.f) / N`` with ``q = k_j - k_i``. The
routines below therefore loop over distinct ``q`` rather than index tuples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import Field, InteractionKernel, apply_kernel
from .ks import kernel_cache
from .zm import PhaseDerivative, ZmOrbitalSet, phase_functional_derivative

DEFAULT_BUDGET = 1e10


class ResourceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class HamiltonianTensors:
    """One-body ``t``, ``v_ext`` (M x M) and two-body ``v_ee`` (M^4), in hartree.

    ``v_ee[i, j, k, l]`` multiplies ``a_i^+ a_k^+ a_l a_j``.
    """

    t: np.ndarray
    v_ext: np.ndarray
    v_ee: np.ndarray
    basis_id: str = ""

    @property
    def size(self) -> int:
        return self.t.shape[0]

    @property
    def one_body(self) -> np.ndarray:
        return self.t + self.v_ext

    def symmetry_errors(self) -> dict[str, float]:
        v = self.v_ee
        return {
            "t_hermitian": float(np.max(np.abs(self.t - self.t.conj().T), initial=0.0)),
            "vext_hermitian": float(np.max(np.abs(self.v_ext - self.v_ext.conj().T), initial=0.0)),
            "vee_pair_swap": float(np.max(np.abs(v - v.transpose(2, 3, 0, 1)), initial=0.0)),
            "vee_conjugate": float(np.max(np.abs(v - v.transpose(1, 0, 3, 2).conj()), initial=0.0)),
        }

    def check(self, tol: float = 1e-8) -> None:
        bad = {k: e for k, e in self.symmetry_errors().items() if e > tol}
        if bad:
            raise ValueError(f"tensor symmetry violated: {bad}")

    def dump(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        return [
            write_tensor(self.t, directory / "t.bin"),
            write_tensor(self.v_ext, directory / "vext.bin"),
            write_tensor(self.v_ee, directory / "vee.bin"),
        ]

    @classmethod
    def load(cls, directory) -> HamiltonianTensors:
        directory = Path(directory)
        return cls(
            read_tensor(directory / "t.bin", rank=2),
            read_tensor(directory / "vext.bin", rank=2),
            read_tensor(directory / "vee.bin", rank=4),
        )


_MAGIC = b"HYXCT1"
_DTYPE_TAG = b"<c16"


def write_tensor(arr: np.ndarray, path) -> Path:
    """Binary dump: ``HYXCT1``, uint32 M, 4-byte dtype tag, row-major complex128 payload."""
    path = Path(path)
    a = np.ascontiguousarray(arr, dtype="<c16")
    with path.open("wb") as fh:
        fh.write(_MAGIC + struct.pack("<I", a.shape[0]) + _DTYPE_TAG)
        fh.write(a.tobytes(order="C"))
    return path


def read_tensor(path, rank: int | None = None) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:6] != _MAGIC or raw[10:14] != _DTYPE_TAG:
        raise ValueError(f"{path} is not a hyxc tensor dump")
    (m,) = struct.unpack("<I", raw[6:10])
    data = np.frombuffer(raw[14:], dtype="<c16").astype(complex)
    if rank is None:
        rank = int(round(np.log(data.size) / np.log(m))) if m > 1 else 2
    if data.size != m**rank:
        raise ValueError(f"{path}: payload has {data.size} entries, expected {m}**{rank}")
    return data.reshape((m,) * rank)


def _distinct_q(basis: ZmOrbitalSet):
    """Map every ordered pair (i, j) to an index into the list of distinct ``k_j - k_i``."""
    k = basis.wavevectors
    m = len(k)
    qs: dict[tuple, int] = {}
    index = np.empty((m, m), dtype=int)
    for i in range(m):
        for j in range(m):
            q = tuple(int(c) for c in k[j] - k[i])
            index[i, j] = qs.setdefault(q, len(qs))
    return [np.array(q) for q in qs], index


def kinetic_matrix(basis: ZmOrbitalSet) -> np.ndarray:
    """``t_kj = <phi_k| -1/2 lap |phi_j>``.

    Evaluated in summation-by-parts form, ``1/2 sum_edges w conj(D phi_k) D phi_j``
    with forward differences along each axis. For orbitals that vanish on the
    box boundary this equals the central-difference Laplacian form exactly;
    it is Hermitian by construction.
    """
    grid = basis.grid
    phi = np.array([o.values for o in basis.orbitals])
    m = len(phi)
    t = np.zeros((m, m), dtype=complex)
    for ax, h in enumerate(grid.spacing):
        d = np.diff(phi, axis=ax + 1) / h
        w = np.ones(())
        for other in range(grid.dim):
            wo = np.full(grid.points_per_axis - 1, h) if other == ax else grid.axis_weights[other]
            w = np.multiply.outer(w, wo)
        dm = d.reshape(m, -1)
        t += 0.5 * (dm.conj() * w.ravel()) @ dm.T
    return 0.5 * (t + t.conj().T)


def external_matrix(basis: ZmOrbitalSet, v_ext1: Field, route: str = "density") -> np.ndarray:
    """``v_ij = (1/N) int rho exp(i xi_ji) v`` (``route='density'``) or ``<phi_i|v|phi_j>`` (``'orbital'``)."""
    w = basis.grid.weights
    v = v_ext1.values
    m = basis.size
    if route == "orbital":
        phi = np.array([o.values.ravel() for o in basis.orbitals])
        return (phi.conj() * (w * v).ravel()) @ phi.T
    if route != "density":
        raise ValueError(f"unknown route {route!r}")
    qs, index = _distinct_q(basis)
    vals = np.array([np.sum(w * basis.pair_density(q) * v) for q in qs])
    return vals[index]


class _PairPotentials:
    """``U_q(r) = int w(r, r') rho(r') exp(i q.f(r')) dr'`` for each distinct q, cached."""

    def __init__(self, basis: ZmOrbitalSet, kernel: InteractionKernel):
        self.basis = basis
        self.kernel = kernel
        self.kmat = kernel_cache(basis.grid, kernel)
        self._cache: dict[tuple, np.ndarray] = {}

    def __call__(self, q) -> np.ndarray:
        key = tuple(int(c) for c in q)
        if key not in self._cache:
            b = self.basis
            dens = b.source_density.values * b.phase_factor(q)
            self._cache[key] = apply_kernel(b.grid, self.kmat, dens)
        return self._cache[key]


def ee_tensor(basis: ZmOrbitalSet, kernel: InteractionKernel, budget: float = DEFAULT_BUDGET) -> np.ndarray:
    """``v_ijkl = (1/N^2) iint rho(r') e^{i xi_ji(r')} w(r', r'') rho(r'') e^{i xi_lk(r'')}``.

    The kernel is contracted once per distinct wavevector difference; raises
    ``ResourceError`` when ``M^4 * G`` exceeds ``budget``.
    """
    m = basis.size
    g = basis.grid.size
    if float(m) ** 4 * g > budget:
        raise ResourceError(f"M^4 * G = {float(m) ** 4 * g:.3g} exceeds budget {budget:.3g}")
    qs, index = _distinct_q(basis)
    pots = _PairPotentials(basis, kernel)
    w = basis.grid.weights.ravel()
    n = basis.n_electrons
    left = np.array([(basis.source_density.values * basis.phase_factor(q)).ravel() * w for q in qs])
    right = np.array([pots(q).ravel() for q in qs])
    s = left @ right.T / n**2
    s = 0.5 * (s + s.T)  # kernel symmetry, exact up to rounding
    return s[index[:, :, None, None], index[None, None, :, :]]


def build_tensors(basis: ZmOrbitalSet, v_ext1: Field, kernel: InteractionKernel,
                  budget: float = DEFAULT_BUDGET) -> HamiltonianTensors:
    return HamiltonianTensors(
        kinetic_matrix(basis),
        external_matrix(basis, v_ext1),
        ee_tensor(basis, kernel, budget),
        basis.basis_id,
    )


@dataclass(eq=False)
class DerivativeKernels:
    """Density derivatives of the ZM matrix elements, generated on demand.

    ``dvext(i, j)`` is the derivative of ``v_ij^ext`` and ``dvee(i, j, k, l)``
    that of ``v_ijkl^ee``; both are arrays over the grid and are cached by
    wavevector difference.
    """

    basis: ZmOrbitalSet
    v_ext1: Field
    kernel: InteractionKernel
    _pots: _PairPotentials | None = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._pots = _PairPotentials(self.basis, self.kernel)

    @property
    def basis_id(self) -> str:
        return self.basis.basis_id

    def _derivative(self, q) -> PhaseDerivative:
        return phase_functional_derivative(self.basis.phase, q)

    def dvext_q(self, q) -> np.ndarray:
        key = ("ext", tuple(int(c) for c in q))
        if key not in self._cache:
            b = self.basis
            n = b.n_electrons
            e = b.phase_factor(q)
            v = self.v_ext1.values
            out = e * v / n
            if np.any(q):
                out = out + 1j / n * self._derivative(q).adjoint(b.source_density.values * e * v)
            self._cache[key] = out
        return self._cache[key]

    def dvext(self, i: int, j: int) -> np.ndarray:
        return self.dvext_q(self.basis.k_diff(i, j))

    def vee_half(self, q1, q2) -> np.ndarray:
        """``V_ijkl(r)`` for ``q1 = k_j - k_i`` and ``q2 = k_l - k_k``."""
        key = ("ee", tuple(int(c) for c in q1), tuple(int(c) for c in q2))
        if key not in self._cache:
            b = self.basis
            n = b.n_electrons
            e1 = b.phase_factor(q1)
            u2 = self._pots(q2)
            out = e1 * u2
            if np.any(q1):
                out = out + 1j * self._derivative(q1).adjoint(b.source_density.values * e1 * u2)
            self._cache[key] = out / n**2
        return self._cache[key]

    def dvee(self, i: int, j: int, k: int, l: int) -> np.ndarray:
        b = self.basis
        q1, q2 = b.k_diff(i, j), b.k_diff(k, l)
        return self.vee_half(q1, q2) + self.vee_half(q2, q1)


def dvext_kernel(basis: ZmOrbitalSet, v_ext1: Field, i: int, j: int) -> Field:
    """Density derivative of ``v_ij^ext`` as a field."""
    return Field(basis.grid, DerivativeKernels(basis, v_ext1, InteractionKernel()).dvext(i, j))


def dvee_kernel(basis: ZmOrbitalSet, kernel: InteractionKernel, i: int, j: int, k: int, l: int,
                budget: float = DEFAULT_BUDGET) -> Field:
    """Density derivative of ``v_ijkl^ee`` as a field."""
    if float(basis.size) ** 4 * basis.grid.size > budget:
        raise ResourceError("dvee_kernel exceeds the configured budget")
    zero = Field(basis.grid, np.zeros(basis.grid.shape), "potential")
    return Field(basis.grid, DerivativeKernels(basis, zero, kernel).dvee(i, j, k, l))


def random_tensors(m: int, rng: np.random.Generator, scale: float = 1.0) -> HamiltonianTensors:
    """Complex tensors with every Hamiltonian symmetry, for cross-checks."""
    def herm(a):
        return 0.5 * (a + a.conj().T)

    def cplx(*shape):
        return rng.normal(size=shape) + 1j * rng.normal(size=shape)

    v = cplx(m, m, m, m)
    v = 0.5 * (v + v.transpose(2, 3, 0, 1))
    v = 0.5 * (v + v.transpose(1, 0, 3, 2).conj())
    return HamiltonianTensors(scale * herm(cplx(m, m)), scale * herm(cplx(m, m)), scale * v, "random")
