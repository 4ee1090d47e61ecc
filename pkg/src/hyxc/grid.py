"""Uniform box grids, fields sampled on them, quadrature and finite differences.

Every grid includes its boundary nodes. Fields that represent wavefunctions
vanish there (Dirichlet box), so dense operators act on the interior nodes
only while quadrature runs over the full grid with trapezoidal end weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

FIELD_KINDS = ("density", "potential", "orbital", "generic")


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product grid on a box in 1 or 3 dimensions.

    Args:
        dim: 1 or 3.
        extents: One ``(a1, a2)`` interval per axis, in bohr. A single pair is
            broadcast to every axis.
        points_per_axis: Number of nodes per axis, boundary nodes included.
    """

    dim: int
    extents: tuple[tuple[float, float], ...]
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise ValueError(f"dim must be 1 or 3, got {self.dim}")
        ext = self.extents
        if len(ext) == 2 and np.isscalar(ext[0]):
            ext = (tuple(ext),) * self.dim
        ext = tuple((float(a), float(b)) for a, b in ext)
        if len(ext) != self.dim:
            raise ValueError(f"expected {self.dim} extents, got {len(ext)}")
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be at least 2")
        for a, b in ext:
            if not b > a:
                raise ValueError(f"empty interval ({a}, {b})")
        object.__setattr__(self, "extents", ext)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def spacing(self) -> tuple[float, ...]:
        n = self.points_per_axis
        return tuple((b - a) / (n - 1) for a, b in self.extents)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    def axis(self, i: int) -> np.ndarray:
        a, b = self.extents[i]
        return np.linspace(a, b, self.points_per_axis)

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(self.axis(i) for i in range(self.dim))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to the grid shape (ij indexing)."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def axis_weights(self) -> tuple[np.ndarray, ...]:
        return tuple(trapezoid_weights(self.points_per_axis, h) for h in self.spacing)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weight of every node."""
        w = self.axis_weights[0]
        for wi in self.axis_weights[1:]:
            w = np.multiply.outer(w, wi)
        w.setflags(write=False)
        return w

    @cached_property
    def interior(self) -> np.ndarray:
        """Boolean mask of the non-boundary nodes."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.dim] = True
        mask.setflags(write=False)
        return mask

    @property
    def n_interior(self) -> int:
        return (self.points_per_axis - 2) ** self.dim

    def points(self) -> np.ndarray:
        """All node coordinates as a ``(size, dim)`` array in row-major order."""
        return np.stack([c.ravel() for c in self.coords], axis=1)

    def index_of(self, point) -> tuple[int, ...]:
        """Grid index of a point that lies on a node, else ``ValueError``."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.shape != (self.dim,):
            raise ValueError(f"point must have {self.dim} coordinates")
        idx = []
        for (a, _), h, x in zip(self.extents, self.spacing, point):
            t = (x - a) / h
            i = int(round(t))
            if abs(t - i) > 1e-9 or not 0 <= i < self.points_per_axis:
                raise ValueError(f"point {tuple(point)} is not a grid node")
            idx.append(i)
        return tuple(idx)


@dataclass(frozen=True, eq=False)
class Field:
    """Values sampled on every node of a grid.

    ``kind`` is one of ``density``, ``potential``, ``orbital`` or ``generic``.
    Density fields are stored real and non-negative; negative values at the
    level of rounding noise are clipped to zero, larger ones are rejected.
    """

    grid: Grid
    values: np.ndarray
    kind: str = "generic"

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        v = np.array(self.values, copy=True)
        if v.size != self.grid.size:
            raise ValueError(f"field has {v.size} values, grid has {self.grid.size} nodes")
        v = v.reshape(self.grid.shape)
        if self.kind == "density":
            if np.iscomplexobj(v):
                if np.abs(v.imag).max(initial=0.0) > 1e-12 * max(np.abs(v).max(initial=0.0), 1.0):
                    raise ValueError("density field has a non-negligible imaginary part")
                v = v.real
            v = v.astype(float)
            floor = -1e-12 * max(v.max(initial=0.0), 1e-300)
            if v.min(initial=0.0) < floor:
                raise ValueError(f"density field is negative (min {v.min():.3e})")
            v = np.maximum(v, 0.0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values, kind: str | None = None) -> Field:
        return Field(self.grid, values, self.kind if kind is None else kind)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other), "generic")

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other), "generic")

    def __mul__(self, other):
        return self.with_values(self.values * _vals(other), "generic")

    __rmul__ = __mul__


def _vals(x):
    return x.values if isinstance(x, Field) else x


@dataclass(frozen=True)
class InteractionKernel:
    """Pairwise electron-electron interaction ``strength * w(r, r')``.

    ``form`` is ``soft_coulomb1d`` (``1/sqrt(dx^2 + a^2)``) or ``coulomb3d``
    (``1/|r - r'|``). ``strength = 0`` gives the non-interacting limit.
    """

    form: str = "soft_coulomb1d"
    softening: float = 1.0
    strength: float = 1.0

    def __post_init__(self):
        if self.form not in ("soft_coulomb1d", "coulomb3d"):
            raise ValueError(f"unknown kernel form {self.form!r}")
        if self.form == "soft_coulomb1d" and not self.softening > 0:
            raise ValueError("soft-Coulomb softening must be positive")

    @property
    def dim(self) -> int:
        return 1 if self.form == "soft_coulomb1d" else 3


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def cumulative_trapezoid_matrix(n: int, h: float) -> np.ndarray:
    """Matrix ``C`` with ``(C @ g)[i]`` the trapezoid integral of ``g`` from node 0 to node i.

    ``C[i, j]`` is also the derivative of that running integral with respect to
    ``g[j]``, which is what the functional-derivative code contracts against.
    """
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    return 0.5 * h * ((j <= i - 1).astype(float) + ((j >= 1) & (j <= i)).astype(float))


def integrate(f) -> complex | float:
    """Trapezoidal integral of a field over its box."""
    if not isinstance(f, Field):
        raise TypeError("integrate expects a Field")
    s = np.sum(f.grid.weights * f.values)
    return complex(s) if np.iscomplexobj(s) else float(s)


def inner(a: Field, b: Field) -> complex:
    """Quadrature inner product ``<a|b>``, conjugating the left argument."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return complex(np.sum(a.grid.weights * np.conj(a.values) * b.values))


def _laplacian_array(grid: Grid, v: np.ndarray) -> np.ndarray:
    if grid.points_per_axis < 3:
        raise ValueError("laplacian needs at least 3 points per axis")
    out = np.zeros_like(v)
    for ax, h in enumerate(grid.spacing):
        pad = [(0, 0)] * v.ndim
        pad[ax] = (1, 1)
        p = np.pad(v, pad)  # zero outside the box
        n = v.shape[ax]
        up = np.take(p, np.arange(2, n + 2), axis=ax)
        dn = np.take(p, np.arange(0, n), axis=ax)
        out = out + (up - 2.0 * v + dn) / h**2
    return out


def laplacian(f: Field) -> Field:
    """Second-order central-difference Laplacian, zero-valued outside the box."""
    return Field(f.grid, _laplacian_array(f.grid, f.values), "generic")


def laplacian_matrix(grid: Grid) -> np.ndarray:
    """Dense Laplacian on the interior nodes (Dirichlet boundary nodes removed)."""
    m = grid.points_per_axis - 2
    if m < 1:
        raise ValueError("laplacian needs at least 3 points per axis")
    lap = None
    eye = np.eye(m)
    for ax, h in enumerate(grid.spacing):
        d2 = (np.diag(np.full(m - 1, 1.0), 1) + np.diag(np.full(m - 1, 1.0), -1) - 2 * eye) / h**2
        term = np.ones((1, 1))
        for other in range(grid.dim):
            term = np.kron(term, d2 if other == ax else eye)
        lap = term if lap is None else lap + term
    return lap


def pair_kernel(kernel: InteractionKernel, r, r_prime) -> float:
    """Interaction ``w(r, r')`` between two points (strength included)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    rp = np.atleast_1d(np.asarray(r_prime, dtype=float))
    if kernel.form == "soft_coulomb1d":
        d2 = float(np.sum((r - rp) ** 2))
        return kernel.strength / math.sqrt(d2 + kernel.softening**2)
    d = math.sqrt(float(np.sum((r - rp) ** 2)))
    if d == 0.0:
        raise ValueError("coulomb3d kernel is singular at coincident points")
    return kernel.strength / d


def self_interaction_value(grid: Grid) -> float:
    """Mean of ``1/r`` over a sphere with the volume of one grid cell."""
    radius = (3.0 * grid.cell_volume / (4.0 * math.pi)) ** (1.0 / 3.0)
    return 1.5 / radius


def kernel_matrix(grid: Grid, kernel: InteractionKernel) -> np.ndarray:
    """``w(r_n, r_p)`` for every node pair, flattened in row-major order.

    The coulomb3d diagonal uses the cell-averaged value of ``1/r``.
    """
    if kernel.dim != grid.dim:
        raise ValueError(f"{kernel.form} kernel needs a {kernel.dim}D grid")
    pts = grid.points()
    diff2 = np.zeros((len(pts), len(pts)))
    for ax in range(grid.dim):
        c = pts[:, ax]
        diff2 += (c[:, None] - c[None, :]) ** 2
    if kernel.form == "soft_coulomb1d":
        return kernel.strength / np.sqrt(diff2 + kernel.softening**2)
    np.fill_diagonal(diff2, 1.0)
    k = 1.0 / np.sqrt(diff2)
    np.fill_diagonal(k, self_interaction_value(grid))
    return kernel.strength * k


def apply_kernel(grid: Grid, kmat: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``int w(r, r') g(r') dr'`` for an array (or stack of arrays) on the grid."""
    g = np.asarray(values).reshape(-1, grid.size) * grid.weights.ravel()
    out = g @ kmat.T
    return out.reshape(np.shape(values))


# -- dump format -------------------------------------------------------------

_HEADER = "# hyxc-field v1"


def dump_field(f: Field, path) -> Path:
    """Write a field as text: one header line then ``re im`` per node (row-major)."""
    path = Path(path)
    g = f.grid
    a1 = ",".join(f"{a:.17g}" for a, _ in g.extents)
    a2 = ",".join(f"{b:.17g}" for _, b in g.extents)
    v = np.asarray(f.values, dtype=complex).ravel()
    lines = [f"{_HEADER} dim={g.dim} n={g.points_per_axis} a1={a1} a2={a2}"]
    lines += [f"{z.real:.17g} {z.imag:.17g}" for z in v]
    path.write_text("\n".join(lines) + "\n")
    return path


def load_field(path, kind: str = "generic") -> Field:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if not header.startswith(_HEADER):
            raise ValueError(f"{path} is not a hyxc field dump")
        tokens = dict(tok.split("=", 1) for tok in header[len(_HEADER):].split())
        dim = int(tokens["dim"])
        n = int(tokens["n"])
        a1 = [float(x) for x in tokens["a1"].split(",")]
        a2 = [float(x) for x in tokens["a2"].split(",")]
        data = np.loadtxt(fh, ndmin=2)
    grid = Grid(dim, tuple(zip(a1, a2)), n)
    values = data[:, 0] + 1j * data[:, 1]
    if kind in ("density", "potential") or not np.any(data[:, 1]):
        values = data[:, 0].copy()
    return Field(grid, values, kind)
