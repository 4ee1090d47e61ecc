"""Zumbach-Maschke density-constrained orbitals and their phase derivatives.

Every orbital has modulus ``sqrt(rho/N)``; orbitals differ only by the phase
``k . f(r)`` where ``f`` is built from running integrals of the density.
Integrals run along the axes in ``axis_order`` (default x, then y, then z);
``f_vec[s]`` and the wavevector component ``k[s]`` refer to the s-th axis of
that order.

Running integrals use the cumulative trapezoid rule, so the phase is an
explicit differentiable function of the sampled density. The derivative
objects below are the exact derivatives of that discrete map, divided by the
node weight (the grid analogue of a functional derivative).
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path

import numpy as np

from .grid import Field, Grid, cumulative_trapezoid_matrix, dump_field, integrate

log = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-12
TWO_PI = 2.0 * math.pi


def heaviside(x: float) -> float:
    """Step function with ``heaviside(0) == 1``."""
    return 1.0 if x >= 0 else 0.0


def _sign_rank(k: int) -> int:
    # 0, +1, -1, +2, -2, ...
    return 0 if k == 0 else 2 * abs(k) - (1 if k > 0 else 0)


def enumerate_wavevectors(m: int, dim: int = 1) -> np.ndarray:
    """First ``m`` integer wavevectors by ascending ``|k|`` then 0, +1, -1, +2, ... per axis."""
    if dim == 1:
        ks = [(k, 0, 0) for k in sorted(range(-m, m + 1), key=_sign_rank)]
        return np.array(ks[:m], dtype=int)
    r = 1
    while (2 * r + 1) ** 3 < m:
        r += 1
    cand = list(product(range(-r - 1, r + 2), repeat=3))
    cand.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2 + k[2] ** 2, [_sign_rank(c) for c in reversed(k)]))
    return np.array(cand[:m], dtype=int)


def _along(mat: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(mat, arr, axes=([1], [axis])), 0, axis)


@dataclass(frozen=True, eq=False)
class ZmPhaseField:
    """The shared phase function ``f(r)`` and the densities it is built from.

    ``f_vec`` holds one field per integration axis. ``planar_density`` is the
    density integrated over all but the first axis, and ``linear_density``
    (3D only) is integrated over the last axis.
    """

    grid: Grid
    f_vec: tuple[Field, ...]
    planar_density: np.ndarray
    linear_density: np.ndarray | None
    axis_permutation: tuple[int, ...]
    n_electrons: float
    clamped_nodes: int = 0
    clamp_magnitude: float = 0.0
    _running: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.grid.dim

    # slot-frame helpers (axes reordered by axis_permutation)
    def to_slot(self, arr: np.ndarray) -> np.ndarray:
        return np.transpose(arr, self.axis_permutation) if self.dim == 3 else arr

    def from_slot(self, arr: np.ndarray) -> np.ndarray:
        return np.transpose(arr, np.argsort(self.axis_permutation)) if self.dim == 3 else arr

    @cached_property
    def slot_weights(self) -> tuple[np.ndarray, ...]:
        return tuple(self.grid.axis_weights[a] for a in self.axis_permutation)

    @cached_property
    def slot_cumulative(self) -> tuple[np.ndarray, ...]:
        n = self.grid.points_per_axis
        return tuple(cumulative_trapezoid_matrix(n, self.grid.spacing[a]) for a in self.axis_permutation)

    @cached_property
    def slot_full_weights(self) -> np.ndarray:
        return self.to_slot(self.grid.weights)

    def phase(self, k) -> np.ndarray:
        """``k . f(r)`` as an array on the grid (original axis order)."""
        k = np.asarray(k)
        out = np.zeros(self.grid.shape)
        for s, fs in enumerate(self.f_vec):
            if k[s]:
                out = out + k[s] * fs.values
        return out


def build_phase(rho: Field, n_electrons: float | None = None, axis_order=None) -> ZmPhaseField:
    """Construct ``f(r)`` from a density by running trapezoid integrals.

    ``n_electrons`` defaults to the integral of ``rho``. Denominators below
    ``DENSITY_FLOOR`` are clamped to it; the number of clamped slices and the
    largest clamp correction are logged and stored on the result.
    """
    grid = rho.grid
    n = float(integrate(rho)) if n_electrons is None else float(n_electrons)
    if grid.dim == 1:
        perm = (0,)
    else:
        perm = tuple(range(3)) if axis_order is None else tuple(int(a) for a in axis_order)
        if sorted(perm) != [0, 1, 2]:
            raise ValueError(f"axis_order must permute (0, 1, 2), got {axis_order}")
    base = ZmPhaseField(grid, (), np.empty(0), None, perm, n)
    r = base.to_slot(np.asarray(rho.values, dtype=float))
    cx = base.slot_cumulative[0]
    if grid.dim == 1:
        x_run = cx @ r
        fx = TWO_PI * x_run / n
        running = {"x": x_run}
        return ZmPhaseField(grid, (Field(grid, fx),), r.copy(), None, perm, n, 0, 0.0, running)

    wx, wy, wz = base.slot_weights
    cy, cz = base.slot_cumulative[1:]
    rbar_xy = np.tensordot(r, wz, axes=([2], [0]))
    rbar_x = rbar_xy @ wy
    x_run = cx @ rbar_x
    y_run = rbar_xy @ cy.T
    z_run = _along(cz, r, 2)
    den_x = np.maximum(rbar_x, DENSITY_FLOOR)
    den_xy = np.maximum(rbar_xy, DENSITY_FLOOR)
    clamped = int(np.sum(rbar_x < DENSITY_FLOOR) + np.sum(rbar_xy < DENSITY_FLOOR))
    magnitude = float(max(np.max(den_x - rbar_x), np.max(den_xy - rbar_xy)))
    if clamped:
        log.info("density floor clamped %d slices (largest correction %.3e)", clamped, magnitude)
    shape = r.shape
    fx = np.broadcast_to((TWO_PI * x_run / n)[:, None, None], shape)
    fy = np.broadcast_to((TWO_PI * y_run / den_x[:, None])[:, :, None], shape)
    fz = TWO_PI * z_run / den_xy[:, :, None]
    f_vec = tuple(Field(grid, base.from_slot(np.array(c))) for c in (fx, fy, fz))
    running = {"x": x_run, "y": y_run, "z": z_run, "den_x": den_x, "den_xy": den_xy,
               "free_x": rbar_x >= DENSITY_FLOOR, "free_xy": rbar_xy >= DENSITY_FLOOR}
    return ZmPhaseField(grid, f_vec, rbar_x, rbar_xy, perm, n, clamped, magnitude, running)


@dataclass(frozen=True, eq=False)
class ZmOrbitalSet:
    orbitals: tuple[Field, ...]
    wavevectors: np.ndarray
    phase: ZmPhaseField
    source_density: Field
    n_electrons: int

    @property
    def grid(self) -> Grid:
        return self.source_density.grid

    @property
    def size(self) -> int:
        return len(self.orbitals)

    @cached_property
    def basis_id(self) -> str:
        h = hashlib.sha1()
        h.update(np.ascontiguousarray(self.source_density.values).tobytes())
        h.update(np.ascontiguousarray(self.wavevectors).tobytes())
        h.update(repr((self.n_electrons, self.phase.axis_permutation)).encode())
        return h.hexdigest()[:16]

    def k_diff(self, i: int, j: int) -> np.ndarray:
        """``k_j - k_i``, the wavevector of the pair phase ``xi_j - xi_i``."""
        return self.wavevectors[j] - self.wavevectors[i]

    def phase_factor(self, q) -> np.ndarray:
        """``exp(i q . f(r))``."""
        return np.exp(1j * self.phase.phase(q))

    def pair_density(self, q) -> np.ndarray:
        """``rho(r) exp(i q . f(r)) / N``, equal to ``conj(phi_i) phi_j`` for ``q = k_j - k_i``."""
        return self.source_density.values * self.phase_factor(q) / self.n_electrons

    def gram(self) -> np.ndarray:
        w = self.grid.weights.ravel()
        phi = np.array([o.values.ravel() for o in self.orbitals])
        return (np.conj(phi) * w) @ phi.T

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.size))))

    def projection_residual(self, states) -> np.ndarray:
        """``1 - sum_m |<phi_m|psi>|^2`` for each state; zero when the set spans it."""
        w = self.grid.weights.ravel()
        phi = np.array([o.values.ravel() for o in self.orbitals])
        out = []
        for psi in states:
            c = (np.conj(phi) * w) @ psi.values.ravel()
            norm = float(np.real(np.sum(w * np.abs(psi.values.ravel()) ** 2)))
            out.append(norm - float(np.sum(np.abs(c) ** 2)))
        return np.array(out)

    def with_density(self, rho: Field) -> ZmOrbitalSet:
        """Same wavevectors and ``N`` on another density, without the normalization guard.

        Finite-difference checks perturb the density while holding ``N`` fixed.
        """
        phase = build_phase(rho, self.n_electrons, self.phase.axis_permutation)
        amp = np.sqrt(np.maximum(rho.values, 0.0) / self.n_electrons)
        orbitals = tuple(Field(rho.grid, amp * np.exp(1j * phase.phase(k)), "orbital") for k in self.wavevectors)
        return ZmOrbitalSet(orbitals, self.wavevectors, phase, rho, self.n_electrons)

    def dump(self, directory, prefix: str = "phi") -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for k, orb in zip(self.wavevectors, self.orbitals):
            paths.append(dump_field(orb, directory / f"{prefix}_k{k[0]}_{k[1]}_{k[2]}.dat"))
        return paths


def _as_wavevectors(wavevectors, dim: int) -> np.ndarray:
    k = np.array(wavevectors, dtype=int)
    if k.ndim == 1:
        k = k[:, None]
    if k.shape[1] < 3:
        k = np.hstack([k, np.zeros((k.shape[0], 3 - k.shape[1]), dtype=int)])
    if k.shape[1] != 3:
        raise ValueError("wavevectors must have at most 3 components")
    if dim == 1 and np.any(k[:, 1:]):
        raise ValueError("1D wavevectors may only have an x component")
    if len({tuple(v) for v in k}) != len(k):
        raise ValueError("wavevectors must be pairwise distinct")
    return k


def build_orbitals(rho: Field, wavevectors, n_electrons: int, axis_order=None) -> ZmOrbitalSet:
    """``phi_i = sqrt(rho/N) exp(i k_i . f(r))`` for each wavevector."""
    if rho.kind != "density":
        raise ValueError("build_orbitals expects a density field")
    k = _as_wavevectors(wavevectors, rho.grid.dim)
    total = float(integrate(rho))
    if abs(total - n_electrons) > 1e-8 * max(1.0, n_electrons):
        raise ValueError(f"density integrates to {total!r}, expected {n_electrons}")
    phase = build_phase(rho, n_electrons, axis_order)
    amp = np.sqrt(rho.values / n_electrons)
    orbitals = tuple(Field(rho.grid, amp * np.exp(1j * phase.phase(ki)), "orbital") for ki in k)
    return ZmOrbitalSet(orbitals, k, phase, rho, int(n_electrons))


@dataclass(frozen=True, eq=False)
class PhaseDerivative:
    """Derivative of the pair phase ``k . f(r')`` with respect to ``rho(r)``.

    The object is the sum of a step term along the first axis and (3D) slice
    terms carrying one or two delta functions. Three ways to use it:

    * ``contract(d_rho)`` -- integrate over ``r`` against a density
      perturbation, giving a field over ``r'``;
    * ``adjoint(g)`` -- integrate ``g(r')`` over ``r'``, giving a field over ``r``;
    * ``values()`` -- the derivative at a fixed ``r'`` sampled over ``r``.

    Contractions integrate step terms with the trapezoid rule over the region
    where the step equals one (closed at the coincident node) and resolve
    deltas onto grid slices; this is the exact derivative of ``build_phase``.
    ``values`` samples the step pointwise with ``heaviside(0) == 1`` and
    represents each delta by ``1/w`` on its slice.
    """

    phase: ZmPhaseField
    k: np.ndarray
    r_prime: tuple[int, ...] | None = None

    @property
    def is_zero(self) -> bool:
        return not np.any(self.k)

    def contract(self, d_rho) -> np.ndarray | complex:
        """Linear change of the phase for a density perturbation (field over ``r'``)."""
        ph = self.phase
        d = ph.to_slot(np.asarray(getattr(d_rho, "values", d_rho), dtype=float))
        n = ph.n_electrons
        cx = ph.slot_cumulative[0]
        k = self.k
        if ph.dim == 1:
            out = k[0] * TWO_PI / n * (cx @ d)
        else:
            wx, wy, wz = ph.slot_weights
            cy, cz = ph.slot_cumulative[1:]
            run = ph._running
            dbar_xy = np.tensordot(d, wz, axes=([2], [0]))
            dbar_x = dbar_xy @ wy
            out = np.zeros(d.shape)
            if k[0]:
                out = out + (k[0] * TWO_PI / n * (cx @ dbar_x))[:, None, None]
            if k[1]:
                dy = dbar_xy @ cy.T
                den = run["den_x"][:, None]
                corr = np.where(run["free_x"][:, None], run["y"] * dbar_x[:, None] / den**2, 0.0)
                out = out + (k[1] * TWO_PI * (dy / den - corr))[:, :, None]
            if k[2]:
                dz = _along(cz, d, 2)
                den = run["den_xy"][:, :, None]
                corr = np.where(run["free_xy"][:, :, None], run["z"] * dbar_xy[:, :, None] / den**2, 0.0)
                out = out + k[2] * TWO_PI * (dz / den - corr)
        out = ph.from_slot(out)
        if self.r_prime is not None:
            return float(out[self.r_prime])
        return out

    def adjoint(self, g) -> np.ndarray:
        """``int g(r') d(k.f(r'))/d rho(r) dr'`` as an array over ``r``."""
        ph = self.phase
        g = ph.to_slot(np.asarray(getattr(g, "values", g)))
        n = ph.n_electrons
        cx = ph.slot_cumulative[0]
        k = self.k
        dtype = np.result_type(g.dtype, float)
        if ph.dim == 1:
            w = ph.slot_weights[0]
            return ph.from_slot(k[0] * TWO_PI / n * (cx.T @ (w * g)) / w)
        wx, wy, wz = ph.slot_weights
        cy, cz = ph.slot_cumulative[1:]
        run = ph._running
        wg = ph.slot_full_weights * g
        out = np.zeros(g.shape, dtype=dtype)
        if k[0]:
            gx = wg.sum(axis=(1, 2))
            out = out + (k[0] * TWO_PI / n * (cx.T @ gx) / wx)[:, None, None]
        if k[1]:
            hxy = wg.sum(axis=2)
            den = run["den_x"]
            t1 = (hxy @ cy) / (wy[None, :] * den[:, None])
            t2 = np.where(run["free_x"], np.sum(run["y"] * hxy, axis=1) / den**2, 0.0)
            out = out + (k[1] * TWO_PI * (t1 - t2[:, None]) / wx[:, None])[:, :, None]
        if k[2]:
            den = run["den_xy"]
            t1 = (wg @ cz) / (wz[None, None, :] * den[:, :, None])
            t2 = np.where(run["free_xy"], np.sum(run["z"] * wg, axis=2) / den**2, 0.0)
            out = out + k[2] * TWO_PI * (t1 - t2[:, :, None]) / (wx[:, None, None] * wy[None, :, None])
        return ph.from_slot(out)

    def values(self) -> Field:
        """Pointwise derivative at the fixed node ``r_prime``, as a field over ``r``."""
        if self.r_prime is None:
            raise ValueError("values() needs r_prime")
        ph = self.phase
        grid = ph.grid
        n = ph.n_electrons
        k = self.k
        rp = tuple(self.r_prime[a] for a in ph.axis_permutation) if ph.dim == 3 else self.r_prime
        idx = np.arange(grid.points_per_axis)
        step_x = (idx <= rp[0]).astype(float)  # heaviside(x' - x), 1 at x = x'
        if ph.dim == 1:
            return Field(grid, k[0] * TWO_PI / n * step_x)
        wx, wy, wz = ph.slot_weights
        run = ph._running
        shape = grid.shape
        out = np.broadcast_to((k[0] * TWO_PI / n * step_x)[:, None, None], shape).copy()
        a, b, c = rp
        if k[1]:
            den = run["den_x"][a]
            corr = run["y"][a, b] / den**2 if run["free_x"][a] else 0.0
            step_y = (idx <= b).astype(float)
            out[a] += (k[1] * TWO_PI / wx[a] * (step_y / den - corr))[:, None]
        if k[2]:
            den = run["den_xy"][a, b]
            corr = run["z"][a, b, c] / den**2 if run["free_xy"][a, b] else 0.0
            step_z = (idx <= c).astype(float)
            out[a, b] += k[2] * TWO_PI / (wx[a] * wy[b]) * (step_z / den - corr)
        return Field(grid, ph.from_slot(out))


def phase_functional_derivative(phase: ZmPhaseField, k_ji, r_prime=None) -> PhaseDerivative:
    """Derivative object of ``xi_ji(r') = k_ji . f(r')`` with respect to the density.

    ``r_prime`` may be a grid index tuple or a coordinate; coordinates must sit
    on a grid node.
    """
    k = np.zeros(3, dtype=int)
    kk = np.atleast_1d(np.asarray(k_ji, dtype=int))
    k[: kk.size] = kk
    if phase.dim == 1 and np.any(k[1:]):
        raise ValueError("1D phase derivative takes an x component only")
    if r_prime is not None:
        rp = np.atleast_1d(r_prime)
        if np.issubdtype(rp.dtype, np.integer):
            idx = tuple(int(i) for i in rp)
            if len(idx) != phase.dim or not all(0 <= i < phase.grid.points_per_axis for i in idx):
                raise ValueError(f"r_prime index {idx} is off the grid")
        else:
            idx = phase.grid.index_of(rp)
        r_prime = idx
    return PhaseDerivative(phase, k, r_prime)
