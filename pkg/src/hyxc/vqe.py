"""Statevector VQE: number-conserving ansatz, RDM measurement, simplex minimizer.

The ansatz starts from the lowest-``N`` determinant ``|1..10..0>`` and applies
``n_layers`` brick-wall layers. A layer covers adjacent qubit pairs in two
sublayers, ``(0,1), (2,3), ...`` and ``(1,2), (3,4), ...``; it opens with the
sublayer holding the Fermi-boundary pair ``(N-1, N)`` so that no block of the
first sublayer acts trivially on the reference. Each block has three angles
``(theta, phi, chi)`` and acts as

    |10> -> cos(theta) |10> + e^{i phi} sin(theta) |01>
    |01> -> -e^{-i phi} sin(theta) |10> + cos(theta) |01>
    |11> -> e^{i chi} |11>

so every block conserves particle number.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse

from .fci import to_mask
from .rdm import RdmPair, energy_from_rdms, symmetrize_gamma
from .secondq import QubitOperator, build_qubit_hamiltonian, number_operator, pair_index, rdm_observables

log = logging.getLogger(__name__)

PARAMS_PER_BLOCK = 3


def block_pairs(m: int, n_electrons: int) -> list[tuple[int, int]]:
    """Qubit pairs of one brick-wall layer, in application order."""
    first = (n_electrons - 1) % 2
    return [(p, p + 1) for start in (first, 1 - first) for p in range(start, m - 1, 2)]


def reference_state(m: int, n: int) -> tuple[int, ...]:
    return tuple([1] * n + [0] * (m - n))


@dataclass(frozen=True, eq=False)
class Ansatz:
    n_qubits: int
    n_layers: int
    parameters: np.ndarray
    reference: tuple[int, ...]

    @classmethod
    def zeros(cls, n_qubits: int, n_electrons: int, n_layers: int) -> Ansatz:
        return cls(n_qubits, n_layers, np.zeros(n_parameters(n_qubits, n_layers)),
                   reference_state(n_qubits, n_electrons))

    @property
    def n_electrons(self) -> int:
        return int(sum(self.reference))

    def with_parameters(self, params) -> Ansatz:
        return Ansatz(self.n_qubits, self.n_layers, np.asarray(params, dtype=float), self.reference)


def n_parameters(m: int, n_layers: int) -> int:
    return n_layers * (m - 1) * PARAMS_PER_BLOCK


@lru_cache(maxsize=None)
def _pair_indices(m: int, p: int):
    idx = np.arange(1 << m, dtype=np.int64)
    bp, bq = 1 << (m - 1 - p), 1 << (m - 2 - p)
    has_p, has_q = (idx & bp) != 0, (idx & bq) != 0
    i10 = idx[has_p & ~has_q]
    return i10, i10 ^ bp ^ bq, idx[has_p & has_q]


def apply_block(psi: np.ndarray, m: int, p: int, theta: float, phi: float, chi: float) -> None:
    """Apply one block to qubits ``(p, p+1)`` in place."""
    i10, i01, i11 = _pair_indices(m, p)
    c, s = math.cos(theta), math.sin(theta)
    e = complex(math.cos(phi), math.sin(phi))
    a, b = psi[i10].copy(), psi[i01].copy()
    psi[i10] = c * a - e.conjugate() * s * b
    psi[i01] = e * s * a + c * b
    psi[i11] *= complex(math.cos(chi), math.sin(chi))


def prepare_state(ansatz: Ansatz) -> np.ndarray:
    """Reference determinant followed by the brick-wall layers; returns a unit statevector."""
    m = ansatz.n_qubits
    params = np.asarray(ansatz.parameters, dtype=float)
    expected = n_parameters(m, ansatz.n_layers)
    if params.size != expected:
        raise ValueError(f"ansatz needs {expected} parameters, got {params.size}")
    psi = np.zeros(1 << m, dtype=complex)
    psi[to_mask(ansatz.reference)] = 1.0
    blocks = params.reshape(-1, PARAMS_PER_BLOCK)
    pairs = block_pairs(m, ansatz.n_electrons) * ansatz.n_layers
    for (p, _), (theta, phi, chi) in zip(pairs, blocks):
        apply_block(psi, m, p, theta, phi, chi)
    return psi


def expectation(op: QubitOperator, psi: np.ndarray) -> complex:
    return op.expectation(psi)


def number_moments(psi: np.ndarray, m: int) -> tuple[float, float]:
    """Mean and variance of the total number operator."""
    nop = number_operator(m)
    mean = expectation(nop, psi).real
    second = np.vdot(nop.apply(psi), nop.apply(psi)).real
    return mean, second - mean**2


def measure_rdms(psi: np.ndarray, m: int) -> RdmPair:
    """Assemble both RDMs from the expectations of ``rdm_observables(m)``."""
    vals = {label: expectation(op, psi).real for label, op in rdm_observables(m)}
    rho = np.zeros((m, m), dtype=complex)
    for i in range(m):
        rho[i, i] = vals[f"rho[{i},{i}]"]
        for j in range(i + 1, m):
            z = vals[f"rho[{i},{j}].re"] + 1j * vals[f"rho[{i},{j}].im"]
            rho[i, j], rho[j, i] = z, np.conj(z)
    gam = np.zeros((m,) * 4, dtype=complex)
    pairs = pair_index(m)
    for a, (i, k) in enumerate(pairs):
        for b in range(a, len(pairs)):
            j, l = pairs[b]
            if a == b:
                z = vals[f"gamma[{i},{j},{k},{l}]"]
            else:
                z = vals[f"gamma[{i},{j},{k},{l}].re"] + 1j * vals[f"gamma[{i},{j},{k},{l}].im"]
            for val, (ii, jj, kk, ll) in ((z, (i, j, k, l)), (np.conj(z), (j, i, l, k))):
                gam[ii, jj, kk, ll] = val
                gam[kk, jj, ii, ll] = -val
                gam[ii, ll, kk, jj] = -val
                gam[kk, ll, ii, jj] = val
    return RdmPair(0.5 * (rho + rho.conj().T), symmetrize_gamma(gam))


# -- optimizer ---------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerConfig:
    """Simplex descent settings.

    ``tol`` bounds the spread of energies across the simplex; ``restarts``
    is the number of extra runs started from the best point perturbed by
    ``restart_scale`` radians.
    """

    max_iter: int = 20000
    restarts: int = 5
    tol: float = 1e-9
    seed: int = 0
    initial_step: float = 0.3
    restart_scale: float = 0.1


@dataclass(frozen=True)
class AnsatzConfig:
    n_electrons: int
    n_layers: int = 2


@dataclass(frozen=True, eq=False)
class VqeResult:
    parameters: np.ndarray
    energy: float
    rdms: RdmPair
    converged: bool
    trace: tuple = field(repr=False, default=())
    n_evaluations: int = 0

    def trace_csv(self) -> str:
        rows = ["restart,iter,energy,simplex_spread"]
        rows += [f"{r},{i},{e:.17g},{s:.17g}" for r, i, e, s in self.trace]
        return "\n".join(rows) + "\n"

    def dump(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        trace = directory / "vqe_trace.csv"
        trace.write_text(self.trace_csv())
        params = directory / "vqe_params.json"
        params.write_text(json.dumps([float(p) for p in self.parameters]))
        return [trace, params]


def nelder_mead(fun, x0, step: float, tol: float, max_iter: int, on_iter=None):
    """Adaptive Nelder-Mead; stops when the simplex energy spread drops below ``tol``.

    ``on_iter(iteration, best_value, spread)`` is called after every iteration.
    Returns ``(best_x, best_f, converged, n_evaluations)``.
    """
    n = len(x0)
    alpha, beta, gamma, delta = 1.0, 1.0 + 2.0 / n, 0.75 - 0.5 / n, 1.0 - 1.0 / n
    sim = np.vstack([x0] + [x0 + step * e for e in np.eye(n)])
    fs = np.array([fun(x) for x in sim])
    nev = n + 1
    converged = False
    for it in range(1, max_iter + 1):
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        spread = float(fs[-1] - fs[0])
        if on_iter:
            on_iter(it, float(fs[0]), spread)
        if spread < tol:
            converged = True
            break
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + alpha * (centroid - sim[-1])
        fr = fun(xr)
        nev += 1
        if fr < fs[0]:
            xe = centroid + beta * (xr - centroid)
            fe = fun(xe)
            nev += 1
            sim[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            outside = fr < fs[-1]
            xc = centroid + gamma * ((xr if outside else sim[-1]) - centroid)
            fc = fun(xc)
            nev += 1
            if fc < (fr if outside else fs[-1]):
                sim[-1], fs[-1] = xc, fc
            else:
                sim[1:] = sim[0] + delta * (sim[1:] - sim[0])
                fs[1:] = [fun(x) for x in sim[1:]]
                nev += n
    best = int(np.argmin(fs))
    return sim[best].copy(), float(fs[best]), converged, nev


def _sparse_matrix(op: QubitOperator):
    return scipy.sparse.csr_matrix(op.to_matrix()) if op.n_qubits <= 10 else _sparse_from_terms(op)


def _sparse_from_terms(op: QubitOperator):
    dim = 1 << op.n_qubits
    idx = np.arange(dim, dtype=np.int64)
    total = scipy.sparse.csr_matrix((dim, dim), dtype=complex)
    x, z, c = op._arrays()
    for xi, zi, ci in zip(x, z, c):
        sign = 1 - 2 * (np.bitwise_count(idx & zi).astype(np.int64) & 1)
        total = total + scipy.sparse.csr_matrix((ci * sign, (idx ^ xi, idx)), shape=(dim, dim))
    return total


def minimize_energy(tensors, ansatz_config: AnsatzConfig, optimizer_config: OptimizerConfig = OptimizerConfig(),
                    hamiltonian: QubitOperator | None = None) -> VqeResult:
    """Minimize ``<psi(theta)|H|psi(theta)>`` with restarted simplex descent.

    The first run starts from small random angles; each restart perturbs the
    best point found so far. All randomness comes from ``optimizer_config.seed``.
    """
    m = tensors.size
    n = ansatz_config.n_electrons
    if not 0 <= n <= m:
        raise ValueError(f"cannot place {n} electrons in {m} orbitals")
    ham = hamiltonian if hamiltonian is not None else build_qubit_hamiltonian(tensors)
    hmat = _sparse_matrix(ham)
    base = Ansatz.zeros(m, n, ansatz_config.n_layers)
    cfg = optimizer_config
    rng = np.random.default_rng(cfg.seed)
    n_par = base.parameters.size

    def energy(theta):
        psi = prepare_state(base.with_parameters(theta))
        return float(np.vdot(psi, hmat @ psi).real)

    trace: list[tuple[int, int, float, float]] = []
    best_x = rng.normal(scale=cfg.restart_scale, size=n_par)
    best_f = energy(best_x)
    any_converged = False
    total_ev = 1
    for restart in range(cfg.restarts + 1):
        x0 = best_x if restart == 0 else best_x + rng.normal(scale=cfg.restart_scale, size=n_par)
        if n_par == 0:
            break
        x, f, conv, nev = nelder_mead(
            energy, x0, cfg.initial_step, cfg.tol, cfg.max_iter,
            on_iter=lambda it, e, s, r=restart: trace.append((r, it, e, s)),
        )
        total_ev += nev
        if f < best_f:
            best_x, best_f = x, f
        any_converged |= conv
        if not conv:
            log.warning("simplex run %d hit the iteration budget (spread %.2e)", restart, trace[-1][3])
    params = best_x if n_par else np.zeros(0)
    psi = prepare_state(base.with_parameters(params))
    e_direct = expectation(ham, psi).real
    rdms = measure_rdms(psi, m)
    e_rdm = energy_from_rdms(rdms, tensors)
    if abs(e_direct - e_rdm) > 1e-8 * max(1.0, abs(e_direct)):
        log.warning("RDM energy %.12g differs from direct expectation %.12g", e_rdm, e_direct)
    return VqeResult(params, float(e_direct), rdms, bool(any_converged or n_par == 0), tuple(trace), total_ev)
