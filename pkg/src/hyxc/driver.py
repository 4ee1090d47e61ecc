"""Outer self-consistency loop between the Kohn-Sham solver and the VQE.

One outer iteration:

1. inner SCF with the current exchange-correlation content (seed model first,
   then ``v_xc^loc`` plus the kinetic correction from the previous iteration);
2. ZM basis from the converged Kohn-Sham density;
3. Hamiltonian tensors in that basis;
4. VQE minimization and RDM measurement (with an optional FCI cross-check);
5. density correction, ``v_xc^loc`` and ``E_xc`` from the RDMs.

Stage helpers are shared with the CLI so that chaining the single-stage
commands reproduces the first loop iteration's dumps exactly.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .fci import solve_ground
from .grid import Field, dump_field
from .integrals import DerivativeKernels, HamiltonianTensors, build_tensors, write_tensor
from .ks import KsState, energy_breakdown, hartree_potential, inner_scf
from .secondq import build_qubit_hamiltonian
from .vqe import AnsatzConfig, OptimizerConfig, VqeResult, minimize_energy
from .xc import build_corrections, kinetic_correction_matrix
from .zm import ZmOrbitalSet, build_orbitals

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage}: {type(exc).__name__}: {exc}")
        self.stage = stage
        self.original = exc


# -- stages --------------------------------------------------------------------


def stage_dft(config: RunConfig, xc=None, extra_operator=None, initial_density=None) -> KsState:
    lp = config.loop
    grid = config.grid()
    return inner_scf(
        grid, config.v_ext(grid), config.kernel(), config.system.n_electrons,
        xc=lp.seed_xc if xc is None else xc, mixing=lp.scf_mixing, tol=lp.scf_tol,
        max_iter=lp.scf_max_iter, extra_operator=extra_operator, initial_density=initial_density,
    )


def stage_basis(config: RunConfig, density: Field) -> ZmOrbitalSet:
    return build_orbitals(density, config.wavevectors(), config.system.n_electrons)


def stage_tensors(config: RunConfig, basis: ZmOrbitalSet) -> HamiltonianTensors:
    t = build_tensors(basis, config.v_ext(basis.grid), config.kernel(), config.loop.tensor_budget)
    t.check(1e-10)
    return t


def optimizer_config(config: RunConfig) -> OptimizerConfig:
    v = config.vqe
    return OptimizerConfig(v.max_iter, v.restarts, v.tol, config.seed, v.initial_step, v.restart_scale)


def stage_vqe(config: RunConfig, tensors: HamiltonianTensors) -> VqeResult:
    ansatz = AnsatzConfig(config.system.n_electrons, config.vqe.layers)
    return minimize_energy(tensors, ansatz, optimizer_config(config))


# -- persistence ---------------------------------------------------------------


def dump_dft(directory: Path, ks: KsState) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    dump_field(ks.density, directory / "density.dat")
    (directory / "scf.csv").write_text(ks.iteration_log_csv())


def dump_basis(directory: Path, basis: ZmOrbitalSet) -> None:
    basis.dump(directory)
    info = {"basis_id": basis.basis_id, "n_electrons": basis.n_electrons,
            "wavevectors": basis.wavevectors.tolist(), "gram_error": basis.orthonormality_error()}
    (directory / "basis.json").write_text(json.dumps(info, indent=2) + "\n")


def dump_tensors(directory: Path, tensors: HamiltonianTensors) -> None:
    tensors.dump(directory)
    build_qubit_hamiltonian(tensors).dump(directory / "hamiltonian.txt")


def dump_vqe(directory: Path, result: VqeResult) -> None:
    result.dump(directory)
    write_tensor(result.rdms.rho1, directory / "rho1.bin")
    write_tensor(result.rdms.gamma2, directory / "gamma2.bin")
    (directory / "vqe.json").write_text(json.dumps(
        {"energy": result.energy, "converged": result.converged, "evaluations": result.n_evaluations}, indent=2) + "\n")


# -- report --------------------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    outer_iter: int
    t_ks: float
    e_ext: float
    e_hartree: float
    many_body_energy: float
    fci_energy: float
    e_xc: float
    max_abs_delta_rho: float
    delta_rho_norm: float
    gram_error: float
    vqe_converged: bool
    scf_converged: bool
    hermiticity_deviation: float = float("nan")
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class LoopReport:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = "max_iter"
    error: dict | None = None
    config: dict = field(default_factory=dict)

    CSV_FIELDS = ("outer_iter", "t_ks", "e_ext", "e_hartree", "many_body_energy", "fci_energy", "e_xc",
                  "max_abs_delta_rho", "delta_rho_norm", "gram_error", "vqe_converged", "scf_converged",
                  "hermiticity_deviation")

    def to_json(self) -> str:
        recs = [{k: _jsonable(v) for k, v in asdict(r).items() if k != "wall_time"} for r in self.records]
        body = {"status": self.status, "error": self.error, "n_records": len(self.records),
                "records": recs, "config": self.config}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        for r in self.records:
            w.writerow([_fmt(getattr(r, k)) for k in self.CSV_FIELDS])
        return buf.getvalue()

    def persist(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(self.to_json())
        (directory / "iterations.csv").write_text(self.to_csv())
        # wall times vary between runs, so they live apart from the deterministic report
        (directory / "timings.csv").write_text(
            "outer_iter,wall_time_s\n" + "".join(f"{r.outer_iter},{r.wall_time:.3f}\n" for r in self.records))


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _fmt(v):
    return f"{v:.17g}" if isinstance(v, float) else str(v)


# -- loop ----------------------------------------------------------------------


def run_outer_loop(config: RunConfig) -> LoopReport:
    """Run the outer loop and persist every dump plus ``report.json``/``iterations.csv``.

    Stage failures end the loop with ``status = 'error'`` and the failing
    stage named in ``report.error``; results up to that point are kept.
    """
    out = config.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    # the report's own location is left out so that relocated reruns compare equal
    cfg = config.to_dict()
    cfg["output"].pop("directory")
    report = LoopReport(config=cfg)
    grid = config.grid()
    v_ext = config.v_ext(grid)
    kernel = config.kernel()
    n = config.system.n_electrons
    xc = None
    extra = None
    density = None
    prev_energy = None

    def run(stage, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:  # noqa: BLE001 - every failure is reported with its stage
            raise StageError(stage, exc) from exc

    try:
        for k in range(1, config.loop.max_iter + 1):
            t0 = time.perf_counter()
            it_dir = out / f"iter{k}"
            ks = run("dft", stage_dft, config, xc, extra, density)
            if not ks.converged:
                log.warning("outer iteration %d: inner SCF did not converge", k)
            basis = run("basis", stage_basis, config, ks.density)
            tensors = run("tensors", stage_tensors, config, basis)
            vqe = run("vqe", stage_vqe, config, tensors)
            fci_e = float("nan")
            if config.loop.fci_check:
                fci_e = run("fci", solve_ground, tensors, basis.size, n).ground_energy
            v_h = hartree_potential(ks.density, kernel)
            kernels = DerivativeKernels(basis, v_ext, kernel)
            bundle = run("correction", build_corrections, vqe.rdms, basis, kernels, ks, v_ext, v_h, kernel,
                         vqe.energy, config.loop.kinetic_reference)
            parts = energy_breakdown(ks, v_ext, kernel, e_xc=0.0)
            d = bundle.delta_rho.values
            max_drho = float(np.max(np.abs(d)))
            norm_drho = float(math.sqrt(float(np.sum(grid.weights * d**2))))
            log.info("outer iteration %d: E = %.10f, E_xc = %.10f, max|drho| = %.3e, ||drho|| = %.3e",
                     k, vqe.energy, bundle.e_xc, max_drho, norm_drho)

            converged = (max_drho < config.loop.drho_tol and prev_energy is not None
                         and abs(vqe.energy - prev_energy) < config.loop.energy_tol)
            dev = float("nan")
            failure = None
            if not converged and k < config.loop.max_iter:
                try:
                    extra, dev = run("hamiltonian", kinetic_correction_matrix, basis, vqe.rdms.rho1,
                                     max_deviation=config.loop.hermiticity_tol,
                                     reference=bundle.kinetic_correction + vqe.rdms.rho1)
                except StageError as exc:
                    failure = exc
                xc = bundle.vxc_loc
                density = ks.density
            record = IterationRecord(
                k, parts.t_ks, parts.e_ext, parts.e_hartree, vqe.energy, fci_e, bundle.e_xc, max_drho,
                norm_drho, basis.orthonormality_error(), vqe.converged, ks.converged, dev,
                time.perf_counter() - t0,
            )
            report.records.append(record)
            if config.output.dump_fields:
                dump_dft(it_dir, ks)
                dump_basis(it_dir, basis)
                dump_field(bundle.vxc_loc, out / f"vxc_loc_iter{k}.dat")
                dump_field(bundle.delta_rho, out / f"delta_rho_iter{k}.dat")
            if config.output.dump_tensors:
                dump_tensors(it_dir, tensors)
            dump_vqe(it_dir, vqe)
            report.persist(out)
            if failure is not None:
                raise failure
            prev_energy = vqe.energy
            if converged:
                report.status = "converged"
                break
        else:
            report.status = "max_iter"
    except StageError as exc:
        log.error("outer loop stopped: %s", exc)
        report.status = "error"
        report.error = {"stage": exc.stage, "type": type(exc.original).__name__, "message": str(exc.original)}
    report.persist(out)
    return report
