"""Command-line entry point: one subcommand per stage plus ``loop`` and ``check``.

Stage subcommands read the configuration and the dumps of the stage before
them, all below one output directory::

    <out>/dft      density.dat, scf.csv, ks.json
    <out>/basis    phi_k*.dat, basis.json, density.dat
    <out>/tensors  t.bin, vext.bin, vee.bin, hamiltonian.txt
    <out>/vqe      vqe_trace.csv, vqe_params.json, rho1.bin, gamma2.bin, vqe.json
    <out>/fci      fci.json

Exit codes: 0 success, 1 stage failure or failed check, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .driver import (
    dump_basis,
    dump_dft,
    dump_tensors,
    dump_vqe,
    run_outer_loop,
    stage_basis,
    stage_dft,
    stage_tensors,
    stage_vqe,
)
from .grid import load_field
from .integrals import HamiltonianTensors

log = logging.getLogger("hyxc")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


class MissingInput(RuntimeError):
    pass


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingInput(f"{path} not found; run `hyxc {producer}` with the same config and output first")
    return path


def _out(args, config: RunConfig) -> Path:
    return Path(args.out) if args.out else config.output_dir()


# -- subcommands ---------------------------------------------------------------


def cmd_dft(config: RunConfig, out: Path, args) -> int:
    ks = stage_dft(config)
    dump_dft(out / "dft", ks)
    info = {"converged": ks.converged, "eigenvalues": [float(e) for e in ks.eigenvalues],
            "occupations": [float(f) for f in ks.occupations]}
    (out / "dft" / "ks.json").write_text(json.dumps(info, indent=2) + "\n")
    print(f"inner SCF {'converged' if ks.converged else 'NOT converged'}; "
          f"lowest eigenvalue {ks.eigenvalues[0]:.10f}")
    return EXIT_OK if ks.converged else EXIT_FAILURE


def _load_density(out: Path, sub: str, producer: str):
    return load_field(_require(out / sub / "density.dat", producer), "density")


def _load_basis(config: RunConfig, out: Path):
    basis = stage_basis(config, _load_density(out, "basis", "basis"))
    meta = json.loads(_require(out / "basis" / "basis.json", "basis").read_text())
    if meta["basis_id"] != basis.basis_id:
        raise MissingInput(f"{out / 'basis'} was built with a different config; rerun `hyxc basis`")
    return basis


def cmd_basis(config: RunConfig, out: Path, args) -> int:
    rho = _load_density(out, "dft", "dft")
    basis = stage_basis(config, rho)
    dump_basis(out / "basis", basis)
    (out / "basis" / "density.dat").write_bytes((out / "dft" / "density.dat").read_bytes())
    print(f"basis {basis.basis_id}: M={basis.size}, max|Gram - I| = {basis.orthonormality_error():.3e}")
    return EXIT_OK


def cmd_tensors(config: RunConfig, out: Path, args) -> int:
    tensors = stage_tensors(config, _load_basis(config, out))
    dump_tensors(out / "tensors", tensors)
    print(f"tensors for basis {tensors.basis_id} written to {out / 'tensors'}")
    return EXIT_OK


def _load_tensors(out: Path) -> HamiltonianTensors:
    _require(out / "tensors" / "t.bin", "tensors")
    return HamiltonianTensors.load(out / "tensors")


def cmd_vqe(config: RunConfig, out: Path, args) -> int:
    result = stage_vqe(config, _load_tensors(out))
    dump_vqe(out / "vqe", result)
    print(f"VQE energy {result.energy:.12f} ({'converged' if result.converged else 'NOT converged'}, "
          f"{result.n_evaluations} evaluations)")
    return EXIT_OK if result.converged else EXIT_FAILURE


def cmd_fci(config: RunConfig, out: Path, args) -> int:
    from .fci import solve_ground

    tensors = _load_tensors(out)
    sol = solve_ground(tensors, tensors.size, config.system.n_electrons)
    (out / "fci").mkdir(parents=True, exist_ok=True)
    info = {"ground_energy": sol.ground_energy, "n_determinants": len(sol.basis),
            "energies": [float(e) for e in sol.energies]}
    (out / "fci" / "fci.json").write_text(json.dumps(info, indent=2) + "\n")
    print(f"FCI ground energy {sol.ground_energy:.12f} ({len(sol.basis)} determinants)")
    return EXIT_OK


def cmd_loop(config: RunConfig, out: Path, args) -> int:
    if args.out:
        from dataclasses import replace

        config = replace(config, output=replace(config.output, directory=str(out)))
    report = run_outer_loop(config)
    for r in report.records:
        print(f"iter {r.outer_iter}: E = {r.many_body_energy:.10f}  E_xc = {r.e_xc:.10f}  "
              f"max|drho| = {r.max_abs_delta_rho:.3e}  |drho| = {r.delta_rho_norm:.3e}")
    print(f"status: {report.status}")
    if report.error:
        print(f"error in stage {report.error['stage']}: {report.error['type']}: {report.error['message']}",
              file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_check(config: RunConfig, out: Path, args) -> int:
    from .checks import run_checks

    results = run_checks(config, gram_tol=args.gram_tol, with_vqe=not args.no_vqe)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILURE if failed else EXIT_OK


COMMANDS = {
    "dft": (cmd_dft, "inner Kohn-Sham SCF with the seed xc model"),
    "basis": (cmd_basis, "ZM basis from the dft density"),
    "tensors": (cmd_tensors, "Hamiltonian tensors in the ZM basis"),
    "vqe": (cmd_vqe, "VQE minimization and RDMs from the tensors"),
    "fci": (cmd_fci, "exact ground energy from the tensors"),
    "loop": (cmd_loop, "full outer loop with report"),
    "check": (cmd_check, "invariant suite; nonzero exit on any failure"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyxc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="run configuration file")
        p.add_argument("-o", "--out", help="output directory (default: output.directory)")
        if name == "check":
            p.add_argument("--gram-tol", type=float, default=1e-3, help="orthonormality tolerance")
            p.add_argument("--no-vqe", action="store_true", help="skip the VQE-based checks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    fn = COMMANDS[args.command][0]
    out = _out(args, config)
    try:
        return fn(config, out, args)
    except MissingInput as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001 - reported with the stage name
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
