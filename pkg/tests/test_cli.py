import json
from pathlib import Path

import pytest

from hyxc.cli import main
from hyxc.config import load_config
from hyxc.fci import solve_ground
from hyxc.integrals import HamiltonianTensors

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TWO = str(CONFIGS / "two_electron_1d.cfg")


@pytest.fixture(scope="module")
def chained(tmp_path_factory):
    out = tmp_path_factory.mktemp("chain")
    for cmd in ("dft", "basis", "tensors", "vqe", "fci"):
        assert main([cmd, TWO, "-o", str(out)]) == 0
    return out


def test_stages_match_first_loop_iteration(chained, tmp_path):
    loop_dir = tmp_path / "loop"
    assert main(["loop", TWO, "-o", str(loop_dir)]) == 0
    it = loop_dir / "iter1"
    pairs = [("dft/density.dat", "density.dat"), ("dft/scf.csv", "scf.csv"), ("basis/basis.json", "basis.json"),
             ("tensors/t.bin", "t.bin"), ("tensors/vext.bin", "vext.bin"), ("tensors/vee.bin", "vee.bin"),
             ("tensors/hamiltonian.txt", "hamiltonian.txt"), ("vqe/vqe_params.json", "vqe_params.json"),
             ("vqe/vqe_trace.csv", "vqe_trace.csv"), ("vqe/rho1.bin", "rho1.bin"), ("vqe/gamma2.bin", "gamma2.bin")]
    for staged, looped in pairs:
        assert (chained / staged).read_bytes() == (it / looped).read_bytes(), staged


def test_fci_matches_solver(chained, capsys):
    tensors = HamiltonianTensors.load(chained / "tensors")
    exact = solve_ground(tensors, tensors.size, 2).ground_energy
    assert json.loads((chained / "fci" / "fci.json").read_text())["ground_energy"] == exact
    assert main(["fci", TWO, "-o", str(chained)]) == 0
    assert f"{exact:.12f}" in capsys.readouterr().out


def test_loop_reruns_are_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["loop", TWO, "-o", str(tmp_path / name)]) == 0
    for f in ("report.json", "iterations.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_missing_input_names_producer(tmp_path, capsys):
    assert main(["vqe", TWO, "-o", str(tmp_path)]) == 1
    assert "hyxc tensors" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("system.unknown = 1\n")
    assert main(["dft", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
def test_check_passes_on_shipped_configs(name, capsys):
    assert main(["check", str(CONFIGS / name)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out


def test_check_fails_on_tight_gram(capsys):
    assert main(["check", TWO, "--gram-tol", "1e-12", "--no-vqe"]) == 1
    assert "FAIL  zm_orthonormality" in capsys.readouterr().out
