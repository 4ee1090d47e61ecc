import json
import math

import numpy as np
import pytest

from hyxc.fci import solve_ground
from hyxc.integrals import HamiltonianTensors, random_tensors
from hyxc.rdm import RdmPair, energy_from_rdms
from hyxc.secondq import QubitOperator, build_qubit_hamiltonian
from hyxc.vqe import (
    Ansatz,
    AnsatzConfig,
    OptimizerConfig,
    block_pairs,
    measure_rdms,
    minimize_energy,
    n_parameters,
    nelder_mead,
    number_moments,
    prepare_state,
)


def test_block_pairs_start_at_fermi_boundary():
    assert block_pairs(4, 2) == [(1, 2), (0, 1), (2, 3)]
    assert block_pairs(4, 1) == [(0, 1), (2, 3), (1, 2)]
    assert n_parameters(4, 2) == 18


def test_zero_parameters_give_reference():
    psi = prepare_state(Ansatz.zeros(4, 2, 2))
    expect = np.zeros(16)
    expect[0b1100] = 1.0
    assert np.array_equal(psi, expect)


def test_number_is_conserved():
    rng = np.random.default_rng(1)
    for m, n in ((3, 1), (4, 2), (6, 3)):
        a = Ansatz.zeros(m, n, 3)
        psi = prepare_state(a.with_parameters(rng.uniform(-math.pi, math.pi, a.parameters.size)))
        mean, var = number_moments(psi, m)
        assert abs(mean - n) < 1e-12 and abs(var) < 1e-12


def test_single_rotation():
    theta = 0.37
    psi = prepare_state(Ansatz.zeros(2, 1, 1).with_parameters([theta, 0.0, 0.0]))
    assert np.allclose(psi[[0b10, 0b01]], [math.cos(theta), math.sin(theta)], atol=1e-15)


def test_wrong_parameter_count():
    with pytest.raises(ValueError):
        prepare_state(Ansatz.zeros(3, 1, 1).with_parameters([0.1]))


def test_expectation_examples():
    psi = np.zeros(8, complex)
    psi[0] = 1.0
    assert QubitOperator.identity(3).expectation(psi) == pytest.approx(1.0)
    assert QubitOperator.from_word("ZII").expectation(psi) == pytest.approx(1.0)


def test_determinant_rdms():
    psi = np.zeros(16, complex)
    psi[0b1100] = 1.0
    rdms = measure_rdms(psi, 4)
    assert np.allclose(rdms.rho1, np.diag([1, 1, 0, 0]), atol=1e-15)
    assert rdms.gamma2[0, 0, 1, 1] == pytest.approx(1.0)
    assert rdms.gamma2[0, 1, 1, 0] == pytest.approx(-1.0)
    errs = rdms.invariant_errors(2)
    assert errs["rho_trace"] < 1e-14 and errs["gamma_trace"] < 1e-14


def test_random_state_rdms():
    rng = np.random.default_rng(2)
    for m, n in ((4, 2), (5, 2), (6, 3)):
        t = random_tensors(m, rng)
        a = Ansatz.zeros(m, n, 2)
        psi = prepare_state(a.with_parameters(rng.normal(size=a.parameters.size)))
        rdms = measure_rdms(psi, m)
        rdms.check(n, 1e-10)
        assert abs(energy_from_rdms(rdms, t) - build_qubit_hamiltonian(t).expectation(psi).real) < 1e-10


def test_energy_from_rdms_examples():
    m = 3
    zero = HamiltonianTensors(np.zeros((m, m), complex), np.zeros((m, m), complex), np.zeros((m,) * 4, complex))
    occ = np.diag([1.0, 0.0, 1.0]).astype(complex)
    rdms = RdmPair(occ, np.zeros((m,) * 4, complex))
    assert energy_from_rdms(rdms, zero) == 0.0
    diag = HamiltonianTensors(np.diag([0.5, 7.0, -2.0]).astype(complex), zero.v_ext, zero.v_ee)
    assert energy_from_rdms(rdms, diag) == pytest.approx(-1.5)
    with pytest.raises(ValueError):
        energy_from_rdms(RdmPair(np.eye(2), np.zeros((2,) * 4)), diag)


def test_nelder_mead_descends():
    seen = []
    x, f, conv, nev = nelder_mead(lambda v: float(np.sum((v - 1.5) ** 2)), np.zeros(3), 0.5, 1e-12, 2000,
                                  on_iter=lambda it, best, spread: seen.append(best))
    assert conv and np.allclose(x, 1.5, atol=1e-4)
    assert all(b <= a for a, b in zip(seen, seen[1:]))
    assert nev > 0


def test_two_level_minimum():
    t = HamiltonianTensors(np.diag([0.4, -0.9]).astype(complex), np.zeros((2, 2), complex),
                           np.zeros((2,) * 4, complex))
    res = minimize_energy(t, AnsatzConfig(1, 1), OptimizerConfig(restarts=2))
    assert res.energy == pytest.approx(-0.9, abs=1e-8)
    assert res.converged


def test_random_tensors_reach_fci(tmp_path):
    t = random_tensors(4, np.random.default_rng(3))
    res = minimize_energy(t, AnsatzConfig(2, 2), OptimizerConfig(restarts=5))
    exact = solve_ground(t, 4, 2).ground_energy
    assert res.energy >= exact - 1e-10
    assert res.energy - exact <= 1e-6
    per_run = {}
    for r, it, e, _ in res.trace:
        per_run.setdefault(r, []).append(e)
    for energies in per_run.values():
        assert all(b <= a for a, b in zip(energies, energies[1:]))
    trace, params = res.dump(tmp_path)
    assert trace.read_text().splitlines()[0] == "restart,iter,energy,simplex_spread"
    assert len(json.loads(params.read_text())) == n_parameters(4, 2)


def test_seeded_runs_repeat():
    t = random_tensors(3, np.random.default_rng(10))
    cfg = OptimizerConfig(restarts=1, seed=4)
    a = minimize_energy(t, AnsatzConfig(1, 2), cfg)
    b = minimize_energy(t, AnsatzConfig(1, 2), cfg)
    assert a.energy == b.energy and np.array_equal(a.parameters, b.parameters)
