import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyxc.checks import car_error, jw_fci_error
from hyxc.integrals import HamiltonianTensors, random_tensors
from hyxc.secondq import (
    QubitOperator,
    build_qubit_hamiltonian,
    count_configurations,
    excitation,
    format_count,
    jordan_wigner,
    number_operator,
    rdm_observables,
)

PAULI = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]), "Y": np.array([[0, -1j], [1j, 0]]),
         "Z": np.diag([1.0, -1.0])}


def word_matrix(word):
    out = np.ones((1, 1))
    for ch in word:
        out = np.kron(out, PAULI[ch])
    return out


def test_count_configurations():
    t0 = time.perf_counter()
    n = count_configurations(50, 25)
    assert time.perf_counter() - t0 < 1e-3
    assert n == 126410606437752
    assert format_count(n) == "1.26×10¹⁴"
    assert count_configurations(7, 7) == 1
    assert count_configurations(4, 2) == 6
    with pytest.raises(ValueError):
        count_configurations(3, 4)


def test_word_matrices_follow_kron_order():
    for word in ("XZ", "YI", "ZYX", "IIY"):
        op = QubitOperator.from_word(word)
        assert np.allclose(op.to_matrix(), word_matrix(word))


@settings(max_examples=40, deadline=None)
@given(w1=st.text("IXYZ", min_size=3, max_size=3), w2=st.text("IXYZ", min_size=3, max_size=3),
       c1=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_products_match_matrix_products(w1, w2, c1):
    a = QubitOperator.from_word(w1, c1) + QubitOperator.from_word("ZZI", 0.5)
    b = QubitOperator.from_word(w2, 1.0 - 2.0j)
    assert np.allclose((a * b).to_matrix(), a.to_matrix() @ b.to_matrix())


def test_creation_on_single_mode():
    adag = jordan_wigner(0, True, 1).to_matrix()
    assert np.allclose(adag @ np.array([1.0, 0.0]), [0.0, 1.0])


def test_car_algebra_exact():
    for m in range(1, 7):
        assert car_error(m) <= 1e-14
        for p in range(m):
            assert (jordan_wigner(p, False, m) * jordan_wigner(p, False, m)).is_zero()
            cd = jordan_wigner(p, True, m)
            assert (cd * cd).is_zero()


def test_number_operator_words():
    for i in range(3):
        n_i = excitation(i, i, 3)
        expect = QubitOperator.identity(3, 0.5) - QubitOperator.from_word("".join("Z" if q == i else "I" for q in range(3)), 0.5)
        assert n_i.max_difference(expect) == 0


def test_diagonal_one_body_hamiltonian():
    eps = np.array([-1.0, 0.25, 2.0])
    t = HamiltonianTensors(np.diag(eps).astype(complex), np.zeros((3, 3), complex), np.zeros((3,) * 4, complex))
    h = build_qubit_hamiltonian(t)
    expect = QubitOperator(3)
    for i, e in enumerate(eps):
        expect = expect + excitation(i, i, 3) * e
    assert h.max_difference(expect) < 1e-15


def test_zero_tensors_give_zero_operator():
    t = HamiltonianTensors(np.zeros((3, 3), complex), np.zeros((3, 3), complex), np.zeros((3,) * 4, complex))
    assert build_qubit_hamiltonian(t).is_zero()


def test_non_hermitian_tensors_rejected():
    t = random_tensors(3, np.random.default_rng(0))
    bad = HamiltonianTensors(t.t + np.triu(np.ones((3, 3)), 1), t.v_ext, t.v_ee)
    with pytest.raises(ValueError):
        build_qubit_hamiltonian(bad)


def test_jw_matches_fci_on_random_tensors():
    rng = np.random.default_rng(7)
    for m in (2, 3, 4):
        t = random_tensors(m, rng)
        for n in range(m + 1):
            assert jw_fci_error(t, n) <= 1e-10


def test_hamiltonian_conserves_particle_number():
    rng = np.random.default_rng(8)
    for m in (3, 5, 6):
        h = build_qubit_hamiltonian(random_tensors(m, rng)).to_matrix()
        n = number_operator(m).to_matrix()
        assert np.max(np.abs(h @ n - n @ h)) <= 1e-10


def test_rdm_observables():
    obs = dict(rdm_observables(4))
    one_body = [k for k in obs if k.startswith("rho")]
    assert len(one_body) == 16
    assert sum(k.endswith(".im") for k in one_body) == 6
    assert obs["rho[2,2]"].max_difference(
        QubitOperator.identity(4, 0.5) - QubitOperator.from_word("IIZI", 0.5)) == 0
    for op in obs.values():
        assert op.is_hermitian(1e-15)


def test_operator_dump_roundtrip(tmp_path):
    h = build_qubit_hamiltonian(random_tensors(3, np.random.default_rng(2)))
    path = h.dump(tmp_path / "h.txt")
    first = path.read_text().splitlines()[0].split()
    assert len(first) == 3 and set(first[2]) <= set("IXYZ")
    assert QubitOperator.load(path).max_difference(h) == 0


def test_expectation_matches_dense_matrix():
    rng = np.random.default_rng(9)
    for m in (2, 4, 6):
        h = build_qubit_hamiltonian(random_tensors(m, rng))
        psi = rng.normal(size=2**m) + 1j * rng.normal(size=2**m)
        psi /= np.linalg.norm(psi)
        dense = np.vdot(psi, h.to_matrix() @ psi)
        assert abs(h.expectation(psi) - dense) < 1e-12 * max(1.0, abs(dense))
        assert np.allclose(h.apply(psi), h.to_matrix() @ psi)
