import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpsense.qcore import (ChoiMatrix, DensityMatrix, PureState, QuantumChannel, QuantumError,
                           apply_channel, apply_unitary, choi_from_kraus, embed,
                           equal_up_to_phase, kraus_from_choi, measure_and_postselect,
                           outcome_probabilities, partial_trace, ry, standard_gate)

A, S = 0, 1


def random_density(rng, dim):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def amplitude_damping(p1):
    return QuantumChannel(np.array([[[1, 0], [0, math.sqrt(1 - p1)]],
                                    [[0, math.sqrt(p1)], [0, 0]]], dtype=complex))


def depolarizing():
    paulis = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
    return QuantumChannel(np.array(paulis, dtype=complex) / 2)


def test_ry_pi_flips_ground_state():
    out = standard_gate("RY", [math.pi]) @ np.array([1, 0])
    assert abs(abs(out[1]) - 1) < 1e-15


def test_cnot_from_sensing_to_ancilla():
    state = DensityMatrix.basis(0b01, 4)  # |0_A 1_S>
    out = apply_unitary(state, standard_gate("CNOT", control=S, target=A), [0, 1])
    assert out.populations()[0b11] == pytest.approx(1.0)


def test_x_sx_sx_is_identity():
    x, sx = standard_gate("X"), standard_gate("SX")
    assert equal_up_to_phase(x @ sx @ sx, np.eye(2))


def test_unknown_and_malformed_gates_are_rejected():
    with pytest.raises(QuantumError):
        standard_gate("TOFFOLI")
    with pytest.raises(QuantumError):
        standard_gate("RY")
    with pytest.raises(QuantumError):
        standard_gate("CNOT")


def test_identity_and_x_actions():
    rho = random_density(np.random.default_rng(1), 4)
    same = apply_channel(rho, QuantumChannel.identity(), [S])
    assert np.array_equal(same.matrix, rho.matrix)
    flipped = apply_unitary(DensityMatrix.basis(0, 4), standard_gate("X"), [S])
    assert flipped.populations()[0b01] == pytest.approx(1.0)


@pytest.mark.parametrize("theta", [0.1, 1.0, 2.5])
def test_ry_on_sensing_qubit_populations(theta):
    out = apply_unitary(DensityMatrix.basis(0, 4), ry(theta), [S])
    pops = out.populations()
    assert pops[0] == pytest.approx(math.cos(theta / 2) ** 2, abs=1e-14)
    assert pops[1] == pytest.approx(math.sin(theta / 2) ** 2, abs=1e-14)


def test_full_damping_resets_to_ground():
    rho = random_density(np.random.default_rng(2), 2)
    out = apply_channel(rho, amplitude_damping(1.0), [0])
    assert np.allclose(out.matrix, np.diag([1, 0]), atol=1e-15)


def test_choi_of_identity_is_rank_one():
    j = choi_from_kraus(QuantumChannel.identity())
    omega = np.array([1, 0, 0, 1])
    assert np.allclose(j.matrix, np.outer(omega, omega))
    assert np.linalg.matrix_rank(j.matrix) == 1


def test_choi_of_depolarizing_channel_is_flat():
    j = choi_from_kraus(depolarizing())
    assert np.allclose(j.matrix, np.eye(4) / 2)


def test_kraus_from_choi_recovers_unitary():
    u = standard_gate("RX", [0.7]) @ standard_gate("RZ", [1.1])
    ch = kraus_from_choi(choi_from_kraus(QuantumChannel.from_unitary(u)))
    assert ch.rank == 1
    assert equal_up_to_phase(ch.kraus_ops[0], u)
    ident = kraus_from_choi(choi_from_kraus(QuantumChannel.identity()))
    assert ident.rank == 1 and equal_up_to_phase(ident.kraus_ops[0], np.eye(2))


def test_amplitude_damping_round_trip():
    ch = kraus_from_choi(choi_from_kraus(amplitude_damping(0.3)))
    assert ch.rank == 2
    out = apply_channel(DensityMatrix.basis(1, 2), ch, [0])
    assert out.populations()[1] == pytest.approx(0.7, abs=1e-12)


def test_round_trip_on_test_states():
    rng = np.random.default_rng(3)
    ch = amplitude_damping(0.2).then(depolarizing())
    back = kraus_from_choi(ch.choi())
    for _ in range(6):
        rho = random_density(rng, 2)
        assert np.allclose(ch.apply_matrix(rho.matrix), back.apply_matrix(rho.matrix), atol=1e-10)


def test_non_cp_choi_is_rejected():
    with pytest.raises(QuantumError):
        kraus_from_choi(ChoiMatrix(np.diag([1.0, -0.5, 0.0, 1.5]).astype(complex)))


def test_measure_ground_state():
    state = DensityMatrix.basis(0, 4)
    post, prob = measure_and_postselect(state, S, 0)
    assert prob == 1.0
    assert np.array_equal(post.matrix, state.matrix)


def test_measure_ancilla_after_enhancement_circuit():
    theta, beta = 1.0, 0.4
    state = apply_unitary(DensityMatrix.basis(0, 4), ry(theta), [S])
    for name, params in (("CNOT", []), ("X", None), ("CRY", [beta])):
        if params is None:
            state = apply_unitary(state, standard_gate(name), [S])
        else:
            state = apply_unitary(state, standard_gate(name, params, control=S, target=A), [0, 1])
    post, prob = measure_and_postselect(state, A, 1)
    expected = math.sin(beta / 2) ** 2 * math.cos(theta / 2) ** 2 + math.sin(theta / 2) ** 2
    assert prob == pytest.approx(expected, abs=1e-14)
    # conditional sensing state: ground amplitude sin(theta/2), excited sin(beta/2)cos(theta/2)
    pops = partial_trace(post, [S]).populations()
    assert pops[0] == pytest.approx(math.sin(theta / 2) ** 2 / expected, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([A, S]))
def test_outcome_probabilities_sum_to_one(seed, qubit):
    rho = random_density(np.random.default_rng(seed), 4)
    assert outcome_probabilities(rho, qubit).sum() == pytest.approx(1.0, abs=1e-12)


def test_partial_trace_of_product_state():
    rng = np.random.default_rng(4)
    ra, rs = random_density(rng, 2), random_density(rng, 2)
    out = partial_trace(ra.tensor(rs), [S])
    assert np.allclose(out.matrix, rs.matrix, atol=1e-14)


@pytest.mark.parametrize("keep", [A, S])
def test_partial_trace_of_bell_state(keep):
    bell = DensityMatrix.from_pure(np.array([1, 0, 0, 1]) / math.sqrt(2))
    assert np.allclose(partial_trace(bell, [keep]).matrix, np.eye(2) / 2)


def test_ancilla_is_unentangled_after_sensing():
    state = apply_unitary(DensityMatrix.basis(0, 4), ry(1.2), [S])
    assert np.allclose(partial_trace(state, [A]).matrix, np.diag([1, 0]), atol=1e-15)


def test_embed_places_operator_on_target():
    x = standard_gate("X")
    assert np.array_equal(embed(x, [A], 2), np.kron(x, np.eye(2)))
    assert np.array_equal(embed(x, [S], 2), np.kron(np.eye(2), x))


@pytest.mark.parametrize("bad", [np.diag([0.5, 0.6]), np.array([[0.5, 0.5], [0.0, 0.5]]),
                                 np.diag([1.2, -0.2])])
def test_invalid_density_matrices_raise(bad):
    with pytest.raises(QuantumError):
        DensityMatrix(bad)


def test_unnormalised_pure_state_raises():
    with pytest.raises(QuantumError):
        PureState(np.array([1.0, 1.0]))


def test_non_trace_preserving_kraus_set_raises():
    with pytest.raises(QuantumError):
        QuantumChannel(np.array([np.eye(2) * 0.9], dtype=complex))
