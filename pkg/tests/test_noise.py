import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpsense.noise import (CoherenceTimes, DeviceProfile, confusion_matrix, delay_channel,
                           delay_kraus, lindblad_evolve, lindblad_rhs, noisy_preparation,
                           t1_from_quality_factor, thermal_population)
from hpsense.qcore import DensityMatrix, QuantumChannel, apply_channel

INF = math.inf


@pytest.mark.parametrize("q, f, t1", [(math.pi * 1e6, 5.0, 100.0), (2 * math.pi * 1e6, 5.0, 200.0),
                                      (math.pi * 1e6, 2.5, 200.0)])
def test_t1_from_quality_factor(q, f, t1):
    assert t1_from_quality_factor(q, f) == pytest.approx(t1, rel=1e-12)


def test_thermal_population_values():
    assert thermal_population(4.5, 0.0) == 0.0
    x = 6.62607015e-34 * 4.5e9 / (1.380649e-23 * 0.035)
    assert thermal_population(4.5, 0.035) == pytest.approx(math.exp(-x) / (1 + math.exp(-x)),
                                                           rel=1e-12)
    assert 0.0020 < thermal_population(4.5, 0.035) < 0.0022


def test_thermal_population_decreases_with_frequency():
    p = thermal_population(np.linspace(1, 8, 50), 0.035)
    assert np.all(np.diff(p) < 0)


def rho_states():
    rng = np.random.default_rng(7)
    out = [DensityMatrix.basis(0, 2), DensityMatrix.basis(1, 2),
           DensityMatrix.from_pure(np.array([1, 1j]) / math.sqrt(2))]
    for _ in range(3):
        g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        m = g @ g.conj().T
        out.append(DensityMatrix(m / np.trace(m).real))
    return out


def test_zero_delay_is_identity():
    ch = delay_channel(CoherenceTimes(100, 200, 0.01), 0.0)
    for rho in rho_states():
        assert np.array_equal(ch.apply_matrix(rho.matrix), rho.matrix)


def test_decay_over_one_t1():
    ch = delay_channel(CoherenceTimes(100, INF), 100.0)
    out = apply_channel(DensityMatrix.basis(1, 2), ch, [0])
    assert out.populations()[1] == pytest.approx(math.exp(-1), abs=1e-14)


def test_long_delay_reaches_thermal_state():
    times = CoherenceTimes(100, 200, 0.03)
    for rho in rho_states():
        out = delay_channel(times, 1e4).apply_matrix(rho.matrix)
        assert np.allclose(out, np.diag([0.97, 0.03]), atol=1e-6)


def test_full_damping_limit():
    ch = delay_channel(CoherenceTimes(1e-9, INF), 1.0)
    for rho in rho_states():
        assert np.allclose(ch.apply_matrix(rho.matrix), np.diag([1, 0]), atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.floats(5, 500), st.floats(0.05, 4), st.floats(0, 0.2), st.floats(0.01, 300))
def test_delay_semigroup(t1, tphi_ratio, p_th, t):
    times = CoherenceTimes(t1, tphi_ratio * t1, p_th)
    twice = delay_channel(times, t).then(delay_channel(times, t))
    once = delay_channel(times, 2 * t)
    for rho in rho_states():
        assert np.allclose(twice.apply_matrix(rho.matrix), once.apply_matrix(rho.matrix),
                           atol=1e-12)


def test_delay_matches_master_equation():
    times = CoherenceTimes(80, 120, 0.05)
    rho0 = DensityMatrix.from_pure(np.array([math.cos(0.4), math.sin(0.4) * 1j]))
    ref = lindblad_evolve(rho0, 0.0, 0.0, times, 60.0, steps=4000)
    out = delay_channel(times, 60.0).apply_matrix(rho0.matrix)
    assert np.allclose(out, ref.matrix, atol=1e-10)


def test_delay_kraus_broadcasts():
    ops = delay_kraus(np.array([50.0, 100.0]), 200.0, 0.0, np.array([[1.0], [2.0], [3.0]]))
    assert ops.shape == (3, 2, 8, 2, 2)
    assert np.allclose(np.einsum("...kba,...kbc->...ac", ops.conj(), ops), np.eye(2))


def test_lindblad_pure_decay():
    rho = lindblad_evolve(DensityMatrix.basis(1, 2), 0.0, 0.0, CoherenceTimes(100, INF), 100.0)
    assert rho.populations()[1] == pytest.approx(math.exp(-1), abs=1e-6)


def test_lindblad_free_rabi():
    eta = 0.3
    traj = lindblad_evolve(DensityMatrix.basis(0, 2), eta, 0.0, CoherenceTimes(INF, INF), 10.0,
                           steps=4000, trajectory=True)
    t = np.linspace(0, 10, 4001)
    assert np.max(np.abs(traj[:, 1, 1].real - np.sin(eta * t) ** 2)) < 1e-8


def test_lindblad_rejects_coarse_steps():
    with pytest.raises(ValueError):
        lindblad_evolve(DensityMatrix.basis(0, 2), 1.0, 0.0, CoherenceTimes(100, 200), 100.0,
                        steps=10)


def test_lindblad_rhs_is_traceless():
    rho = rho_states()[-1].matrix
    out = lindblad_rhs(rho, np.diag([0.2, -0.2]), CoherenceTimes(30, 40, 0.1))
    assert abs(np.trace(out)) < 1e-15


def test_confusion_matrix():
    assert np.array_equal(confusion_matrix(0.0), np.eye(2))
    assert np.allclose(confusion_matrix(0.5) @ [1, 0], [0.5, 0.5])
    assert np.allclose(confusion_matrix(0.1) @ confusion_matrix(0.1), confusion_matrix(0.18))
    with pytest.raises(ValueError):
        confusion_matrix(0.6)


def test_noisy_preparation():
    assert np.array_equal(noisy_preparation(0.0).matrix, np.diag([1, 0]))
    assert np.allclose(noisy_preparation(0.01).matrix, np.diag([0.99, 0.01]))
    times = CoherenceTimes(100, 200, 0.02)
    for p in (0.0, 0.05, 0.3):
        out = delay_channel(times, 1e4).apply_matrix(noisy_preparation(p).matrix)
        assert np.allclose(out, np.diag([0.98, 0.02]), atol=1e-6)


def test_device_profile_validation():
    prof = DeviceProfile()
    assert prof.coherence(5.0).t1 == pytest.approx(100.0)
    assert prof.coherence(5.0).t2 == pytest.approx(100.0)
    assert prof.gate_duration_us("cz") == pytest.approx(0.59)
    with pytest.raises(ValueError):
        DeviceProfile(readout_error=0.7)
    with pytest.raises(ValueError):
        DeviceProfile(gate_durations_ns={"FOO": 10})
    with pytest.raises(ValueError):
        DeviceProfile(unknown_field=1)
    assert isinstance(delay_channel(prof.coherence(5.0), 1.0), QuantumChannel)
