import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpsense.noise import DeviceProfile
from hpsense.protocol import PhysicsParams
from hpsense.stats import (BracketingError, FrequencyGrid, ScanSetup, ToyDataset, combined_llr,
                           combined_responses, exclusion_scan, expected_probabilities,
                           fit_background, fit_signal, generate_toy, llr_pvalue, llr_test,
                           multiqubit_scaling, sample_counts, shots_per_year, speedup_factor)
from hpsense.stats.fitting import (FitError, FitResult, LineSearchSpace, poisson_loglike,
                                   poly_basis, sinc2_template)
from hpsense.stats.rng import stream

SMALL = FrequencyGrid(f_min=4.45, f_max=4.55, step_mhz=1.0)
QUIET = DeviceProfile.noiseless(beta=0.4)


# random streams -------------------------------------------------------------

def test_streams_are_reproducible_and_distinct():
    a = stream(5, 0, 1).random(4)
    assert np.array_equal(a, stream(5, 0, 1).random(4))
    assert not np.array_equal(a, stream(5, 1, 1).random(4))
    assert not np.array_equal(a, stream(5, 0, 2).random(4))
    assert not np.array_equal(a, stream(6, 0, 1).random(4))


# grids and toys -------------------------------------------------------------

def test_grid_layout():
    g = FrequencyGrid()
    assert g.n_bins == 1251
    assert g.bin_centers[-1] == pytest.approx(5.0)
    assert g.scaled()[[0, -1]].tolist() == pytest.approx([-1.0, 1.0])
    with pytest.raises(ValueError):
        FrequencyGrid(f_min=4.0, f_max=4.001, step_mhz=0.3)
    with pytest.raises(ValueError):
        FrequencyGrid(f_min=5.0, f_max=4.0)


def test_noise_free_null_toy_is_empty():
    toy = generate_toy(PhysicsParams(kinetic_mixing=0.0), DeviceProfile.noiseless(beta=math.pi),
                       SMALL, 10_000, seed=1)
    assert toy.base_counts.sum() == 0 and toy.enh_counts.sum() == 0
    assert toy.success_counts.sum() == SMALL.n_bins * 10_000  # beta=pi always succeeds


def test_signal_excess_peaks_at_dark_photon_mass():
    grid = FrequencyGrid()
    prof = DeviceProfile(beta=0.4)
    sig = generate_toy(PhysicsParams(kinetic_mixing=2.8e-13, dm_mass_ghz=4.5), prof, grid,
                       1_000_000, seed=0, base_shots=2_000_000, asimov=True)
    null = generate_toy(PhysicsParams(kinetic_mixing=0.0), prof, grid, 1_000_000, seed=0,
                        base_shots=2_000_000, asimov=True)
    for name in ("base", "enh", "success"):
        excess = sig.histogram(name) - null.histogram(name)
        assert abs(grid.bin_centers[np.argmax(excess)] - 4.5) < 1e-9
        assert excess.min() > -1e-6


def test_base_count_mean_matches_binomial():
    probs = expected_probabilities(PhysicsParams(), DeviceProfile(), SMALL)
    n, shots, k = 1000, 10_000, 20
    draws = np.array([sample_counts(probs, SMALL, shots, shots, 9, i).base_counts[k]
                      for i in range(n)])
    p = probs.p_base[k]
    assert abs(draws.mean() - shots * p) < 3 * math.sqrt(shots * p * (1 - p) / n)


def test_toy_serialisation_round_trip(tmp_path):
    toy = generate_toy(PhysicsParams(), DeviceProfile(), SMALL, 5000, seed=2, toy_index=4)
    back = ToyDataset.from_json(json.loads(json.dumps(toy.to_json())))
    assert np.array_equal(back.enh_counts, toy.enh_counts) and back.toy_index == 4
    toy.write_csv(tmp_path / "toy.csv")
    lines = (tmp_path / "toy.csv").read_text().splitlines()
    assert lines[0] == "f_ghz,base_counts,enh_counts,success_counts"
    assert len(lines) == SMALL.n_bins + 1


def test_toy_rejects_inconsistent_counts():
    z = np.zeros(SMALL.n_bins)
    with pytest.raises(ValueError):
        ToyDataset(SMALL, 10, 10, z, z + 5, z + 2)


# fits -----------------------------------------------------------------------

def test_sinc2_template_peak_is_regular():
    x = 4.5 + np.array([0.0, 1e-13, -1e-13, 1e-3])
    vals = sinc2_template(x, 2000.0, 4.5)
    assert vals[0] == 1.0 and np.all(np.isfinite(vals))
    assert vals[1] == pytest.approx(1.0, abs=1e-15)
    assert vals[3] == pytest.approx(math.sin(2.0) ** 2 / 4.0)


def test_flat_background_fit():
    fit = fit_background(np.full(SMALL.n_bins, 400.0), SMALL)
    assert fit.converged
    coef = fit.background_coefficients
    assert coef[0] == pytest.approx(400.0, rel=1e-8)
    assert np.max(np.abs(coef[1:])) < 1e-6


def test_quadratic_background_recovered_over_toys():
    grid = FrequencyGrid(f_min=4.0, f_max=4.2, step_mhz=2.0)
    truth = np.array([500.0, 40.0, -30.0, 0, 0, 0])
    mu = poly_basis(grid.scaled()) @ truth
    rng = np.random.default_rng(11)
    fits = np.array([fit_background(rng.poisson(mu), grid).background_coefficients[:3]
                     for _ in range(100)])
    err = fits.std(axis=0, ddof=1) / math.sqrt(len(fits))
    assert np.all(np.abs(fits.mean(axis=0) - truth[:3]) < 3 * err)


def test_asimov_background_likelihood_at_least_truth():
    mu = poly_basis(SMALL.scaled()) @ np.array([900.0, 12.0, 3.0, -1.0, 0.5, 0.2])
    fit = fit_background(mu, SMALL)
    assert fit.log_likelihood >= poisson_loglike(mu, mu) - 1e-6


def test_null_signal_fit_is_small():
    mu = np.full(FrequencyGrid().n_bins, 5000.0)
    counts = np.random.default_rng(4).poisson(mu)
    grid = FrequencyGrid()
    search = LineSearchSpace(center=4.5)
    h0 = fit_background(counts, grid)
    h1 = fit_signal(counts, grid, search=search, background=h0)
    q, p = llr_test(h0, h1)
    assert q < 16 and p > 1e-3
    assert h1.amplitude < 2 * 3 * math.sqrt(5000)


def test_asimov_line_parameters_are_recovered():
    grid = FrequencyGrid()
    amp, omega, m_x = 800.0, 2000.0, 4.5003
    mu = poly_basis(grid.scaled()) @ np.array([2e4, 300.0, -50.0, 0, 0, 0])
    mu = mu + amp * sinc2_template(grid.bin_centers, omega, m_x)
    fit = fit_signal(mu, grid, search=LineSearchSpace(center=4.5))
    a, om, mx = fit.params[:3]
    assert a == pytest.approx(amp, rel=0.01)
    assert om == pytest.approx(omega, rel=0.01)
    assert mx == pytest.approx(m_x, rel=0.01)
    assert abs(mx - m_x) < 1e-6


def test_llr_helpers():
    fit = FitResult("H0", np.zeros(6), -10.0, True)
    assert llr_test(fit, FitResult("H1", np.zeros(9), -10.0, True)) == (0.0, 1.0)
    assert llr_pvalue(7.8147) == pytest.approx(0.05, abs=1e-5)
    with pytest.raises(FitError):
        llr_test(fit, FitResult("H1", np.zeros(9), -20.0, True))


def test_combined_null_is_zero_without_noise():
    toy = generate_toy(PhysicsParams(kinetic_mixing=0.0), QUIET, SMALL, 100_000, seed=0,
                       asimov=True)
    resp = combined_responses(QUIET, 4.5, 100_000)
    for mode in ("tied", "independent"):
        q, p = combined_llr(toy.enh_counts, toy.success_counts, SMALL, mode=mode,
                            responses=resp, search=LineSearchSpace(center=4.5))
        assert q == pytest.approx(0.0, abs=1e-6) and p == pytest.approx(1.0, abs=1e-6)


def test_combined_tied_needs_responses():
    toy = generate_toy(PhysicsParams(), DeviceProfile(), SMALL, 10_000, seed=0)
    with pytest.raises(ValueError):
        combined_llr(toy.enh_counts, toy.success_counts, SMALL, mode="tied")


# limits and arithmetic ------------------------------------------------------

def test_speedup_arithmetic():
    assert speedup_factor(1e-13, 1e-13) == 1.0
    assert speedup_factor(2.0, 1.0) == pytest.approx(16.0)
    assert speedup_factor(1.2, 1.0) == pytest.approx(2.0736)
    with pytest.raises(ValueError):
        speedup_factor(0.0, 1.0)


def test_multiqubit_scaling():
    assert multiqubit_scaling(3.0, 2) == pytest.approx(3.0)
    assert multiqubit_scaling(3.0, 100) == pytest.approx(1.98 * 3.0)
    vals = [multiqubit_scaling(1.0, n) for n in range(2, 50)]
    assert np.all(np.diff(vals) > 0)


def test_shots_per_year():
    n = shots_per_year(100, 30, 300, 100, 10)
    assert n == pytest.approx(8.1e7, rel=0.05)
    assert shots_per_year(100, 0, 300, 100, 10) / n == pytest.approx(1.3)
    assert shots_per_year(100, 30, 300, 50, 10) / n == pytest.approx(0.5)
    with pytest.raises(ValueError):
        shots_per_year(0, 30, 300, 100)


def small_scan(**kw):
    base = dict(physics=PhysicsParams(kinetic_mixing=5e-13), profile=DeviceProfile(beta=0.4),
                grid=SMALL, shots=1_000_000, mode="enh", asimov=True)
    base.update(kw)
    return ScanSetup(**base)


def test_asimov_exclusion_is_deterministic():
    a = exclusion_scan(small_scan())
    b = exclusion_scan(small_scan(seed=99))
    assert a.epsilon_95 == b.epsilon_95 > 0
    pvals = [p for _, p in a.pvalue_curve]
    assert np.all(np.diff(pvals) <= 0)


def test_doubling_shots_scales_limit():
    one = exclusion_scan(small_scan())
    two = exclusion_scan(small_scan(shots=2_000_000), start=one.epsilon_95)
    assert two.epsilon_95 / one.epsilon_95 == pytest.approx(2 ** -0.25, rel=0.1)


def test_enhanced_beats_base_at_equal_shots_with_readout_noise():
    prof = DeviceProfile(beta=0.2, readout_error=0.02, prep_error=0.001)
    enh = exclusion_scan(small_scan(profile=prof))
    base = exclusion_scan(small_scan(profile=prof, mode="base"))
    assert enh.epsilon_95 < base.epsilon_95


def test_bracketing_failure_raises():
    with pytest.raises(BracketingError):
        exclusion_scan(small_scan(), max_ladder=1, start=1e-20)


def test_scan_setup_validation():
    with pytest.raises(ValueError):
        small_scan(mode="both")


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 2.0))
def test_sampling_is_seed_deterministic(scale):
    shots = int(10_000 * scale)
    probs = expected_probabilities(PhysicsParams(), DeviceProfile(), SMALL)
    a = sample_counts(probs, SMALL, shots, shots, 17, 3)
    b = sample_counts(probs, SMALL, shots, shots, 17, 3)
    assert np.array_equal(a.enh_counts, b.enh_counts)
    assert np.all(a.enh_counts <= a.success_counts)
