"""Power model fitting, ridge detection, and frequency band steering.

Oracles: model predictions are re-evaluated with an inline re-implementation
of the formula; optimal_frequency is checked against an explicit brute-force
argmin; fits are generate-then-recover round trips from known parameters.
"""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jouletune.device import GroundTruth
from jouletune.errors import ConfigurationError, FitError, UnderDeterminedError
from jouletune.powermodel import (
    FrequencySample,
    PowerModel,
    detect_ridge,
    fit,
    frequency_band,
    model_from_json,
    model_to_json,
    optimal_frequency,
    read_samples_csv,
    write_samples_csv,
)
from jouletune.presets import device


def formula(p_idle, p_max, alpha, tau_ft, beta, v0, f):
    v = v0 if f < tau_ft else v0 * (1 + beta * (f - tau_ft))
    return min(p_max, p_idle + alpha * f * v * v)


def sweep(model_params, grid, noise=0.0, rng=None, with_voltage=True):
    samples = []
    for f in grid:
        p = formula(*model_params, f)
        if noise:
            p *= 1 + rng.normal(0, noise)
        v = None
        if with_voltage:
            p_idle, p_max, alpha, tau_ft, beta, v0 = model_params
            v = v0 if f < tau_ft else v0 * (1 + beta * (f - tau_ft))
        samples.append(FrequencySample(frequency=f, power=p, voltage=v))
    return samples


A100ish = (55.0, 250.0, 0.135, 1015.0, 0.00108, 0.7)
GRID = list(range(210, 1411, 50))


# -- prediction ----------------------------------------------------------------

def test_predict_power_examples():
    m = PowerModel(p_idle=50, p_max=300, alpha=0.1, tau_ft=2000, beta=0.0, v0=1.0)
    assert m.predict_power(1000, 1.0) == pytest.approx(150.0)
    capped = PowerModel(p_idle=50, p_max=300, alpha=0.3, tau_ft=2000, beta=0.0, v0=1.0)
    assert capped.predict_power(1000, 1.0) == pytest.approx(300.0)


def test_predict_voltage_examples():
    m = PowerModel(p_idle=50, p_max=300, alpha=0.1, tau_ft=1000, beta=0.002, v0=1.0)
    assert m.predict_voltage(999) == 1.0
    assert m.predict_voltage(1000) == 1.0  # continuous at the threshold
    assert m.predict_voltage(1500) == pytest.approx(2.0)


@given(
    p_idle=st.floats(min_value=1, max_value=100),
    alpha=st.floats(min_value=0.01, max_value=0.5),
    tau=st.floats(min_value=400, max_value=1200),
    beta=st.floats(min_value=0.0, max_value=0.005),
    v0=st.floats(min_value=0.5, max_value=1.5),
    f=st.floats(min_value=100, max_value=2000),
)
@settings(max_examples=80, deadline=None)
def test_prediction_matches_formula_oracle(p_idle, alpha, tau, beta, v0, f):
    p_max = p_idle + 500
    m = PowerModel(p_idle=p_idle, p_max=p_max, alpha=alpha, tau_ft=tau, beta=beta, v0=v0)
    assert m.predict_power(f) == pytest.approx(
        formula(p_idle, p_max, alpha, tau, beta, v0, f)
    )


def test_predict_power_monotone_and_capped():
    m = PowerModel(p_idle=40, p_max=150, alpha=0.1, tau_ft=800, beta=0.002, v0=0.8)
    values = [m.predict_power(f) for f in range(100, 2100, 50)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert max(values) <= 150


# -- ridge detection --------------------------------------------------------------

def test_ridge_flat_then_rising():
    samples = [
        FrequencySample(800, 100, 0.70),
        FrequencySample(900, 110, 0.70),
        FrequencySample(1000, 120, 0.70),
        FrequencySample(1100, 140, 0.75),
        FrequencySample(1200, 170, 0.85),
    ]
    ridge = detect_ridge(samples)
    assert ridge.frequency == 1000
    assert ridge.voltage == pytest.approx(0.70)


def test_ridge_absent_when_flat_everywhere():
    samples = [FrequencySample(f, 100 + f * 0.01, 0.70) for f in (800, 900, 1000, 1100)]
    assert detect_ridge(samples) is None


def test_ridge_needs_enough_samples_and_voltages():
    short = [FrequencySample(f, 100, 0.7) for f in (800, 900, 1000)]
    with pytest.raises(ConfigurationError):
        detect_ridge(short)
    missing = [FrequencySample(f, 100, None) for f in (800, 900, 1000, 1100)]
    with pytest.raises(ConfigurationError):
        detect_ridge(missing)


def test_ridge_warns_on_non_monotone_tail():
    samples = [
        FrequencySample(800, 100, 0.70),
        FrequencySample(900, 110, 0.70),
        FrequencySample(1000, 130, 0.80),
        FrequencySample(1100, 150, 0.75),  # dips after rising
    ]
    with pytest.warns(UserWarning):
        ridge = detect_ridge(samples)
    assert ridge.frequency == 900


def test_ridge_on_simulated_sweep_hits_true_tau():
    dev = device("a100_like")
    grid = [c for c in dev.spec.supported_core_clocks]
    samples = [
        FrequencySample(c, dev.modeled_power(c), dev.voltage(c)) for c in grid
    ]
    ridge = detect_ridge(samples)
    step = grid[1] - grid[0]
    assert abs(ridge.frequency - dev.ground_truth.tau_ft) <= step


# -- fitting -----------------------------------------------------------------------

def test_noise_free_fit_recovers_parameters():
    samples = sweep(A100ish, GRID)
    model = fit(samples, tdp=250.0)
    p_idle, p_max, alpha, tau, beta, v0 = A100ish
    assert model.p_idle == pytest.approx(p_idle, rel=1e-6)
    assert model.alpha == pytest.approx(alpha, rel=1e-6)
    assert model.v0 == pytest.approx(v0, rel=1e-6)
    assert abs(model.tau_ft - tau) <= 50  # one grid step
    assert model.beta == pytest.approx(beta, rel=1e-3)
    assert model.residual_rms < 1e-6


def test_noise_free_fit_without_voltages():
    # v0 is not identifiable without voltage readings; the fit should land
    # on a normalized but predictively equivalent model.
    samples = sweep(A100ish, GRID, with_voltage=False)
    model = fit(samples, tdp=250.0)
    for f in GRID:
        assert model.predict_power(f) == pytest.approx(
            formula(*A100ish, f), rel=1e-3
        )
    assert abs(model.tau_ft - A100ish[3]) <= 50


def test_noisy_fit_statistical_round_trip():
    p_idle, p_max, alpha, tau, beta, v0 = A100ish
    ok_pidle = ok_alpha = ok_tau = ok_beta = 0
    trials = 20
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        samples = sweep(A100ish, GRID, noise=0.01, rng=rng)
        model = fit(samples, tdp=250.0)
        ok_pidle += abs(model.p_idle - p_idle) / p_idle < 0.05
        ok_alpha += abs(model.alpha - alpha) / alpha < 0.05
        ok_tau += abs(model.tau_ft - tau) <= 50
        ok_beta += abs(model.beta - beta) / beta < 0.10
    assert ok_pidle >= 18
    assert ok_alpha >= 18
    assert ok_tau >= 18
    assert ok_beta >= 18


def test_flat_voltage_fit_fixes_beta_to_zero():
    flat = (40.0, 300.0, 0.1, 5000.0, 0.001, 1.0)  # tau above every sample
    samples = sweep(flat, GRID)
    with pytest.warns(UserWarning):
        model = fit(samples, tdp=300.0)
    assert model.beta == 0.0
    assert model.p_idle == pytest.approx(40.0, rel=1e-6)
    assert model.alpha == pytest.approx(0.1, rel=1e-6)


def test_plateau_is_excluded_and_sets_p_max():
    capped = (50.0, 200.0, 0.135, 1015.0, 0.00108, 0.7)
    grid = list(range(210, 1411, 25))
    samples = sweep(capped, grid)
    assert max(s.power for s in samples) == pytest.approx(200.0)
    model = fit(samples)  # no tdp given: plateau must supply p_max
    assert model.p_max == pytest.approx(200.0, rel=1e-6)
    assert model.p_idle == pytest.approx(50.0, rel=1e-4)
    assert model.alpha == pytest.approx(0.135, rel=1e-4)


def test_under_determined_fit():
    samples = sweep(A100ish, [300, 500, 700, 900, 1100])
    assert len(samples) == 5
    with pytest.raises(UnderDeterminedError):
        fit(samples)


def test_non_convergence_raises_fit_error():
    rng = np.random.default_rng(0)
    samples = sweep(A100ish, GRID, noise=0.05, rng=rng, with_voltage=False)
    with pytest.raises(FitError):
        fit(samples, tdp=250.0, max_iterations=1)


@given(c=st.floats(min_value=0.1, max_value=10))
@settings(max_examples=15, deadline=None)
def test_fit_is_scale_consistent(c):
    base = fit(sweep(A100ish, GRID), tdp=250.0)
    scaled_samples = [
        FrequencySample(s.frequency, s.power * c, s.voltage)
        for s in sweep(A100ish, GRID)
    ]
    scaled = fit(scaled_samples, tdp=250.0 * c)
    assert scaled.p_idle == pytest.approx(base.p_idle * c, rel=1e-6)
    assert scaled.alpha == pytest.approx(base.alpha * c, rel=1e-6)
    assert scaled.tau_ft == pytest.approx(base.tau_ft, rel=1e-6)
    assert scaled.beta == pytest.approx(base.beta, rel=1e-6)


# -- optimal frequency ----------------------------------------------------------------

def brute_force_optimum(model, grid):
    best_f = None
    best_value = math.inf
    for f in grid:
        value = model.predict_power(f) / f
        if value < best_value or (value == best_value and f > best_f):
            best_f, best_value = f, value
    return best_f


def test_optimum_sits_at_or_above_the_ridge():
    m = PowerModel(p_idle=55, p_max=250, alpha=0.135, tau_ft=1015, beta=0.00108, v0=0.7)
    grid = list(range(210, 1411, 15))
    f_opt = optimal_frequency(m, grid)
    assert f_opt >= 1015 - 15


def test_zero_idle_power_pushes_optimum_to_the_ridge():
    m = PowerModel(p_idle=1e-12, p_max=500, alpha=0.1, tau_ft=900, beta=0.002, v0=1.0)
    grid = list(range(300, 1501, 100))
    f_opt = optimal_frequency(m, grid)
    # P*/f = alpha v(f)^2 is flat below the ridge, rising above: the tie
    # among flat-region clocks breaks toward the highest one below tau_ft
    assert f_opt == 900


@given(
    p_idle=st.floats(min_value=0.5, max_value=120),
    alpha=st.floats(min_value=0.02, max_value=0.3),
    tau=st.sampled_from([600, 800, 1000, 1200]),
    beta=st.floats(min_value=5e-4, max_value=4e-3),
)
@settings(max_examples=60, deadline=None)
def test_optimum_matches_brute_force(p_idle, alpha, tau, beta):
    m = PowerModel(p_idle=p_idle, p_max=1e9, alpha=alpha, tau_ft=tau, beta=beta, v0=0.8)
    grid = list(range(300, 1501, 75))
    assert optimal_frequency(m, grid) == brute_force_optimum(m, grid)


def test_energy_decreases_below_the_ridge():
    m = PowerModel(p_idle=55, p_max=1e9, alpha=0.135, tau_ft=1015, beta=0.00108, v0=0.7)
    flat = [f for f in range(210, 1016, 15)]
    values = [m.predict_power(f) / f for f in flat]
    assert all(b < a for a, b in zip(values, values[1:]))


# -- frequency band -----------------------------------------------------------------

def test_band_example_on_a_25_point_grid():
    supported = list(range(300, 2101, 75))
    assert len(supported) == 25
    band = frequency_band(1300, supported, pct=0.10)
    assert list(band.clocks) == [1200, 1275, 1350, 1425]
    assert band.reduction == pytest.approx(0.84)


def test_band_membership_matches_interval_oracle():
    supported = list(range(210, 1411, 15))
    f_opt = 1020
    band = frequency_band(f_opt, supported, pct=0.10)
    expected = [c for c in supported if 0.9 * f_opt <= c <= 1.1 * f_opt]
    assert list(band.clocks) == expected
    assert band.reduction == pytest.approx(1 - len(expected) / len(supported))


def test_band_falls_back_to_nearest_clock():
    # 600 +- 5% is [570, 630], which covers no supported clock
    band = frequency_band(600, [300, 1000, 2000], pct=0.05)
    assert list(band.clocks) == [300]
    assert band.reduction == pytest.approx(1 - 1 / 3)


def test_band_fallback_ties_toward_higher_clock():
    band = frequency_band(650, [300, 1000, 2000], pct=0.01)
    assert list(band.clocks) == [1000]


def test_band_reduction_monotone_in_pct():
    supported = list(range(210, 1411, 15))
    reductions = [
        frequency_band(1000, supported, pct=pct).reduction
        for pct in (0.05, 0.10, 0.20, 0.40)
    ]
    assert all(b <= a for a, b in zip(reductions, reductions[1:]))


def test_band_rejects_bad_pct():
    with pytest.raises(ConfigurationError):
        frequency_band(1000, [500, 1000], pct=1.5)


# -- serialization --------------------------------------------------------------------

def test_samples_csv_round_trip(tmp_path):
    samples = sweep(A100ish, GRID)
    path = tmp_path / "sweep.csv"
    write_samples_csv(samples, path)
    loaded = read_samples_csv(path)
    assert len(loaded) == len(samples)
    assert loaded[0].frequency == samples[0].frequency
    assert loaded[-1].power == pytest.approx(samples[-1].power, rel=1e-5)
    assert loaded[3].voltage == pytest.approx(samples[3].voltage, rel=1e-4)


def test_samples_csv_without_voltage_column(tmp_path):
    samples = sweep(A100ish, GRID, with_voltage=False)
    path = tmp_path / "sweep.csv"
    write_samples_csv(samples, path)
    loaded = read_samples_csv(path)
    assert all(s.voltage is None for s in loaded)


def test_samples_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("freq,watts\n100,50\n")
    with pytest.raises(ConfigurationError):
        read_samples_csv(path)


def test_model_json_round_trip(tmp_path):
    model = fit(sweep(A100ish, GRID), tdp=250.0)
    path = tmp_path / "model.json"
    model_to_json(model, path)
    loaded = model_from_json(path)
    assert loaded == model


def test_model_invariants_enforced():
    with pytest.raises(ConfigurationError):
        PowerModel(p_idle=-1, p_max=100, alpha=0.1, tau_ft=500, beta=0.001)
    with pytest.raises(ConfigurationError):
        PowerModel(p_idle=50, p_max=40, alpha=0.1, tau_ft=500, beta=0.001)
    with pytest.raises(ConfigurationError):
        PowerModel(p_idle=50, p_max=100, alpha=0.1, tau_ft=500, beta=-0.2)
