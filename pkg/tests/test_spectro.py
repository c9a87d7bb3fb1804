import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pillartune.exciton import ExcitonParams, exciton_state
from pillartune.spectro import (
    FitError,
    PolarizationScan,
    ScanInputError,
    SpectrumModel,
    algebraic_fss,
    fit_fss_sine,
    hwp_to_detection_angle,
    peak_centroid,
    scan_from_csv,
    scan_to_csv,
    shift_law,
    synth_polarization_scan,
)


def sinusoid_scan(delta, theta0, offset=0.0, n=36, noise=0.0, seed=0):
    angles = np.arange(n) * math.pi / n
    energies = shift_law(angles, delta, theta0, offset)
    if noise:
        energies = energies + np.random.default_rng(seed).normal(0, noise, n)
    return PolarizationScan(angles=angles, peak_energies=energies, sigma=noise)


def exciton_params_with_splitting(dx, dy):
    return ExcitonParams(
        zero_field_energy=1.34,
        zero_field_splitting=(dx, dy),
        inplane_coupling=((0.0, 0.0), (0.0, 0.0)),
        vertical_coupling=(0.0, 0.0),
        dipole=0.0,
        polarizability=0.0,
    )


# -- peak centroid -------------------------------------------------------------


def test_spectrum_model_amplitudes_are_malus_weights():
    m = SpectrumModel(e_high=5.0, e_low=-5.0, linewidth=100.0, theta0=0.3)
    for theta in np.linspace(0.0, math.pi, 13):
        wh, wl = m.amplitudes(theta)
        assert 0.0 <= wh <= 1.0 and 0.0 <= wl <= 1.0
        assert wh + wl == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        SpectrumModel(e_high=1.0, e_low=0.0, linewidth=0.0, theta0=0.0)


def test_centroid_on_axis_returns_line_centres():
    m = SpectrumModel(e_high=5.0, e_low=-5.0, linewidth=100.0, theta0=0.3)
    assert peak_centroid(m, 0.3) == 5.0
    assert peak_centroid(m, 0.3 + math.pi / 2.0) == -5.0


def test_centroid_midpoint_at_45_degrees():
    m = SpectrumModel(e_high=10.0, e_low=0.0, linewidth=100.0, theta0=0.0)
    c = peak_centroid(m, math.pi / 4.0)
    assert abs(c - 5.0) <= 0.2


def test_centroid_against_grid_search_oracle():
    m = SpectrumModel(e_high=6.0, e_low=-4.0, linewidth=80.0, theta0=0.7)
    for theta in np.linspace(0.0, math.pi, 9):
        grid = np.linspace(m.e_low - 1.0, m.e_high + 1.0, 2_000_001)
        oracle = grid[int(np.argmax(m.intensity(grid, theta)))]
        assert peak_centroid(m, theta) == pytest.approx(oracle, abs=1e-4)


def test_centroid_approaches_sinusoid_for_wide_lines():
    delta = 10.0
    m = SpectrumModel(e_high=delta, e_low=0.0, linewidth=1e4 * delta, theta0=0.4)
    for theta in np.linspace(0.0, math.pi, 7):
        sine = shift_law(theta, delta, 0.4, 0.0)
        assert abs(peak_centroid(m, theta) - sine) <= 1e-6 * delta


def test_centroid_amplitude_converges_to_splitting():
    # linewidth / splitting = 100: apparent amplitude within 1 % of the splitting
    delta = 1.0
    m = SpectrumModel(e_high=delta, e_low=0.0, linewidth=100.0 * delta, theta0=0.0)
    amp = peak_centroid(m, 0.0) - peak_centroid(m, math.pi / 2.0)
    assert abs(amp - delta) <= 0.01 * delta


# -- synthesis -----------------------------------------------------------------


def test_synth_noiseless_is_on_the_sinusoid():
    params = exciton_params_with_splitting(10.0, 0.0)
    scan = synth_polarization_scan(
        params, (0.0, 0.0, 0.0), linewidth=1e6, noise_sigma=0.0, n_angles=24, seed=1
    )
    expected = shift_law(scan.angles, 10.0, 0.0, 0.0)
    assert np.max(np.abs(scan.peak_energies - expected)) <= 1e-8


def test_synth_fig_s1_style_trace():
    # splitting ~10 ueV under a much wider line: sinusoid with two periods
    # per half-wave-plate revolution
    params = exciton_params_with_splitting(10.0, 0.0)
    scan = synth_polarization_scan(
        params, (0.0, 0.0, 0.0), linewidth=60.0, noise_sigma=0.0, n_angles=72, seed=1
    )
    fit = fit_fss_sine(scan)
    # at splitting/linewidth = 1/6 the apparent-peak law deviates from the
    # pure sinusoid by a few percent
    assert fit.delta_fss == pytest.approx(10.0, rel=0.05)
    # detection angle runs [0, pi): the sinusoid completes one full period,
    # i.e. two periods per 2*pi turn of the half-wave plate
    spectrum = np.fft.rfft(scan.peak_energies - scan.peak_energies.mean())
    assert int(np.argmax(np.abs(spectrum))) == 1


def test_synth_deterministic_for_fixed_seed():
    params = exciton_params_with_splitting(7.0, 2.0)
    a = synth_polarization_scan(params, (0, 0, 0), 60.0, 0.5, 36, seed=42)
    b = synth_polarization_scan(params, (0, 0, 0), 60.0, 0.5, 36, seed=42)
    assert np.array_equal(a.peak_energies, b.peak_energies)
    c = synth_polarization_scan(params, (0, 0, 0), 60.0, 0.5, 36, seed=43)
    assert not np.array_equal(a.peak_energies, c.peak_energies)


def test_synth_rejects_too_few_angles():
    params = exciton_params_with_splitting(5.0, 0.0)
    with pytest.raises(ScanInputError):
        synth_polarization_scan(params, (0, 0, 0), 60.0, 0.0, 5, seed=1)


# -- half-wave plate -----------------------------------------------------------


def test_hwp_doubling():
    assert hwp_to_detection_angle(0.0) == 0.0
    assert hwp_to_detection_angle(math.pi / 4.0) == pytest.approx(math.pi / 2.0)


@given(st.floats(0.0, 10.0))
@settings(max_examples=100, deadline=None)
def test_hwp_half_turn_period(theta):
    a = hwp_to_detection_angle(theta)
    b = hwp_to_detection_angle(theta + math.pi / 2.0)
    assert a == pytest.approx(b, abs=1e-9)


def test_hwp_period_in_fitted_signal():
    # composing the shift law with the plate mapping gives period pi/2 in
    # plate angle, measured numerically from the composed signal
    delta, theta0 = 8.0, 0.5
    hwp = np.arange(720) * (math.pi / 720.0)
    signal = shift_law(
        np.array([hwp_to_detection_angle(h) for h in hwp]), delta, theta0, 0.0
    )
    quarter, half = 180, 360  # pi/4 and pi/2 in samples
    assert np.max(np.abs(signal - np.roll(signal, quarter))) > 1.0
    assert np.max(np.abs(signal - np.roll(signal, half))) <= 1e-9


# -- fitting -------------------------------------------------------------------


def test_fit_recovers_exactly_on_noiseless_sinusoid():
    scan = sinusoid_scan(10.0, math.radians(30.0), offset=2.0)
    fit = fit_fss_sine(scan)
    assert fit.delta_fss == pytest.approx(10.0, abs=1e-8)
    assert fit.theta0 == pytest.approx(math.radians(30.0), abs=1e-8)
    assert fit.offset == pytest.approx(2.0, abs=1e-8)
    assert fit.residual_rms <= 1e-10


@pytest.mark.parametrize("delta", [0.5, 2.0, 5.0, 12.0, 20.0])
@pytest.mark.parametrize("theta0", [0.0, 0.6, 1.5, 2.8])
def test_fit_consistency_over_parameter_grid(delta, theta0):
    fit = fit_fss_sine(sinusoid_scan(delta, theta0))
    assert fit.delta_fss == pytest.approx(delta, rel=1e-6)
    diff = abs(fit.theta0 - theta0) % math.pi
    assert min(diff, math.pi - diff) <= 1e-6


def test_fit_rejects_short_scans():
    angles = np.arange(5) * math.pi / 5
    with pytest.raises(ScanInputError):
        PolarizationScan(angles=angles, peak_energies=np.zeros(5))


def test_fit_rejects_narrow_angle_coverage():
    angles = np.linspace(0.0, 0.5, 12)
    with pytest.raises(ScanInputError):
        PolarizationScan(angles=angles, peak_energies=np.zeros(12))


def test_fit_monte_carlo_uncertainty_calibration():
    """Reported 1-sigma tracks the observed scatter to 20 %."""
    rng = np.random.default_rng(2024)
    truth = 10.0
    n = 36
    angles = np.arange(n) * math.pi / n
    clean = shift_law(angles, truth, 0.6, 0.0)
    deltas = []
    reported = []
    for _ in range(500):
        noisy = clean + rng.normal(0.0, 0.5, n)
        fit = fit_fss_sine(
            PolarizationScan(angles=angles, peak_energies=noisy, sigma=0.5)
        )
        deltas.append(fit.delta_fss)
        reported.append(fit.uncertainties[0])
    empirical = float(np.std(deltas, ddof=1))
    mean_reported = float(np.mean(reported))
    assert abs(mean_reported - empirical) <= 0.2 * empirical


def test_fit_near_cancellation_brackets_truth():
    truth = 1.5
    fit = fit_fss_sine(sinusoid_scan(truth, 1.0, noise=0.3, seed=11))
    assert abs(fit.delta_fss - truth) <= 3.0 * max(fit.uncertainties[0], 0.1)


def test_theta0_uncertainty_diverges_at_degeneracy():
    strong = fit_fss_sine(sinusoid_scan(10.0, 0.8, noise=0.3, seed=3))
    weak = fit_fss_sine(sinusoid_scan(0.3, 0.8, noise=0.3, seed=3))
    assert weak.uncertainties[1] >= 10.0 * strong.uncertainties[1]


def test_fit_covariance_is_symmetric_psd():
    fit = fit_fss_sine(sinusoid_scan(6.0, 0.9, noise=0.4, seed=5))
    cov = fit.covariance
    assert np.allclose(cov, cov.T)
    assert np.all(np.linalg.eigvalsh(cov) >= -1e-12)


# -- algebraic splitting --------------------------------------------------------


def test_algebraic_sign_convention():
    params = exciton_params_with_splitting(9.0, 0.0)  # theta0 = 0
    state = exciton_state(params, (0.0, 0.0, 0.0))
    axes = (0.0, math.pi / 2.0)
    assert algebraic_fss(state, axes) == pytest.approx(9.0)
    rotated = exciton_state(exciton_params_with_splitting(-9.0, 0.0), (0, 0, 0))
    assert algebraic_fss(rotated, axes) == pytest.approx(-9.0)


def test_algebraic_requires_orthogonal_axes():
    state = exciton_state(exciton_params_with_splitting(5.0, 0.0), (0, 0, 0))
    with pytest.raises(ValueError):
        algebraic_fss(state, (0.0, 1.0))


def test_algebraic_sign_change_across_cancellation():
    axes = (0.0, math.pi / 2.0)
    values = []
    for dx in np.linspace(6.0, -6.0, 13):
        state = exciton_state(exciton_params_with_splitting(dx, 0.5), (0, 0, 0))
        values.append(algebraic_fss(state, axes))
    assert values[0] > 0 > values[-1]


def test_algebraic_equals_fitted_amplitude_when_axes_align():
    delta, theta0 = 7.5, 0.0
    scan = sinusoid_scan(delta, theta0, offset=0.0, n=72)
    fit = fit_fss_sine(scan)
    value = algebraic_fss(scan, (0.0, math.pi / 2.0))
    assert value == pytest.approx(fit.delta_fss, rel=0.01)


def test_algebraic_from_scan_interpolates():
    scan = sinusoid_scan(4.0, 0.3, offset=1.0, n=36)
    closed = 4.0 * math.cos(2.0 * (0.3 - 0.0))
    assert algebraic_fss(scan, (0.0, math.pi / 2.0)) == pytest.approx(
        closed, abs=0.05
    )


def test_degenerate_state_has_zero_algebraic_value():
    state = exciton_state(exciton_params_with_splitting(0.0, 0.0), (0, 0, 0))
    assert algebraic_fss(state, (0.2, 0.2 + math.pi / 2)) == 0.0


# -- CSV round trip --------------------------------------------------------------


def test_scan_csv_round_trip(tmp_path):
    scan = sinusoid_scan(5.0, 1.2, noise=0.2, seed=9)
    path = tmp_path / "scan.csv"
    scan_to_csv(scan, str(path))
    back = scan_from_csv(str(path))
    assert np.array_equal(back.angles, scan.angles)
    assert np.array_equal(back.peak_energies, scan.peak_energies)
    assert np.array_equal(back.sigma, scan.sigma)


def test_scan_csv_bad_header_reports_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ScanInputError):
        scan_from_csv(str(path))


def test_scan_csv_bad_row_reports_row_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("angle_rad,energy_ueV,sigma_ueV\n0.0,1.0,0.1\n0.1,oops,0.1\n")
    with pytest.raises(ScanInputError, match="row 3"):
        scan_from_csv(str(path))
