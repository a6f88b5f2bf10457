import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from biphoton.errors import BandError
from biphoton.fibermodel import C_LIGHT
from biphoton.jointspectrum import (
    SpectralFilter,
    conditional_spectrum,
    default_windows,
    filtered_rates,
    frequency_covariance,
    fwhm,
    joint_spectral_intensity,
    jsi_grid,
    marginal,
    pump_bandwidth,
    pump_pair_envelope,
)
from biphoton.phasematch import conjugate_idler

TWO_PI_C = 2 * np.pi * C_LIGHT * 1e9  # rad/s * nm


def nu_fwhm(spectrum):
    return fwhm(C_LIGHT / spectrum.wavelength * 1e-3, spectrum.values)


def test_pump_bandwidth(pump):
    assert pump_bandwidth(pump) == pytest.approx(0.441 / 6.7e-12, rel=1e-3)
    assert pump_bandwidth(pump) == pytest.approx(65.8e9, rel=2e-3)


def test_envelope_peak_and_symmetry(pump):
    assert pump_pair_envelope(pump, 0.0) == 1.0
    omega = np.linspace(0, 2e12, 50)
    np.testing.assert_array_equal(pump_pair_envelope(pump, omega), pump_pair_envelope(pump, -omega))


def test_envelope_width_is_sqrt2_pump(pump):
    half = brentq(lambda w: pump_pair_envelope(pump, w) ** 2 - 0.5, 0.0, 1e13)
    expected = math.sqrt(2) * 2 * np.pi * pump_bandwidth(pump)
    assert 2 * half == pytest.approx(expected, rel=1e-10)


def test_grid_normalization(grid_079):
    assert grid_079.intensity.max() == 1.0
    assert grid_079.intensity.min() >= 0.0
    assert np.all(np.diff(grid_079.signal_axis) > 0) and np.all(np.diff(grid_079.idler_axis) > 0)


def test_peak_at_phase_matched_pair(grid_079, point_079):
    # the sub-cell ridge splits between neighbouring idler cells with a beat
    # along the diagonal, so the cell maximum is located to within one beat
    i, j = np.unravel_index(np.argmax(grid_079.intensity), grid_079.intensity.shape)
    ds = np.diff(grid_079.signal_axis)[0]
    di = np.diff(grid_079.idler_axis)[0]
    assert abs(grid_079.idler_axis[j] - conjugate_idler(400.0, grid_079.signal_axis[i])) <= di
    beat = ds / abs(1 - (point_079.idler / point_079.signal) ** 2 * ds / di)
    assert abs(grid_079.signal_axis[i] - point_079.signal) <= beat
    # per-wavelength cells carry the 1/lambda^2 Jacobian, pulling the peak by ~ sigma^2 * 2 / lambda
    sig = marginal(grid_079, "signal")
    pull = (sig.fwhm / 2.3548) ** 2 * 2 / point_079.signal
    assert sig.peak == pytest.approx(point_079.signal - pull, abs=ds)
    assert abs(1 / grid_079.signal_axis[i] - 1 / 266.0) * 266.0 < 0.02
    assert abs(1 / grid_079.idler_axis[j] - 1 / 800.0) * 800.0 < 0.05


@given(st.floats(260.0, 275.0), st.sampled_from([-1.0, 1.0]))
def test_ridge_beats_off_diagonal(env, pump, params, lam_s, side):
    lam_i = conjugate_idler(pump.center_wavelength, lam_s)
    shift = side * 3 * 2 * np.pi * pump_bandwidth(pump)
    off = TWO_PI_C / (TWO_PI_C / lam_i + shift)
    on_value = joint_spectral_intensity(env, pump, params, lam_s, lam_i)
    off_value = joint_spectral_intensity(env, pump, params, lam_s, off)
    assert on_value >= off_value


def test_anticorrelation(grid_079):
    cov = frequency_covariance(grid_079)
    assert cov[0, 1] < 0
    vals, vecs = np.linalg.eigh(cov)
    principal = vecs[:, np.argmax(vals)]
    assert principal[1] / principal[0] < 0


def test_marginal_widths(grid_079):
    sig, idl = marginal(grid_079, "signal"), marginal(grid_079, "idler")
    assert sig.fwhm == pytest.approx(9.0, rel=0.2)
    assert idl.fwhm == pytest.approx(80.0, rel=0.2)
    assert nu_fwhm(sig) == pytest.approx(nu_fwhm(idl), rel=0.05)


def test_marginal_axis_validation(grid_079):
    with pytest.raises(ValueError):
        marginal(grid_079, "pump")


@pytest.mark.parametrize("n_lo, n_hi", [(64, 128), (128, 256)])
def test_grid_refinement(env, pump, params, point_079, n_lo, n_hi):
    windows = default_windows(point_079.signal, pump.center_wavelength, 15.0)
    lo = jsi_grid(env, pump, params, *windows, n=n_lo)
    hi = jsi_grid(env, pump, params, *windows, n=n_hi)
    for axis in ("signal", "idler"):
        assert marginal(lo, axis).fwhm == pytest.approx(marginal(hi, axis).fwhm, rel=0.02)


def _dense_cell(env, pump, params, grid, i, j, ns=40, ni=600):
    """Pointwise JSI integrated over one cell on a dense frequency mesh."""
    s_lo, s_hi = grid.signal_edges[i], grid.signal_edges[i + 1]
    i_lo, i_hi = grid.idler_edges[j], grid.idler_edges[j + 1]
    ws = np.linspace(TWO_PI_C / s_hi, TWO_PI_C / s_lo, ns)
    wi = np.linspace(TWO_PI_C / i_hi, TWO_PI_C / i_lo, ni)
    values = joint_spectral_intensity(env, pump, params, TWO_PI_C / ws[:, None], TWO_PI_C / wi[None, :])
    return np.trapezoid(np.trapezoid(values, wi, axis=1), ws)


def test_cell_integration_matches_dense_quadrature(env, pump, params, point_079):
    windows = default_windows(point_079.signal, pump.center_wavelength, 15.0)
    grid = jsi_grid(env, pump, params, *windows, n=64)
    sig = grid.intensity.sum(axis=1)
    peak_row = int(np.argmax(sig))
    shoulder_row = int(np.argmin(np.abs(sig / sig.max() - 0.5)))
    ratios = []
    for row in (peak_row, shoulder_row):
        col = int(np.argmax(grid.intensity[row]))
        ratios.append((grid.intensity[row, col], _dense_cell(env, pump, params, grid, row, col)))
    assert ratios[1][0] / ratios[0][0] == pytest.approx(ratios[1][1] / ratios[0][1], rel=0.02)


def test_band_window_rejected(env, pump, params):
    with pytest.raises(BandError) as info:
        jsi_grid(env, pump, params, (630.0, 640.0), (250.0, 260.0), n=64)
    assert info.value.leg == "signal" and info.value.order == 1


def test_small_grid_rejected(env, pump, params, point_079):
    with pytest.raises(ValueError):
        jsi_grid(env, pump, params, (260.0, 275.0), n=32)


def test_conditional_width(grid_079):
    cond = conditional_spectrum(grid_079, SpectralFilter(266.0, 4.5))
    assert cond.fwhm == pytest.approx(41.0, rel=0.2)


def test_wide_filter_reproduces_marginal(grid_079):
    wide = SpectralFilter(grid_079.signal_axis.mean(), 10 * np.ptp(grid_079.signal_axis))
    cond = conditional_spectrum(grid_079, wide)
    assert np.max(np.abs(cond.values - marginal(grid_079, "idler").values)) < 0.01


def test_conditional_width_monotone_in_filter(grid_079, point_079):
    widths = [conditional_spectrum(grid_079, SpectralFilter(point_079.signal, b)).fwhm for b in (1, 2, 4.5, 8, 15)]
    assert np.all(np.diff(widths) >= 0)


def test_one_bin_filter_gives_grid_row(grid_079):
    k = 100
    edges = grid_079.signal_edges
    filt = SpectralFilter(0.5 * (edges[k] + edges[k + 1]), edges[k + 1] - edges[k])
    cond = conditional_spectrum(grid_079, filt)
    row = grid_079.intensity[k] / grid_079.intensity[k].max()
    np.testing.assert_allclose(cond.values, row, atol=1e-9)


def test_filter_weights():
    edges = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(SpectralFilter(2.0, 2.0).weights(edges), [0, 1, 1, 0])
    np.testing.assert_allclose(SpectralFilter(2.0, 1.0).weights(edges), [0, 0.5, 0.5, 0])
    gauss = SpectralFilter(2.0, 1.0, "gaussian").weights(edges)
    assert gauss[1] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        SpectralFilter(2.0, 0.0)
    with pytest.raises(ValueError):
        SpectralFilter(2.0, 1.0, "lorentzian")


def test_filtered_rates(grid_079, point_079):
    bw = [100, 3, 40, 20, 60, 5, 80, 10]
    rates = filtered_rates(grid_079, SpectralFilter(point_079.signal, 4.5), bw)
    assert list(rates.bandwidths) == sorted(bw)
    assert np.all(np.diff(rates.coincidence) >= -1e-12) and np.all(np.diff(rates.singles) >= -1e-12)
    assert rates.coincidence[-1] == 1.0 and rates.singles[-1] == 1.0
    at40 = list(rates.bandwidths).index(40)
    assert rates.coincidence[at40] >= 0.95
    assert rates.singles[at40] < 0.95


def test_filtered_rates_single_bandwidth(grid_079, point_079):
    rates = filtered_rates(grid_079, SpectralFilter(point_079.signal, 4.5), [40.0])
    assert rates.coincidence.tolist() == [1.0] and rates.singles.tolist() == [1.0]


def test_fwhm_of_gaussian():
    x = np.linspace(-10, 10, 20001)
    y = np.exp(-4 * math.log(2) * (x / 3.0) ** 2)
    assert fwhm(x, y) == pytest.approx(3.0, rel=1e-6)
    assert math.isnan(fwhm(x, np.ones_like(x)))
