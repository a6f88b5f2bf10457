import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from biphoton import countingsim
from biphoton.config import build_calibration, build_detectors
from biphoton.countingsim import (
    BLOCK_PULSES,
    IDLER,
    SIGNAL,
    DetectorModel,
    SourceCalibration,
    SourceStats,
    TimeTagStream,
    apply_dead_time,
    car,
    coincidence_count,
    correlation_histogram,
    expected_singles_rate,
    g2_zero,
    gate_acceptance,
    loglog_exponent,
    peak_statistics,
    power_sweep,
    pulse_times,
    simulate_time_tags,
    subtract_fluorescence,
)
from biphoton.errors import UndefinedStatisticError

IDEAL = DetectorModel(efficiency=1.0, jitter_sigma=0.0, gate_window=400.0, dead_time=0.0)


def period_ps(pump):
    return 1e6 / pump.repetition_rate


def brute_histogram(s, i, w, span):
    k = int(span // w)
    tau = (np.asarray(s)[:, None] - np.asarray(i)[None, :]).ravel()
    b = np.floor(tau / w + 0.5).astype(np.int64)
    b = b[np.abs(b) <= k] + k
    return np.bincount(b, minlength=2 * k + 1)


def test_pulse_times(pump):
    t = pulse_times(pump, np.arange(10**6))
    assert np.all(np.diff(t) > 0)
    assert (t[-1] - t[0]) / (10**6 - 1) == pytest.approx(period_ps(pump), abs=1e-6)
    assert period_ps(pump) == pytest.approx(13157.9, abs=0.1)


def test_argument_validation():
    with pytest.raises(ValueError):
        SourceStats(-1e-3)
    with pytest.raises(ValueError):
        SourceStats(0.5, pair_statistics="deterministic")
    with pytest.raises(ValueError):
        DetectorModel(efficiency=1.2)
    with pytest.raises(ValueError):
        DetectorModel(gate_window=0.0)


def test_n_pulses_validated(pump):
    with pytest.raises(ValueError):
        simulate_time_tags(SourceStats(1e-3), IDEAL, IDEAL, pump, 0, seed=1)


def test_empty_streams_without_light(pump):
    s, i = simulate_time_tags(SourceStats(0.0), IDEAL, IDEAL, pump, 10**6, seed=1)
    assert len(s) == 0 and len(i) == 0


def test_deterministic_pairs_are_identical(pump):
    s, i = simulate_time_tags(SourceStats(1, pair_statistics="deterministic"), IDEAL, IDEAL, pump, 5000, seed=3)
    assert len(s) == len(i) == 5000
    np.testing.assert_array_equal(s.times, i.times)
    hist = correlation_histogram(s, i, 50.0, 2.5 * period_ps(pump))
    zero = hist.counts[hist.centers == 0][0]
    # all correlated mass sits at tau = 0; other bins hold only cross-pulse pairs at +-k periods
    assert zero == 5000
    comb = {int(np.argmin(np.abs(hist.centers - k * period_ps(pump)))) for k in (-2, -1, 0, 1, 2)}
    assert set(np.flatnonzero(hist.counts)) <= comb


def test_singles_rate_matches_expectation(pump):
    det = DetectorModel(efficiency=0.1, jitter_sigma=80.0, gate_window=400.0, dead_time=0.0)
    det_i = replace(det, efficiency=0.25)
    stats = SourceStats(1e-3, fluorescence_rate_idler=1e6, dark_rate_signal=1e5, dark_rate_idler=1e5)
    s, i = simulate_time_tags(stats, det, det_i, pump, 10**7, seed=11)
    for stream, d, ch in ((s, det, SIGNAL), (i, det_i, IDLER)):
        expected = expected_singles_rate(stats, d, pump, ch) * stream.duration
        assert abs(len(stream) - expected) < 3 * math.sqrt(expected)


def test_fluorescence_subtraction_recovers_pair_rate(config, pump):
    det_s, det_i = build_detectors(config)
    stats = build_calibration(config).at_power(140.0)
    stats = replace(stats, mean_pairs_per_pulse=1e-3)
    n = 10**8
    _, idler = simulate_time_tags(stats, det_s, det_i, pump, n, seed=5)
    _, offband = simulate_time_tags(replace(stats, mean_pairs_per_pulse=0.0), det_s, det_i, pump, n, seed=6)
    corrected = subtract_fluorescence(idler.rate, offband.rate)
    expected = 1e-3 * det_i.efficiency * gate_acceptance(det_i) * pump.repetition_rate * 1e6
    sigma = math.sqrt(len(idler) + len(offband)) / idler.duration
    assert abs(corrected - expected) < 3 * sigma


def test_subtract_fluorescence_identities():
    assert subtract_fluorescence(123.0, 0.0) == 123.0
    assert subtract_fluorescence(123.0, 123.0) == 0.0


def test_car_examples():
    assert car(1.0) == 0.0
    assert car(3e5 + 1) == 3e5


@given(
    st.lists(st.integers(0, 200_000), max_size=300),
    st.lists(st.integers(0, 200_000), max_size=300),
    st.floats(1.0, 5000.0),
    st.floats(0.0, 60_000.0),
)
def test_histogram_matches_brute_force(s, i, w, span):
    s, i = np.unique(s), np.unique(i)
    hist = correlation_histogram(s, i, w, span)
    np.testing.assert_array_equal(hist.counts, brute_histogram(s, i, w, span))
    assert hist.centers[len(hist.centers) // 2] == 0.0


def test_histogram_chunking_is_exact():
    rng = np.random.default_rng(0)
    s = np.unique(rng.integers(0, 10**6, 900))
    i = np.unique(rng.integers(0, 10**6, 900))
    whole = np.concatenate(list(countingsim._delay_pairs(s, i, -5e4, 5e4)))
    pieces = np.concatenate(list(countingsim._delay_pairs(s, i, -5e4, 5e4, chunk=7)))
    np.testing.assert_array_equal(np.sort(whole), np.sort(pieces))


def test_independent_streams_flat_histogram():
    rng = np.random.default_rng(2024)
    duration = 10**12  # ps
    s = np.unique(rng.integers(0, duration, 20_000))
    i = np.unique(rng.integers(0, duration, 20_000))
    # 11 bins keep the family-wise chance of a 3 sigma excursion near 3 %
    w, span = 5e5, 2.5e6
    hist = correlation_histogram(s, i, w, span)
    expected = len(s) * len(i) * w / duration  # edge loss ~ span / duration, negligible
    assert np.all(np.abs(hist.counts - expected) < 3 * math.sqrt(expected))
    chi2 = float(((hist.counts - expected) ** 2 / expected).sum())
    assert sps.chi2.sf(chi2, len(hist.counts)) > 1e-3


def test_independent_pulsed_streams_g2_is_one(pump):
    stats = SourceStats(0.02)
    n = 2 * 10**6
    s, _ = simulate_time_tags(stats, IDEAL, IDEAL, pump, n, seed=101)
    _, i = simulate_time_tags(stats, IDEAL, IDEAL, pump, n, seed=202)
    g2 = g2_zero(s, i, pump, 400.0)
    n_si = coincidence_count(s, i, 400.0)
    assert abs(g2 - 1) < 3 / math.sqrt(n_si)
    assert abs(car(g2)) < 3 / math.sqrt(n_si)


def test_g2_undefined_without_counts(pump):
    empty = TimeTagStream(SIGNAL, np.empty(0, np.int64), 1.0, 76 * 10**6)
    some = TimeTagStream(IDLER, np.array([0, 5], np.int64), 1.0, 76 * 10**6)
    with pytest.raises(UndefinedStatisticError):
        g2_zero(empty, some, pump, 400.0)
    with pytest.raises(UndefinedStatisticError):
        g2_zero(some, some, pump, 400.0, idler_background_rate=2.0)


@pytest.mark.parametrize("mu, n", [(1e-3, 10**7), (1e-4, 10**8), (1e-5, 10**9)])
def test_car_times_mu_tends_to_one(pump, mu, n):
    s, i = simulate_time_tags(SourceStats(mu), IDEAL, IDEAL, pump, n, seed=7)
    value = car(g2_zero(s, i, pump, 400.0)) * mu
    assert value == pytest.approx(1.0, rel=0.15)


def test_halving_gate_keeps_g2(pump):
    s, i = simulate_time_tags(SourceStats(1e-3), IDEAL, IDEAL, pump, 10**7, seed=8)
    full = g2_zero(s, i, pump, 400.0)
    half = g2_zero(s, i, pump, 200.0)
    assert half == pytest.approx(full, rel=3 / math.sqrt(coincidence_count(s, i, 400.0)))


def test_side_peaks_depend_on_mu(config, pump):
    det_s, det_i = build_detectors(config)
    span = 2.5 * period_ps(pump)
    s, i = simulate_time_tags(SourceStats(0.1), IDEAL, IDEAL, pump, 10**6, seed=9)
    loud = peak_statistics(correlation_histogram(s, i, 50.0, span), period_ps(pump), 400.0)
    assert min(loud.side_significance) > 5
    stats = build_calibration(config).at_power(140.0)
    s, i = simulate_time_tags(stats, det_s, det_i, pump, 10**9, seed=10)
    quiet = peak_statistics(correlation_histogram(s, i, 50.0, span), period_ps(pump), 400.0)
    assert quiet.central_significance > 5
    assert max(abs(x) for x in quiet.side_significance) < 3


def test_peak_statistics_needs_span(pump):
    hist = correlation_histogram(np.array([0]), np.array([0]), 50.0, 1000.0)
    with pytest.raises(UndefinedStatisticError):
        peak_statistics(hist, period_ps(pump), 400.0)


def _reference_dead_time(times, dead):
    kept = []
    for t in times:
        if not kept or t - kept[-1] >= max(dead, 1):
            kept.append(t)
    return np.array(kept, np.int64)


@given(st.lists(st.integers(0, 10_000), max_size=200), st.floats(0.0, 500.0))
def test_dead_time_properties(raw, dead):
    times = np.sort(np.array(raw, np.int64))
    out = apply_dead_time(times, dead)
    assert np.all(np.diff(out) >= max(dead, 1))
    assert np.all(np.isin(out, times))
    np.testing.assert_array_equal(out, _reference_dead_time(times, dead))


def test_streams_strictly_increasing_after_dead_time(config, pump):
    det_s, det_i = build_detectors(config)
    stats = SourceStats(0.05, fluorescence_rate_idler=1e7, dark_rate_signal=1e7)
    s, i = simulate_time_tags(stats, det_s, det_i, pump, 10**6, seed=12)
    assert np.all(np.diff(s.times) >= det_s.dead_time * 1e3)
    assert np.all(np.diff(i.times) >= det_i.dead_time * 1e3)


def test_determinism_and_worker_independence(pump):
    n = 3 * BLOCK_PULSES + 5
    stats = SourceStats(1e-4, fluorescence_rate_idler=1e3)
    det = DetectorModel(efficiency=0.5, jitter_sigma=80.0)
    a = simulate_time_tags(stats, det, det, pump, n, seed=42)
    b = simulate_time_tags(stats, det, det, pump, n, seed=42, max_workers=3)
    c = simulate_time_tags(stats, det, det, pump, n, seed=43)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.times, y.times)
    assert not np.array_equal(a[0].times, c[0].times)
    ha = correlation_histogram(*a, 50.0, 30_000.0)
    hb = correlation_histogram(*b, 50.0, 30_000.0)
    np.testing.assert_array_equal(ha.counts, hb.counts)


def test_loglog_exponent():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert loglog_exponent(x, 3 * x**2) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(UndefinedStatisticError):
        loglog_exponent([1.0], [2.0])
    with pytest.raises(UndefinedStatisticError):
        loglog_exponent([1.0, 2.0], [0.0, 1.0])


def test_power_sweep_single_power_rejected(config, pump):
    det_s, det_i = build_detectors(config)
    with pytest.raises(UndefinedStatisticError):
        power_sweep(build_calibration(config), det_s, det_i, pump, [140.0], seed=1)


def test_power_sweep_exponents(config, pump):
    det_s, det_i = build_detectors(config)
    powers = config.simulation.powers_mw
    sweep = power_sweep(build_calibration(config), det_s, det_i, pump, powers, seed=config.simulation.seed)
    assert sweep.coincidence_exponent == pytest.approx(2.0, abs=0.1)
    assert sweep.car_exponent == pytest.approx(-2.0, abs=0.2)
    assert np.all(np.diff(sweep.n_pulses) < 0)


def test_calibration_scaling():
    cal = SourceCalibration(pair_coefficient=1e-9, fluorescence_coefficient=10.0)
    assert cal.at_power(20.0).mean_pairs_per_pulse == pytest.approx(4 * cal.at_power(10.0).mean_pairs_per_pulse)
    assert cal.at_power(20.0).fluorescence_rate_idler == 2 * cal.at_power(10.0).fluorescence_rate_idler
