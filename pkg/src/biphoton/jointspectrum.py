"""Joint spectral intensity of the signal-idler pair and its projections.

The joint amplitude is the pump-pair envelope (autoconvolution of a
transform-limited Gaussian pump amplitude) times the phase-matching
function ``sinc(delta_beta L_eff / 2)``. With picosecond pumping the
envelope is a ridge about 0.1 THz wide along ``omega_s + omega_i = 2 omega_p``,
far narrower than any practical grid cell, so ``jsi_grid`` integrates the
envelope over each cell in closed form (error functions) instead of
sampling it at the cell centre.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import BandError
from .fibermodel import C_LIGHT, guard_bands
from .phasematch import conjugate_idler, nonlinear_phase, pair_mismatch

# FWHM time-bandwidth product of a transform-limited Gaussian
GAUSSIAN_TBP = 2 * math.log(2) / math.pi
FILTER_SHAPES = ("rectangular", "gaussian")


def pump_bandwidth(pump):
    """Intensity FWHM of the pump spectrum in Hz."""
    return GAUSSIAN_TBP / (pump.pulse_duration_fwhm * 1e-12)


def _pump_sigma(pump):
    # rms width (rad/s) of the single-pump intensity spectrum
    return 2 * math.pi * pump_bandwidth(pump) / (2 * math.sqrt(2 * math.log(2)))


def pump_pair_envelope(pump, detuning):
    """Pump-pair amplitude at ``detuning = omega_s + omega_i - 2 omega_p`` (rad/s).

    Its square is a Gaussian with twice the variance of the pump intensity
    spectrum, so ``|envelope|^2`` is sqrt(2) times wider than the pump spectrum.
    """
    sigma = _pump_sigma(pump)
    return np.exp(-np.asarray(detuning, float) ** 2 / (8 * sigma**2))


@dataclass(frozen=True)
class SpectralFilter:
    center: float  # nm
    fwhm_bandwidth: float  # nm
    shape: str = "rectangular"

    def __post_init__(self):
        if self.fwhm_bandwidth <= 0:
            raise ValueError("filter bandwidth must be positive")
        if self.shape not in FILTER_SHAPES:
            raise ValueError(f"filter shape must be one of {FILTER_SHAPES}")

    def weights(self, edges):
        """Mean transmission over each cell delimited by ``edges`` (nm, ascending)."""
        edges = np.asarray(edges, float)
        if self.shape == "rectangular":
            lo = self.center - self.fwhm_bandwidth / 2
            hi = self.center + self.fwhm_bandwidth / 2
            overlap = np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0, None)
            return overlap / np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        return np.exp(-4 * math.log(2) * ((mid - self.center) / self.fwhm_bandwidth) ** 2)


@dataclass(eq=False)
class JsiGrid:
    signal_axis: np.ndarray  # nm, cell centres
    idler_axis: np.ndarray  # nm, cell centres
    intensity: np.ndarray  # [signal, idler], max 1
    pressure: float
    pump_wavelength: float
    effective_length: float  # cm
    normalization: float  # peak cell weight before normalisation
    variant: str = "resonant"

    @property
    def signal_edges(self):
        return _edges(self.signal_axis)

    @property
    def idler_edges(self):
        return _edges(self.idler_axis)


@dataclass(eq=False)
class Spectrum:
    wavelength: np.ndarray
    values: np.ndarray  # max 1
    fwhm: float  # nm

    @property
    def peak(self):
        return float(self.wavelength[np.argmax(self.values)])


@dataclass(eq=False)
class FilteredRates:
    bandwidths: np.ndarray  # nm, ascending
    coincidence: np.ndarray
    singles: np.ndarray
    idler_center: float


def _edges(axis):
    axis = np.asarray(axis, float)
    half = 0.5 * np.diff(axis)
    return np.concatenate([[axis[0] - half[0]], axis[:-1] + half, [axis[-1] + half[-1]]])


def _sinc2(x):
    return np.sinc(x / np.pi) ** 2


def joint_spectral_intensity(env, pump, params, signal_wavelength, idler_wavelength, variant="resonant"):
    """Point value ``|envelope * sinc(delta_beta L_eff / 2)|^2`` (peak 1 on a perfect match)."""
    lam_s = np.asarray(signal_wavelength, float)
    lam_i = np.asarray(idler_wavelength, float)
    omega = 2 * np.pi * C_LIGHT * 1e9
    detuning = omega / lam_s + omega / lam_i - 2 * omega / pump.center_wavelength
    dbeta = pair_mismatch(env, lam_s, lam_i, variant, nonlinear_phase(env, pump, params))
    length = env.geometry.effective_length * 1e-2
    return pump_pair_envelope(pump, detuning) ** 2 * _sinc2(dbeta * length / 2)


def default_windows(signal_center, pump_wavelength, halfwidth):
    signal = (signal_center - halfwidth, signal_center + halfwidth)
    idler = tuple(sorted(conjugate_idler(pump_wavelength, np.array(signal))))
    return signal, idler


def _check_window(env, window, name):
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"{name} window must be increasing, got {window}")
    bands = guard_bands(env, lo, hi)
    if bands:
        b = bands[0]
        raise BandError(
            f"{name} window [{lo:.2f}, {hi:.2f}] nm intersects resonance band m={b.order} "
            f"[{b.low:.2f}, {b.high:.2f}] nm",
            order=b.order,
            leg=name,
        )


def _ridge_subsamples(s_edges, i_edges, per_cell=32):
    # signal subsamples needed so the ridge advances at most 1/per_cell idler cell per step
    ridge_step = np.max(np.abs(np.diff(1 / s_edges))) / np.min(np.abs(np.diff(1 / i_edges)))
    return max(8, int(math.ceil(per_cell * ridge_step)))


def jsi_grid(env, pump, params, signal_window, idler_window=None, n=256, variant="resonant", subsamples=None, ridge_resolution=32):
    """JSI on an ``n x n`` grid uniform in wavelength, normalised to a peak of 1.

    Each cell holds the pair probability falling into it: the envelope is
    integrated exactly across the idler extent of the cell and averaged
    over ``subsamples`` signal frequencies; the phase-matching factor is
    taken on the ridge point closest to each subsample. By default enough
    subsamples are used that the ridge moves by at most
    ``1/ridge_resolution`` of an idler cell between them.
    """
    if n < 64:
        raise ValueError("grid needs n >= 64")
    lam_p = pump.center_wavelength
    if idler_window is None:
        idler_window = tuple(sorted(conjugate_idler(lam_p, np.array(signal_window, float))))
    if variant == "resonant":
        _check_window(env, signal_window, "signal")
        _check_window(env, idler_window, "idler")
    lam_s = np.linspace(*signal_window, n)
    lam_i = np.linspace(*idler_window, n)
    s_edges, i_edges = _edges(lam_s), _edges(lam_i)
    if subsamples is None:
        subsamples = _ridge_subsamples(s_edges, i_edges, ridge_resolution)

    two_pi_c = 2 * np.pi * C_LIGHT * 1e9
    w_p = two_pi_c / lam_p
    ws_hi, ws_lo = two_pi_c / s_edges[:-1], two_pi_c / s_edges[1:]
    frac = (np.arange(subsamples) + 0.5) / subsamples
    w_s = ws_lo[:, None] + (ws_hi - ws_lo)[:, None] * frac[None, :]  # (n, M)
    wi_hi, wi_lo = two_pi_c / i_edges[:-1], two_pi_c / i_edges[1:]

    sigma = _pump_sigma(pump)
    detune = w_s[:, :, None] - 2 * w_p  # (n, M, 1)
    envelope = (
        sigma
        * math.sqrt(math.pi)
        * (erf((detune + wi_hi) / (2 * sigma)) - erf((detune + wi_lo) / (2 * sigma)))
    )
    ridge = np.clip(2 * w_p - w_s[:, :, None], wi_lo, wi_hi)  # (n, M, n)
    dbeta = pair_mismatch(
        env,
        np.broadcast_to(two_pi_c / w_s[:, :, None], ridge.shape),
        two_pi_c / ridge,
        variant,
        nonlinear_phase(env, pump, params),
    )
    length = env.geometry.effective_length * 1e-2
    cells = (envelope * _sinc2(dbeta * length / 2)).mean(axis=1) * (ws_hi - ws_lo)[:, None]
    peak = float(cells.max())
    return JsiGrid(
        signal_axis=lam_s,
        idler_axis=lam_i,
        intensity=cells / peak,
        pressure=env.pressure,
        pump_wavelength=lam_p,
        effective_length=env.geometry.effective_length,
        normalization=peak,
        variant=variant,
    )


def fwhm(x, y):
    """Full width at half maximum by linear interpolation of the outermost half-max crossings."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    k = int(np.argmax(y))
    half = y[k] / 2
    left = np.flatnonzero(y[:k] < half)
    right = np.flatnonzero(y[k:] < half)
    if len(left) == 0 or len(right) == 0:
        return float("nan")
    i = left[-1]
    j = k + right[0]
    xl = x[i] + (half - y[i]) * (x[i + 1] - x[i]) / (y[i + 1] - y[i])
    xr = x[j - 1] + (half - y[j - 1]) * (x[j] - x[j - 1]) / (y[j] - y[j - 1])
    return float(abs(xr - xl))


def _spectrum(axis, values):
    values = np.asarray(values, float)
    top = values.max()
    values = values / top if top > 0 else values
    return Spectrum(np.asarray(axis), values, fwhm(axis, values))


def marginal(grid, axis):
    """Projection of the JSI onto the ``"signal"`` or ``"idler"`` axis."""
    if axis == "signal":
        return _spectrum(grid.signal_axis, grid.intensity.sum(axis=1))
    if axis == "idler":
        return _spectrum(grid.idler_axis, grid.intensity.sum(axis=0))
    raise ValueError("axis must be 'signal' or 'idler'")


def conditional_spectrum(grid, signal_filter):
    """Idler spectrum of pairs whose signal passes ``signal_filter``."""
    w = signal_filter.weights(grid.signal_edges)
    return _spectrum(grid.idler_axis, w @ grid.intensity)


def frequency_covariance(grid):
    """2x2 covariance of (omega_s, omega_i) with the JSI used as a density."""
    two_pi_c = 2 * np.pi * C_LIGHT * 1e9
    ws = two_pi_c / grid.signal_axis[:, None]
    wi = two_pi_c / grid.idler_axis[None, :]
    p = grid.intensity / grid.intensity.sum()
    ms, mi = (p * ws).sum(), (p * wi).sum()
    css = (p * (ws - ms) ** 2).sum()
    cii = (p * (wi - mi) ** 2).sum()
    csi = (p * (ws - ms) * (wi - mi)).sum()
    return np.array([[css, csi], [csi, cii]])


def filtered_rates(grid, signal_filter, idler_bandwidths, idler_center=None, shape="rectangular"):
    """Coincidence and idler-singles integrals versus idler filter bandwidth.

    Coincidences integrate the JSI over signal filter x idler filter;
    singles integrate the unconditional idler marginal over the idler
    filter. Both are normalised to their value at the widest bandwidth, and
    bandwidths are returned in ascending order.
    """
    bw = np.sort(np.asarray(idler_bandwidths, float))
    if bw.size == 0:
        raise ValueError("need at least one idler bandwidth")
    if idler_center is None:
        idler_center = float(conjugate_idler(grid.pump_wavelength, signal_filter.center))
    conditional = signal_filter.weights(grid.signal_edges) @ grid.intensity
    unconditional = grid.intensity.sum(axis=0)
    edges = grid.idler_edges
    coinc, singles = [], []
    for b in bw:
        w = SpectralFilter(idler_center, b, shape).weights(edges)
        coinc.append(conditional @ w)
        singles.append(unconditional @ w)
    coinc, singles = np.array(coinc), np.array(singles)
    return FilteredRates(bw, coinc / coinc[-1], singles / singles[-1], idler_center)
