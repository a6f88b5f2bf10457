"""Degenerate-pump four-wave-mixing phase matching versus gas pressure.

Energy conservation fixes the idler once the signal is chosen,
``1/lambda_i = 2/lambda_p - 1/lambda_s``. Momentum conservation
``2 beta_p = beta_s + beta_i + 2 gamma P_peak`` is solved for the signal
wavelength by bracketing sign changes of the mismatch on a scan grid.
Tube-resonance guard bands are cut out of the scan first because the cot
poles produce sign changes that are not roots.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import BandError, DomainError, NoPhaseMatchingError
from .fibermodel import C_LIGHT, _neff_minus_one, guard_bands, propagation_beta

GAUSSIAN_SHAPE_FACTOR = 2 * math.sqrt(math.log(2) / math.pi)


@dataclass(frozen=True)
class PumpSpec:
    center_wavelength: float = 400.0  # nm
    repetition_rate: float = 76.0  # MHz
    pulse_duration_fwhm: float = 6.7  # ps
    average_power: float = 140.0  # mW
    pulse_shape: str = "gaussian"

    def __post_init__(self):
        if self.pulse_shape != "gaussian":
            raise ValueError(f"unsupported pulse shape {self.pulse_shape!r}")
        if min(self.center_wavelength, self.repetition_rate, self.pulse_duration_fwhm) <= 0:
            raise ValueError("pump wavelength, repetition rate and duration must be positive")
        if self.average_power < 0:
            raise ValueError("average power must be non-negative")

    @property
    def period_ps(self):
        return 1e6 / self.repetition_rate


@dataclass(frozen=True)
class NonlinearParams:
    n2_reference: float = 5.15e-23  # m^2/W at reference_pressure
    reference_pressure: float = 1.0  # bar
    effective_area_factor: float = 1.5
    include_nonlinear_phase: bool = True


@dataclass(frozen=True)
class PhaseMatchPoint:
    pressure: float
    signal: float  # nm
    idler: float  # nm
    residual_mismatch: float  # rad/m
    variant: str
    # other roots found in the same window (signal nm), outermost root excluded
    alternatives: tuple = ()

    @property
    def multiple_roots(self):
        return bool(self.alternatives)


@dataclass
class TuningCurve:
    points: list = field(default_factory=list)
    gaps: list = field(default_factory=list)  # pressures without a root
    variant: str = "resonant"

    def __len__(self):
        return len(self.points)

    @property
    def pressures(self):
        return np.array([p.pressure for p in self.points])

    @property
    def signal(self):
        return np.array([p.signal for p in self.points])

    @property
    def idler(self):
        return np.array([p.idler for p in self.points])


@dataclass(frozen=True)
class TuningRate:
    slope: float  # THz/bar of signal detuning from the pump
    span: float  # THz


def conjugate_idler(pump_wavelength, signal_wavelength):
    """Idler wavelength (nm) conjugate to ``signal_wavelength`` for a degenerate pump."""
    inv = 2.0 / np.asarray(pump_wavelength, float) - 1.0 / np.asarray(signal_wavelength, float)
    if np.any(inv <= 0):
        raise ValueError(
            f"signal {signal_wavelength} nm leaves no positive idler frequency for pump {pump_wavelength} nm"
        )
    return 1.0 / inv


def derive_peak_power(pump):
    """Peak power (W) of a Gaussian pulse train."""
    return (
        GAUSSIAN_SHAPE_FACTOR
        * pump.average_power
        * 1e-3
        / (pump.repetition_rate * 1e6 * pump.pulse_duration_fwhm * 1e-12)
    )


def nonlinear_gamma(params, env, pump_wavelength):
    """Nonlinear coefficient gamma in 1/(W km); n2 scales with pressure."""
    n2 = params.n2_reference * env.pressure / params.reference_pressure
    area = params.effective_area_factor * math.pi * (env.geometry.core_radius * 1e-6) ** 2
    return 2 * math.pi * n2 / (pump_wavelength * 1e-9 * area) * 1e3


def nonlinear_phase(env, pump, params):
    """``2 gamma P_peak`` in rad/m, or 0 when disabled."""
    if not params.include_nonlinear_phase:
        return 0.0
    return 2 * nonlinear_gamma(params, env, pump.center_wavelength) * 1e-3 * derive_peak_power(pump)


def mismatch_from_beta(beta, pump_wavelength, signal_wavelength, idler_wavelength, phase=0.0):
    """``2 beta(lambda_p) - beta(lambda_s) - beta(lambda_i) - phase`` for any dispersion callable."""
    return 2 * beta(pump_wavelength) - beta(signal_wavelength) - beta(idler_wavelength) - phase


def _beta_excess(env, lam, variant, poles):
    # beta minus the vacuum wavenumber; the vacuum parts cancel in the mismatch
    return 2 * np.pi / (lam * 1e-9) * _neff_minus_one(env, lam, variant, poles=poles)


def pair_mismatch(env, signal_wavelength, idler_wavelength, variant="resonant", phase=0.0, poles="nan"):
    """Mismatch for free signal and idler, the pump taken at their mean frequency.

    Returns NaN inside pole guards unless ``poles="raise"``.
    """
    lam_s = np.asarray(signal_wavelength, float)
    lam_i = np.asarray(idler_wavelength, float)
    lam_p = 2.0 / (1.0 / lam_s + 1.0 / lam_i)
    # 2/lam_p - 1/lam_s - 1/lam_i vanishes identically, so only the index excess remains
    return (
        2 * _beta_excess(env, lam_p, variant, poles)
        - _beta_excess(env, lam_s, variant, poles)
        - _beta_excess(env, lam_i, variant, poles)
        - phase
    )


def _check_legs(env, legs):
    for leg, lam in legs.items():
        bands = guard_bands(env, lam, lam)
        if bands:
            raise BandError(
                f"{leg} wavelength {lam:.3f} nm lies in resonance band m={bands[0].order} "
                f"[{bands[0].low:.2f}, {bands[0].high:.2f}] nm",
                order=bands[0].order,
                leg=leg,
            )


def mismatch(env, pump, params, signal_wavelength, variant="resonant"):
    """Phase mismatch (rad/m) at ``signal_wavelength`` with the conjugate idler."""
    lam_p = pump.center_wavelength
    lam_s = float(signal_wavelength)
    lam_i = float(conjugate_idler(lam_p, lam_s))
    if variant == "resonant":
        _check_legs(env, {"pump": lam_p, "signal": lam_s, "idler": lam_i})

    def beta(lam):
        return propagation_beta(env, lam, variant)

    return float(mismatch_from_beta(beta, lam_p, lam_s, lam_i, nonlinear_phase(env, pump, params)))


def allowed_signal_intervals(env, pump, window, variant="resonant"):
    """Sub-intervals of the signal window where signal and idler avoid every guard band."""
    lam_p = pump.center_wavelength
    lo, hi = sorted(map(float, window))
    # the idler must stay inside the material windows too
    w_lo, w_hi = env.window
    lo = max(lo, w_lo, float(conjugate_idler(lam_p, w_hi)))
    hi = min(hi, lam_p * (1 - 1e-9))
    if lo >= hi:
        return []
    if variant == "baseline":
        return [(lo, hi)]
    if guard_bands(env, lam_p, lam_p):
        raise BandError(f"pump wavelength {lam_p} nm lies in a resonance band", leg="pump")
    cuts = [(b.low, b.high) for b in guard_bands(env, lo, hi)]
    idler_hi = float(conjugate_idler(lam_p, lo))
    for b in guard_bands(env, float(conjugate_idler(lam_p, hi)), idler_hi):
        cuts.append((float(conjugate_idler(lam_p, b.high)), float(conjugate_idler(lam_p, b.low))))
    intervals = [(lo, hi)]
    for c_lo, c_hi in cuts:
        nxt = []
        for a, b in intervals:
            if c_hi <= a or c_lo >= b:
                nxt.append((a, b))
                continue
            if c_lo > a:
                nxt.append((a, c_lo))
            if c_hi < b:
                nxt.append((c_hi, b))
        intervals = nxt
    # shave a hair off each edge so the guard boundary itself is never evaluated
    eps = 1e-6
    return [(a + eps, b - eps) for a, b in sorted(intervals) if b - a > 4 * eps]


def phase_matched_signals(env, pump, params, window=None, variant="resonant"):
    """All signal wavelengths (nm, ascending) where the mismatch vanishes."""
    num = env.numerics
    window = num.signal_search_window if window is None else window
    lam_p = pump.center_wavelength
    phase = nonlinear_phase(env, pump, params)

    def f(lam_s):
        return pair_mismatch(env, lam_s, conjugate_idler(lam_p, lam_s), variant, phase, poles="ignore")

    intervals = allowed_signal_intervals(env, pump, window, variant)
    total = sum(b - a for a, b in intervals) or 1.0
    roots = []
    for a, b in intervals:
        n = max(8, int(num.scan_points * (b - a) / total))
        grid = np.linspace(a, b, n)
        vals = f(grid)
        for x0, x1, v0, v1 in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if v0 == 0:
                roots.append(float(x0))
            elif v0 * v1 < 0:
                roots.append(brentq(lambda x: float(f(x)), x0, x1, xtol=num.root_xtol))
        if vals[-1] == 0:
            roots.append(float(grid[-1]))
    return sorted(set(roots))


def solve_tuning_point(env, pump, params, window=None, variant="resonant"):
    """Phase-matched pair at the environment's pressure.

    When several roots exist the outermost one (largest signal-idler
    separation) is returned and the rest are listed in ``alternatives``.
    """
    roots = phase_matched_signals(env, pump, params, window, variant)
    if not roots:
        raise NoPhaseMatchingError(
            f"no phase matching at {env.pressure:g} bar in signal window "
            f"{window or env.numerics.signal_search_window} nm ({variant})"
        )
    lam_s = roots[0]
    lam_i = float(conjugate_idler(pump.center_wavelength, lam_s))
    residual = float(
        pair_mismatch(env, lam_s, lam_i, variant, nonlinear_phase(env, pump, params), poles="ignore")
    )
    return PhaseMatchPoint(
        pressure=env.pressure,
        signal=lam_s,
        idler=lam_i,
        residual_mismatch=residual,
        variant=variant,
        alternatives=tuple(roots[1:]),
    )


def pressure_grid(p_min, p_max, step):
    """Pressures from ``p_min`` to ``p_max`` inclusive; empty when ``p_min > p_max``."""
    if step <= 0:
        raise ValueError("pressure step must be positive")
    if p_min > p_max:
        return np.array([])
    n = int(math.floor((p_max - p_min) / step + 1e-9)) + 1
    return np.round(p_min + step * np.arange(n), 12)


def tuning_curve(env, pump, params, pressures, variant="resonant", window=None, max_workers=1):
    """Solve every pressure; pressures with no root are recorded as gaps."""

    def solve(p):
        try:
            return solve_tuning_point(env.with_pressure(p), pump, params, window, variant)
        except NoPhaseMatchingError:
            return None

    pressures = [float(p) for p in pressures]
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            results = list(pool.map(solve, pressures))
    else:
        results = [solve(p) for p in pressures]
    curve = TuningCurve(variant=variant)
    for p, r in zip(pressures, results):
        if r is None:
            curve.gaps.append(p)
        else:
            curve.points.append(r)
    return curve


def tuning_rate(curve):
    """Least-squares slope and total span of the signal's frequency detuning from the pump.

    The detuning equals half the signal-idler separation, and is the same
    for both photons. Units THz/bar and THz.
    """
    if len(curve.points) == 0:
        raise DomainError("tuning rate of an empty curve")
    lam_s, lam_i = curve.signal, curve.idler
    # energy conservation: nu_s - nu_p = (nu_s - nu_i) / 2
    detuning = C_LIGHT * (1 / lam_s - 1 / lam_i) / 2 * 1e-3  # THz
    p = curve.pressures
    span = float(detuning.max() - detuning.min())
    if len(p) < 2 or np.ptp(p) == 0:
        return TuningRate(0.0, span)
    slope = float(np.polyfit(p, detuning, 1)[0])
    return TuningRate(slope, span)
