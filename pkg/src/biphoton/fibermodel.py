"""LP01 dispersion of the gas-filled single-ring PCF.

The effective index follows the capillary (Marcatili-Schmeltzer) model
extended by an anti-resonant tube term::

    n_eff = n_gas - j01^2 / (2 k0^2 n_gas R^2)
                  - j01^2 / (k0^3 n_gas^2 R^3) * cot(psi) / sqrt(eps - 1) * (eps + 1) / 2

with ``psi = k0 t sqrt(n_si^2 - n_gas^2)`` and ``eps = n_si^2 / n_gas^2``.
The ``baseline`` variant keeps the first two terms only. ``cot(psi)``
diverges at ``psi = m pi``; wavelengths within ``pole_guard`` radians of a
pole are refused.

Units: wavelengths and thicknesses in nm, radii in um, lengths in cm,
propagation constants in rad/m, GVD in fs^2/mm.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .errors import BandError, NoRootError, NumericalError, ResonancePoleError
from .gasoptics import (
    DEFAULT_TEMPERATURE,
    FUSED_SILICA,
    XENON,
    GasModel,
    SilicaModel,
    check_window,
    gas_excess,
    gas_index,
    silica_index,
)

C_LIGHT = 299792458.0  # m/s
J01 = 2.405  # first zero of J0
VARIANTS = ("resonant", "baseline")


@dataclass(frozen=True)
class FiberGeometry:
    core_radius: float = 10.25  # um
    tube_thickness: float = 300.0  # nm
    tube_thickness_range: tuple = (300.0, 340.0)  # nm
    tube_count: int = 6
    fiber_length: float = 65.0  # cm
    effective_length: float = 3.0  # cm
    # modal radius entering the dispersion terms, relative to core_radius
    effective_radius_factor: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tube_thickness_range", tuple(map(float, self.tube_thickness_range)))
        t_min, t_max = self.tube_thickness_range
        if self.core_radius <= 0 or self.effective_radius_factor <= 0:
            raise ValueError("core radius must be positive")
        if not 0 < t_min <= self.tube_thickness <= t_max:
            raise ValueError(
                f"tube thickness {self.tube_thickness} nm outside range {self.tube_thickness_range}"
            )
        if not 0 < self.effective_length <= self.fiber_length:
            raise ValueError("need 0 < effective_length <= fiber_length")

    @property
    def effective_radius(self):
        return self.core_radius * self.effective_radius_factor


@dataclass(frozen=True)
class Numerics:
    pole_guard: float = 0.05  # rad
    gvd_step_thz: float = 0.2
    gvd_rel_tol: float = 1e-3
    gvd_max_refinements: int = 8
    fixed_point_tol: float = 1e-9  # nm
    fixed_point_max_iter: int = 200
    root_xtol: float = 1e-6  # nm
    scan_points: int = 2000
    signal_search_window: tuple = (222.5, 390.0)  # nm
    max_resonance_order: int = 6


@dataclass(frozen=True)
class OpticalEnvironment:
    geometry: FiberGeometry = field(default_factory=FiberGeometry)
    gas: GasModel = XENON
    silica: SilicaModel = FUSED_SILICA
    pressure: float = 0.0  # bar
    temperature: float = DEFAULT_TEMPERATURE
    numerics: Numerics = field(default_factory=Numerics)

    def __post_init__(self):
        if self.pressure < 0:
            raise ValueError(f"pressure must be non-negative, got {self.pressure}")

    def with_pressure(self, pressure):
        return replace(self, pressure=float(pressure))

    def with_thickness(self, thickness, thickness_range=None):
        """Copy with a new nominal tube thickness; the range collapses to it unless given."""
        rng = (thickness, thickness) if thickness_range is None else thickness_range
        return replace(
            self,
            geometry=replace(self.geometry, tube_thickness=float(thickness), tube_thickness_range=tuple(rng)),
        )

    @property
    def window(self):
        g, s = self.gas.validity_window, self.silica.validity_window
        return (max(g[0], s[0]), min(g[1], s[1]))


@dataclass(frozen=True)
class ResonanceBand:
    order: int
    low: float  # nm
    high: float  # nm

    def contains(self, wavelength):
        return self.low <= wavelength <= self.high

    def overlaps(self, lo, hi):
        return self.low <= hi and lo <= self.high


@dataclass(frozen=True)
class GvdResult:
    value: float  # fs^2/mm
    step: float  # rad/s


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def _indices(env, lam):
    lam = check_window(lam, env.window, "fiber")
    n_gas = gas_index(env.gas, lam, env.pressure, env.temperature)
    n_si = silica_index(env.silica, lam)
    return lam, n_gas, n_si


def tube_phase(env, wavelength, thickness=None):
    """Transverse phase ``psi`` accumulated across one tube wall."""
    t = env.geometry.tube_thickness if thickness is None else thickness
    lam, n_gas, n_si = _indices(env, wavelength)
    return 2 * np.pi / lam * t * np.sqrt(n_si**2 - n_gas**2)


def _pole_order(env, psi):
    """Nearest pole order and whether ``psi`` sits inside its guard."""
    m = np.rint(psi / np.pi)
    inside = (m >= 1) & (np.abs(psi - m * np.pi) < env.numerics.pole_guard)
    return m.astype(int), inside


def _neff_minus_one(env, wavelength, variant, poles="raise"):
    """``n_eff - 1`` without forming ``n_eff`` first (keeps precision for derivatives)."""
    _check_variant(variant)
    lam, n_gas, n_si = _indices(env, wavelength)
    excess = gas_excess(env.gas, lam, env.pressure, env.temperature)
    k0 = 2 * np.pi / lam
    radius = env.geometry.effective_radius * 1e3
    out = excess - J01**2 / (2 * k0**2 * n_gas * radius**2)
    if variant == "baseline":
        return out
    psi = k0 * env.geometry.tube_thickness * np.sqrt(n_si**2 - n_gas**2)
    order, inside = _pole_order(env, psi)
    if np.any(inside):
        if poles == "raise":
            idx = np.flatnonzero(np.atleast_1d(inside))[0]
            raise ResonancePoleError(np.atleast_1d(order)[idx], np.atleast_1d(lam)[idx])
    eps = n_si**2 / n_gas**2
    term3 = (
        J01**2 / (k0**3 * n_gas**2 * radius**3)
        / np.tan(psi)
        / np.sqrt(eps - 1)
        * (eps + 1)
        / 2
    )
    out = out - term3
    if poles == "nan" and np.any(inside):
        out = np.where(inside, np.nan, out)
    return out


def effective_index(env, wavelength, variant="resonant"):
    """Effective index of the LP01 mode at ``wavelength`` nm."""
    return 1.0 + _neff_minus_one(env, wavelength, variant)


def propagation_beta(env, wavelength, variant="resonant"):
    """Propagation constant ``beta = k0 n_eff`` in rad/m."""
    lam = np.asarray(wavelength, dtype=float)
    return 2 * np.pi / (lam * 1e-9) * effective_index(env, lam, variant)


def _beta_excess(env, omega, variant):
    # beta - omega/c; the vacuum part has zero second difference
    lam = 2 * np.pi * C_LIGHT / omega * 1e9
    return omega / C_LIGHT * _neff_minus_one(env, lam, variant, poles="ignore")


def _check_stencil(env, omega, h):
    lam = 2 * np.pi * C_LIGHT / np.array([omega - h, omega, omega + h]) * 1e9
    psi = tube_phase(env, lam)
    order, inside = _pole_order(env, psi)
    floors = np.floor(psi / np.pi)
    if np.any(inside) or floors[0] != floors[-1]:
        m = int(order[np.argmax(inside)] if np.any(inside) else max(floors))
        raise BandError(
            f"GVD stencil [{lam[2]:.3f}, {lam[0]:.3f}] nm touches tube resonance m={m}; "
            "shrink the step or move the wavelength",
            order=m,
        )


def group_velocity_dispersion(env, wavelength, variant="resonant"):
    """beta_2 at ``wavelength`` nm by central differences in angular frequency.

    The step starts at ``numerics.gvd_step_thz`` (ordinary frequency) and is
    halved until two successive estimates agree to ``gvd_rel_tol``.
    """
    _check_variant(variant)
    num = env.numerics
    omega = 2 * np.pi * C_LIGHT / (float(wavelength) * 1e-9)
    h = 2 * np.pi * num.gvd_step_thz * 1e12

    def second_difference(h):
        if variant == "resonant":
            _check_stencil(env, omega, h)
        b = _beta_excess(env, np.array([omega - h, omega, omega + h]), variant)
        return (b[0] - 2 * b[1] + b[2]) / h**2 * 1e27

    prev = second_difference(h)
    for _ in range(num.gvd_max_refinements):
        h /= 2
        cur = second_difference(h)
        if abs(cur - prev) <= num.gvd_rel_tol * abs(cur) + 1e-6:
            return GvdResult(cur, h)
        prev = cur
    return GvdResult(prev, h)


def guard_bands(env, lo, hi):
    """Pole-guard bands of the nominal tube thickness that intersect [lo, hi] nm."""
    lo, hi = max(lo, env.window[0]), min(hi, env.window[1])
    if lo > hi:
        return []
    g = env.numerics.pole_guard
    psi_hi, psi_lo = tube_phase(env, [lo, hi])
    m_first = max(1, int(np.ceil((psi_lo - g) / np.pi)))
    m_last = int(np.floor((psi_hi + g) / np.pi))
    nominal = env.with_thickness(env.geometry.tube_thickness)
    bands = []
    for m in range(m_first, m_last + 1):
        band = _band(nominal, m, margin=True)
        if band is not None and band.overlaps(lo, hi):
            bands.append(band)
    return bands


def find_zdw(env, bracket, variant="resonant"):
    """Zero-dispersion wavelength (nm) inside ``bracket`` by Brent's method."""
    lo, hi = sorted(map(float, bracket))
    check_window([lo, hi], env.window, "fiber")
    if variant == "resonant":
        bands = guard_bands(env, lo, hi)
        if bands:
            b = bands[0]
            raise BandError(
                f"bracket [{lo:g}, {hi:g}] nm touches resonance band m={b.order} "
                f"[{b.low:.1f}, {b.high:.1f}] nm",
                order=b.order,
            )

    def f(lam):
        return group_velocity_dispersion(env, lam, variant).value

    f_lo, f_hi = f(lo), f(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoRootError(
            f"beta_2 does not change sign in [{lo:g}, {hi:g}] nm "
            f"({f_lo:.3g} and {f_hi:.3g} fs^2/mm at P={env.pressure:g} bar)"
        )
    return brentq(f, lo, hi, xtol=1e-3)


def _solve_resonance(env, order, thickness, phase_offset=0.0):
    """Fixed-point solve of psi(lambda; t) = order*pi + phase_offset; None if outside the window."""
    num = env.numerics
    lo, hi = env.window
    target = order * np.pi + phase_offset
    if target <= 0:
        raise ValueError("target phase must be positive")
    lam = 2 * np.pi * thickness * 1.05 / target
    history = []
    for _ in range(num.fixed_point_max_iter):
        x = min(max(lam, lo), hi)
        n_gas = gas_index(env.gas, x, env.pressure, env.temperature)
        n_si = silica_index(env.silica, x)
        new = 2 * np.pi * thickness * np.sqrt(n_si**2 - n_gas**2) / target
        history.append(new)
        if abs(new - lam) < num.fixed_point_tol:
            return float(new) if lo <= new <= hi else None
        lam = new
    raise NumericalError(
        f"resonance m={order} (t={thickness} nm) did not converge in "
        f"{num.fixed_point_max_iter} iterations; last iterates {history[-3:]}"
    )


def resonance_orders(env, m_max, thickness=None):
    """``[(m, lambda_m)]`` with ``psi(lambda_m) = m pi`` for m = 1..m_max inside the material windows."""
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    t = env.geometry.tube_thickness if thickness is None else thickness
    out = []
    for m in range(1, int(m_max) + 1):
        lam = _solve_resonance(env, m, t)
        if lam is not None:
            out.append((m, lam))
    return out


def resonance_wavelengths(env, m_max, thickness=None):
    """Resonance wavelengths (nm) for orders 1..m_max, dropping those outside the windows."""
    return [lam for _, lam in resonance_orders(env, m_max, thickness)]


def _band(env, m, margin):
    t_min, t_max = env.geometry.tube_thickness_range
    g = env.numerics.pole_guard if margin else 0.0
    low = _solve_resonance(env, m, t_min, +g)
    high = _solve_resonance(env, m, t_max, -g)
    lo_w, hi_w = env.window
    if low is None and high is None:
        return None
    return ResonanceBand(m, lo_w if low is None else low, hi_w if high is None else high)


def resonance_bands(env, m_max, margin=True):
    """Non-guiding bands spanned by the tube-thickness range, one per order.

    With ``margin`` the band is widened to where the pole guard would refuse
    any thickness in the range.
    """
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    bands = []
    for m in range(1, int(m_max) + 1):
        band = _band(env, m, margin)
        if band is not None:
            bands.append(band)
    return bands


@dataclass(frozen=True)
class TransmittanceModel:
    length: float = 30.0  # cm
    loss_coefficient: float = 200.0  # 1/m for lambda = 1 um, R = 1 um
    notch_depth: float = 0.95
    notch_hwhm: float = 6.0  # nm
    thickness_samples: int = 41

    def __post_init__(self):
        if not 0 <= self.notch_depth < 1:
            raise ValueError("notch depth must lie in [0, 1)")
        if self.notch_hwhm <= 0 or self.thickness_samples < 1:
            raise ValueError("notch width and thickness samples must be positive")


def transmittance(env, wavelength, model=None):
    """Phenomenological fibre transmittance at ``wavelength`` nm.

    Smooth capillary loss ``exp(-alpha0 L)`` with ``alpha0 ~ lambda^2 / R^3``,
    times Lorentzian notches at the tube resonances. The notch factor is
    averaged over thicknesses spread across ``tube_thickness_range``, so
    an inhomogeneous wall broadens each dip.
    """
    model = model or TransmittanceModel()
    lam = check_window(wavelength, env.window, "fiber")
    alpha0 = model.loss_coefficient * (lam * 1e-3) ** 2 / env.geometry.core_radius**3
    base = np.exp(-alpha0 * model.length * 1e-2)
    t_min, t_max = env.geometry.tube_thickness_range
    n = 1 if t_min == t_max else model.thickness_samples
    w2 = model.notch_hwhm**2
    notch = np.zeros_like(lam, dtype=float)
    for t in np.linspace(t_min, t_max, n):
        factor = np.ones_like(lam, dtype=float)
        for _, lam_m in resonance_orders(env, env.numerics.max_resonance_order, t):
            factor = factor * (1 - model.notch_depth * w2 / ((lam - lam_m) ** 2 + w2))
        notch += factor
    return base * notch / n

