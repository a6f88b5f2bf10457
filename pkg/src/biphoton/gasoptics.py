"""Refractive indices of the filling gas and of the silica tubes.

Both materials use Sellmeier sums with wavelengths in nm. The gas sum gives
``n - 1`` at reference conditions and is scaled with ideal-gas density, so
``n - 1`` is linear in pressure and inversely proportional to temperature.
Silica uses the usual ``n**2 - 1`` form with resonances in um.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

DEFAULT_TEMPERATURE = 293.15  # K


@dataclass(frozen=True)
class GasModel:
    species_name: str
    # (strength, resonance wavelength in nm) pairs of the n - 1 Sellmeier sum
    terms: tuple
    reference_pressure: float = 1.01325  # bar
    reference_temperature: float = 273.15  # K
    validity_window: tuple = (200.0, 2000.0)  # nm

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(tuple(map(float, t)) for t in self.terms))
        object.__setattr__(self, "validity_window", tuple(map(float, self.validity_window)))
        lo, hi = self.validity_window
        if not 0 < lo < hi:
            raise ValueError(f"invalid validity window {self.validity_window}")
        if max(r for _, r in self.terms) >= lo:
            raise ValueError("gas Sellmeier resonance inside the validity window")
        if self.reference_pressure <= 0 or self.reference_temperature <= 0:
            raise ValueError("reference conditions must be positive")


@dataclass(frozen=True)
class SilicaModel:
    # (strength, resonance wavelength in um) pairs of the n^2 - 1 Sellmeier sum
    terms: tuple
    validity_window: tuple = (210.0, 3710.0)  # nm

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(tuple(map(float, t)) for t in self.terms))
        object.__setattr__(self, "validity_window", tuple(map(float, self.validity_window)))


XENON = GasModel(
    species_name="xenon",
    terms=(
        (6.973261916589274e-05, 146.9619190911191),
        (5.96517170767733e-05, 129.55585355995274),
        (5.381976228490332e-04, 94.18049848099172),
    ),
)

FUSED_SILICA = SilicaModel(
    terms=((0.6961663, 0.0684043), (0.4079426, 0.1162414), (0.8974794, 9.896161)),
)


def check_window(wavelength, window, name):
    """Raise DomainError if any wavelength (nm) falls outside ``window``."""
    lam = np.asarray(wavelength, dtype=float)
    lo, hi = window
    if np.any(~np.isfinite(lam)) or np.any(lam < lo) or np.any(lam > hi):
        bad = lam[(lam < lo) | (lam > hi) | ~np.isfinite(lam)] if lam.ndim else lam
        raise DomainError(
            f"{name} index requested at {np.ravel(bad)[0]:.3f} nm, "
            f"outside validity window [{lo:g}, {hi:g}] nm"
        )
    return lam


def _gas_reference_excess(model, lam):
    lam2 = lam * lam
    return sum(b * lam2 / (lam2 - r * r) for b, r in model.terms)


def gas_excess(model, wavelength, pressure, temperature=DEFAULT_TEMPERATURE):
    """``n - 1`` of the gas, computed without forming ``n`` (no cancellation at low density)."""
    lam = check_window(wavelength, model.validity_window, model.species_name)
    if np.any(np.asarray(pressure) < 0):
        raise ValueError(f"pressure must be non-negative, got {pressure}")
    if np.any(np.asarray(temperature) <= 0):
        raise ValueError(f"temperature must be positive, got {temperature}")
    density = (pressure / model.reference_pressure) * (model.reference_temperature / temperature)
    return _gas_reference_excess(model, lam) * density


def gas_index(model, wavelength, pressure, temperature=DEFAULT_TEMPERATURE):
    """Refractive index of the gas at ``wavelength`` nm, ``pressure`` bar and ``temperature`` K."""
    return 1.0 + gas_excess(model, wavelength, pressure, temperature)


def silica_index(model, wavelength):
    """Three-term Sellmeier index of fused silica at ``wavelength`` nm."""
    lam = check_window(wavelength, model.validity_window, "silica") * 1e-3
    lam2 = lam * lam
    n2 = 1.0 + sum(b * lam2 / (lam2 - c * c) for b, c in model.terms)
    return np.sqrt(n2)
