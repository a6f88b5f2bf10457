"""Run configuration: TOML file, schema validation and conversion to model objects.

Precedence is bundled defaults < config file < command-line flags. A user
file only needs the keys it changes; it is merged over the bundled
defaults before validation, and unknown keys are rejected with their
dotted location.
"""

import copy
import hashlib
import json
import sys
from importlib import resources
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .countingsim import DetectorModel, SourceCalibration
from .errors import ConfigError
from .fibermodel import FiberGeometry, Numerics, OpticalEnvironment, TransmittanceModel
from .gasoptics import GasModel, SilicaModel
from .phasematch import NonlinearParams, PumpSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

Positive = Field(gt=0)
NonNegative = Field(ge=0)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _pair(v):
    if len(v) != 2 or not v[0] < v[1]:
        raise ValueError("expected an increasing [low, high] pair")
    return v


class Environment(_Section):
    pressure_bar: float = NonNegative
    temperature_k: float = Positive


class GasSection(_Section):
    species_name: str
    terms: list[tuple[float, float]] = Field(min_length=1)
    reference_pressure_bar: float = Positive
    reference_temperature_k: float = Positive
    validity_window_nm: tuple[float, float]

    _window = field_validator("validity_window_nm")(_pair)


class SilicaSection(_Section):
    terms: list[tuple[float, float]] = Field(min_length=1)
    validity_window_nm: tuple[float, float]

    _window = field_validator("validity_window_nm")(_pair)


class Materials(_Section):
    gas: GasSection
    silica: SilicaSection


class Geometry(_Section):
    core_radius_um: float = Positive
    effective_radius_factor: float = Positive
    tube_thickness_nm: float = Positive
    tube_thickness_range_nm: tuple[float, float]
    tube_count: int = Positive
    fiber_length_cm: float = Positive
    effective_length_cm: float = Positive

    @model_validator(mode="after")
    def _consistent(self):
        lo, hi = self.tube_thickness_range_nm
        if not lo <= self.tube_thickness_nm <= hi:
            raise ValueError("tube_thickness_nm must lie inside tube_thickness_range_nm")
        if self.effective_length_cm > self.fiber_length_cm:
            raise ValueError("effective_length_cm exceeds fiber_length_cm")
        return self


class Pump(_Section):
    center_wavelength_nm: float = Positive
    repetition_rate_mhz: float = Positive
    pulse_duration_fwhm_ps: float = Positive
    average_power_mw: float = NonNegative
    pulse_shape: Literal["gaussian"]


class Nonlinear(_Section):
    n2_reference_m2_per_w: float = NonNegative
    reference_pressure_bar: float = Positive
    effective_area_factor: float = Positive
    include_nonlinear_phase: bool


class NumericsSection(_Section):
    pole_guard_rad: float = Field(gt=0, lt=1.5)
    gvd_step_thz: float = Positive
    gvd_rel_tol: float = Positive
    gvd_max_refinements: int = NonNegative
    fixed_point_tol_nm: float = Positive
    fixed_point_max_iter: int = Positive
    root_xtol_nm: float = Positive
    scan_points: int = Field(ge=16)
    signal_search_window_nm: tuple[float, float]
    max_resonance_order: int = Positive

    _window = field_validator("signal_search_window_nm")(_pair)


class Transmittance(_Section):
    length_cm: float = Positive
    loss_coefficient: float = NonNegative
    notch_depth: float = Field(ge=0, lt=1)
    notch_hwhm_nm: float = Positive
    thickness_samples: int = Positive
    lmin_nm: float = Positive
    lmax_nm: float = Positive
    points: int = Field(ge=2)


class Jsi(_Section):
    n: int = Field(ge=64)
    signal_halfwidth_nm: float = Positive
    ridge_resolution: int = Positive
    signal_filter_nm: float = Positive
    filter_shape: Literal["rectangular", "gaussian"]
    idler_bandwidths_nm: list[float] = Field(min_length=1)

    @field_validator("idler_bandwidths_nm")
    @classmethod
    def _positive(cls, v):
        if any(b <= 0 for b in v):
            raise ValueError("bandwidths must be positive")
        return v


class Detector(_Section):
    efficiency: float = Field(ge=0, le=1)
    jitter_sigma_ps: float = NonNegative
    gate_window_ps: float = Positive
    dead_time_ns: float = NonNegative


class Simulation(_Section):
    seed: int = NonNegative
    pair_coefficient_per_mw2: float = NonNegative
    fluorescence_per_mw: float = NonNegative
    dark_rate_signal_hz: float = NonNegative
    dark_rate_idler_hz: float = NonNegative
    n_pulses: int = Positive
    bin_width_ps: float = Positive
    span_periods: float = Field(ge=2)
    powers_mw: list[float] = Field(min_length=1)
    target_coincidences: int = Positive
    signal_detector: Detector
    idler_detector: Detector


class Output(_Section):
    directory: str


class RunConfig(_Section):
    schema_version: Literal[1]
    environment: Environment
    materials: Materials
    geometry: Geometry
    pump: Pump
    nonlinear: Nonlinear
    numerics: NumericsSection
    transmittance: Transmittance
    jsi: Jsi
    simulation: Simulation
    output: Output


def default_config_text():
    return resources.files("biphoton").joinpath("data/default_config.toml").read_text(encoding="utf-8")


def _merge(base, update):
    out = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            out[key] = _merge(base[key], value)
        else:
            out[key] = value
    return out


def set_dotted(raw, dotted, value):
    """Set ``raw['a']['b'] = value`` for ``dotted = 'a.b'``, creating sections as needed."""
    node = raw
    *parents, leaf = dotted.split(".")
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


def _format_error(exc, source):
    lines = [f"invalid configuration ({source}):"]
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        lines.append(f"  {loc}: {err['msg']}")
    return "\n".join(lines)


def load_config(path=None, overrides=None):
    """Validated ``RunConfig`` from bundled defaults, an optional TOML file and dotted overrides."""
    raw = tomllib.loads(default_config_text())
    source = "defaults"
    if path is not None:
        source = str(path)
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        raw = _merge(raw, user)
    raw = copy.deepcopy(raw)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    for key, value in overrides.items():
        set_dotted(raw, key, value)
    if overrides:
        source += " + command-line flags"
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc, source)) from None


def config_hash(config):
    """Git blob SHA-1 of the canonical JSON form of ``config``.

    The output section is left out so the hash identifies the computation,
    not where its results were written.
    """
    payload = config.model_dump(mode="json", exclude={"output"})
    data = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def build_environment(config):
    m, g, n = config.materials, config.geometry, config.numerics
    return OpticalEnvironment(
        geometry=FiberGeometry(
            core_radius=g.core_radius_um,
            tube_thickness=g.tube_thickness_nm,
            tube_thickness_range=g.tube_thickness_range_nm,
            tube_count=g.tube_count,
            fiber_length=g.fiber_length_cm,
            effective_length=g.effective_length_cm,
            effective_radius_factor=g.effective_radius_factor,
        ),
        gas=GasModel(
            species_name=m.gas.species_name,
            terms=tuple(m.gas.terms),
            reference_pressure=m.gas.reference_pressure_bar,
            reference_temperature=m.gas.reference_temperature_k,
            validity_window=m.gas.validity_window_nm,
        ),
        silica=SilicaModel(terms=tuple(m.silica.terms), validity_window=m.silica.validity_window_nm),
        pressure=config.environment.pressure_bar,
        temperature=config.environment.temperature_k,
        numerics=Numerics(
            pole_guard=n.pole_guard_rad,
            gvd_step_thz=n.gvd_step_thz,
            gvd_rel_tol=n.gvd_rel_tol,
            gvd_max_refinements=n.gvd_max_refinements,
            fixed_point_tol=n.fixed_point_tol_nm,
            fixed_point_max_iter=n.fixed_point_max_iter,
            root_xtol=n.root_xtol_nm,
            scan_points=n.scan_points,
            signal_search_window=n.signal_search_window_nm,
            max_resonance_order=n.max_resonance_order,
        ),
    )


def build_pump(config):
    p = config.pump
    return PumpSpec(
        center_wavelength=p.center_wavelength_nm,
        repetition_rate=p.repetition_rate_mhz,
        pulse_duration_fwhm=p.pulse_duration_fwhm_ps,
        average_power=p.average_power_mw,
        pulse_shape=p.pulse_shape,
    )


def build_nonlinear(config):
    n = config.nonlinear
    return NonlinearParams(
        n2_reference=n.n2_reference_m2_per_w,
        reference_pressure=n.reference_pressure_bar,
        effective_area_factor=n.effective_area_factor,
        include_nonlinear_phase=n.include_nonlinear_phase,
    )


def build_transmittance(config):
    t = config.transmittance
    return TransmittanceModel(
        length=t.length_cm,
        loss_coefficient=t.loss_coefficient,
        notch_depth=t.notch_depth,
        notch_hwhm=t.notch_hwhm_nm,
        thickness_samples=t.thickness_samples,
    )


def _detector(d):
    return DetectorModel(
        efficiency=d.efficiency,
        jitter_sigma=d.jitter_sigma_ps,
        gate_window=d.gate_window_ps,
        dead_time=d.dead_time_ns,
    )


def build_detectors(config):
    s = config.simulation
    return _detector(s.signal_detector), _detector(s.idler_detector)


def build_calibration(config):
    s = config.simulation
    return SourceCalibration(
        pair_coefficient=s.pair_coefficient_per_mw2,
        fluorescence_coefficient=s.fluorescence_per_mw,
        dark_rate_signal=s.dark_rate_signal_hz,
        dark_rate_idler=s.dark_rate_idler_hz,
    )
