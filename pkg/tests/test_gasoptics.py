import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from biphoton.errors import DomainError
from biphoton.gasoptics import FUSED_SILICA, XENON, GasModel, gas_excess, gas_index, silica_index

# frozen from a 40-digit evaluation of the published coefficient form
# n - 1 = sum A / (B - sigma^2), sigma in 1/um, 0 degC and 1 atm
XE_400NM_1BAR_29315K = 1.0006593855946564781
XE_800NM_132BAR_29315K = 1.0008244389923256065
SI_589_3NM = 1.45840271795592

wavelengths = st.floats(200.0, 2000.0)
pressures = st.floats(1e-3, 5.0)


def test_xenon_golden_values():
    assert gas_index(XENON, 400.0, 1.0, 293.15) == pytest.approx(XE_400NM_1BAR_29315K, abs=1e-15)
    assert gas_index(XENON, 800.0, 1.32, 293.15) == pytest.approx(XE_800NM_132BAR_29315K, abs=1e-15)


def test_silica_golden_value():
    assert silica_index(FUSED_SILICA, 589.3) == pytest.approx(SI_589_3NM, abs=1e-12)
    assert silica_index(FUSED_SILICA, 589.0) == pytest.approx(1.4585, abs=1e-3)


def test_silica_normal_dispersion_across_window():
    assert silica_index(FUSED_SILICA, 1342.0) < silica_index(FUSED_SILICA, 235.0)


def test_silica_out_of_window():
    with pytest.raises(DomainError, match="210"):
        silica_index(FUSED_SILICA, 100.0)


@given(st.floats(210.0, 1400.0))
def test_silica_index_above_1_4(lam):
    n = silica_index(FUSED_SILICA, lam)
    assert np.isreal(n) and n > 1.4


@given(wavelengths)
def test_vacuum_identity(lam):
    assert gas_index(XENON, lam, 0.0, 293.0) == 1.0


@given(wavelengths, pressures)
def test_index_above_one_under_pressure(lam, p):
    assert gas_index(XENON, lam, p) > 1.0


@given(wavelengths, pressures, pressures)
def test_pressure_linearity(lam, p1, p2):
    ratio = gas_excess(XENON, lam, p1) / gas_excess(XENON, lam, p2)
    assert ratio == pytest.approx(p1 / p2, rel=4 * np.finfo(float).eps)


@given(wavelengths, pressures)
def test_index_is_one_plus_excess(lam, p):
    # n - 1 recovered from n carries the rounding of n itself
    excess = gas_excess(XENON, lam, p)
    assert gas_index(XENON, lam, p) - 1 == pytest.approx(excess, abs=np.finfo(float).eps)


def test_doubling_pressure_doubles_excess():
    two, one = gas_index(XENON, 800.0, 2.0) - 1, gas_index(XENON, 800.0, 1.0) - 1
    assert two == pytest.approx(2 * one, abs=4 * np.finfo(float).eps)
    assert gas_excess(XENON, 800.0, 2.0) == 2 * gas_excess(XENON, 800.0, 1.0)


def test_inverse_temperature_scaling():
    hot = gas_excess(XENON, 500.0, 1.0, 400.0)
    cold = gas_excess(XENON, 500.0, 1.0, 200.0)
    assert cold / hot == pytest.approx(2.0, rel=1e-14)


@given(pressures)
def test_gas_normal_dispersion(p):
    lam = np.linspace(235.0, 1342.0, 500)
    assert np.all(np.diff(gas_index(XENON, lam, p)) < 0)


def test_gas_argument_errors():
    with pytest.raises(DomainError, match=r"\[200, 2000\]"):
        gas_index(XENON, 150.0, 1.0)
    with pytest.raises(ValueError, match="pressure"):
        gas_index(XENON, 400.0, -0.1)
    with pytest.raises(ValueError, match="temperature"):
        gas_index(XENON, 400.0, 1.0, 0.0)


def test_gas_model_rejects_resonance_in_window():
    with pytest.raises(ValueError):
        GasModel("bad", ((1e-4, 250.0),))
