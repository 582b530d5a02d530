import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from amlattice.units import (
    REFERENCE_BLOCH_FREQUENCY,
    LatticeConfig,
    ModulationParams,
    PhysicalParams,
    ValidationError,
    derive_scales,
    from_dimensionless,
    match_reference,
    reference_config,
    to_dimensionless,
)


def test_sr88_scales():
    s = derive_scales(PhysicalParams())
    assert s.bloch_frequency / (2 * math.pi * 574.3) == pytest.approx(1, rel=1e-3)
    assert s.recoil_frequency / (2 * math.pi * 8000) == pytest.approx(1, rel=5e-3)
    assert s.lattice_period == pytest.approx(266e-9)
    assert s.dimensionless_force == pytest.approx(s.bloch_frequency / s.recoil_frequency)


def test_match_reference_reproduces_bloch_frequency():
    s = derive_scales(match_reference(PhysicalParams()))
    assert s.bloch_frequency == pytest.approx(REFERENCE_BLOCH_FREQUENCY, rel=1e-12)


def test_zero_gravity_is_untiltable():
    s = derive_scales(PhysicalParams(gravity=0.0))
    assert not s.tiltable
    assert math.isinf(s.bloch_period)


@pytest.mark.parametrize("kw, name", [
    ({"atomic_mass": 0.0}, "atomic_mass"),
    ({"lattice_wavelength": -1.0}, "lattice_wavelength"),
    ({"gravity": -1.0}, "gravity"),
    ({"lattice_depth": 60.0}, "lattice_depth"),
])
def test_validation_names_field(kw, name):
    with pytest.raises(ValidationError) as exc:
        PhysicalParams(**kw)
    assert exc.value.field == name


def test_modulation_validation():
    with pytest.raises(ValidationError):
        ModulationParams(alpha=1.0)
    with pytest.raises(ValidationError):
        ModulationParams(harmonic=0)
    assert ModulationParams(alpha=0.0).alpha == 0.0


def test_bloch_period_in_lattice_units():
    cfg = LatticeConfig()
    assert cfg.bloch_period == pytest.approx(2 * math.pi / cfg.force)
    assert cfg.seconds(cfg.bloch_period) == pytest.approx(cfg.scales.bloch_period)
    assert cfg.tilt_slope * math.pi == pytest.approx(cfg.force)


def test_reference_config_fields():
    cfg = reference_config(11.2, 3, 0.84, band=2)
    assert (cfg.depth, cfg.modulation.harmonic, cfg.modulation.alpha, cfg.band) == (11.2, 3, 0.84, 2)


@given(st.floats(1e-9, 1e3), st.sampled_from(["length", "time", "energy", "velocity", "frequency"]))
def test_unit_round_trip(value, unit):
    p = PhysicalParams()
    back = from_dimensionless(p, to_dimensionless(p, value, unit), unit)
    assert back == pytest.approx(value, rel=1e-12)


def test_unknown_unit():
    with pytest.raises(ValueError):
        to_dimensionless(PhysicalParams(), 1.0, "mass")
