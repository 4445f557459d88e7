#!/usr/bin/env python3
"""
Tests for the run configuration: defaults, unit suffixes, the
[section] key = value parser and environment accessors.
"""

import math
import os
import sys
import tempfile

import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from beam_optics import ModeIndex
from config import (
    DEFAULT_LOG_MAX_BYTES, DEFAULT_MAX_WORKERS, get_log_max_bytes, get_max_workers, load_config,
    parse_config, parse_density, parse_length, parse_rate,
)
from coupling import CouplingMethod
from error_handler import ConfigParseError, ConfigurationError, UnknownKeyError, ValidationError

TWO_PI = 2 * math.pi


def test_empty_config_gives_defaults():
    print("\n" + "=" * 60)
    print("TEST: Defaults")
    print("=" * 60)

    cfg = parse_config("")
    assert cfg.beam.wavelength == pytest.approx(866e-9)
    assert cfg.beam.waist == pytest.approx(37e-6)
    assert cfg.physics.kappa == pytest.approx(TWO_PI * 2.15e6)
    assert cfg.physics.gamma == pytest.approx(TWO_PI * 11.2e6)
    assert cfg.crystal.half_length == pytest.approx(336e-6)
    assert cfg.crystal.radius == pytest.approx(50e-6)
    assert cfg.crystal.density == pytest.approx(3.8e14)
    assert cfg.coupling.method is CouplingMethod.PHASE_AVERAGED
    assert cfg.coupling.rel_tolerance == 1e-4
    assert cfg.sweep.kind == 'displacement'
    assert len(cfg.sweep.grid) == 33
    assert cfg.sweep.grid[0] == pytest.approx(-80e-6)
    assert cfg.sweep.grid[16] == pytest.approx(0.0, abs=1e-18)
    assert cfg.sweep.modes == (ModeIndex(0, 0), ModeIndex(1, 0))
    assert cfg.sweep.scan.points == 201
    assert cfg.sweep.scan.half_span == pytest.approx(TWO_PI * 600e6)
    assert cfg.output.format == 'csv'
    assert cfg.output.precision == 9
    assert cfg.output.path is None
    assert cfg.target_rate is None
    print("✓ Empty configuration gives the apparatus defaults")


@pytest.mark.parametrize("text,expected", [
    ("37um", 37e-6), ("37 µm", 37e-6), ("866nm", 866e-9), ("1.2mm", 1.2e-3),
    ("0.5cm", 5e-3), ("2m", 2.0), ("4e-5", 4e-5),
])
def test_parse_length(text, expected):
    assert parse_length(text) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("text,expected", [
    ("11.2MHz", TWO_PI * 11.2e6), ("11.2 mhz", TWO_PI * 11.2e6), ("500kHz", TWO_PI * 5e5),
    ("1GHz", TWO_PI * 1e9), ("3Hz", TWO_PI * 3), ("1e6 rad/s", 1e6), ("42", 42.0),
    ("-30MHz", -TWO_PI * 30e6),
])
def test_parse_rate(text, expected):
    assert parse_rate(text) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("text,expected", [
    ("3.8e8 cm^-3", 3.8e14), ("3.8e8cm-3", 3.8e14), ("5.4e14 m^-3", 5.4e14), ("1e14 m-3", 1e14),
])
def test_parse_density(text, expected):
    assert parse_density(text) == pytest.approx(expected, rel=1e-15)


def test_bad_units_rejected():
    for parser, text in ((parse_length, "37 furlongs"), (parse_rate, "3 MHz/s"),
                         (parse_density, "3 cm^-2"), (parse_length, "abc")):
        with pytest.raises(ValueError):
            parser(text)


def test_full_config():
    text = """
# comment line
[beam]
wavelength = 866nm
waist = 37um

[crystal]
half_length = 240um
radius = 21um
density = 3.8e8 cm^-3
offset_x = 5um

[physics]
kappa = 2.15MHz
gamma = 11.2MHz

[coupling]
g = 500kHz
method = oscillatory
tolerance = 1e-3
samples = 20000
seed = 3

[sweep]
kind = radius
values = 10um, 20um, 40um
modes = 00 10 01
normalization = envelope

[output]
format = json
path = out.json   # trailing comment
precision = 6
"""
    cfg = parse_config(text)
    assert cfg.beam.waist == pytest.approx(3.7e-5)
    assert cfg.crystal.offset_x == pytest.approx(5e-6)
    assert cfg.coupling.single_ion_g == pytest.approx(TWO_PI * 5e5)
    assert cfg.coupling.method is CouplingMethod.OSCILLATORY
    assert cfg.coupling.mc_samples == 20000
    assert cfg.coupling.mc_seed == 3
    assert cfg.sweep.kind == 'radius'
    assert cfg.sweep.grid == pytest.approx((10e-6, 20e-6, 40e-6))
    assert cfg.sweep.modes == (ModeIndex(0, 0), ModeIndex(1, 0), ModeIndex(0, 1))
    assert cfg.sweep.normalization == 'envelope'
    assert cfg.output.format == 'json'
    assert cfg.output.path == 'out.json'
    assert cfg.output.precision == 6
    print("✓ Every section parsed")


def test_detuning_grid_in_rates():
    cfg = parse_config("[sweep]\nkind = detuning\nstart = -30MHz\nstop = 30MHz\ncount = 9\n")
    assert cfg.sweep.grid[0] == pytest.approx(-TWO_PI * 30e6)
    assert cfg.sweep.grid[-1] == pytest.approx(TWO_PI * 30e6)
    assert len(cfg.sweep.grid) == 9


def test_negative_gamma_is_validation_error():
    with pytest.raises(ValidationError) as excinfo:
        parse_config("[physics]\ngamma = -1MHz\n")
    assert excinfo.value.key == 'physics.gamma'
    print("✓ gamma = -1MHz rejected naming physics.gamma")


def test_unknown_key_has_line_number():
    with pytest.raises(UnknownKeyError) as excinfo:
        parse_config("[beam]\nwaist = 37um\ncolour = red\n")
    assert excinfo.value.line_number == 3
    assert excinfo.value.key == 'beam.colour'


@pytest.mark.parametrize("text,line", [
    ("[beam\nwaist = 1um\n", 1),
    ("waist = 37um\n", 1),
    ("[beam]\nwaist 37um\n", 2),
    ("[optics]\n", 1),
    ("[beam]\nwaist = 37um\nwaist = 38um\n", 3),
    ("[beam]\n\nwaist = 37 parsecs\n", 3),
    ("[coupling]\nsamples = 1.5\n", 2),
])
def test_parse_errors_report_line(text, line):
    with pytest.raises(ConfigParseError) as excinfo:
        parse_config(text)
    assert excinfo.value.line_number == line


@pytest.mark.parametrize("text,key", [
    ("[crystal]\nradius = 0um\n", 'crystal.radius'),
    ("[coupling]\ntolerance = 0.5\n", 'coupling.tolerance'),
    ("[coupling]\nsamples = 10\n", 'coupling.samples'),
    ("[coupling]\nmethod = simpson\n", 'coupling.method'),
    ("[sweep]\nkind = spiral\n", 'sweep.kind'),
    ("[sweep]\ncount = 0\n", 'sweep.count'),
    ("[sweep]\nmodes = 1x\n", 'sweep.modes'),
    ("[sweep]\nvalues = 1um\ncount = 3\n", 'sweep.values'),
    ("[output]\nformat = xml\n", 'output.format'),
    ("[output]\nprecision = 40\n", 'output.precision'),
    ("[beam]\nrayleigh_range = 7mm\n", 'beam.rayleigh_range'),
])
def test_validation_errors_name_key(text, key):
    with pytest.raises(ValidationError) as excinfo:
        parse_config(text)
    assert excinfo.value.key == key
    assert isinstance(excinfo.value, ConfigurationError)


def test_load_config_from_file():
    with tempfile.TemporaryDirectory() as tmpdir:
        path = os.path.join(tmpdir, 'run.cfg')
        with open(path, 'w', encoding='utf-8') as f:
            f.write("[beam]\nwaist = 40 µm\n")
        cfg = load_config(path)
    assert cfg.beam.waist == pytest.approx(40e-6)


def test_undecodable_config_is_parse_error():
    with tempfile.TemporaryDirectory() as tmpdir:
        path = os.path.join(tmpdir, 'bad.cfg')
        with open(path, 'wb') as f:
            f.write(b"[beam]\nwavelength = 866nm\nwaist = 40 \xb5m\n")
        with pytest.raises(ConfigParseError) as excinfo:
            load_config(path)
    assert excinfo.value.line_number == 3
    assert '0xb5' in str(excinfo.value)


def test_max_workers_env(monkeypatch):
    monkeypatch.delenv('CAVICRYS_THREADS', raising=False)
    assert get_max_workers() == DEFAULT_MAX_WORKERS
    monkeypatch.setenv('CAVICRYS_THREADS', '7')
    assert get_max_workers() == 7
    monkeypatch.setenv('CAVICRYS_THREADS', 'lots')
    assert get_max_workers() == DEFAULT_MAX_WORKERS
    monkeypatch.setenv('CAVICRYS_THREADS', '0')
    assert get_max_workers() == DEFAULT_MAX_WORKERS
    print("✓ CAVICRYS_THREADS honoured with fallback")


def test_log_max_bytes_env(monkeypatch):
    monkeypatch.delenv('CAVICRYS_LOG_MAX_BYTES', raising=False)
    assert get_log_max_bytes() == DEFAULT_LOG_MAX_BYTES
    monkeypatch.setenv('CAVICRYS_LOG_MAX_BYTES', '2048')
    assert get_log_max_bytes() == 2048
    monkeypatch.setenv('CAVICRYS_LOG_MAX_BYTES', 'big')
    assert get_log_max_bytes() == DEFAULT_LOG_MAX_BYTES


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
