"""
Run configuration: apparatus defaults, environment settings and the
``[section]`` / ``key = value`` configuration file format.

Values carry unit suffixes that are resolved while parsing:

    lengths    nm, um (or µm), mm, cm, m
    rates      Hz, kHz, MHz, GHz (cyclic, multiplied by 2 pi) or rad/s
    densities  cm^-3, cm-3, m^-3, m-3

A bare number is taken in SI units (m, rad/s, m^-3).
"""
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from beam_optics import BeamGeometry, ModeIndex
from coupling import CouplingConfig, CouplingMethod
from crystal import CrystalSpec
from error_handler import CavicrysError, ConfigParseError, UnknownKeyError, ValidationError
from spectroscopy import DEFAULT_SCAN_POINTS, ProbePhysics, ScanGrid, TWO_PI

# Apparatus defaults: 866 nm cavity with a 37 um waist
DEFAULT_WAVELENGTH = 866e-9
DEFAULT_WAIST = 37e-6
DEFAULT_KAPPA = TWO_PI * 2.15e6
DEFAULT_GAMMA = TWO_PI * 11.2e6

# Default crystal
DEFAULT_HALF_LENGTH = 336e-6
DEFAULT_RADIUS = 50e-6
DEFAULT_DENSITY = 3.8e14  # 3.8e8 cm^-3

DEFAULT_SWEEP_KIND = 'displacement'
DEFAULT_GRIDS = {
    'displacement': (-80e-6, 80e-6, 33),
    'radius': (10e-6, 148e-6, 24),
    'detuning': (-TWO_PI * 30e6, TWO_PI * 30e6, 9),
}
DEFAULT_MODES = ('00', '10')
DEFAULT_NOISE_SIGMA = 0.02

DEFAULT_OUTPUT_FORMAT = 'csv'
DEFAULT_PRECISION = 9

DEFAULT_LOG_MAX_BYTES = 5 * 1024 * 1024  # 5MB default
DEFAULT_MAX_WORKERS = 4  # Default number of concurrent workers

SWEEP_KINDS = ('displacement', 'radius', 'detuning')
SWEEP_AXES = ('x', 'y')
RADIUS_NORMALIZATIONS = ('largest', 'envelope')
OUTPUT_FORMATS = ('csv', 'json')

LENGTH_UNITS = {'': 1.0, 'm': 1.0, 'cm': 1e-2, 'mm': 1e-3, 'um': 1e-6, 'µm': 1e-6,
                'μm': 1e-6, 'nm': 1e-9}
RATE_UNITS = {'': 1.0, 'rad/s': 1.0, 'hz': TWO_PI, 'khz': TWO_PI * 1e3,
              'mhz': TWO_PI * 1e6, 'ghz': TWO_PI * 1e9}
DENSITY_UNITS = {'': 1.0, 'm^-3': 1.0, 'm-3': 1.0, 'cm^-3': 1e6, 'cm-3': 1e6}

_QUANTITY = re.compile(r'^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(\S*)$')


def get_max_workers() -> int:
    """Get the max workers setting"""
    # Check environment variable first
    env_value = os.environ.get('CAVICRYS_THREADS')
    if env_value:
        try:
            value = int(env_value)
            if value >= 1:
                return value
            logging.warning(f"CAVICRYS_THREADS must be at least 1, got {value}")
        except ValueError:
            logging.warning(f"Invalid CAVICRYS_THREADS environment variable: {env_value}")

    # Fall back to default
    return DEFAULT_MAX_WORKERS


def get_log_max_bytes() -> int:
    """Get the log max bytes setting"""
    env_value = os.environ.get('CAVICRYS_LOG_MAX_BYTES')
    if env_value:
        try:
            return int(env_value)
        except ValueError:
            logging.warning(f"Invalid CAVICRYS_LOG_MAX_BYTES environment variable: {env_value}")
    return DEFAULT_LOG_MAX_BYTES


def _parse_quantity(text: str, units: Dict[str, float], what: str) -> float:
    match = _QUANTITY.match(text.strip())
    if not match:
        raise ValueError(f"cannot parse '{text}' as a {what}")
    number, suffix = match.groups()
    key = suffix if suffix in units else suffix.lower()
    if key not in units:
        raise ValueError(f"unknown {what} unit '{suffix}' in '{text}'")
    return float(number) * units[key]


def parse_length(text: str) -> float:
    """'37um' -> 3.7e-05 (meters)."""
    return _parse_quantity(text, LENGTH_UNITS, 'length')


def parse_rate(text: str) -> float:
    """'11.2MHz' -> 2 pi * 11.2e6 (rad/s)."""
    return _parse_quantity(text, RATE_UNITS, 'rate')


def parse_density(text: str) -> float:
    """'3.8e8 cm^-3' -> 3.8e14 (ions per m^3)."""
    return _parse_quantity(text, DENSITY_UNITS, 'density')


def parse_number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"cannot parse '{text}' as a number") from None


def parse_int(text: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"cannot parse '{text}' as an integer") from None
    if not value.is_integer():
        raise ValueError(f"'{text}' is not an integer")
    return int(value)


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ('true', 'yes', 'on', '1'):
        return True
    if lowered in ('false', 'no', 'off', '0'):
        return False
    raise ValueError(f"cannot parse '{text}' as true/false")


def parse_text(text: str) -> str:
    return text.strip()


# Accepted keys per section and the parser for each value.
SCHEMA: Dict[str, Dict[str, Callable[[str], object]]] = {
    'beam': {
        'wavelength': parse_length,
        'waist': parse_length,
        'rayleigh_range': parse_length,
    },
    'crystal': {
        'half_length': parse_length,
        'radius': parse_length,
        'density': parse_density,
        'offset_x': parse_length,
        'offset_y': parse_length,
    },
    'physics': {
        'kappa': parse_rate,
        'gamma': parse_rate,
    },
    'coupling': {
        'g': parse_rate,
        'method': parse_text,
        'tolerance': parse_number,
        'samples': parse_int,
        'seed': parse_int,
        'target_rate': parse_rate,
        'target_mode': parse_text,
    },
    'sweep': {
        'kind': parse_text,
        'axis': parse_text,
        'start': parse_text,
        'stop': parse_text,
        'count': parse_int,
        'values': parse_text,
        'modes': parse_text,
        'normalize': parse_bool,
        'normalization': parse_text,
        'end_to_end': parse_bool,
        'noise_sigma': parse_number,
        'scan_points': parse_int,
        'scan_half_span': parse_rate,
        'seed': parse_int,
    },
    'output': {
        'format': parse_text,
        'path': parse_text,
        'precision': parse_int,
    },
}


@dataclass(frozen=True)
class SweepSettings:
    """Which experiment to run and on what grid (SI units: m or rad/s by kind)."""
    kind: str = DEFAULT_SWEEP_KIND
    axis: str = 'x'
    grid: Tuple[float, ...] = ()
    modes: Tuple[ModeIndex, ...] = (ModeIndex(0, 0), ModeIndex(1, 0))
    normalize: bool = True
    normalization: str = 'largest'
    end_to_end: bool = False
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    scan: ScanGrid = field(default_factory=ScanGrid)
    seed: int = 0


@dataclass(frozen=True)
class OutputSettings:
    format: str = DEFAULT_OUTPUT_FORMAT
    path: Optional[str] = None
    precision: int = DEFAULT_PRECISION


@dataclass(frozen=True)
class RunConfig:
    """Fully validated configuration of one cavicrys run."""
    beam: BeamGeometry
    crystal: CrystalSpec
    physics: ProbePhysics
    coupling: CouplingConfig
    sweep: SweepSettings
    output: OutputSettings
    target_rate: Optional[float] = None
    target_mode: ModeIndex = ModeIndex(0, 0)


def _read_entries(text: str) -> Dict[Tuple[str, str], Tuple[str, int]]:
    entries: Dict[Tuple[str, str], Tuple[str, int]] = {}
    section: Optional[str] = None
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#') or line.startswith(';'):
            continue
        if line.startswith('['):
            if not line.endswith(']'):
                raise ConfigParseError(f"malformed section header '{line}'", line_number)
            section = line[1:-1].strip().lower()
            if section not in SCHEMA:
                raise ConfigParseError(f"unknown section [{section}]", line_number)
            continue
        if '=' not in line:
            raise ConfigParseError(f"expected 'key = value', got '{line}'", line_number)
        if section is None:
            raise ConfigParseError("key outside of any [section]", line_number)
        key, value = (part.strip() for part in line.split('=', 1))
        if ' #' in value:
            value = value.split(' #', 1)[0].strip()
        key = key.lower()
        if key not in SCHEMA[section]:
            raise UnknownKeyError(f"{section}.{key}", line_number)
        if (section, key) in entries:
            raise ConfigParseError(f"duplicate key '{section}.{key}'", line_number)
        if not value:
            raise ConfigParseError(f"empty value for '{section}.{key}'", line_number)
        entries[(section, key)] = (value, line_number)
    return entries


class _Values:
    """Parsed values with defaults and line-numbered conversion errors."""

    def __init__(self, entries: Dict[Tuple[str, str], Tuple[str, int]]):
        self.entries = entries

    def has(self, section: str, key: str) -> bool:
        return (section, key) in self.entries

    def get(self, section: str, key: str, default=None, parser=None):
        if (section, key) not in self.entries:
            return default
        text, line_number = self.entries[(section, key)]
        parser = parser or SCHEMA[section][key]
        try:
            return parser(text)
        except ValueError as e:
            raise ConfigParseError(f"{section}.{key}: {e}", line_number) from None


def _require_positive(key: str, value: float):
    if not (value > 0 and math.isfinite(value)):
        raise ValidationError(key, f"must be positive, got {value:g}")


def _choice(key: str, value: str, choices: Tuple[str, ...]) -> str:
    lowered = value.lower()
    if lowered not in choices:
        raise ValidationError(key, f"must be one of {', '.join(choices)}, got '{value}'")
    return lowered


def _parse_modes(key: str, text: str) -> Tuple[ModeIndex, ...]:
    try:
        modes = tuple(ModeIndex.parse(part) for part in re.split(r'[,\s]+', text.strip()) if part)
    except CavicrysError as e:
        raise ValidationError(key, str(e)) from None
    if not modes:
        raise ValidationError(key, "at least one mode is required")
    return modes


def _build_grid(values: _Values, kind: str) -> Tuple[float, ...]:
    parser = parse_rate if kind == 'detuning' else parse_length
    if values.has('sweep', 'values'):
        if any(values.has('sweep', k) for k in ('start', 'stop', 'count')):
            raise ValidationError('sweep.values', "give either values or start/stop/count, not both")
        text, line_number = values.entries[('sweep', 'values')]
        grid: List[float] = []
        for part in text.split(','):
            try:
                grid.append(parser(part))
            except ValueError as e:
                raise ConfigParseError(f"sweep.values: {e}", line_number) from None
        return tuple(grid)

    start_default, stop_default, count_default = DEFAULT_GRIDS[kind]
    start = values.get('sweep', 'start', start_default, parser)
    stop = values.get('sweep', 'stop', stop_default, parser)
    count = values.get('sweep', 'count', count_default)
    if count < 1:
        raise ValidationError('sweep.count', f"must be at least 1, got {count}")
    if count == 1:
        return (float(start),)
    return tuple(float(v) for v in np.linspace(start, stop, count))


def parse_config(text: str) -> RunConfig:
    """
    Parse and validate configuration text.

    Raises:
        ConfigParseError: Malformed line, unparseable value (with line number)
        UnknownKeyError: Key or section not in the schema
        ValidationError: Value that parsed but is out of range (names the key)
    """
    values = _Values(_read_entries(text))

    wavelength = values.get('beam', 'wavelength', DEFAULT_WAVELENGTH)
    waist = values.get('beam', 'waist', DEFAULT_WAIST)
    _require_positive('beam.wavelength', wavelength)
    _require_positive('beam.waist', waist)
    try:
        beam = BeamGeometry(wavelength, waist, values.get('beam', 'rayleigh_range'))
    except CavicrysError as e:
        raise ValidationError('beam.rayleigh_range', str(e)) from None

    half_length = values.get('crystal', 'half_length', DEFAULT_HALF_LENGTH)
    radius = values.get('crystal', 'radius', DEFAULT_RADIUS)
    density = values.get('crystal', 'density', DEFAULT_DENSITY)
    for key, value in (('crystal.half_length', half_length), ('crystal.radius', radius),
                       ('crystal.density', density)):
        _require_positive(key, value)
    crystal = CrystalSpec(half_length, radius, density,
                          values.get('crystal', 'offset_x', 0.0),
                          values.get('crystal', 'offset_y', 0.0))

    kappa = values.get('physics', 'kappa', DEFAULT_KAPPA)
    gamma = values.get('physics', 'gamma', DEFAULT_GAMMA)
    _require_positive('physics.kappa', kappa)
    _require_positive('physics.gamma', gamma)
    physics = ProbePhysics(kappa=kappa, gamma=gamma)

    g = values.get('coupling', 'g', 1.0)
    _require_positive('coupling.g', g)
    tolerance = values.get('coupling', 'tolerance', 1e-4)
    if not (0 < tolerance <= 0.1):
        raise ValidationError('coupling.tolerance', f"must be in (0, 0.1], got {tolerance:g}")
    samples = values.get('coupling', 'samples', 1_000_000)
    if samples < 1000:
        raise ValidationError('coupling.samples', f"must be at least 1000, got {samples}")
    try:
        method = CouplingMethod.parse(values.get('coupling', 'method', 'averaged'))
    except CavicrysError as e:
        raise ValidationError('coupling.method', str(e)) from None
    coupling = CouplingConfig(single_ion_g=g, method=method, rel_tolerance=tolerance,
                              mc_samples=samples, mc_seed=values.get('coupling', 'seed', 0))

    target_rate = values.get('coupling', 'target_rate')
    if target_rate is not None:
        _require_positive('coupling.target_rate', target_rate)
    target_mode = _parse_modes('coupling.target_mode',
                               values.get('coupling', 'target_mode', '00'))[0]

    kind = _choice('sweep.kind', values.get('sweep', 'kind', DEFAULT_SWEEP_KIND), SWEEP_KINDS)
    axis = _choice('sweep.axis', values.get('sweep', 'axis', 'x'), SWEEP_AXES)
    normalization = _choice('sweep.normalization',
                            values.get('sweep', 'normalization', 'largest'), RADIUS_NORMALIZATIONS)
    noise_sigma = values.get('sweep', 'noise_sigma', DEFAULT_NOISE_SIGMA)
    if not noise_sigma >= 0:
        raise ValidationError('sweep.noise_sigma', f"must be non-negative, got {noise_sigma:g}")
    scan_points = values.get('sweep', 'scan_points', DEFAULT_SCAN_POINTS)
    scan_half_span = values.get('sweep', 'scan_half_span', TWO_PI * 600e6)
    try:
        scan = ScanGrid(half_span=scan_half_span, points=scan_points)
    except CavicrysError as e:
        raise ValidationError('sweep.scan_points', str(e)) from None
    sweep = SweepSettings(
        kind=kind,
        axis=axis,
        grid=_build_grid(values, kind),
        modes=_parse_modes('sweep.modes', values.get('sweep', 'modes', ','.join(DEFAULT_MODES))),
        normalize=values.get('sweep', 'normalize', True),
        normalization=normalization,
        end_to_end=values.get('sweep', 'end_to_end', False),
        noise_sigma=noise_sigma,
        scan=scan,
        seed=values.get('sweep', 'seed', 0),
    )

    precision = values.get('output', 'precision', DEFAULT_PRECISION)
    if not 1 <= precision <= 17:
        raise ValidationError('output.precision', f"must be between 1 and 17, got {precision}")
    path = values.get('output', 'path')
    output = OutputSettings(
        format=_choice('output.format', values.get('output', 'format', DEFAULT_OUTPUT_FORMAT),
                       OUTPUT_FORMATS),
        path=None if path in (None, '-') else path,
        precision=precision,
    )

    return RunConfig(beam=beam, crystal=crystal, physics=physics, coupling=coupling,
                     sweep=sweep, output=output, target_rate=target_rate,
                     target_mode=target_mode)


def load_config(path: str) -> RunConfig:
    """Read and parse a UTF-8 configuration file."""
    with open(path, 'rb') as f:
        raw = f.read()
    try:
        text = raw.decode('utf-8')
    except UnicodeDecodeError as e:
        line_number = raw.count(b"\n", 0, e.start) + 1
        raise ConfigParseError(f"invalid UTF-8 byte 0x{raw[e.start]:02x}", line_number) from None
    return parse_config(text)
