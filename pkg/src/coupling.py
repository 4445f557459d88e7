"""
Collective coupling rate G_mn of a spheroidal crystal to a TEM_mn cavity mode.

    G_mn^2 = g^2 rho \\int_V Psi_m^2(x-x0, z) Psi_n^2(y-y0, z) sin^2[phase] dV

Three interchangeable evaluation methods:

- PHASE_AVERAGED: sin^2 replaced by its mean 1/2, the smooth envelope is
  integrated by adaptive cubature over the spheroid.
- OSCILLATORY: adaptive cubature over the transverse cross-section; along
  each chord the z-extent is cut into slabs no longer than lambda/16 and the
  standing wave is integrated analytically per slab with the phase
  linearised at the slab midpoint.
- MONTE_CARLO: mean of the field over uniformly sampled crystal points.

The spheroid is parametrised as
    x = R sin(b) cos(p),  y = R sin(b) sin(p),  z = L cos(b) t
with b in [0, pi/2], p in [0, 2 pi], t in [-1, 1]. The chord half-length
L cos(b) is then smooth up to the crystal rim and the volume element is
R^2 L sin(b) cos(b)^2 db dp dt.

Phase linearisation: over a slab of length h <= lambda/16 the dropped
second-order term is |phase''| h^2 / 8 with |phase''| <= (m+n+1)/z_R^2 +
k (x^2+y^2)/z_R^3 up to O(1) factors; for z_R ~ 5 mm and the crystal sizes
used here that is below 1e-6 rad.
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

import numpy as np
from scipy.integrate import cubature

from beam_optics import (
    BeamGeometry, ModeIndex, MAX_HERMITE_ORDER, mode_amplitude,
    standing_wave_phase, standing_wave_phase_slope, transverse_power,
)
from crystal import CrystalSpec, iter_uniform_batches, volume
from error_handler import (
    AccuracyError, ConfigurationError, DomainError,
    setup_debug_logging, log_debug, log_function_entry, log_function_exit,
)

setup_debug_logging()

# Crystals thinner or shorter than this are rejected rather than integrated.
MIN_CRYSTAL_DIMENSION = 1e-9

# Slab length along the chord, as a fraction of the wavelength.
SLAB_FRACTION = 1.0 / 16.0

# Upper bound on (transverse points x slabs) held in memory at once.
OSCILLATORY_CHUNK_ELEMENTS = 2_000_000

# Absolute floor for the cubature stopping rule (integrals are dimensionless).
CUBATURE_ATOL = 1e-15

MAX_SUBDIVISIONS = {
    'averaged': 4000,
    'oscillatory': 600,
}


class CouplingMethod(Enum):
    """Evaluation method for the coupling integral"""
    PHASE_AVERAGED = "averaged"
    OSCILLATORY = "oscillatory"
    MONTE_CARLO = "mc"

    @classmethod
    def parse(cls, text: str) -> 'CouplingMethod':
        aliases = {
            'averaged': cls.PHASE_AVERAGED,
            'phase_averaged': cls.PHASE_AVERAGED,
            'phaseaveraged': cls.PHASE_AVERAGED,
            'oscillatory': cls.OSCILLATORY,
            'mc': cls.MONTE_CARLO,
            'monte_carlo': cls.MONTE_CARLO,
            'montecarlo': cls.MONTE_CARLO,
        }
        key = text.strip().lower().replace('-', '_')
        if key not in aliases:
            raise ConfigurationError(
                f"unknown coupling method '{text}' (expected averaged, oscillatory or mc)"
            )
        return aliases[key]


@dataclass(frozen=True)
class CouplingConfig:
    """How G_mn is evaluated and the single-ion coupling g (rad/s) it is scaled by."""
    single_ion_g: float = 1.0
    method: CouplingMethod = CouplingMethod.PHASE_AVERAGED
    rel_tolerance: float = 1e-4
    mc_samples: int = 1_000_000
    mc_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.method, CouplingMethod):
            raise ConfigurationError(f"invalid coupling method {self.method!r}")
        if not (self.single_ion_g > 0 and math.isfinite(self.single_ion_g)):
            raise ConfigurationError(f"single_ion_g must be positive, got {self.single_ion_g}")
        if not (0 < self.rel_tolerance <= 0.1):
            raise ConfigurationError(f"rel_tolerance must be in (0, 0.1], got {self.rel_tolerance}")
        if int(self.mc_samples) != self.mc_samples or self.mc_samples < 1000:
            raise ConfigurationError(f"mc_samples must be an integer >= 1000, got {self.mc_samples}")


@dataclass(frozen=True)
class CouplingResult:
    """G_mn^2 (rad^2/s^2), G_mn (rad/s) and the relative error estimate of the integral."""
    g_squared: float
    g_rate: float
    est_rel_error: float
    method_used: CouplingMethod
    evaluations: int

    @classmethod
    def from_integral(cls, integral: float, rel_error: float, cfg: CouplingConfig,
                      density: float, evaluations: int,
                      method: CouplingMethod) -> 'CouplingResult':
        g_squared = max(cfg.single_ion_g ** 2 * density * integral, 0.0)
        return cls(
            g_squared=g_squared,
            g_rate=math.sqrt(g_squared),
            est_rel_error=rel_error,
            method_used=method,
            evaluations=evaluations,
        )


def mode_envelope(geom: BeamGeometry, mode: ModeIndex, u, v, z):
    """Psi_m^2(u, z) Psi_n^2(v, z) with (u, v) measured from the mode axis."""
    return mode_amplitude(geom, mode.m, u, z) ** 2 * mode_amplitude(geom, mode.n, v, z) ** 2


def field_intensity(geom: BeamGeometry, mode: ModeIndex, u, v, z):
    """Field factor of the coupling integral at (u, v, z) relative to the cavity axis."""
    phase = standing_wave_phase(geom, mode, u, v, z)
    return mode_envelope(geom, mode, u, v, z) * np.sin(phase) ** 2


def integrand(geom: BeamGeometry, mode: ModeIndex, spec: CrystalSpec, x, y, z):
    """
    Integrand of the coupling integral as printed, evaluated at (x, y, z).

    (x, y, z) are taken in the frame of the integral, where the spheroid is
    centred at the origin, so the field is evaluated at (x - x0, y - y0, z).
    Points outside the crystal are not clipped here.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return field_intensity(geom, mode, x - spec.offset_x, y - spec.offset_y, z)


def _validate(mode: ModeIndex, spec: CrystalSpec):
    if max(mode.m, mode.n) > MAX_HERMITE_ORDER:
        raise ConfigurationError(
            f"mode TEM{mode.m},{mode.n} exceeds the supported order cap of {MAX_HERMITE_ORDER}"
        )
    if spec.radius < MIN_CRYSTAL_DIMENSION or spec.half_length < MIN_CRYSTAL_DIMENSION:
        raise ConfigurationError(
            f"crystal R={spec.radius:.3g} m, L={spec.half_length:.3g} m is below "
            f"the {MIN_CRYSTAL_DIMENSION:.0e} m resolution limit"
        )


def _canonical(mode: ModeIndex, spec: CrystalSpec) -> Tuple[ModeIndex, CrystalSpec]:
    """
    Map (mode, offsets) onto the representative with x0, y0 >= 0 and m >= n.

    The field intensity is even in both transverse coordinates and the
    spheroid is symmetric, so mirrored offsets give the same integral, and
    swapping the transverse axes exchanges (m, n) together with (x0, y0).
    """
    x0, y0 = abs(spec.offset_x), abs(spec.offset_y)
    if mode.m < mode.n:
        return mode.swapped(), replace(spec, offset_x=y0, offset_y=x0)
    return mode, replace(spec, offset_x=x0, offset_y=y0)


def _transverse_map(spec: CrystalSpec, b: np.ndarray, p: np.ndarray):
    """Cross-section coordinates, chord factor cos(b) and area weight sin(b) cos(b)."""
    sin_b = np.sin(b)
    cos_b = np.cos(b)
    x = spec.radius * sin_b * np.cos(p)
    y = spec.radius * sin_b * np.sin(p)
    return x, y, cos_b, sin_b * cos_b


def _run_cubature(func, lower, upper, cfg: CouplingConfig, label: str):
    result = cubature(
        func, lower, upper,
        rule='gk15',
        rtol=cfg.rel_tolerance,
        atol=CUBATURE_ATOL,
        max_subdivisions=MAX_SUBDIVISIONS[label],
    )
    estimate = float(np.asarray(result.estimate))
    error = float(np.asarray(result.error))
    rel_error = error / abs(estimate) if estimate != 0.0 else error
    log_debug("Cubature finished", method=label, estimate=estimate, error=error,
              status=result.status, subdivisions=result.subdivisions)
    return estimate, rel_error, result.status == "converged"


def _phase_averaged_integral(geom, mode, spec, cfg):
    calls = [0]

    def envelope_density(points):
        b, p, t = points[:, 0], points[:, 1], points[:, 2]
        x, y, cos_b, area = _transverse_map(spec, b, p)
        z = spec.half_length * cos_b * t
        calls[0] += len(b)
        env = mode_envelope(geom, mode, x - spec.offset_x, y - spec.offset_y, z)
        return 0.5 * env * area * cos_b

    estimate, rel_error, converged = _run_cubature(
        envelope_density,
        np.array([0.0, 0.0, -1.0]),
        np.array([0.5 * math.pi, 2.0 * math.pi, 1.0]),
        cfg, 'averaged',
    )
    scale = spec.radius ** 2 * spec.half_length
    return estimate * scale, rel_error, calls[0], converged


def _chord_integrals(geom, mode, spec, u, v, half_chords, slabs):
    """Integral of the field along each chord, by analytic per-slab integration."""
    h = 2.0 * half_chords / slabs
    offsets = np.arange(slabs) + 0.5
    z = -half_chords[:, None] + h[:, None] * offsets[None, :]
    uu = u[:, None]
    vv = v[:, None]
    env = mode_envelope(geom, mode, uu, vv, z)
    phase = standing_wave_phase(geom, mode, uu, vv, z)
    slope = standing_wave_phase_slope(geom, mode, uu, vv, z)
    hh = h[:, None]
    # sin^2 = (1 - cos 2phase)/2 integrated over a slab with a linear phase
    oscillating = np.cos(2.0 * phase) * hh * np.sinc(slope * hh / math.pi)
    return np.sum(env * (0.5 * hh - 0.5 * oscillating), axis=1)


def _oscillatory_integral(geom, mode, spec, cfg):
    slab_max = geom.wavelength * SLAB_FRACTION
    slabs = max(int(math.ceil(2.0 * spec.half_length / slab_max)), 1)
    rows = max(OSCILLATORY_CHUNK_ELEMENTS // slabs, 1)
    calls = [0]

    def chord_density(points):
        b, p = points[:, 0], points[:, 1]
        x, y, cos_b, area = _transverse_map(spec, b, p)
        u = x - spec.offset_x
        v = y - spec.offset_y
        half_chords = spec.half_length * cos_b
        out = np.empty(len(b))
        for start in range(0, len(b), rows):
            stop = start + rows
            out[start:stop] = _chord_integrals(
                geom, mode, spec, u[start:stop], v[start:stop], half_chords[start:stop], slabs
            )
        calls[0] += len(b) * slabs
        return out * area

    estimate, rel_error, converged = _run_cubature(
        chord_density,
        np.array([0.0, 0.0]),
        np.array([0.5 * math.pi, 2.0 * math.pi]),
        cfg, 'oscillatory',
    )
    return estimate * spec.radius ** 2, rel_error, calls[0], converged


def _monte_carlo_integral(geom, mode, spec, cfg):
    total = 0.0
    total_sq = 0.0
    n = int(cfg.mc_samples)
    # Samples are cavity-frame points of the crystal centred at (x0, y0).
    for batch in iter_uniform_batches(spec, cfg.mc_seed, n):
        values = field_intensity(geom, mode, batch[:, 0], batch[:, 1], batch[:, 2])
        total += float(np.sum(values))
        total_sq += float(np.sum(values ** 2))
    mean = total / n
    variance = max(total_sq / n - mean ** 2, 0.0) * n / (n - 1)
    vol = volume(spec)
    estimate = vol * mean
    std_error = vol * math.sqrt(variance / n)
    rel_error = std_error / estimate if estimate > 0 else math.inf
    return estimate, rel_error, n, True


_ENGINES = {
    CouplingMethod.PHASE_AVERAGED: _phase_averaged_integral,
    CouplingMethod.OSCILLATORY: _oscillatory_integral,
    CouplingMethod.MONTE_CARLO: _monte_carlo_integral,
}


def compute_coupling(geom: BeamGeometry, mode: ModeIndex, spec: CrystalSpec,
                     cfg: CouplingConfig) -> CouplingResult:
    """
    Evaluate G_mn^2 = g^2 rho I for the crystal and mode with the configured method.

    Raises:
        ConfigurationError: Invalid method, mode above the order cap, or a
            crystal dimension below 1 nm
        AccuracyError: Adaptive cubature did not reach the requested
            tolerance; ``best_estimate`` holds the CouplingResult so far
    """
    log_function_entry("compute_coupling", mode=mode.label, spec=spec, method=cfg.method.value)
    if not isinstance(cfg.method, CouplingMethod) or cfg.method not in _ENGINES:
        raise ConfigurationError(f"invalid coupling method {cfg.method!r}")
    _validate(mode, spec)

    canon_mode, canon_spec = _canonical(mode, spec)
    integral, rel_error, evaluations, converged = _ENGINES[cfg.method](
        geom, canon_mode, canon_spec, cfg
    )
    result = CouplingResult.from_integral(
        integral, rel_error, cfg, spec.density, evaluations, cfg.method
    )

    if not converged:
        logging.warning(
            f"[COUPLING] TEM{mode.label} {cfg.method.value} integral did not reach "
            f"rel_tolerance {cfg.rel_tolerance:g} (estimate {rel_error:.2e})"
        )
        raise AccuracyError(
            f"{cfg.method.value} integration for TEM{mode.label} did not converge to "
            f"rel_tolerance {cfg.rel_tolerance:g} (reached {rel_error:.2e})",
            best_estimate=result,
        )

    log_function_exit("compute_coupling", result=result)
    return result


def normalized_value(result: CouplingResult, reference: CouplingResult) -> float:
    """g_squared relative to a reference result."""
    if not reference.g_squared > 0:
        raise DomainError("normalisation reference has zero coupling")
    return result.g_squared / reference.g_squared


def normalized_coupling(geom: BeamGeometry, mode: ModeIndex, spec: CrystalSpec,
                        cfg: CouplingConfig, reference: CouplingResult) -> float:
    """G_mn^2 of this crystal divided by a reference G^2 (typically on-axis TEM00)."""
    if not reference.g_squared > 0:
        raise DomainError("normalisation reference has zero coupling")
    return normalized_value(compute_coupling(geom, mode, spec, cfg), reference)


def envelope_limit(geom: BeamGeometry, mode: ModeIndex, half_length: float,
                   density: float, single_ion_g: float = 1.0) -> float:
    """
    G_mn^2 of an infinitely wide crystal of half-length L, phase-averaged.

    Every transverse mode carries the same power, so the limit is
    g^2 rho L pi w0^2 / 2 for all (m, n).
    """
    power = transverse_power(geom, mode.m) * transverse_power(geom, mode.n)
    return single_ion_g ** 2 * density * 0.5 * (2.0 * half_length) * power


def calibrate_single_ion_g(geom: BeamGeometry, mode: ModeIndex, spec: CrystalSpec,
                           target_rate: float, cfg: CouplingConfig) -> float:
    """Single-ion coupling g (rad/s) for which G_mn of this crystal equals target_rate."""
    if not target_rate > 0:
        raise DomainError(f"target coupling rate must be positive, got {target_rate}")
    unit = compute_coupling(geom, mode, spec, replace(cfg, single_ion_g=1.0))
    if not unit.g_squared > 0:
        raise DomainError(f"TEM{mode.label} does not couple to this crystal")
    g = target_rate / unit.g_rate
    logging.info(f"[COUPLING] Calibrated g = 2pi x {g / (2 * math.pi) / 1e3:.4f} kHz "
                 f"for G{mode.label} = 2pi x {target_rate / (2 * math.pi) / 1e6:.3f} MHz")
    return g
