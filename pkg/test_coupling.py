#!/usr/bin/env python3
"""
Tests for the collective coupling integral (coupling).
"""

import math
import os
import sys
from dataclasses import replace

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

import coupling
from beam_optics import BeamGeometry, ModeIndex
from coupling import (
    CouplingConfig, CouplingMethod, CouplingResult, calibrate_single_ion_g, compute_coupling,
    envelope_limit, field_intensity, integrand, normalized_coupling, normalized_value,
)
from crystal import CrystalSpec
from error_handler import AccuracyError, ConfigurationError, DomainError

GEOM = BeamGeometry(866e-9, 37e-6)
TEM00 = ModeIndex(0, 0)
TEM10 = ModeIndex(1, 0)
TEM01 = ModeIndex(0, 1)
NEEDLE = CrystalSpec(half_length=240e-6, radius=21e-6, density=3.8e14)


def _field_by_hand(m, n, u, v, z):
    """Direct transcription of the mode functions and standing-wave phase."""
    w0, lam = 37e-6, 866e-9
    zr = math.pi * w0 ** 2 / lam
    k = 2 * math.pi / lam
    w = w0 * math.sqrt(1 + (z / zr) ** 2)
    inv_r = z / (z ** 2 + zr ** 2)

    def hermite(l, t):
        return {0: 1.0, 1: 2 * t, 2: 4 * t * t - 2}[l]

    def psi(l, s):
        norm = 1.0 / math.sqrt(2 ** l * math.factorial(l))
        return math.sqrt(w0 / w) * norm * hermite(l, math.sqrt(2) * s / w) * math.exp(-s * s / (w * w))

    phase = k * z - (m + n + 1) * math.atan(z / zr) + k * (u * u + v * v) * inv_r / 2
    return psi(m, u) ** 2 * psi(n, v) ** 2 * math.sin(phase) ** 2


def test_integrand_examples():
    print("\n" + "=" * 60)
    print("TEST: Integrand")
    print("=" * 60)

    spec = replace(NEEDLE, offset_x=12e-6, offset_y=-3e-6)
    assert integrand(GEOM, TEM00, spec, 12e-6, -3e-6, 0.0) == 0.0
    for y, z in ((0.0, 0.0), (5e-6, 1e-4), (-9e-6, -2.3e-4)):
        assert integrand(GEOM, TEM10, spec, 12e-6, y, z) == 0.0

    rng = np.random.default_rng(5)
    for _ in range(20):
        x, y = rng.uniform(-20e-6, 20e-6, 2)
        z = rng.uniform(-240e-6, 240e-6)
        for mode in (TEM00, TEM10, ModeIndex(2, 1)):
            expected = _field_by_hand(mode.m, mode.n, x - 12e-6, y + 3e-6, z)
            actual = float(integrand(GEOM, mode, spec, x, y, z))
            assert actual == pytest.approx(expected, rel=1e-12, abs=1e-300)
    print("✓ Integrand matches a direct transcription")


def test_field_intensity_is_even():
    u, v, z = 7e-6, -11e-6, 150e-6
    for mode in (TEM00, TEM10, ModeIndex(1, 2)):
        ref = field_intensity(GEOM, mode, u, v, z)
        assert field_intensity(GEOM, mode, -u, v, z) == pytest.approx(ref, rel=1e-14)
        assert field_intensity(GEOM, mode, u, -v, z) == pytest.approx(ref, rel=1e-14)


def test_self_normalization_and_offset_symmetry():
    cfg = CouplingConfig()
    centred = compute_coupling(GEOM, TEM00, NEEDLE, cfg)
    assert normalized_value(centred, centred) == 1.0

    left = compute_coupling(GEOM, TEM00, replace(NEEDLE, offset_x=-37e-6), cfg)
    right = compute_coupling(GEOM, TEM00, replace(NEEDLE, offset_x=37e-6), cfg)
    assert left.g_squared == right.g_squared
    ratio = right.g_squared / centred.g_squared
    # Near exp(-2), lifted by the finite crystal radius
    assert 0.12 < ratio < 0.25
    print(f"✓ TEM00 at 37 um offset: normalised {ratio:.4f}")


def test_mode_swap_symmetry():
    cfg = CouplingConfig()
    g10 = compute_coupling(GEOM, TEM10, replace(NEEDLE, offset_x=25e-6, offset_y=4e-6), cfg)
    g01 = compute_coupling(GEOM, TEM01, replace(NEEDLE, offset_x=4e-6, offset_y=25e-6), cfg)
    assert g10.g_squared == g01.g_squared


def test_tem10_node_on_thin_needle():
    thin = replace(NEEDLE, radius=37e-6 / 100)
    cfg = CouplingConfig()
    g00 = compute_coupling(GEOM, TEM00, thin, cfg)
    g10 = compute_coupling(GEOM, TEM10, thin, cfg)
    assert g10.g_squared < 1e-3 * g00.g_squared


def test_linearity_in_density_and_g():
    base = compute_coupling(GEOM, TEM10, NEEDLE, CouplingConfig(single_ion_g=2.0))
    scaled = compute_coupling(GEOM, TEM10, replace(NEEDLE, density=3 * NEEDLE.density),
                              CouplingConfig(single_ion_g=4.0))
    assert scaled.g_squared == pytest.approx(12.0 * base.g_squared, rel=1e-12)
    assert base.g_rate == pytest.approx(math.sqrt(base.g_squared))


def test_monotone_saturation_below_envelope():
    cfg = CouplingConfig()
    limit = envelope_limit(GEOM, TEM00, 336e-6, 3.8e14)
    assert envelope_limit(GEOM, TEM10, 336e-6, 3.8e14) == pytest.approx(limit)
    for mode in (TEM00, TEM10):
        values = [compute_coupling(GEOM, mode, CrystalSpec(336e-6, r, 3.8e14), cfg).g_squared
                  for r in (10e-6, 30e-6, 60e-6, 100e-6, 148e-6)]
        assert all(b >= a * (1 - 1e-6) for a, b in zip(values, values[1:]))
        assert values[-1] <= limit * (1 + 1e-6)
    print("✓ G^2 grows with R and stays below the envelope limit")


@pytest.mark.parametrize("mode", [TEM00, TEM10])
def test_engines_agree_on_needle(mode):
    averaged = compute_coupling(GEOM, mode, NEEDLE, CouplingConfig())
    oscillatory = compute_coupling(GEOM, mode, NEEDLE,
                                   CouplingConfig(method=CouplingMethod.OSCILLATORY))
    assert oscillatory.g_squared == pytest.approx(averaged.g_squared, rel=5e-3)

    mc = compute_coupling(GEOM, mode, NEEDLE,
                          CouplingConfig(method=CouplingMethod.MONTE_CARLO, mc_samples=500_000,
                                         mc_seed=9))
    sigma = mc.est_rel_error * mc.g_squared
    assert abs(mc.g_squared - averaged.g_squared) < 4 * sigma
    assert mc.evaluations == 500_000
    print(f"✓ TEM{mode.label}: averaged, oscillatory and MC agree")


def test_monte_carlo_reproducible():
    cfg = CouplingConfig(method=CouplingMethod.MONTE_CARLO, mc_samples=20_000, mc_seed=4)
    first = compute_coupling(GEOM, TEM00, NEEDLE, cfg)
    second = compute_coupling(GEOM, TEM00, NEEDLE, cfg)
    assert first == second
    other = compute_coupling(GEOM, TEM00, NEEDLE, replace(cfg, mc_seed=5))
    assert other.g_squared != first.g_squared


def test_non_convergence_carries_best_estimate(monkeypatch):
    monkeypatch.setitem(coupling.MAX_SUBDIVISIONS, 'averaged', 1)
    spec = replace(NEEDLE, offset_x=40e-6, radius=60e-6)
    with pytest.raises(AccuracyError) as excinfo:
        compute_coupling(GEOM, TEM10, spec, CouplingConfig(rel_tolerance=1e-9))
    best = excinfo.value.best_estimate
    assert isinstance(best, CouplingResult)
    assert best.g_squared > 0
    print("✓ AccuracyError carries the best estimate")


def test_invalid_requests_rejected():
    with pytest.raises(ConfigurationError):
        compute_coupling(GEOM, ModeIndex(21, 0), NEEDLE, CouplingConfig())
    with pytest.raises(ConfigurationError):
        compute_coupling(GEOM, TEM00, CrystalSpec(240e-6, 1e-10, 3.8e14), CouplingConfig())
    with pytest.raises(ConfigurationError):
        CouplingConfig(rel_tolerance=0.0)
    with pytest.raises(ConfigurationError):
        CouplingConfig(mc_samples=10)
    with pytest.raises(ConfigurationError):
        CouplingConfig(method="averaged")


def test_method_parsing():
    assert CouplingMethod.parse("averaged") is CouplingMethod.PHASE_AVERAGED
    assert CouplingMethod.parse("Monte-Carlo") is CouplingMethod.MONTE_CARLO
    assert CouplingMethod.parse("oscillatory") is CouplingMethod.OSCILLATORY
    with pytest.raises(ConfigurationError):
        CouplingMethod.parse("simpson")


def test_zero_reference_is_domain_error():
    zero = CouplingResult(0.0, 0.0, 0.0, CouplingMethod.PHASE_AVERAGED, 0)
    with pytest.raises(DomainError):
        normalized_coupling(GEOM, TEM00, NEEDLE, CouplingConfig(), zero)


def test_calibrate_single_ion_g():
    target = 2 * math.pi * 11.6e6
    spec = CrystalSpec(600e-6, 200e-6, 5.4e14)
    cfg = CouplingConfig()
    g = calibrate_single_ion_g(GEOM, TEM00, spec, target, cfg)
    result = compute_coupling(GEOM, TEM00, spec, replace(cfg, single_ion_g=g))
    assert result.g_rate == pytest.approx(target, rel=1e-12)
    # A few hundred kHz per ion for this crystal
    assert 2 * math.pi * 1e4 < g < 2 * math.pi * 1e7
    with pytest.raises(DomainError):
        calibrate_single_ion_g(GEOM, TEM00, spec, 0.0, cfg)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
