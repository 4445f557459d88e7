"""
Self-contained cross-validation suite behind ``cavicrys selftest``.

Each check builds its own inputs, compares against an independent oracle
(closed forms, scipy quadrature, Monte Carlo) and raises AssertionError on
a mismatch. Nothing is read from disk.
"""
import logging
import math
import sys
import time
from dataclasses import replace
from typing import IO, Callable, List, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.special import eval_hermite

from beam_optics import (
    BeamGeometry, ModeIndex, hermite_norm, hermite_poly, mode_amplitude, transverse_power,
    waist_at,
)
from config import DEFAULT_WAIST, DEFAULT_WAVELENGTH
from coupling import CouplingConfig, CouplingMethod, compute_coupling, envelope_limit
from crystal import CrystalSpec, contains, sample_uniform
from spectroscopy import (
    BroadeningPoint, MHZ, ProbePhysics, ScanGrid, effective_halfwidth, fit_coupling,
    fit_lorentzian, synthesize_spectrum,
)

TEM00 = ModeIndex(0, 0)
TEM10 = ModeIndex(1, 0)
TEM01 = ModeIndex(0, 1)


def _geometry() -> BeamGeometry:
    return BeamGeometry(DEFAULT_WAVELENGTH, DEFAULT_WAIST)


def _close(actual: float, expected: float, rel: float, what: str):
    if not abs(actual - expected) <= rel * abs(expected):
        raise AssertionError(f"{what}: {actual:.9g} vs {expected:.9g} (rel tol {rel:g})")


def check_rayleigh_range():
    _close(_geometry().rayleigh_range, 4.963e-3, 1e-3, "z_R for w0=37um, 866nm")


def check_hermite_polynomials():
    t = np.linspace(-4.0, 4.0, 41)
    for l in range(0, 11):
        expected = eval_hermite(l, t)
        actual = hermite_poly(l, t)
        scale = np.max(np.abs(expected))
        assert np.max(np.abs(actual - expected)) <= 1e-12 * scale, f"H_{l} mismatch"


def check_power_conservation():
    geom = _geometry()
    for l in range(0, 6):
        for z in (0.0, geom.rayleigh_range, -2.5e-3):
            half = 8.0 * float(waist_at(geom, z))
            value, _ = quad(lambda u: float(mode_amplitude(geom, l, u, z)) ** 2, -half, half,
                            points=[0.0], epsabs=0.0, epsrel=1e-10, limit=200)
            _close(value, transverse_power(geom, l), 1e-6, f"int Psi_{l}^2 at z={z:g}")


def check_mode_parity():
    geom = _geometry()
    u = np.linspace(0.0, 80e-6, 9)
    for l in range(0, 5):
        sign = (-1) ** l
        assert np.allclose(mode_amplitude(geom, l, -u, 1e-4),
                           sign * mode_amplitude(geom, l, u, 1e-4), rtol=1e-12, atol=0.0)
    _close(hermite_norm(1), 1.0 / math.sqrt(2.0), 1e-15, "N_1")


def check_spheroid_moments():
    spec = CrystalSpec(half_length=300e-6, radius=40e-6, density=1e14,
                       offset_x=12e-6, offset_y=-5e-6)
    points = sample_uniform(spec, rng_seed=7, count=200_000)
    assert np.all(contains(spec, points[:, 0], points[:, 1], points[:, 2]))
    mean = points.mean(axis=0)
    assert abs(mean[0] - 12e-6) < 0.01 * spec.radius
    assert abs(mean[1] + 5e-6) < 0.01 * spec.radius
    assert abs(mean[2]) < 0.01 * spec.half_length
    var = points.var(axis=0)
    _close(var[0], spec.radius ** 2 / 5.0, 0.02, "var x")
    _close(var[1], spec.radius ** 2 / 5.0, 0.02, "var y")
    _close(var[2], spec.half_length ** 2 / 5.0, 0.02, "var z")


def check_linearity():
    geom = _geometry()
    spec = CrystalSpec(336e-6, 50e-6, 3.8e14)
    base = compute_coupling(geom, TEM10, spec, CouplingConfig(single_ion_g=1.0))
    doubled = compute_coupling(geom, TEM10, replace(spec, density=7.6e14),
                               CouplingConfig(single_ion_g=3.0))
    _close(doubled.g_squared, 18.0 * base.g_squared, 1e-12, "G^2 linear in rho and g^2")


def check_symmetries():
    geom = _geometry()
    cfg = CouplingConfig()
    left = compute_coupling(geom, TEM00, CrystalSpec(240e-6, 21e-6, 1e14, offset_x=-30e-6), cfg)
    right = compute_coupling(geom, TEM00, CrystalSpec(240e-6, 21e-6, 1e14, offset_x=30e-6), cfg)
    _close(left.g_squared, right.g_squared, 2 * max(left.est_rel_error, 1e-12), "x0 -> -x0")
    g10 = compute_coupling(geom, TEM10, CrystalSpec(240e-6, 21e-6, 1e14, offset_x=20e-6), cfg)
    g01 = compute_coupling(geom, TEM01, CrystalSpec(240e-6, 21e-6, 1e14, offset_y=20e-6), cfg)
    _close(g10.g_squared, g01.g_squared, 1e-12, "TEM10/TEM01 swap")


def check_engine_agreement():
    geom = _geometry()
    for half_length, radius in ((240e-6, 10e-6), (600e-6, 120e-6)):
        spec = CrystalSpec(half_length, radius, 1e14)
        for mode in (TEM00, TEM10):
            averaged = compute_coupling(geom, mode, spec, CouplingConfig())
            oscillatory = compute_coupling(
                geom, mode, spec, CouplingConfig(method=CouplingMethod.OSCILLATORY))
            _close(oscillatory.g_squared, averaged.g_squared, 5e-3,
                   f"oscillatory vs averaged TEM{mode.label} L={half_length:g} R={radius:g}")
            mc = compute_coupling(
                geom, mode, spec,
                CouplingConfig(method=CouplingMethod.MONTE_CARLO, mc_samples=400_000, mc_seed=3))
            sigma = mc.est_rel_error * mc.g_squared
            assert abs(mc.g_squared - averaged.g_squared) <= 4.0 * sigma, (
                f"MC TEM{mode.label} off by {abs(mc.g_squared - averaged.g_squared) / sigma:.2f} sigma"
            )


def check_radius_convergence():
    geom = _geometry()
    spec = CrystalSpec(336e-6, 4 * DEFAULT_WAIST, 3.8e14)
    g00 = compute_coupling(geom, TEM00, spec, CouplingConfig())
    g10 = compute_coupling(geom, TEM10, spec, CouplingConfig())
    ratio = g10.g_squared / g00.g_squared
    assert 0.97 <= ratio <= 1.0, f"G10^2/G00^2 at R=4w0 is {ratio:.4f}"
    limit = envelope_limit(geom, TEM00, spec.half_length, spec.density)
    assert g00.g_squared <= limit * (1 + 1e-6)


def check_halfwidth_anchor():
    physics = ProbePhysics()
    G = 11.6 * MHZ
    _close(effective_halfwidth(G, physics), (2.15 + 11.6 ** 2 / 11.2) * MHZ, 1e-12, "kappa'")
    at_zero = effective_halfwidth(G, physics) - physics.kappa
    at_gamma = effective_halfwidth(G, physics.at_detuning(physics.gamma)) - physics.kappa
    _close(at_gamma, 0.5 * at_zero, 1e-12, "broadening at delta=gamma")


def check_broadening_integral():
    physics = ProbePhysics()
    G = 11.6 * MHZ
    gamma = physics.gamma

    def excess(delta: float) -> float:
        return effective_halfwidth(G, physics.at_detuning(delta)) - physics.kappa

    for delta in (0.5 * gamma, gamma, 7.3 * MHZ, 40.0 * MHZ):
        if excess(delta) != excess(-delta):
            raise AssertionError(f"broadening not even at delta={delta:g}")
    # in units of gamma the Lorentzian has unit width
    value, _ = quad(lambda t: gamma * excess(gamma * t), -np.inf, np.inf, epsabs=0.0, epsrel=1e-10)
    _close(value, math.pi * G ** 2, 1e-6, "int (kappa' - kappa) d delta")


def check_lorentzian_calibration():
    physics = ProbePhysics()
    G = 11.6 * MHZ
    truth = effective_halfwidth(G, physics)
    within = 0
    seeds = 40
    for seed in range(seeds):
        fit = fit_lorentzian(synthesize_spectrum(G, physics, ScanGrid(), 0.01, seed))
        if abs(fit.half_width - truth) <= 3.0 * fit.half_width_err:
            within += 1
    assert within >= 0.9 * seeds, f"only {within}/{seeds} half-widths within 3 sigma"


def check_coupling_fit_pulls():
    physics = ProbePhysics()
    G = 11.6 * MHZ
    deltas = np.linspace(-30.0, 30.0, 9) * MHZ
    sigma = 0.2 * MHZ
    clean = [effective_halfwidth(G, physics.at_detuning(d)) - physics.kappa for d in deltas]
    rng = np.random.default_rng(11)
    pulls = []
    for _ in range(200):
        series = [BroadeningPoint(float(d), float(b + rng.normal(0.0, sigma)), sigma)
                  for d, b in zip(deltas, clean)]
        fit = fit_coupling(series, physics)
        pulls.append((fit.G - G) / fit.G_err)
    pulls = np.array(pulls)
    assert abs(pulls.mean()) < 0.25, f"pull mean {pulls.mean():.3f}"
    assert 0.8 <= pulls.std() <= 1.2, f"pull width {pulls.std():.3f}"


CHECKS: List[Tuple[str, Callable[[], None]]] = [
    ("Rayleigh range anchor", check_rayleigh_range),
    ("Hermite polynomials vs scipy", check_hermite_polynomials),
    ("Mode power conservation", check_power_conservation),
    ("Mode parity", check_mode_parity),
    ("Spheroid sampling moments", check_spheroid_moments),
    ("Linearity in density and g^2", check_linearity),
    ("Displacement and mode-swap symmetry", check_symmetries),
    ("Engine cross-validation", check_engine_agreement),
    ("Radius convergence at 4 w0", check_radius_convergence),
    ("Half-width formula anchor", check_halfwidth_anchor),
    ("Broadening symmetry and area", check_broadening_integral),
    ("Lorentzian fit calibration", check_lorentzian_calibration),
    ("Coupling fit pull distribution", check_coupling_fit_pulls),
]


def run_selftest(stream: IO[str] = sys.stderr) -> Tuple[int, int]:
    """
    Run every check and print one line per check.

    Returns:
        Tuple of (passed, failed)
    """
    print("\n" + "=" * 60, file=stream)
    print("cavicrys self-test", file=stream)
    print("=" * 60, file=stream)
    passed = failed = 0
    for name, check in CHECKS:
        started = time.time()
        try:
            check()
        except Exception as e:
            failed += 1
            logging.error(f"[SELFTEST] {name} failed: {type(e).__name__}: {e}")
            print(f"✗ {name}: {e}", file=stream)
            continue
        passed += 1
        print(f"✓ {name} ({time.time() - started:.1f}s)", file=stream)
    print("=" * 60, file=stream)
    print(f"{passed} passed, {failed} failed", file=stream)
    return passed, failed
