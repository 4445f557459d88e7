"""
Probe-transmission spectroscopy of the crystal-loaded cavity.

All rates (kappa, gamma, G, detunings, half-widths) are half-width angular
rates in rad/s. A value quoted as "(2 pi) X MHz" is X * 2 pi * 1e6 here.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from error_handler import (
    AccuracyError, ConfigurationError, FitDegenerateError, IllConditionedError,
    log_debug,
)

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6

DEFAULT_KAPPA = TWO_PI * 2.15e6
DEFAULT_GAMMA = TWO_PI * 11.2e6

# The cavity is scanned 1.2 GHz across the atomic resonance.
DEFAULT_SCAN_HALF_SPAN = TWO_PI * 600e6
DEFAULT_SCAN_POINTS = 201

MIN_SPECTRUM_POINTS = 16
PEAK_VISIBILITY = 5.0

LORENTZIAN_XTOL = 1e-8
LORENTZIAN_MAX_NFEV = 200

MIN_SERIES_DETUNINGS = 4
NEGATIVE_BROADENING_SIGMAS = 3.0
MAX_CONDITION_NUMBER = 1e12


def to_mhz(rate: float) -> float:
    """Angular rate (rad/s) as a frequency in MHz, i.e. the X of (2 pi) X MHz."""
    return rate / MHZ


@dataclass(frozen=True)
class ProbePhysics:
    """Cavity half-linewidth kappa, dipole decay rate gamma and probe-atom detuning delta (rad/s)."""
    kappa: float = DEFAULT_KAPPA
    gamma: float = DEFAULT_GAMMA
    delta: float = 0.0

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ConfigurationError(f"kappa must be positive, got {self.kappa}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if not math.isfinite(self.delta):
            raise ConfigurationError(f"delta must be finite, got {self.delta}")

    def at_detuning(self, delta: float) -> 'ProbePhysics':
        return replace(self, delta=delta)


@dataclass(frozen=True)
class ScanGrid:
    """Cavity detunings of a scan: ``points`` samples over [-half_span, +half_span]."""
    half_span: float = DEFAULT_SCAN_HALF_SPAN
    points: int = DEFAULT_SCAN_POINTS

    def __post_init__(self):
        if not self.half_span > 0:
            raise ConfigurationError(f"scan half_span must be positive, got {self.half_span}")
        if self.points < MIN_SPECTRUM_POINTS:
            raise ConfigurationError(
                f"scan needs at least {MIN_SPECTRUM_POINTS} points, got {self.points}"
            )

    def detunings(self) -> np.ndarray:
        return np.linspace(-self.half_span, self.half_span, self.points)


@dataclass
class TransmissionSpectrum:
    """Transmitted power sampled along a cavity scan (peak normalised to about 1)."""
    scan_detunings: np.ndarray
    samples: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.scan_detunings = np.asarray(self.scan_detunings, dtype=float)
        self.samples = np.asarray(self.samples, dtype=float)
        if self.scan_detunings.shape != self.samples.shape or self.samples.ndim != 1:
            raise ConfigurationError("scan_detunings and samples must be 1-D arrays of equal length")
        if len(self.samples) < MIN_SPECTRUM_POINTS:
            raise ConfigurationError(
                f"spectrum needs at least {MIN_SPECTRUM_POINTS} samples, got {len(self.samples)}"
            )
        if np.any(np.diff(self.scan_detunings) <= 0):
            raise ConfigurationError("scan_detunings must be strictly increasing")
        if self.noise_sigma < 0:
            raise ConfigurationError(f"noise_sigma must be non-negative, got {self.noise_sigma}")


@dataclass(frozen=True)
class LorentzianFit:
    """Fitted A w^2/(w^2 + (delta - c)^2) + b; uncertainties are standard errors."""
    center: float
    half_width: float
    amplitude: float
    baseline: float
    center_err: float
    half_width_err: float
    amplitude_err: float
    baseline_err: float
    residual_norm: float
    iterations: int


@dataclass(frozen=True)
class BroadeningPoint:
    """Measured broadening kappa' - kappa at one probe detuning, with its standard error."""
    delta: float
    broadening: float
    uncertainty: float


@dataclass(frozen=True)
class CouplingFit:
    """G and gamma recovered from a broadening-versus-detuning series."""
    G: float
    gamma_fit: float
    G_err: float
    gamma_err: float
    residual_norm: float
    optical_depth: float
    warnings: Tuple[str, ...] = field(default_factory=tuple)


def effective_halfwidth(G: float, physics: ProbePhysics) -> float:
    """kappa' = kappa + G^2 gamma / (gamma^2 + delta^2)."""
    return physics.kappa + G ** 2 * physics.gamma / (physics.gamma ** 2 + physics.delta ** 2)


def optical_depth(G: float, physics: ProbePhysics) -> float:
    """Cooperativity-form optical depth G^2 / (kappa gamma)."""
    return G ** 2 / (physics.kappa * physics.gamma)


def lorentzian(detuning, center: float, half_width: float,
               amplitude: float = 1.0, baseline: float = 0.0):
    detuning = np.asarray(detuning, dtype=float)
    return amplitude * half_width ** 2 / (half_width ** 2 + (detuning - center) ** 2) + baseline


def synthesize_spectrum(G: float, physics: ProbePhysics, scan: Optional[ScanGrid] = None,
                        noise_sigma: float = 0.0, seed: int = 0) -> TransmissionSpectrum:
    """
    Averaged cavity-scan transmission: a unit Lorentzian of half-width kappa'
    centred on the scan, plus Gaussian noise of standard deviation noise_sigma.
    """
    if noise_sigma < 0:
        raise ConfigurationError(f"noise_sigma must be non-negative, got {noise_sigma}")
    scan = scan or ScanGrid()
    detunings = scan.detunings()
    width = effective_halfwidth(G, physics)
    samples = lorentzian(detunings, 0.0, width)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        samples = samples + rng.normal(0.0, noise_sigma, size=samples.shape)
    return TransmissionSpectrum(detunings, samples, noise_sigma)


def _noise_estimate(spectrum: TransmissionSpectrum) -> float:
    if spectrum.noise_sigma > 0:
        return spectrum.noise_sigma
    # Robust scatter of successive differences; near zero for clean data.
    diffs = np.diff(spectrum.samples)
    mad = np.median(np.abs(diffs - np.median(diffs)))
    return mad / (0.6745 * math.sqrt(2.0))


def _initial_guess(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float, float]:
    edge = max(len(y) // 10, 2)
    baseline = float(np.median(np.concatenate([y[:edge], y[-edge:]])))
    peak = int(np.argmax(y))
    amplitude = float(y[peak] - np.min(y))
    above = np.nonzero(y >= baseline + 0.5 * (y[peak] - baseline))[0]
    step = float(np.min(np.diff(x)))
    half_width = max(0.5 * float(x[above[-1]] - x[above[0]]), 0.5 * step)
    return float(x[peak]), half_width, amplitude, baseline


def _standard_errors(jac: np.ndarray, scale: float) -> np.ndarray:
    jtj = jac.T @ jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None)) * scale


def fit_lorentzian(spectrum: TransmissionSpectrum) -> LorentzianFit:
    """
    Levenberg-Marquardt fit of A w^2/(w^2 + (delta - c)^2) + b to a spectrum.

    Detunings are rescaled by the initial half-width guess before fitting.
    Standard errors come from the Jacobian at the optimum, scaled by the
    residual variance.

    Raises:
        FitDegenerateError: No peak stands above the baseline by 5 noise sigmas
        AccuracyError: No convergence within 200 evaluations (carries the last iterate)
    """
    x = spectrum.scan_detunings
    y = spectrum.samples
    noise = _noise_estimate(spectrum)
    c0, w0, a0, b0 = _initial_guess(x, y)
    if not (np.max(y) - b0) > PEAK_VISIBILITY * noise or a0 <= 0:
        raise FitDegenerateError(
            f"no visible peak: height {np.max(y) - b0:.3g} against noise {noise:.3g}"
        )

    scale = w0
    xs = x / scale

    def residuals(params):
        c, w, a, b = params
        return a * w ** 2 / (w ** 2 + (xs - c) ** 2) + b - y

    def jacobian(params):
        c, w, a, b = params
        d = xs - c
        denom = w ** 2 + d ** 2
        shape = w ** 2 / denom
        jac = np.empty((len(xs), 4))
        jac[:, 0] = a * 2.0 * w ** 2 * d / denom ** 2
        jac[:, 1] = a * 2.0 * w * d ** 2 / denom ** 2
        jac[:, 2] = shape
        jac[:, 3] = 1.0
        return jac

    start = np.array([c0 / scale, 1.0, a0, b0])
    result = least_squares(
        residuals, start, jac=jacobian, method='lm',
        xtol=LORENTZIAN_XTOL, ftol=1e-15, gtol=1e-15,
        max_nfev=LORENTZIAN_MAX_NFEV,
    )
    c, w, a, b = result.x
    w = abs(w)
    if result.status == 0:
        last = LorentzianFit(c * scale, w * scale, a, b, math.nan, math.nan, math.nan, math.nan,
                             float(np.linalg.norm(result.fun)), int(result.nfev))
        raise AccuracyError(
            f"Lorentzian fit did not converge in {LORENTZIAN_MAX_NFEV} evaluations",
            best_estimate=last,
        )

    dof = max(len(y) - 4, 1)
    rss = float(np.sum(result.fun ** 2))
    sigma_hat = math.sqrt(rss / dof)
    errors = _standard_errors(result.jac, sigma_hat)
    fit = LorentzianFit(
        center=c * scale,
        half_width=w * scale,
        amplitude=a,
        baseline=b,
        center_err=errors[0] * scale,
        half_width_err=errors[1] * scale,
        amplitude_err=errors[2],
        baseline_err=errors[3],
        residual_norm=math.sqrt(rss),
        iterations=int(result.nfev),
    )
    log_debug("Lorentzian fit", half_width_mhz=to_mhz(fit.half_width),
              half_width_err_mhz=to_mhz(fit.half_width_err), nfev=result.nfev)
    return fit


def _gamma_guess(deltas: np.ndarray, values: np.ndarray, fallback: float) -> float:
    """Half width at half maximum of the broadening series."""
    peak = float(np.max(values))
    if not peak > 0:
        return fallback
    ratios = values / peak
    usable = (ratios > 0.02) & (ratios < 0.98)
    if not np.any(usable):
        return fallback
    # b = b0 gamma^2 / (gamma^2 + delta^2)  =>  gamma^2 = delta^2 b / (b0 - b)
    estimates = np.abs(deltas[usable]) * np.sqrt(ratios[usable] / (1.0 - ratios[usable]))
    return float(np.median(estimates))


def fit_coupling(series: Sequence[BroadeningPoint], physics: ProbePhysics) -> CouplingFit:
    """
    Weighted least-squares fit of G^2 gamma / (gamma^2 + delta^2) to a series of
    measured broadenings, with G and gamma free and kappa fixed.

    Weights are normalised by their median before fitting, so a common rescaling
    of all uncertainties leaves the estimates unchanged.

    Raises:
        IllConditionedError: Fewer than 4 distinct detunings, a series that does
            not reach delta <= -gamma and delta >= +gamma, or a singular fit
        ConfigurationError: Non-positive uncertainties
    """
    if not series:
        raise IllConditionedError("empty broadening series")
    deltas = np.array([p.delta for p in series], dtype=float)
    values = np.array([p.broadening for p in series], dtype=float)
    sigmas = np.array([p.uncertainty for p in series], dtype=float)
    if np.any(~(sigmas > 0)):
        raise ConfigurationError("every broadening uncertainty must be positive")

    distinct = np.unique(deltas)
    if len(distinct) < MIN_SERIES_DETUNINGS:
        raise IllConditionedError(
            f"need at least {MIN_SERIES_DETUNINGS} distinct detunings, got {len(distinct)}"
        )
    if deltas.min() > -physics.gamma or deltas.max() < physics.gamma:
        raise IllConditionedError(
            f"detunings span 2pi x [{to_mhz(deltas.min()):.3g}, {to_mhz(deltas.max()):.3g}] MHz, "
            f"not covering +-gamma = 2pi x {to_mhz(physics.gamma):.3g} MHz"
        )

    warnings: List[str] = []
    negative = values < -NEGATIVE_BROADENING_SIGMAS * sigmas
    if np.any(negative):
        message = (f"{int(np.sum(negative))} broadening(s) negative by more than "
                   f"{NEGATIVE_BROADENING_SIGMAS:g} sigma")
        logging.warning(f"[FIT] {message}")
        warnings.append(message)

    unit = physics.gamma
    d = deltas / unit
    yv = values / unit
    weights_scale = float(np.median(sigmas))
    s = sigmas / weights_scale / unit

    gamma0 = _gamma_guess(deltas, values, physics.gamma) / unit
    g0 = math.sqrt(max(float(np.max(yv)), 1e-12) * gamma0)

    def residuals(params):
        g, gam = params
        return (g ** 2 * gam / (gam ** 2 + d ** 2) - yv) / s

    def jacobian(params):
        g, gam = params
        denom = gam ** 2 + d ** 2
        jac = np.empty((len(d), 2))
        jac[:, 0] = 2.0 * g * gam / denom / s
        jac[:, 1] = g ** 2 * (d ** 2 - gam ** 2) / denom ** 2 / s
        return jac

    result = least_squares(
        residuals, np.array([g0, gamma0]), jac=jacobian, method='lm',
        xtol=1e-14, ftol=1e-14, gtol=1e-15, max_nfev=2000,
    )
    g_fit, gamma_fit = abs(result.x[0]), abs(result.x[1])
    jtj = result.jac.T @ result.jac
    if not np.all(np.isfinite(jtj)) or np.linalg.cond(jtj) > MAX_CONDITION_NUMBER:
        raise IllConditionedError("broadening series does not constrain G and gamma")
    if result.status == 0:
        raise AccuracyError("coupling fit did not converge",
                            best_estimate=(g_fit * unit, gamma_fit * unit))

    # Uncertainties are absolute standard errors: the residuals were divided
    # by sigma / weights_scale, so the covariance is weights_scale^2 (J^T J)^-1.
    errors = _standard_errors(result.jac, weights_scale * unit)
    G = g_fit * unit
    fit = CouplingFit(
        G=G,
        gamma_fit=gamma_fit * unit,
        G_err=float(errors[0]),
        gamma_err=float(errors[1]),
        residual_norm=float(np.linalg.norm(result.fun)),
        optical_depth=optical_depth(G, physics),
        warnings=tuple(warnings),
    )
    logging.info(f"[FIT] G = 2pi x {to_mhz(fit.G):.4f} +/- {to_mhz(fit.G_err):.4f} MHz, "
                 f"gamma = 2pi x {to_mhz(fit.gamma_fit):.4f} +/- {to_mhz(fit.gamma_err):.4f} MHz")
    return fit


def broadening_series(G: float, physics: ProbePhysics, detunings: Sequence[float],
                      uncertainty: float) -> List[BroadeningPoint]:
    """Noiseless kappa' - kappa at each detuning, tagged with a common uncertainty."""
    return [
        BroadeningPoint(float(delta),
                        effective_halfwidth(G, physics.at_detuning(float(delta))) - physics.kappa,
                        uncertainty)
        for delta in detunings
    ]


def measure_broadening(G: float, physics: ProbePhysics, scan: ScanGrid,
                       noise_sigma: float, seed: int) -> BroadeningPoint:
    """Synthesise one scan at physics.delta and extract kappa' - kappa by a Lorentzian fit."""
    spectrum = synthesize_spectrum(G, physics, scan, noise_sigma, seed)
    fit = fit_lorentzian(spectrum)
    # Noiseless spectra fit exactly; the floor keeps their weights finite.
    uncertainty = max(fit.half_width_err, 1e-9 * fit.half_width)
    return BroadeningPoint(physics.delta, fit.half_width - physics.kappa, uncertainty)


def measure_broadening_series(G: float, physics: ProbePhysics, detunings: Sequence[float],
                              scan: ScanGrid, noise_sigma: float,
                              seeds: Sequence[int]) -> List[BroadeningPoint]:
    """End-to-end measurement: one synthetic spectrum and Lorentzian fit per detuning."""
    return [
        measure_broadening(G, physics.at_detuning(float(delta)), scan, noise_sigma, int(seed))
        for delta, seed in zip(detunings, seeds)
    ]
