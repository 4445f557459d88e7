"""
Parameter sweeps over crystal displacement, crystal radius and probe detuning.

Each sweep evaluates its grid points independently on a SweepJobManager and
emits records in grid order. A point that fails keeps its place in the output
with the error attached; the rest of the sweep still runs.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from beam_optics import BeamGeometry, ModeIndex
from config import RunConfig
from coupling import (
    CouplingConfig, CouplingResult, calibrate_single_ion_g, compute_coupling,
    envelope_limit, normalized_value,
)
from crystal import CrystalSpec
from error_handler import (
    CavicrysError, RequestValidationError, setup_debug_logging, log_debug,
    log_function_entry, log_function_exit,
)
from job_manager import SweepJobManager
from spectroscopy import (
    BroadeningPoint, CouplingFit, ProbePhysics, ScanGrid, broadening_series,
    fit_coupling, measure_broadening, to_mhz,
)

setup_debug_logging()

# Nominal relative uncertainty attached to noiseless (analytic) broadenings.
ANALYTIC_REL_UNCERTAINTY = 1e-6

TEM00 = ModeIndex(0, 0)


class SweepKind(Enum):
    DISPLACEMENT = "displacement"
    RADIUS = "radius"
    DETUNING = "detuning"


class SweepAxis(Enum):
    X = "x"
    Y = "y"


class RadiusNormalization(Enum):
    """Reference for normalised radius sweeps"""
    LARGEST = "largest"    # TEM00 at the largest grid radius
    ENVELOPE = "envelope"  # analytic TEM00 value for an infinitely wide crystal


@dataclass(frozen=True)
class SweepRequest:
    """
    One sweep. Grid units follow the kind: meters for displacement and radius
    sweeps, rad/s for detuning sweeps.
    """
    kind: SweepKind
    geometry: BeamGeometry
    base_crystal: CrystalSpec
    modes: Tuple[ModeIndex, ...]
    grid: Tuple[float, ...]
    coupling_cfg: CouplingConfig = field(default_factory=CouplingConfig)
    physics: Optional[ProbePhysics] = None
    normalize: bool = True
    axis: SweepAxis = SweepAxis.X
    radius_normalization: RadiusNormalization = RadiusNormalization.LARGEST
    end_to_end: bool = False
    noise_sigma: float = 0.02
    scan: ScanGrid = field(default_factory=ScanGrid)
    seed: int = 0

    def validate(self):
        """
        Raises:
            RequestValidationError: Empty, non-finite or non-monotone grid,
                no modes, missing physics for a detuning sweep, bad seed
        """
        if not self.modes:
            raise RequestValidationError("sweep needs at least one mode")
        if len(self.grid) == 0:
            raise RequestValidationError(f"{self.kind.value} sweep grid is empty")
        grid = np.asarray(self.grid, dtype=float)
        if not np.all(np.isfinite(grid)):
            raise RequestValidationError(f"{self.kind.value} sweep grid has non-finite values")
        steps = np.diff(grid)
        if len(steps) and not (np.all(steps > 0) or np.all(steps < 0)):
            raise RequestValidationError(f"{self.kind.value} sweep grid must be strictly monotone")
        if self.kind == SweepKind.RADIUS and np.any(grid <= 0):
            raise RequestValidationError("radius sweep grid must be positive")
        if self.kind == SweepKind.DETUNING and self.physics is None:
            raise RequestValidationError("detuning sweep needs probe physics (kappa, gamma)")
        if self.noise_sigma < 0:
            raise RequestValidationError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if self.seed < 0:
            raise RequestValidationError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True)
class SweepRecord:
    """G_mn^2 at one grid value; on failure the numbers are NaN and ``error`` is set."""
    sweep_value: float
    mode: ModeIndex
    raw_G_squared: float
    normalized_value: Optional[float]
    est_rel_error: float
    error: Optional[str] = None

    @property
    def G_rate(self) -> float:
        return math.sqrt(self.raw_G_squared) if self.raw_G_squared >= 0 else math.nan


@dataclass(frozen=True)
class DetuningPoint:
    """Broadening kappa' - kappa for one mode at one probe detuning."""
    mode: ModeIndex
    delta: float
    broadening: float
    uncertainty: float
    error: Optional[str] = None


@dataclass(frozen=True)
class ModeFit:
    """Model coupling of one mode and the (G, gamma) recovered from its broadening series."""
    mode: ModeIndex
    model_G: float
    fit: Optional[CouplingFit]
    error: Optional[str] = None
    error_type: Optional[str] = None


@dataclass(frozen=True)
class DetuningSweepResult:
    points: List[DetuningPoint]
    fits: List[ModeFit]


SweepOutcome = Union[List[SweepRecord], DetuningSweepResult]


def point_seed(seed: int, mode: ModeIndex, value: float) -> int:
    """
    Seed for the point (mode, value) of a sweep with request seed ``seed``.

    Derived from the grid value itself rather than its index, so a point
    draws the same noise whichever grid it belongs to.
    """
    bits = int(np.array(float(value), dtype=np.float64).view(np.uint64))
    sequence = np.random.SeedSequence([int(seed), mode.m, mode.n, bits])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _failed_record(value: float, mode: ModeIndex, error: str) -> SweepRecord:
    return SweepRecord(value, mode, math.nan, None, math.nan, error=error)


def _coupling_records(req: SweepRequest, items: Sequence[Tuple[float, ModeIndex, CrystalSpec]],
                      reference: Optional[CouplingResult],
                      manager: Optional[SweepJobManager]) -> List[SweepRecord]:
    manager = manager or SweepJobManager()

    def evaluate(item):
        _, mode, crystal = item
        return compute_coupling(req.geometry, mode, crystal, req.coupling_cfg)

    results = manager.run(req.kind.value, evaluate, list(items))
    records = []
    for result in results:
        value, mode, _ = result.item
        if not result.success:
            records.append(_failed_record(value, mode, f"{result.error_type}: {result.error}"))
            continue
        coupling: CouplingResult = result.value
        norm = normalized_value(coupling, reference) if reference is not None else None
        records.append(SweepRecord(value, mode, coupling.g_squared, norm, coupling.est_rel_error))
    return records


def run_displacement_sweep(req: SweepRequest,
                           manager: Optional[SweepJobManager] = None) -> List[SweepRecord]:
    """
    G_mn^2 with the crystal moved along the request axis to each grid offset.

    Normalised records are divided by G_00^2 of the centred crystal,
    computed once with the same coupling configuration.
    """
    log_function_entry("run_displacement_sweep", axis=req.axis.value, points=len(req.grid))
    if req.kind != SweepKind.DISPLACEMENT:
        raise RequestValidationError(f"expected a displacement sweep, got {req.kind.value}")
    req.validate()

    reference = None
    if req.normalize:
        centred = replace(req.base_crystal, offset_x=0.0, offset_y=0.0)
        reference = compute_coupling(req.geometry, TEM00, centred, req.coupling_cfg)
        log_debug("Displacement reference", g_squared=reference.g_squared)

    items = []
    for value in req.grid:
        if req.axis == SweepAxis.X:
            crystal = replace(req.base_crystal, offset_x=float(value), offset_y=0.0)
        else:
            crystal = replace(req.base_crystal, offset_x=0.0, offset_y=float(value))
        items.extend((float(value), mode, crystal) for mode in req.modes)

    logging.info(f"[SWEEP displacement] {len(req.grid)} offsets along {req.axis.value}, "
                 f"modes {', '.join(m.label for m in req.modes)}")
    records = _coupling_records(req, items, reference, manager)
    log_function_exit("run_displacement_sweep", result=f"{len(records)} records")
    return records


def radius_reference(req: SweepRequest) -> CouplingResult:
    """TEM00 value the radius sweep is normalised to."""
    crystal = replace(req.base_crystal, offset_x=0.0, offset_y=0.0)
    if req.radius_normalization == RadiusNormalization.ENVELOPE:
        g_squared = envelope_limit(req.geometry, TEM00, crystal.half_length, crystal.density,
                                   req.coupling_cfg.single_ion_g)
        return CouplingResult(g_squared, math.sqrt(g_squared), 0.0,
                              req.coupling_cfg.method, 0)
    largest = replace(crystal, radius=float(max(req.grid)))
    return compute_coupling(req.geometry, TEM00, largest, req.coupling_cfg)


def run_radius_sweep(req: SweepRequest,
                     manager: Optional[SweepJobManager] = None) -> List[SweepRecord]:
    """
    G_mn^2 for crystals of each grid radius at fixed half-length and density.

    The crystal is always centred on the cavity axis; offsets in the base
    crystal are ignored.
    """
    log_function_entry("run_radius_sweep", points=len(req.grid))
    if req.kind != SweepKind.RADIUS:
        raise RequestValidationError(f"expected a radius sweep, got {req.kind.value}")
    req.validate()

    base = req.base_crystal
    if base.offset_x != 0.0 or base.offset_y != 0.0:
        logging.warning("[SWEEP radius] Ignoring crystal offsets; radius sweeps are on-axis")
        base = replace(base, offset_x=0.0, offset_y=0.0)

    reference = radius_reference(req) if req.normalize else None
    items = [
        (float(value), mode, replace(base, radius=float(value)))
        for value in req.grid
        for mode in req.modes
    ]
    logging.info(f"[SWEEP radius] {len(req.grid)} radii, "
                 f"modes {', '.join(m.label for m in req.modes)}")
    records = _coupling_records(req, items, reference, manager)
    log_function_exit("run_radius_sweep", result=f"{len(records)} records")
    return records


def _measured_points(req: SweepRequest, mode: ModeIndex, G: float,
                     manager: SweepJobManager) -> List[DetuningPoint]:
    if not req.end_to_end:
        peak = G ** 2 / req.physics.gamma
        series = broadening_series(G, req.physics, req.grid,
                                   max(ANALYTIC_REL_UNCERTAINTY * peak, 1e-300))
        return [DetuningPoint(mode, p.delta, p.broadening, p.uncertainty) for p in series]

    def measure(delta):
        return measure_broadening(G, req.physics.at_detuning(delta), req.scan,
                                  req.noise_sigma, point_seed(req.seed, mode, delta))

    results = manager.run(f"detuning TEM{mode.label}", measure, [float(d) for d in req.grid])
    points = []
    for result in results:
        if result.success:
            p: BroadeningPoint = result.value
            points.append(DetuningPoint(mode, p.delta, p.broadening, p.uncertainty))
        else:
            points.append(DetuningPoint(mode, result.item, math.nan, math.nan,
                                        error=f"{result.error_type}: {result.error}"))
    return points


def run_detuning_sweep(req: SweepRequest,
                       manager: Optional[SweepJobManager] = None) -> DetuningSweepResult:
    """
    Broadening kappa' - kappa against probe detuning for each mode, then a
    fit of (G, gamma) per mode.

    G is computed once per mode from the crystal. In analytic mode the
    broadenings come straight from the half-width formula; in end-to-end mode
    each point is a synthetic noisy cavity scan reduced by a Lorentzian fit.
    Fit failures are reported per mode.
    """
    log_function_entry("run_detuning_sweep", points=len(req.grid), end_to_end=req.end_to_end)
    if req.kind != SweepKind.DETUNING:
        raise RequestValidationError(f"expected a detuning sweep, got {req.kind.value}")
    req.validate()
    manager = manager or SweepJobManager()

    points: List[DetuningPoint] = []
    fits: List[ModeFit] = []
    for mode in req.modes:
        coupling = compute_coupling(req.geometry, mode, req.base_crystal, req.coupling_cfg)
        G = coupling.g_rate
        logging.info(f"[SWEEP detuning] TEM{mode.label}: model G = 2pi x {to_mhz(G):.4f} MHz, "
                     f"{len(req.grid)} detunings ({'end-to-end' if req.end_to_end else 'analytic'})")
        mode_points = _measured_points(req, mode, G, manager)
        points.extend(mode_points)

        usable = [BroadeningPoint(p.delta, p.broadening, p.uncertainty)
                  for p in mode_points if p.error is None]
        try:
            fit = fit_coupling(usable, req.physics)
            fits.append(ModeFit(mode, G, fit))
        except CavicrysError as e:
            logging.warning(f"[SWEEP detuning] TEM{mode.label} coupling fit failed: {e}")
            fits.append(ModeFit(mode, G, None, error=str(e), error_type=type(e).__name__))

    log_function_exit("run_detuning_sweep", result=f"{len(points)} points, {len(fits)} fits")
    return DetuningSweepResult(points, fits)


def run_sweep(req: SweepRequest, manager: Optional[SweepJobManager] = None) -> SweepOutcome:
    """Dispatch on the request kind."""
    runners = {
        SweepKind.DISPLACEMENT: run_displacement_sweep,
        SweepKind.RADIUS: run_radius_sweep,
        SweepKind.DETUNING: run_detuning_sweep,
    }
    return runners[req.kind](req, manager)


def calibrated_coupling_config(cfg: RunConfig) -> CouplingConfig:
    """
    The configured coupling settings, with g solved for when a target rate is
    given (G of ``cfg.target_mode`` in the configured crystal equals the target).
    """
    if cfg.target_rate is None:
        return cfg.coupling
    g = calibrate_single_ion_g(cfg.beam, cfg.target_mode, cfg.crystal, cfg.target_rate,
                               cfg.coupling)
    return replace(cfg.coupling, single_ion_g=g)


def request_from_config(cfg: RunConfig, coupling_cfg: Optional[CouplingConfig] = None,
                        end_to_end: Optional[bool] = None) -> SweepRequest:
    """Build a SweepRequest from a parsed run configuration."""
    sweep = cfg.sweep
    kind = SweepKind(sweep.kind)
    return SweepRequest(
        kind=kind,
        geometry=cfg.beam,
        base_crystal=cfg.crystal,
        modes=tuple(sweep.modes),
        grid=tuple(sweep.grid),
        coupling_cfg=coupling_cfg or calibrated_coupling_config(cfg),
        physics=cfg.physics if kind == SweepKind.DETUNING else None,
        normalize=sweep.normalize,
        axis=SweepAxis(sweep.axis),
        radius_normalization=RadiusNormalization(sweep.normalization),
        end_to_end=sweep.end_to_end if end_to_end is None else end_to_end,
        noise_sigma=sweep.noise_sigma,
        scan=sweep.scan,
        seed=sweep.seed,
    )
