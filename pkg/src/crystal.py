"""
Uniform-density spheroidal ion Coulomb crystals.

Coordinates are cavity-frame: the cavity axis is the z axis and the crystal
centre sits at (offset_x, offset_y, 0). The crystal axis is always parallel
to the cavity axis.
"""
import math
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from error_handler import ConfigurationError

ArrayLike = Union[float, np.ndarray]

# Points drawn per generator call when sampling large counts.
SAMPLE_BATCH_SIZE = 250_000


@dataclass(frozen=True)
class CrystalSpec:
    """Spheroid with polar half-length L, equatorial radius R and density rho (ions/m^3)."""
    half_length: float
    radius: float
    density: float
    offset_x: float = 0.0
    offset_y: float = 0.0

    def __post_init__(self):
        for name in ('half_length', 'radius', 'density'):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"crystal {name} must be positive, got {value}")
        for name in ('offset_x', 'offset_y'):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"crystal {name} must be finite")


def contains(spec: CrystalSpec, x: ArrayLike, y: ArrayLike, z: ArrayLike) -> ArrayLike:
    """True where the point lies inside the crystal (boundary inclusive)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    dx = (x - spec.offset_x) / spec.radius
    dy = (y - spec.offset_y) / spec.radius
    dz = z / spec.half_length
    return dx ** 2 + dy ** 2 + dz ** 2 <= 1.0


def volume(spec: CrystalSpec) -> float:
    """4 pi R^2 L / 3."""
    return 4.0 * math.pi * spec.radius ** 2 * spec.half_length / 3.0


def ion_count(spec: CrystalSpec) -> float:
    """Number of ions in the continuum model, rho * V."""
    return spec.density * volume(spec)


def iter_uniform_batches(spec: CrystalSpec, rng_seed: int, count: int,
                         batch_size: int = SAMPLE_BATCH_SIZE) -> Iterator[np.ndarray]:
    """
    Yield arrays of shape (k, 3) of points uniform over the crystal, count in total.

    Directions come from normalised Gaussian triples and radii from the cube
    root of a uniform variate, which samples the unit ball uniformly; the
    ball is then stretched to (R, R, L) and moved to the crystal centre.
    """
    if count < 1:
        raise ConfigurationError(f"sample count must be at least 1, got {count}")
    rng = np.random.default_rng(rng_seed)
    scale = np.array([spec.radius, spec.radius, spec.half_length])
    shift = np.array([spec.offset_x, spec.offset_y, 0.0])
    remaining = count
    while remaining > 0:
        k = min(batch_size, remaining)
        direction = rng.standard_normal((k, 3))
        norm = np.linalg.norm(direction, axis=1)
        # A zero triple has probability zero; map it to the centre anyway.
        norm[norm == 0.0] = np.inf
        radius = rng.random(k) ** (1.0 / 3.0)
        points = direction * (radius / norm)[:, None]
        yield points * scale + shift
        remaining -= k


def sample_uniform(spec: CrystalSpec, rng_seed: int, count: int) -> np.ndarray:
    """Points i.i.d. uniform over the crystal, shape (count, 3); deterministic per seed."""
    return np.concatenate(list(iter_uniform_batches(spec, rng_seed, count)), axis=0)
