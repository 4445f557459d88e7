"""
Hermite-Gaussian mode geometry of the cavity field.

All lengths are SI meters. The functions accept scalars or numpy arrays for
the coordinate arguments and broadcast like numpy ufuncs.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from error_handler import ConfigurationError, UnsupportedOrderError

ArrayLike = Union[float, np.ndarray]

# Highest Hermite order the recurrence is validated for.
MAX_HERMITE_ORDER = 20

# A caller-supplied Rayleigh range must agree with pi*w0^2/lambda this well.
RAYLEIGH_RANGE_TOLERANCE = 0.01


@dataclass(frozen=True)
class BeamGeometry:
    """Waist geometry of the cavity TEM modes.

    The Rayleigh range and wavenumber are derived from wavelength and waist.
    Passing ``rayleigh_range`` explicitly only checks it against the derived
    value (within 1%); the stored value is always the derived one.
    """
    wavelength: float
    waist: float
    rayleigh_range: Optional[float] = None
    wavenumber: float = field(init=False)

    def __post_init__(self):
        if not (self.wavelength > 0 and math.isfinite(self.wavelength)):
            raise ConfigurationError(f"wavelength must be positive, got {self.wavelength}")
        if not (self.waist > 0 and math.isfinite(self.waist)):
            raise ConfigurationError(f"waist must be positive, got {self.waist}")

        derived = math.pi * self.waist ** 2 / self.wavelength
        if self.rayleigh_range is not None:
            if abs(self.rayleigh_range - derived) > RAYLEIGH_RANGE_TOLERANCE * derived:
                raise ConfigurationError(
                    f"rayleigh_range {self.rayleigh_range:.6g} m disagrees with "
                    f"pi*w0^2/lambda = {derived:.6g} m by more than 1%"
                )
        object.__setattr__(self, 'rayleigh_range', derived)
        object.__setattr__(self, 'wavenumber', 2.0 * math.pi / self.wavelength)


@dataclass(frozen=True, order=True)
class ModeIndex:
    """Transverse order (m, n) of a TEM_mn mode: m nodal lines along x, n along y."""
    m: int
    n: int

    def __post_init__(self):
        for name, value in (('m', self.m), ('n', self.n)):
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
                raise ConfigurationError(f"mode order {name} must be a non-negative integer, got {value!r}")

    @property
    def gouy_order(self) -> int:
        return self.m + self.n + 1

    @property
    def label(self) -> str:
        return f"{self.m}{self.n}"

    @classmethod
    def parse(cls, text: str) -> 'ModeIndex':
        """Parse a two-digit label such as ``"10"`` (TEM10)."""
        text = text.strip()
        if len(text) != 2 or not text.isdigit():
            raise ConfigurationError(f"mode must be two digits such as 00 or 10, got '{text}'")
        return cls(int(text[0]), int(text[1]))

    def swapped(self) -> 'ModeIndex':
        return ModeIndex(self.n, self.m)


def _check_order(l: int):
    if l < 0:
        raise UnsupportedOrderError(f"Hermite order must be non-negative, got {l}")
    if l > MAX_HERMITE_ORDER:
        raise UnsupportedOrderError(
            f"Hermite order {l} exceeds the supported cap of {MAX_HERMITE_ORDER}"
        )


def waist_at(geom: BeamGeometry, z: ArrayLike) -> ArrayLike:
    """Beam radius w(z) = w0*sqrt(1 + z^2/z_R^2)."""
    z = np.asarray(z, dtype=float)
    return geom.waist * np.sqrt(1.0 + (z / geom.rayleigh_range) ** 2)


def curvature_at(geom: BeamGeometry, z: ArrayLike) -> ArrayLike:
    """Wavefront curvature 1/r(z), written as z/(z^2 + z_R^2) so it is finite at z=0."""
    z = np.asarray(z, dtype=float)
    return z / (z ** 2 + geom.rayleigh_range ** 2)


def hermite_poly(l: int, t: ArrayLike) -> ArrayLike:
    """Physicists' Hermite polynomial H_l(t) by forward recurrence."""
    _check_order(l)
    t = np.asarray(t, dtype=float)
    h_prev = np.ones_like(t)
    if l == 0:
        return h_prev
    h = 2.0 * t
    for order in range(1, l):
        # H_{l+1} = 2t H_l - 2l H_{l-1}
        h_prev, h = h, 2.0 * t * h - 2.0 * order * h_prev
    return h


def hermite_norm(l: int) -> float:
    """1/sqrt(2^l l!): gives every order the transverse power of l = 0."""
    _check_order(l)
    return 1.0 / math.sqrt(2.0 ** l * math.factorial(l))


def mode_amplitude(geom: BeamGeometry, l: int, u: ArrayLike, z: ArrayLike) -> ArrayLike:
    """
    One-dimensional Hermite-Gaussian mode function.

        sqrt(w0/w(z)) * N_l * H_l(u*sqrt(2)/w(z)) * exp(-u^2/w(z)^2)

    with N_l = 1/sqrt(2^l l!). N_0 = 1, so the fundamental mode is unity at
    the waist centre; the normalisation makes all orders carry the same power
    as the fundamental, which is what lets large crystals couple equally to
    every transverse mode.

    Args:
        geom: Beam geometry
        l: Hermite order
        u: Transverse coordinate relative to the mode axis (m)
        z: Axial coordinate relative to the waist (m)
    """
    _check_order(l)
    u = np.asarray(u, dtype=float)
    w = waist_at(geom, z)
    ratio = u / w
    return (np.sqrt(geom.waist / w) * hermite_norm(l)
            * hermite_poly(l, math.sqrt(2.0) * ratio) * np.exp(-ratio ** 2))


def transverse_power(geom: BeamGeometry, l: int) -> float:
    """Closed form of the integral of mode_amplitude^2 over u; independent of z and l."""
    _check_order(l)
    return geom.waist * math.sqrt(math.pi / 2.0)


def standing_wave_phase(geom: BeamGeometry, mode: ModeIndex,
                        x: ArrayLike, y: ArrayLike, z: ArrayLike) -> ArrayLike:
    """
    Phase of the standing wave: k z - (m+n+1) atan(z/z_R) + k (x^2+y^2)/(2 r(z)).

    x and y are measured from the mode axis.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    k = geom.wavenumber
    return (k * z
            - mode.gouy_order * np.arctan(z / geom.rayleigh_range)
            + 0.5 * k * (x ** 2 + y ** 2) * curvature_at(geom, z))


def standing_wave_phase_slope(geom: BeamGeometry, mode: ModeIndex,
                              x: ArrayLike, y: ArrayLike, z: ArrayLike) -> ArrayLike:
    """Derivative of standing_wave_phase with respect to z."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    k = geom.wavenumber
    zr2 = geom.rayleigh_range ** 2
    denom = z ** 2 + zr2
    return (k
            - mode.gouy_order * geom.rayleigh_range / denom
            + 0.5 * k * (x ** 2 + y ** 2) * (zr2 - z ** 2) / denom ** 2)
