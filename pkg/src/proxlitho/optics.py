"""Scalar near-field propagation across the proximity gap.

The propagator is the exact (non-paraxial) angular-spectrum method on a
zero-padded grid. Broadband exposure is an incoherent, weighted sum of
single-wavelength intensities. A source with a finite collimation angle
adds incoherent tilts, each of which shifts the image by gap * tan(tilt);
for a Gaussian angular distribution their sum is the normal-incidence
image convolved with a Gaussian of width gap * tan(angle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .layout import TransmissionGrid

__all__ = [
    "DEFAULT_BAND",
    "SampledField",
    "SourceSpec",
    "AerialImage",
    "illuminate",
    "transfer_function",
    "max_significant_frequency",
    "padded_size",
    "band_limit",
    "propagate",
    "aerial_image",
    "edge_spread_width",
    "rayleigh_sommerfeld",
]

DEFAULT_BAND = (0.350, 0.450)
SPECTRAL_CUTOFF = 1e-4
MAX_GRID = 8192
BLUR_TRUNCATE = 4.0


@dataclass(frozen=True)
class SampledField:
    amplitude: np.ndarray
    pitch: float
    wavelength: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        a = np.asarray(self.amplitude, dtype=complex)
        if a.ndim != 2:
            raise ValueError("field must be 2-D")
        if a.shape[0] % 2 or a.shape[1] % 2:
            raise ValueError(f"field dimensions must be even, got {a.shape}")
        if not (self.pitch > 0 and self.wavelength > 0):
            raise ValueError("pitch and wavelength must be positive")
        a.flags.writeable = False
        object.__setattr__(self, "amplitude", a)

    @property
    def intensity(self) -> np.ndarray:
        return self.amplitude.real**2 + self.amplitude.imag**2

    def power(self) -> float:
        return float(self.intensity.sum() * self.pitch**2)


@dataclass(frozen=True)
class SourceSpec:
    """Incoherent line spectrum with total irradiance in mW/cm^2."""

    wavelengths: tuple[float, ...]
    weights: tuple[float, ...]
    power: float = 10.0
    band: tuple[float, float] = DEFAULT_BAND
    half_angle: float = 0.0  # rms collimation angle, degrees

    def __post_init__(self):
        wl = tuple(float(w) for w in self.wavelengths)
        wt = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "weights", wt)
        if not wl or len(wl) != len(wt):
            raise ValueError("need one weight per wavelength")
        if any(w < 0 for w in wt):
            raise ValueError("weights must be non-negative")
        if abs(math.fsum(wt) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {math.fsum(wt)!r}")
        lo, hi = self.band
        if any(not (lo - 1e-12 <= w <= hi + 1e-12) for w in wl):
            raise ValueError(f"wavelengths must lie in the band {lo}-{hi} um")
        if self.power < 0:
            raise ValueError("source power must be non-negative")
        if not 0.0 <= self.half_angle < 45.0:
            raise ValueError("collimation angle must lie in [0, 45) degrees")

    def blur_width(self, gap: float) -> float:
        """Standard deviation (um) of the collimation blur at ``gap``."""
        return gap * math.tan(math.radians(self.half_angle))

    @classmethod
    def uniform(cls, band: tuple[float, float] = DEFAULT_BAND, points: int = 5, power: float = 10.0,
                half_angle: float = 0.0) -> "SourceSpec":
        """``points`` equally weighted lines spanning ``band`` end to end."""
        if points < 1:
            raise ValueError("need at least one spectral point")
        if points == 1:
            wl = (0.5 * (band[0] + band[1]),)
        else:
            wl = tuple(np.linspace(band[0], band[1], points))
        w = [1.0 / points] * points
        w[-1] = 1.0 - math.fsum(w[:-1])
        return cls(wl, tuple(w), power, tuple(band), half_angle)

    @classmethod
    def monochromatic(cls, wavelength: float, power: float = 10.0) -> "SourceSpec":
        return cls((wavelength,), (1.0,), power, (wavelength, wavelength))


@dataclass(frozen=True)
class AerialImage:
    intensity: np.ndarray
    pitch: float
    gap: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.intensity, dtype=float)
        if np.any(v < 0):
            raise ValueError("intensity must be non-negative")
        if self.gap < 0:
            raise ValueError("gap must be non-negative")
        v.flags.writeable = False
        object.__setattr__(self, "intensity", v)


def illuminate(mask: TransmissionGrid, wavelength: float, band: tuple[float, float] | None = DEFAULT_BAND) -> SampledField:
    """Unit plane wave at normal incidence times the mask transmission."""
    if band is not None and not (band[0] - 1e-12 <= wavelength <= band[1] + 1e-12):
        raise ValueError(f"wavelength {wavelength} um outside source band {band}")
    return SampledField(mask.values.astype(complex), mask.pitch, wavelength, mask.origin)


def _frequencies(shape, pitch):
    fy = sfft.fftfreq(shape[0], d=pitch)
    fx = sfft.fftfreq(shape[1], d=pitch)
    return fx[None, :] ** 2 + fy[:, None] ** 2


def transfer_function(shape: tuple[int, int], pitch: float, wavelength: float, gap: float) -> np.ndarray:
    """Angular-spectrum transfer function in FFT frequency order.

    Propagating components get the phase exp(i 2 pi z kz); evanescent ones
    decay as exp(-2 pi z |kz|), where kz = sqrt(1/lambda^2 - f^2).
    """
    f2 = _frequencies(shape, pitch)
    np.subtract(1.0 / wavelength**2, f2, out=f2)
    kz = f2.astype(complex)
    del f2
    np.sqrt(kz, out=kz)
    kz *= 2j * np.pi * gap
    return np.exp(kz, out=kz)


def max_significant_frequency(amplitude: np.ndarray, pitch: float, cutoff: float = SPECTRAL_CUTOFF) -> float:
    """Largest radial frequency whose DFT bin holds >= ``cutoff`` of the total power."""
    spec = np.abs(sfft.fft2(amplitude)) ** 2
    total = spec.sum()
    if total == 0:
        return 0.0
    f2 = _frequencies(amplitude.shape, pitch)
    return float(np.sqrt(f2[spec >= cutoff * total].max()))


def band_limit(shape: tuple[int, int], pitch: float, wavelength: float, gap: float,
               window: tuple[int, int]) -> np.ndarray:
    """Spectral weight that suppresses wrap-around.

    A component (fx, fy) walks gap * lambda * f / cos(theta) sideways.
    Components walking further than the free room (padded size - window)
    along either axis would re-enter the cropped window through the
    periodic boundary. The weight is 1 up to half the room and rolls off
    with a raised cosine to 0 at the full room; a hard cut would leave an
    endpoint term in the field.
    """
    fy = sfft.fftfreq(shape[0], d=pitch)[:, None]
    fx = sfft.fftfreq(shape[1], d=pitch)[None, :]
    cos = 1.0 - wavelength**2 * (fx**2 + fy**2)
    np.clip(cos, 0.0, None, out=cos)
    np.sqrt(cos, out=cos)
    room_y = (shape[0] - window[0]) * pitch
    room_x = (shape[1] - window[1]) * pitch
    walk = np.maximum(np.abs(fx) / room_x, np.abs(fy) / room_y)
    walk *= gap * wavelength
    with np.errstate(divide="ignore", invalid="ignore"):
        np.divide(walk, cos, out=walk)
    del cos
    np.nan_to_num(walk, copy=False, nan=1.0)
    np.minimum(walk, 1.0, out=walk)
    # raised cosine from walk = room / 2 (weight 1) to walk = room (weight 0)
    walk *= 2.0
    walk -= 1.0
    np.clip(walk, 0.0, 1.0, out=walk)
    walk *= np.pi
    np.cos(walk, out=walk)
    walk += 1.0
    walk *= 0.5
    return walk


def _spread_tangent(fmax: float, wavelength: float) -> float:
    s = fmax * wavelength
    if s >= 1.0:
        return math.inf
    return s / math.sqrt(1.0 - s * s)


def _even_fast_len(n: int) -> int:
    n = sfft.next_fast_len(n)
    while n % 2:
        n = sfft.next_fast_len(n + 1)
    return n


def padded_size(shape: tuple[int, int], pitch: float, wavelength: float, gap: float, fmax: float,
                max_size: int = MAX_GRID) -> tuple[int, int]:
    """Even grid size for wrap-free propagation.

    Two conditions per axis: the half-width exceeds the field's half-extent
    plus gap * tan(theta_max), with theta_max from the significant spectrum;
    and the free room (padded size - field size) is at least twice the
    longest sideways walk that can still land inside the field window, so
    the band-limit taper never touches it. Raises ValueError, quoting the
    largest safe gap, if the grid would exceed ``max_size`` samples.
    """
    if gap <= 0:
        return tuple(shape)
    tan = _spread_tangent(fmax, wavelength)
    # steepest propagating direction the grid can represent
    f_corner = math.sqrt(2.0) / (2.0 * pitch)
    tan_grid = _spread_tangent(min(f_corner, 1.0 / wavelength), wavelength)

    def need(n, z):
        extent = n * pitch
        walk = min(extent, z * tan_grid)
        return max(extent + 2 * z * tan, extent + 2 * walk) / pitch

    out = []
    for n in shape:
        m = _even_fast_len(max(n, int(math.floor(need(n, gap))) + 1))
        if m > max_size:
            lo, hi = 0.0, gap
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if need(n, mid) + 1 <= max_size else (lo, mid)
            raise ValueError(
                f"propagation over {gap:g} um would alias on a {max_size}-sample grid "
                f"(spread angle tan={tan:.3g}); maximum safe gap for this grid is {lo:.4g} um"
            )
        out.append(m)
    return tuple(out)


def _embed(a: np.ndarray, shape: tuple[int, int]) -> tuple[np.ndarray, tuple[int, int]]:
    oy = (shape[0] - a.shape[0]) // 2
    ox = (shape[1] - a.shape[1]) // 2
    out = np.zeros(shape, dtype=complex)
    out[oy : oy + a.shape[0], ox : ox + a.shape[1]] = a
    return out, (oy, ox)


def propagate(field: SampledField, gap: float, padding: str = "auto", max_size: int = MAX_GRID,
              fmax: float | None = None) -> SampledField:
    """Propagate ``field`` by ``gap`` micrometres.

    ``padding="auto"`` zero-pads per the anti-aliasing rule and crops back
    to the input window; ``padding="none"`` propagates on the given grid
    with periodic boundaries (exactly unitary for propagating spectra).
    """
    if gap < 0:
        raise ValueError("gap must be non-negative")
    a = field.amplitude
    if padding == "none":
        H = transfer_function(a.shape, field.pitch, field.wavelength, gap)
        out = sfft.ifft2(sfft.fft2(a) * H)
        return SampledField(out, field.pitch, field.wavelength, field.origin)
    if padding != "auto":
        raise ValueError(f"unknown padding policy {padding!r}")
    if fmax is None:
        fmax = max_significant_frequency(a, field.pitch)
    shape = padded_size(a.shape, field.pitch, field.wavelength, gap, fmax, max_size)
    big, (oy, ox) = _embed(a, shape)
    # same operation order as aerial_image, so one weighted line reproduces this bit for bit
    spectrum = sfft.fft2(big, overwrite_x=True)
    H = transfer_function(shape, field.pitch, field.wavelength, gap)
    if gap > 0:
        H *= band_limit(shape, field.pitch, field.wavelength, gap, a.shape)
    H *= spectrum
    out = sfft.ifft2(H, overwrite_x=True)[oy : oy + a.shape[0], ox : ox + a.shape[1]]
    return SampledField(out, field.pitch, field.wavelength, field.origin)


def aerial_image(mask: TransmissionGrid, source: SourceSpec, gap: float, max_size: int = MAX_GRID,
                 padding: str = "auto") -> AerialImage:
    """Weighted incoherent sum of single-wavelength intensities at ``gap``.

    The mask spectrum is computed once on a grid padded for the upper
    band edge; wavelengths are summed in their declared order. With a
    collimation angle the sum is taken on the window grown by four blur
    widths, convolved with the blur Gaussian and cropped back.
    ``padding="none"`` treats the mask as one period of an infinite array.
    """
    if gap < 0:
        raise ValueError("gap must be non-negative")
    if padding not in ("auto", "none"):
        raise ValueError(f"unknown padding policy {padding!r}")
    a = mask.values.astype(complex)
    if a.shape[0] % 2 or a.shape[1] % 2:
        raise ValueError(f"mask dimensions must be even, got {a.shape}")
    sigma = source.blur_width(gap) / mask.pitch
    g = int(math.ceil(BLUR_TRUNCATE * sigma)) if sigma > 0 else 0
    window = (a.shape[0] + 2 * g, a.shape[1] + 2 * g)
    if padding == "none":
        shape, big, (oy, ox) = a.shape, a, (0, 0)
        window = a.shape
    else:
        fmax = max_significant_frequency(a, mask.pitch)
        # padded for the band edge, so the grid does not depend on which lines carry weight
        shape = padded_size(window, mask.pitch, source.band[1], gap, fmax, max_size)
        big, (oy, ox) = _embed(a, shape)
        oy, ox = oy - g, ox - g
    spectrum = sfft.fft2(big, overwrite_x=True)
    del big
    total = np.zeros(window)
    for wl, w in zip(source.wavelengths, source.weights):
        if w == 0:
            continue
        H = transfer_function(shape, mask.pitch, wl, gap)
        if gap > 0 and padding == "auto":
            H *= band_limit(shape, mask.pitch, wl, gap, window)
        H *= spectrum
        u = sfft.ifft2(H, overwrite_x=True)[oy : oy + window[0], ox : ox + window[1]]
        del H
        total += w * (u.real**2 + u.imag**2)
        del u
    if padding == "none" and sigma > 0:
        total = ndimage.gaussian_filter(total, sigma, mode="wrap", truncate=BLUR_TRUNCATE)
    elif g:
        total = ndimage.gaussian_filter(total, sigma, mode="constant", truncate=BLUR_TRUNCATE)[g:-g, g:-g]
    return AerialImage(total, mask.pitch, float(gap), mask.origin)


def sample_line(values: np.ndarray, pitch: float, origin: tuple[float, float], start, end, samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear samples of a cell-centred grid along a segment.

    Returns (arclength, values). Points are in the same coordinates as
    ``origin``; cell (iy, ix) is centred at origin + (i + 0.5) * pitch.
    """
    t = np.linspace(0.0, 1.0, samples)
    x = start[0] + t * (end[0] - start[0])
    y = start[1] + t * (end[1] - start[1])
    col = (x - origin[0]) / pitch - 0.5
    row = (y - origin[1]) / pitch - 0.5
    v = ndimage.map_coordinates(values, [row, col], order=1, mode="nearest")
    return t * math.hypot(end[0] - start[0], end[1] - start[1]), v


def edge_spread_width(image: AerialImage, outside, inside, plateau: float | None = 1.0, samples: int = 2001) -> float:
    """Distance over which intensity rises from 10% to 90% of ``plateau``.

    The profile is read along the segment from ``outside`` (geometric
    shadow) to ``inside`` (aperture interior); the first crossing of each
    level is used. ``plateau=None`` takes the largest value on the segment.
    """
    s, v = sample_line(image.intensity, image.pitch, image.origin, outside, inside, samples)
    if plateau is None:
        plateau = float(v.max())

    def first_crossing(level):
        idx = np.nonzero(v >= level)[0]
        if len(idx) == 0:
            return math.nan
        i = idx[0]
        if i == 0:
            return s[0]
        return s[i - 1] + (level - v[i - 1]) / (v[i] - v[i - 1]) * (s[i] - s[i - 1])

    return first_crossing(0.9 * plateau) - first_crossing(0.1 * plateau)


def rayleigh_sommerfeld(field: SampledField, gap: float) -> SampledField:
    """Brute-force first Rayleigh-Sommerfeld integral onto the input grid.

    Every sample acts as a point source weighted by its cell area; no FFT.
    Cost is O(N^2) in the number of samples, so keep grids small.
    """
    from . import kernels

    if not gap > 0:
        raise ValueError("direct summation needs a positive gap")
    out = kernels.rs_direct(np.asarray(field.amplitude), field.pitch, field.wavelength, float(gap))
    return SampledField(out, field.pitch, field.wavelength, field.origin)
