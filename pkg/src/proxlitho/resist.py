"""Negative-resist exposure and development.

Dose is intensity x irradiance x time. Development is an instantaneous
threshold response of the (optionally blurred) final dose: exposed resist
crosslinks and stays, unexposed resist washes away.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .layout import MaskLayout, rasterize
from .optics import AerialImage, SourceSpec, aerial_image

__all__ = [
    "ResponseMode",
    "ResistRecipe",
    "DoseMap",
    "SurfaceProfile",
    "response",
    "accumulate_dose",
    "develop",
    "simulate_process",
]


class ResponseMode(str, enum.Enum):
    CONTRAST = "contrast"  # two-knee power law, clamped at saturation
    DEPTH = "depth"  # Beer-Lambert crosslink depth


@dataclass(frozen=True)
class ResistRecipe:
    """Film and dose-response parameters.

    Units: um, s, mJ/cm^2, 1/um. ``development_time`` is recorded but not
    modelled; development is assumed complete.
    """

    film_thickness: float = 35.0
    exposure_time: float = 16.0
    dose_threshold: float = 40.0
    dose_saturation: float = 200.0
    contrast_gamma: float = 1.0
    absorption_coeff: float = 0.0
    blur_sigma: float = 0.0
    mode: ResponseMode = ResponseMode.CONTRAST
    development_time: float = 180.0

    def __post_init__(self):
        object.__setattr__(self, "mode", ResponseMode(self.mode))
        if not 0 < self.dose_threshold < self.dose_saturation:
            raise ValueError("need 0 < dose_threshold < dose_saturation")
        if not (self.film_thickness > 0 and self.exposure_time > 0 and self.contrast_gamma > 0):
            raise ValueError("film_thickness, exposure_time and contrast_gamma must be positive")
        if self.absorption_coeff < 0 or self.blur_sigma < 0 or self.development_time < 0:
            raise ValueError("absorption_coeff, blur_sigma and development_time must be non-negative")
        if self.mode is ResponseMode.DEPTH and self.absorption_coeff <= 0:
            raise ValueError("depth mode needs absorption_coeff > 0")

    def replace(self, **changes) -> "ResistRecipe":
        return replace(self, **changes)


@dataclass(frozen=True)
class DoseMap:
    dose: np.ndarray
    pitch: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        d = np.asarray(self.dose, dtype=float)
        if np.any(d < 0):
            raise ValueError("dose must be non-negative")
        d.flags.writeable = False
        object.__setattr__(self, "dose", d)


@dataclass(frozen=True)
class SurfaceProfile:
    height: np.ndarray
    pitch: float
    origin: tuple[float, float] = (0.0, 0.0)
    film_thickness: float | None = None

    def __post_init__(self):
        h = np.asarray(self.height, dtype=float)
        if h.ndim != 2:
            raise ValueError("height map must be 2-D")
        if not self.pitch > 0:
            raise ValueError("pitch must be positive")
        if self.film_thickness is not None and (np.any(h < 0) or np.any(h > self.film_thickness)):
            raise ValueError("heights must lie in [0, film_thickness]")
        h.flags.writeable = False
        object.__setattr__(self, "height", h)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        ny, nx = self.height.shape
        return self.origin[0], self.origin[1], self.origin[0] + nx * self.pitch, self.origin[1] + ny * self.pitch


def response(dose: np.ndarray, recipe: ResistRecipe) -> np.ndarray:
    """Remaining film height (um) for each dose value."""
    d = np.asarray(dose, dtype=float)
    t = recipe.film_thickness
    if recipe.mode is ResponseMode.DEPTH:
        with np.errstate(divide="ignore"):
            depth = np.log(np.maximum(d, 0.0) / recipe.dose_threshold) / recipe.absorption_coeff
        return np.clip(depth, 0.0, t)
    x = (d - recipe.dose_threshold) / (recipe.dose_saturation - recipe.dose_threshold)
    return t * np.clip(x, 0.0, 1.0) ** recipe.contrast_gamma


def accumulate_dose(image: AerialImage, source: SourceSpec, recipe: ResistRecipe) -> DoseMap:
    # mW/cm^2 * s = mJ/cm^2
    return DoseMap(image.intensity * (source.power * recipe.exposure_time), image.pitch, image.origin)


def develop(dose: DoseMap, recipe: ResistRecipe) -> SurfaceProfile:
    d = dose.dose
    if recipe.blur_sigma > 0:
        d = ndimage.gaussian_filter(d, recipe.blur_sigma / dose.pitch, mode="nearest", truncate=4.0)
    return SurfaceProfile(response(d, recipe), dose.pitch, dose.origin, recipe.film_thickness)


def simulate_process(
    layout: MaskLayout,
    source: SourceSpec,
    recipe: ResistRecipe,
    gap: float,
    pitch: float,
    supersampling: int = 4,
    line_width: float = 0.0,
) -> SurfaceProfile:
    """Mask layout to developed surface at one proximity gap."""
    mask = rasterize(layout, pitch, supersampling, line_width=line_width)
    image = aerial_image(mask, source, gap)
    return develop(accumulate_dose(image, source, recipe), recipe)
