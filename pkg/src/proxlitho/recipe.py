"""Process-recipe files.

Line-oriented ``key = value`` pairs grouped in ``[section]`` blocks; ``#``
starts a comment. Every dimensional value carries a unit suffix and is
converted to micrometres, seconds and mJ/cm^2 on input::

    [layout]
    lattice = triangular
    circumradius = 80 um

``parse_recipe(format_recipe(r)) == r`` for every valid recipe ``r``.
"""

from __future__ import annotations

import logging
import math
from importlib import resources
from dataclasses import dataclass, field
from typing import Callable

from .layout import Inclusion, Lattice, Rect
from .metrology import Thresholds
from .optics import SourceSpec
from .resist import ResistRecipe, ResponseMode

__all__ = [
    "RecipeError",
    "LayoutParams",
    "SimulationParams",
    "ProcessRecipe",
    "parse_recipe",
    "format_recipe",
    "load_recipe",
    "default_recipe",
    "calibrated_recipe",
    "SHIPPED_RECIPES",
]

log = logging.getLogger(__name__)

# unit -> (dimension, scale to internal unit)
_UNITS = {
    "um": ("length", 1.0),
    "nm": ("length", 1e-3),
    "mm": ("length", 1e3),
    "s": ("time", 1.0),
    "min": ("time", 60.0),
    "mJ/cm2": ("dose", 1.0),
    "mW/cm2": ("irradiance", 1.0),
    "1/um": ("absorption", 1.0),
    "deg": ("angle", 1.0),
}


class RecipeError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class LayoutParams:
    lattice: Lattice = Lattice.TRIANGULAR_GAPLESS
    circumradius: float = 80.0
    region: Rect = field(default_factory=lambda: Rect(0.0, 0.0, 500.0, 500.0))
    pitch: float = 0.0
    inclusion: Inclusion = Inclusion.FULL
    line_width: float = 0.0


@dataclass(frozen=True)
class SimulationParams:
    grid_pitch: float = 0.5
    smoke_pitch: float = 2.0
    supersampling: int = 4
    padding: str = "auto"
    margin: float = 0.0

    def __post_init__(self):
        if not (self.grid_pitch > 0 and self.smoke_pitch > 0):
            raise ValueError("grid pitches must be positive")
        if self.supersampling < 1:
            raise ValueError("supersampling must be a positive integer")
        if self.padding not in ("auto", "none"):
            raise ValueError("padding must be 'auto' or 'none'")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


@dataclass(frozen=True)
class ProcessRecipe:
    layout: LayoutParams
    source: SourceSpec
    resist: ResistRecipe
    simulation: SimulationParams
    gaps: tuple[float, ...]
    thresholds: Thresholds


# section -> key -> (required, kind); kind is a unit dimension or a value parser
_SCHEMA: dict[str, dict[str, tuple[bool, str]]] = {
    "layout": {
        "lattice": (True, "lattice"),
        "circumradius": (True, "length"),
        "region": (True, "length2"),
        "pitch": (True, "length"),
        "inclusion": (False, "inclusion"),
        "line_width": (False, "length"),
    },
    "source": {
        "band": (True, "length2"),
        "points": (True, "int"),
        "power": (True, "irradiance"),
        "collimation": (False, "angle"),
    },
    "resist": {
        "film_thickness": (True, "length"),
        "exposure_time": (True, "time"),
        "dose_threshold": (True, "dose"),
        "dose_saturation": (True, "dose"),
        "contrast_gamma": (False, "number"),
        "absorption_coeff": (False, "absorption"),
        "blur_sigma": (False, "length"),
        "mode": (False, "mode"),
        "development_time": (False, "time"),
    },
    "simulation": {
        "grid_pitch": (True, "length"),
        "smoke_pitch": (False, "length"),
        "supersampling": (False, "int"),
        "padding": (False, "padding"),
        "margin": (False, "length"),
    },
    "sweep": {
        "gaps": (True, "lengths"),
    },
    "metrology": {
        "plateau_threshold": (False, "number"),
        "modulation_threshold": (False, "number"),
        "sag_threshold": (False, "length"),
        "plateau_tolerance": (False, "number"),
    },
}

_ENUMS: dict[str, Callable[[str], object]] = {
    "lattice": Lattice,
    "inclusion": Inclusion,
    "mode": ResponseMode,
    "padding": lambda s: {"auto": "auto", "none": "none"}[s],
}


def _number(tok: str, line: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise RecipeError(f"malformed number {tok!r}", line) from None
    if not math.isfinite(v):
        raise RecipeError(f"non-finite number {tok!r}", line)
    return v


def _convert(key: str, kind: str, raw: str, line: int):
    tok = raw.split()
    if not tok:
        raise RecipeError(f"{key}: empty value", line)
    if kind in _ENUMS:
        try:
            return _ENUMS[kind](raw.strip())
        except (KeyError, ValueError):
            choices = ("auto", "none") if kind == "padding" else [m.value for m in _ENUMS[kind]]
            raise RecipeError(f"{key}: unknown value {raw.strip()!r}; expected one of {', '.join(choices)}", line) from None
    if kind == "int":
        if len(tok) != 1 or not tok[0].lstrip("+").isdigit():
            raise RecipeError(f"{key}: expected a positive integer, got {raw.strip()!r}", line)
        return int(tok[0])
    if kind == "number":
        if len(tok) != 1:
            raise RecipeError(f"{key}: expected a plain number without unit, got {raw.strip()!r}", line)
        return _number(tok[0], line)
    dim = "length" if kind in ("length2", "lengths") else kind
    # internal unit first, so the hint suggests it
    expected = sorted((u for u, (d, _) in _UNITS.items() if d == dim), key=lambda u: (_UNITS[u][1] != 1.0, u))
    if len(tok) < 2 or tok[-1] not in _UNITS:
        if len(tok) >= 1 and tok[-1] not in _UNITS and not _is_number(tok[-1]):
            raise RecipeError(f"{key}: unknown unit {tok[-1]!r}; expected {' or '.join(expected)}", line)
        raise RecipeError(f"{key}: missing unit suffix; write e.g. '{key} = {raw.strip()} {expected[0]}'", line)
    unit = tok[-1]
    if _UNITS[unit][0] != dim:
        raise RecipeError(f"{key}: unit {unit!r} is not a {dim}; expected {' or '.join(expected)}", line)
    scale = _UNITS[unit][1]
    # divide for sub-units so that e.g. 350 nm becomes exactly 0.35 um
    vals = [_number(t, line) / round(1 / scale) if scale < 1 else _number(t, line) * scale for t in tok[:-1]]
    if kind == "length2" and len(vals) != 2:
        raise RecipeError(f"{key}: expected two values followed by a unit", line)
    if kind in ("length2", "lengths"):
        return tuple(vals)
    if len(vals) != 1:
        raise RecipeError(f"{key}: expected a single value followed by a unit", line)
    return vals[0]


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def parse_recipe(text: str, strict: bool = True) -> ProcessRecipe:
    """Parse and validate recipe text.

    Unknown sections or keys raise ``RecipeError`` in strict mode and are
    logged and ignored otherwise. Every error names the offending line.
    """
    values: dict[str, dict[str, tuple[object, int]]] = {}
    section = None
    sec_line: dict[str, int] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise RecipeError(f"malformed section header {body!r}", n)
            section = body[1:-1].strip()
            if section not in _SCHEMA:
                if strict:
                    raise RecipeError(f"unknown section [{section}]; expected one of {', '.join(_SCHEMA)}", n)
                log.warning("line %d: ignoring unknown section [%s]", n, section)
            elif section in values:
                raise RecipeError(f"duplicate section [{section}]", n)
            else:
                values[section] = {}
                sec_line[section] = n
            continue
        if "=" not in body:
            raise RecipeError(f"expected 'key = value', got {body!r}", n)
        if section is None:
            raise RecipeError("key outside of any section", n)
        if section not in _SCHEMA:
            continue
        key, raw_value = (s.strip() for s in body.split("=", 1))
        if key not in _SCHEMA[section]:
            if strict:
                raise RecipeError(f"unknown key {key!r} in [{section}]", n)
            log.warning("line %d: ignoring unknown key %r in [%s]", n, key, section)
            continue
        if key in values[section]:
            raise RecipeError(f"duplicate key {key!r} in [{section}]", n)
        values[section][key] = (_convert(key, _SCHEMA[section][key][1], raw_value, n), n)

    for sec, keys in _SCHEMA.items():
        if sec not in values:
            raise RecipeError(f"missing section: {sec}")
        for key, (required, _) in keys.items():
            if required and key not in values[sec]:
                raise RecipeError(f"missing key {key!r} in [{sec}]", sec_line[sec])

    def get(sec, key):
        return values[sec][key][0]

    def build(sec, fn, **kw):
        try:
            return fn(**{k: v for k, (v, _) in values[sec].items() if k not in kw}, **kw)
        except (ValueError, TypeError) as exc:
            raise RecipeError(f"[{sec}] {exc}", sec_line[sec]) from None

    x0, y0 = 0.0, 0.0
    w, h = get("layout", "region")
    if not (w > 0 and h > 0):
        raise RecipeError("region width and height must be positive", values["layout"]["region"][1])
    layout = build("layout", LayoutParams, region=Rect(x0, y0, w, h))
    if not layout.circumradius > 0:
        raise RecipeError("circumradius must be positive", values["layout"]["circumradius"][1])
    if layout.pitch < 0 or layout.line_width < 0:
        raise RecipeError("pitch and line_width must be non-negative", sec_line["layout"])

    band = get("source", "band")
    if not 0 < band[0] <= band[1]:
        raise RecipeError("band must be 'low high' with 0 < low <= high", values["source"]["band"][1])
    try:
        source = SourceSpec.uniform(
            band, get("source", "points"), get("source", "power"), values["source"].get("collimation", (0.0, 0))[0]
        )
    except ValueError as exc:
        raise RecipeError(f"[source] {exc}", sec_line["source"]) from None

    resist = build("resist", ResistRecipe)
    simulation = build("simulation", SimulationParams)

    gaps = get("sweep", "gaps")
    if not gaps or any(g < 0 for g in gaps) or any(b <= a for a, b in zip(gaps, gaps[1:])):
        raise RecipeError("gaps must be non-negative and strictly increasing", values["sweep"]["gaps"][1])

    m = {k: v for k, (v, _) in values["metrology"].items()}
    thresholds = Thresholds(
        plateau=m.get("plateau_threshold", Thresholds.plateau),
        modulation=m.get("modulation_threshold", Thresholds.modulation),
        sag=m.get("sag_threshold", Thresholds.sag),
        plateau_tolerance=m.get("plateau_tolerance", Thresholds.plateau_tolerance),
    )
    return ProcessRecipe(layout, source, resist, simulation, tuple(gaps), thresholds)


def fmt(x: float) -> str:
    """Shortest text that reads back as the same float."""
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def format_recipe(recipe: ProcessRecipe) -> str:
    """Canonical text form: every key written, internal units throughout."""
    L, S, R, M = recipe.layout, recipe.source, recipe.resist, recipe.simulation
    t = recipe.thresholds
    lines = [
        "[layout]",
        f"lattice = {L.lattice.value}",
        f"circumradius = {fmt(L.circumradius)} um",
        f"region = {fmt(L.region.width)} {fmt(L.region.height)} um",
        f"pitch = {fmt(L.pitch)} um",
        f"inclusion = {L.inclusion.value}",
        f"line_width = {fmt(L.line_width)} um",
        "",
        "[source]",
        f"band = {fmt(S.band[0])} {fmt(S.band[1])} um",
        f"points = {len(S.wavelengths)}",
        f"power = {fmt(S.power)} mW/cm2",
        f"collimation = {fmt(S.half_angle)} deg",
        "",
        "[resist]",
        f"film_thickness = {fmt(R.film_thickness)} um",
        f"exposure_time = {fmt(R.exposure_time)} s",
        f"dose_threshold = {fmt(R.dose_threshold)} mJ/cm2",
        f"dose_saturation = {fmt(R.dose_saturation)} mJ/cm2",
        f"contrast_gamma = {fmt(R.contrast_gamma)}",
        f"absorption_coeff = {fmt(R.absorption_coeff)} 1/um",
        f"blur_sigma = {fmt(R.blur_sigma)} um",
        f"mode = {R.mode.value}",
        f"development_time = {fmt(R.development_time)} s",
        "",
        "[simulation]",
        f"grid_pitch = {fmt(M.grid_pitch)} um",
        f"smoke_pitch = {fmt(M.smoke_pitch)} um",
        f"supersampling = {M.supersampling}",
        f"padding = {M.padding}",
        f"margin = {fmt(M.margin)} um",
        "",
        "[sweep]",
        "gaps = " + " ".join(fmt(g) for g in recipe.gaps) + " um",
        "",
        "[metrology]",
        f"plateau_threshold = {fmt(t.plateau)}",
        f"modulation_threshold = {fmt(t.modulation)}",
        f"sag_threshold = {fmt(t.sag)} um",
        f"plateau_tolerance = {fmt(t.plateau_tolerance)}",
    ]
    return "\n".join(lines) + "\n"


def load_recipe(path, strict: bool = True) -> ProcessRecipe:
    with open(path, encoding="utf-8") as fh:
        return parse_recipe(fh.read(), strict=strict)


SHIPPED_RECIPES = ("default", "calibrated")


def _shipped(name: str, strict: bool) -> ProcessRecipe:
    text = resources.files("proxlitho").joinpath(f"data/{name}.recipe").read_text(encoding="utf-8")
    return parse_recipe(text, strict=strict)


def default_recipe(strict: bool = True) -> ProcessRecipe:
    """The shipped recipe: triangular array, 120-960 um gaps, illustrative resist constants."""
    return _shipped("default", strict)


def calibrated_recipe(strict: bool = True) -> ProcessRecipe:
    """The shipped recipe with resist constants calibrated at the full grid pitch."""
    return _shipped("calibrated", strict)
