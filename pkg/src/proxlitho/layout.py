"""Aperture arrays for proximity-printing masks.

Generates edge-sharing tilings (triangles, squares, hexagons) and round
lenses on square/hexagonal lattices, computes fill factors and rasterizes
layouts into transmission grids. All lengths are micrometres.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from . import kernels

__all__ = [
    "Shape",
    "Lattice",
    "Inclusion",
    "Footprint",
    "Rect",
    "ApertureSpec",
    "MaskLayout",
    "TransmissionGrid",
    "generate_gapless_array",
    "fill_factor",
    "lattice_fill_factor",
    "rasterize",
    "count_lenses",
    "write_layout",
    "read_layout",
    "circle_rect_area",
]


class Shape(str, enum.Enum):
    TRIANGLE_UP = "triangle_up"
    TRIANGLE_DOWN = "triangle_down"
    SQUARE = "square"
    HEXAGON = "hexagon"
    CIRCLE = "circle"


class Lattice(str, enum.Enum):
    TRIANGULAR_GAPLESS = "triangular"
    SQUARE_GAPLESS = "square"
    HEX_GAPLESS = "hexagonal"
    SQUARE_LATTICE = "square_round"
    HEX_LATTICE = "hex_round"


class Inclusion(str, enum.Enum):
    """Rule deciding which lattice sites become apertures.

    FULL emits an aperture only if it lies entirely inside the region.
    CENTROID emits it if its centre lies in the half-open region.
    OVERLAP emits every aperture that intersects the region; with
    clipping this gives exact fill factors on commensurate regions.
    """

    FULL = "full"
    CENTROID = "centroid"
    OVERLAP = "overlap"


class Footprint(str, enum.Enum):
    AS_APERTURE = "as_aperture"
    INSCRIBED_CIRCLE = "inscribed_circle"


_LATTICE_SHAPES = {
    Lattice.TRIANGULAR_GAPLESS: {Shape.TRIANGLE_UP, Shape.TRIANGLE_DOWN},
    Lattice.SQUARE_GAPLESS: {Shape.SQUARE},
    Lattice.HEX_GAPLESS: {Shape.HEXAGON},
    Lattice.SQUARE_LATTICE: {Shape.CIRCLE},
    Lattice.HEX_LATTICE: {Shape.CIRCLE},
}

# angle of the first vertex for each canonical (orientation = 0) shape
_FIRST_VERTEX = {
    Shape.TRIANGLE_UP: (3, math.pi / 2),
    Shape.TRIANGLE_DOWN: (3, -math.pi / 2),
    Shape.SQUARE: (4, math.pi / 4),
    Shape.HEXAGON: (6, math.pi / 2),
}


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate region {self}")

    @classmethod
    def from_size(cls, width: float, height: float) -> "Rect":
        return cls(0.0, 0.0, float(width), float(height))

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x: float, y: float, half_open: bool = False) -> bool:
        if half_open:
            return self.x0 <= x < self.x1 and self.y0 <= y < self.y1
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass(frozen=True)
class ApertureSpec:
    """One mask opening: a regular polygon or a circle."""

    shape: Shape
    circumradius: float
    center: tuple[float, float]
    orientation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        if not self.circumradius > 0:
            raise ValueError("circumradius must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def n_vertices(self) -> int:
        return 0 if self.shape is Shape.CIRCLE else _FIRST_VERTEX[self.shape][0]

    @property
    def inradius(self) -> float:
        n = self.n_vertices
        return self.circumradius if n == 0 else self.circumradius * math.cos(math.pi / n)

    @property
    def area(self) -> float:
        n = self.n_vertices
        if n == 0:
            return math.pi * self.circumradius**2
        return 0.5 * n * self.circumradius**2 * math.sin(2 * math.pi / n)

    @property
    def edge_length(self) -> float:
        """Side length, or the diameter for circles."""
        n = self.n_vertices
        if n == 0:
            return 2 * self.circumradius
        return 2 * self.circumradius * math.sin(math.pi / n)

    def vertices(self) -> np.ndarray:
        """Counter-clockwise vertex array of shape (n, 2); empty for circles."""
        if self.shape is Shape.CIRCLE:
            return np.empty((0, 2))
        n, a0 = _FIRST_VERTEX[self.shape]
        ang = a0 + self.orientation + 2 * np.pi * np.arange(n) / n
        cx, cy = self.center
        return np.column_stack([cx + self.circumradius * np.cos(ang), cy + self.circumradius * np.sin(ang)])

    def bounds(self) -> tuple[float, float, float, float]:
        if self.shape is Shape.CIRCLE:
            cx, cy = self.center
            r = self.circumradius
            return cx - r, cy - r, cx + r, cy + r
        v = self.vertices()
        return v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max()

    def shrunk(self, inset: float) -> "ApertureSpec | None":
        """Move every edge inward by ``inset``; None if nothing is left."""
        if inset <= 0:
            return self
        ratio = self.inradius / self.circumradius
        r = self.circumradius - inset / ratio
        if r <= 0:
            return None
        return ApertureSpec(self.shape, r, self.center, self.orientation)

    def to_shapely(self, circle_segments: int = 4096):
        from shapely.geometry import Point, Polygon

        if self.shape is Shape.CIRCLE:
            # quad_segs is per quarter circle
            return Point(self.center).buffer(self.circumradius, quad_segs=circle_segments // 4)
        return Polygon(self.vertices())

    def clipped_area(self, rect: Rect) -> float:
        if self.shape is Shape.CIRCLE:
            return circle_rect_area(self.center[0], self.center[1], self.circumradius, rect)
        return _polygon_area(_clip_polygon(self.vertices(), rect))


@dataclass(frozen=True)
class MaskLayout:
    apertures: tuple[ApertureSpec, ...]
    region: Rect
    lattice: Lattice
    circumradius: float
    pitch: float = 0.0
    inclusion: Inclusion = Inclusion.FULL

    def __post_init__(self):
        object.__setattr__(self, "apertures", tuple(self.apertures))
        object.__setattr__(self, "lattice", Lattice(self.lattice))
        object.__setattr__(self, "inclusion", Inclusion(self.inclusion))

    def __len__(self) -> int:
        return len(self.apertures)

    def __iter__(self):
        return iter(self.apertures)

    def touches_boundary(self, index: int, tol: float = 1e-9) -> bool:
        """True if aperture ``index`` reaches the region boundary."""
        x0, y0, x1, y1 = self.apertures[index].bounds()
        r = self.region
        return x0 <= r.x0 + tol or y0 <= r.y0 + tol or x1 >= r.x1 - tol or y1 >= r.y1 - tol


@dataclass(frozen=True)
class TransmissionGrid:
    """Mask transmission sampled on cells; ``values[iy, ix]`` covers
    ``[origin + ix * pitch, origin + (ix + 1) * pitch]`` in x (same in y)."""

    values: np.ndarray
    pitch: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise ValueError("transmission grid must be 2-D and at least 2x2")
        if not self.pitch > 0:
            raise ValueError("grid pitch must be positive")
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise ValueError("transmission values must lie in [0, 1]")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.values.shape
        x = self.origin[0] + (np.arange(nx) + 0.5) * self.pitch
        y = self.origin[1] + (np.arange(ny) + 0.5) * self.pitch
        return x, y


# --------------------------------------------------------------------------
# generation


def _lattice_sites(lattice: Lattice, R: float, pitch: float, region: Rect):
    """Yield (shape, center) for every lattice site near ``region``.

    ``pitch`` is the edge-to-edge separation between neighbouring apertures.
    Sites are anchored at the region's lower-left corner: the first row's
    lowest aperture edge lies on the lower edge of the region and the first
    aperture's leftmost point on its left edge.
    """
    x0, y0 = region.x0, region.y0
    if lattice is Lattice.TRIANGULAR_GAPLESS:
        # cell triangles grow by pitch/2 in inradius, i.e. by pitch in circumradius
        Rc = R + pitch
        s = Rc * math.sqrt(3)
        h = 1.5 * Rc
        ny = int(math.ceil(region.height / h)) + 2
        nx = int(math.ceil(region.width / (s / 2))) + 3
        for j in range(-1, ny):
            for k in range(-2, nx):
                left = x0 + k * s / 2
                base = y0 + j * h
                if (k + j) % 2 == 0:
                    yield Shape.TRIANGLE_UP, (left + s / 2, base + Rc / 2)
                else:
                    yield Shape.TRIANGLE_DOWN, (left + s / 2, base + Rc)
    elif lattice is Lattice.SQUARE_GAPLESS:
        a = R * math.sqrt(2)
        d = a + pitch
        for j in range(-1, int(math.ceil(region.height / d)) + 2):
            for k in range(-1, int(math.ceil(region.width / d)) + 2):
                yield Shape.SQUARE, (x0 + a / 2 + k * d, y0 + a / 2 + j * d)
    elif lattice is Lattice.HEX_GAPLESS:
        # pointy-top hexagons, rows offset by half a column
        w = math.sqrt(3) * R
        dx = w + pitch
        dy = dx * math.sqrt(3) / 2
        for j in range(-1, int(math.ceil(region.height / dy)) + 2):
            for k in range(-2, int(math.ceil(region.width / dx)) + 2):
                yield Shape.HEXAGON, (x0 + w / 2 + k * dx + (j % 2) * dx / 2, y0 + R + j * dy)
    elif lattice is Lattice.SQUARE_LATTICE:
        d = 2 * R + pitch
        for j in range(-1, int(math.ceil(region.height / d)) + 2):
            for k in range(-1, int(math.ceil(region.width / d)) + 2):
                yield Shape.CIRCLE, (x0 + R + k * d, y0 + R + j * d)
    elif lattice is Lattice.HEX_LATTICE:
        d = 2 * R + pitch
        dy = d * math.sqrt(3) / 2
        for j in range(-1, int(math.ceil(region.height / dy)) + 2):
            for k in range(-2, int(math.ceil(region.width / d)) + 2):
                yield Shape.CIRCLE, (x0 + R + k * d + (j % 2) * d / 2, y0 + R + j * dy)
    else:  # pragma: no cover
        raise ValueError(f"unknown lattice {lattice!r}")


def _included(ap: ApertureSpec, region: Rect, inclusion: Inclusion, tol: float) -> bool:
    if inclusion is Inclusion.CENTROID:
        return region.contains(*ap.center, half_open=True)
    bx0, by0, bx1, by1 = ap.bounds()
    if inclusion is Inclusion.FULL:
        return (
            bx0 >= region.x0 - tol and by0 >= region.y0 - tol
            and bx1 <= region.x1 + tol and by1 <= region.y1 + tol
        )
    if bx1 <= region.x0 or by1 <= region.y0 or bx0 >= region.x1 or by0 >= region.y1:
        return False
    return ap.clipped_area(region) > tol * ap.area


def generate_gapless_array(
    lattice: Lattice | str,
    circumradius: float,
    region: Rect,
    pitch: float = 0.0,
    inclusion: Inclusion | str = Inclusion.FULL,
    shape: Shape | str | None = None,
) -> MaskLayout:
    """Tile ``region`` with apertures of the given lattice.

    With ``pitch == 0`` the polygon lattices share edges exactly and the
    round lattices touch. ``shape``, if given, must be one the lattice can
    carry (e.g. triangles for the triangular lattice).
    """
    lattice = Lattice(lattice)
    inclusion = Inclusion(inclusion)
    if not circumradius > 0:
        raise ValueError("circumradius must be positive")
    if pitch < 0:
        raise ValueError("pitch must be non-negative")
    if shape is not None and Shape(shape) not in _LATTICE_SHAPES[lattice]:
        raise ValueError(f"shape {Shape(shape).value!r} cannot be placed on a {lattice.value} lattice")
    tol = 1e-9 * max(circumradius, region.width, region.height)
    aps = []
    for shp, c in _lattice_sites(lattice, circumradius, pitch, region):
        ap = ApertureSpec(shp, circumradius, c)
        if _included(ap, region, inclusion, tol):
            aps.append(ap)
    aps.sort(key=lambda a: (round(a.center[1], 9), round(a.center[0], 9)))
    return MaskLayout(tuple(aps), region, lattice, circumradius, pitch, inclusion)


def count_lenses(layout: MaskLayout) -> int:
    return len(layout.apertures)


# --------------------------------------------------------------------------
# areas


def _clip_polygon(poly: np.ndarray, rect: Rect) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon against an axis-aligned rectangle."""
    pts = [tuple(p) for p in poly]
    for axis, bound, keep_above in ((0, rect.x0, True), (0, rect.x1, False), (1, rect.y0, True), (1, rect.y1, False)):
        if not pts:
            break
        out = []
        for i, cur in enumerate(pts):
            prev = pts[i - 1]
            cin = cur[axis] >= bound if keep_above else cur[axis] <= bound
            pin = prev[axis] >= bound if keep_above else prev[axis] <= bound
            if cin != pin:
                t = (bound - prev[axis]) / (cur[axis] - prev[axis])
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            if cin:
                out.append(cur)
        pts = out
    return np.array(pts, dtype=float).reshape(-1, 2)


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _chord_integral(t: float, r: float) -> float:
    """Antiderivative of sqrt(r^2 - t^2)."""
    t = min(max(t, -r), r)
    return 0.5 * (t * math.sqrt(max(r * r - t * t, 0.0)) + r * r * math.asin(t / r))


def _quadrant_area(a: float, b: float, r: float) -> float:
    """Area of the origin-centred disk of radius r with X <= a and Y <= b."""
    if a <= -r or b <= -r:
        return 0.0
    a = min(a, r)
    if b >= r:
        return 2 * (_chord_integral(a, r) - _chord_integral(-r, r))
    c = math.sqrt(r * r - b * b)

    def inner(lo, hi):  # integral of (b + s(t)) over [lo, hi]
        if hi <= lo:
            return 0.0
        return b * (hi - lo) + _chord_integral(hi, r) - _chord_integral(lo, r)

    def outer(lo, hi):  # integral of 2 s(t)
        if hi <= lo:
            return 0.0
        return 2 * (_chord_integral(hi, r) - _chord_integral(lo, r))

    if b >= 0:
        # full chord for |t| >= c, truncated chord inside
        return outer(-r, min(a, -c)) + inner(-c, min(a, c)) + outer(c, a)
    return inner(-c, min(a, c))


def circle_rect_area(cx: float, cy: float, r: float, rect: Rect) -> float:
    """Exact area of a disk intersected with an axis-aligned rectangle."""
    x0, x1 = rect.x0 - cx, rect.x1 - cx
    y0, y1 = rect.y0 - cy, rect.y1 - cy
    area = _quadrant_area(x1, y1, r) - _quadrant_area(x0, y1, r) - _quadrant_area(x1, y0, r) + _quadrant_area(x0, y0, r)
    return max(area, 0.0)


def fill_factor(layout: MaskLayout, lens_footprint: Footprint | str = Footprint.AS_APERTURE) -> float:
    """Lens footprint area clipped to the region, over the region area."""
    footprint = Footprint(lens_footprint)
    if not layout.apertures:
        return 0.0
    total = 0.0
    for ap in layout.apertures:
        if footprint is Footprint.INSCRIBED_CIRCLE:
            total += circle_rect_area(ap.center[0], ap.center[1], ap.inradius, layout.region)
        else:
            total += ap.clipped_area(layout.region)
    return min(total / layout.region.area, 1.0)


def lattice_period(lattice: Lattice | str, circumradius: float, pitch: float = 0.0) -> tuple[float, float]:
    """Width and height of the smallest rectangle that tiles the lattice."""
    lattice = Lattice(lattice)
    R = circumradius
    if lattice is Lattice.TRIANGULAR_GAPLESS:
        Rc = R + pitch
        return Rc * math.sqrt(3), 3 * Rc
    if lattice is Lattice.SQUARE_GAPLESS:
        d = R * math.sqrt(2) + pitch
        return d, d
    if lattice is Lattice.HEX_GAPLESS:
        dx = math.sqrt(3) * R + pitch
        return dx, dx * math.sqrt(3)
    d = 2 * R + pitch
    if lattice is Lattice.SQUARE_LATTICE:
        return d, d
    return d, d * math.sqrt(3)


def lattice_fill_factor(
    lattice: Lattice | str,
    circumradius: float,
    pitch: float = 0.0,
    lens_footprint: Footprint | str = Footprint.AS_APERTURE,
    periods: int = 4,
) -> float:
    """Fill factor of the infinite lattice, evaluated on a commensurate region."""
    pw, ph = lattice_period(lattice, circumradius, pitch)
    region = Rect.from_size(periods * pw, periods * ph)
    layout = generate_gapless_array(lattice, circumradius, region, pitch, Inclusion.OVERLAP)
    return fill_factor(layout, lens_footprint)


# --------------------------------------------------------------------------
# rasterization


def rasterize(
    layout: MaskLayout,
    pitch: float,
    supersampling: int = 4,
    line_width: float = 0.0,
    margin: float = 0.0,
) -> TransmissionGrid:
    """Box-filtered transmission of ``layout`` on a grid of ``pitch`` cells.

    The grid covers the layout region grown by ``margin`` on every side,
    rounded up to an even number of cells. ``line_width`` draws an opaque
    line of that width centred on every aperture edge (each aperture is
    inset by half of it), which is how gapless layouts acquire chrome.
    """
    if not pitch > 0:
        raise ValueError("pitch must be positive")
    if supersampling < 1:
        raise ValueError("supersampling must be a positive integer")
    if line_width < 0 or margin < 0:
        raise ValueError("line_width and margin must be non-negative")
    apertures = [a.shrunk(line_width / 2) for a in layout.apertures]
    apertures = [a for a in apertures if a is not None]
    if apertures:
        smallest = min(a.edge_length for a in apertures)
        if smallest / pitch < 8:
            raise ValueError(
                f"grid pitch {pitch:g} um resolves the smallest aperture edge "
                f"({smallest:g} um) with fewer than 8 samples; use pitch <= {smallest / 8:g} um"
            )
    r = layout.region
    nx = int(math.ceil((r.width + 2 * margin) / pitch - 1e-9))
    ny = int(math.ceil((r.height + 2 * margin) / pitch - 1e-9))
    nx = max(2, nx + nx % 2)
    ny = max(2, ny + ny % 2)
    origin = (r.x0 - margin, r.y0 - margin)

    polys = [a.vertices() for a in apertures if a.shape is not Shape.CIRCLE]
    circles = np.array(
        [(a.center[0], a.center[1], a.circumradius) for a in apertures if a.shape is Shape.CIRCLE],
        dtype=float,
    ).reshape(-1, 3)
    maxv = max((len(p) for p in polys), default=3)
    poly_arr = np.zeros((len(polys), maxv, 2))
    nverts = np.zeros(len(polys), dtype=np.int64)
    for i, p in enumerate(polys):
        poly_arr[i, : len(p)] = p
        nverts[i] = len(p)
    values = kernels.coverage(poly_arr, nverts, circles, origin[0], origin[1], float(pitch), nx, ny, int(supersampling))
    return TransmissionGrid(np.clip(values, 0.0, 1.0), float(pitch), origin)


# --------------------------------------------------------------------------
# text export


def write_layout(layout: MaskLayout, stream: TextIO) -> None:
    """Write ``layout`` as a plain-text polygon list.

    Columns per record: shape circumradius center_x center_y orientation
    followed by the vertex coordinates x1 y1 x2 y2 ... (none for circles).
    """
    r = layout.region
    stream.write("# proxlitho layout v1\n")
    stream.write(f"unit um region {r.x0!r} {r.y0!r} {r.x1!r} {r.y1!r}\n")
    stream.write(
        f"lattice {layout.lattice.value} circumradius {layout.circumradius!r} "
        f"pitch {layout.pitch!r} inclusion {layout.inclusion.value}\n"
    )
    for ap in layout.apertures:
        fields = [ap.shape.value, repr(ap.circumradius), repr(ap.center[0]), repr(ap.center[1]), repr(ap.orientation)]
        fields += [repr(float(c)) for c in ap.vertices().ravel()]
        stream.write(" ".join(fields) + "\n")


def read_layout(stream: TextIO | Iterable[str]) -> MaskLayout:
    region = None
    meta: dict[str, str] = {}
    aps = []
    for lineno, raw in enumerate(stream, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "unit":
                if tok[1] != "um":
                    raise ValueError(f"unsupported unit {tok[1]!r}")
                region = Rect(*(float(t) for t in tok[3:7]))
            elif tok[0] == "lattice":
                meta = dict(zip(tok[0::2], tok[1::2]))
            else:
                ap = ApertureSpec(Shape(tok[0]), float(tok[1]), (float(tok[2]), float(tok[3])), float(tok[4]))
                if len(tok) - 5 != 2 * ap.n_vertices:
                    raise ValueError(f"expected {2 * ap.n_vertices} vertex coordinates, got {len(tok) - 5}")
                aps.append(ap)
        except (ValueError, IndexError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if region is None or not meta:
        raise ValueError("layout file is missing its header lines")
    return MaskLayout(
        tuple(aps),
        region,
        Lattice(meta["lattice"]),
        float(meta["circumradius"]),
        float(meta["pitch"]),
        Inclusion(meta.get("inclusion", "full")),
    )
