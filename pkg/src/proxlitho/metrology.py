"""Metrology on height maps: sections, sphere fits, roughness, regimes."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .layout import ApertureSpec, MaskLayout, Rect, Shape
from .resist import SurfaceProfile

__all__ = [
    "Regime",
    "Thresholds",
    "SphereFit",
    "LensMetrics",
    "RoughnessReport",
    "cross_section",
    "fit_sphere",
    "roughness_ra",
    "lens_regime",
    "LensSampler",
    "classify_regime",
    "realized_fill_factor",
]

log = logging.getLogger(__name__)


class Regime(str, enum.Enum):
    FLAT_TOP = "FlatTop"
    CONVEX = "Convex"
    BLURRED = "Blurred"


@dataclass(frozen=True)
class Thresholds:
    plateau: float = 0.10
    modulation: float = 0.05
    sag: float = 1.0  # um
    plateau_tolerance: float = 0.01  # fraction of film thickness


@dataclass(frozen=True)
class SphereFit:
    center: tuple[float, float, float]
    radius_of_curvature: float
    rms_deviation: float
    max_deviation: float
    sample_count: int


@dataclass(frozen=True)
class LensMetrics:
    lens_id: int
    sag: float
    sphere: SphereFit | None
    regime: Regime
    plateau_fraction: float
    modulation_depth: float
    peak: float = 0.0
    edge_min: float = 0.0


@dataclass(frozen=True)
class RoughnessReport:
    ra: float  # nm
    window: Rect
    sample_count: int


def _check_inside(profile: SurfaceProfile, pt) -> None:
    x0, y0, x1, y1 = profile.extent
    if not (x0 <= pt[0] <= x1 and y0 <= pt[1] <= y1):
        raise ValueError(f"point {tuple(pt)} lies outside the profile domain [{x0}, {x1}] x [{y0}, {y1}]")


def _bilinear(profile: SurfaceProfile, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # a + f * (b - a) keeps constant regions exactly constant
    h = profile.height
    ny, nx = h.shape
    col = np.clip((np.asarray(x, dtype=float) - profile.origin[0]) / profile.pitch - 0.5, 0, nx - 1)
    row = np.clip((np.asarray(y, dtype=float) - profile.origin[1]) / profile.pitch - 0.5, 0, ny - 1)
    c0 = np.minimum(col.astype(int), max(nx - 2, 0))
    r0 = np.minimum(row.astype(int), max(ny - 2, 0))
    c1 = np.minimum(c0 + 1, nx - 1)
    r1 = np.minimum(r0 + 1, ny - 1)
    fc, fr = col - c0, row - r0
    lo = h[r0, c0] + fc * (h[r0, c1] - h[r0, c0])
    hi = h[r1, c0] + fc * (h[r1, c1] - h[r1, c0])
    return lo + fr * (hi - lo)


def cross_section(profile: SurfaceProfile, start, end, samples: int = 201) -> np.ndarray:
    """Heights along a segment as an (samples, 2) array of (arclength, height)."""
    if samples < 2:
        raise ValueError("need at least two samples")
    _check_inside(profile, start)
    _check_inside(profile, end)
    length = math.hypot(end[0] - start[0], end[1] - start[1])
    if length == 0:
        raise ValueError("cross-section endpoints coincide")
    t = np.linspace(0.0, 1.0, samples)
    x = start[0] + t * (end[0] - start[0])
    y = start[1] + t * (end[1] - start[1])
    return np.column_stack([t * length, _bilinear(profile, x, y)])


def _vertices(region) -> np.ndarray:
    verts = region.vertices() if isinstance(region, ApertureSpec) else np.asarray(region, dtype=float)
    x, y = verts[:, 0], verts[:, 1]
    if np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)) < 0:
        verts = verts[::-1]
    return verts


def _points_in_polygon(x: np.ndarray, y: np.ndarray, region) -> np.ndarray:
    """Inside test for a disk or a convex polygon (edges count as inside)."""
    if isinstance(region, ApertureSpec) and region.shape is Shape.CIRCLE:
        cx, cy = region.center
        return (x - cx) ** 2 + (y - cy) ** 2 <= region.circumradius**2
    verts = _vertices(region)
    inside = np.ones(np.shape(x), dtype=bool)
    for (ax, ay), (bx, by) in zip(verts, np.roll(verts, -1, axis=0)):
        inside &= (bx - ax) * (y - ay) - (by - ay) * (x - ax) >= 0
    return inside


def _boundary_points(region, spacing: float) -> np.ndarray:
    if isinstance(region, ApertureSpec) and region.shape is Shape.CIRCLE:
        n = max(16, int(math.ceil(2 * math.pi * region.circumradius / spacing)))
        a = 2 * math.pi * np.arange(n) / n
        return np.column_stack([region.center[0] + region.circumradius * np.cos(a),
                                region.center[1] + region.circumradius * np.sin(a)])
    verts = _vertices(region)
    pts = []
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        n = max(2, int(math.ceil(np.hypot(*(b - a)) / spacing)))
        t = np.arange(n)[:, None] / n
        pts.append(a + t * (b - a))
    return np.vstack(pts)


def _grid_coords(profile: SurfaceProfile) -> tuple[np.ndarray, np.ndarray]:
    ny, nx = profile.height.shape
    x = profile.origin[0] + (np.arange(nx) + 0.5) * profile.pitch
    y = profile.origin[1] + (np.arange(ny) + 0.5) * profile.pitch
    return np.meshgrid(x, y)


def _cap(params: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x0, y0, z0, R = params
    q = np.maximum(R * R - (x - x0) ** 2 - (y - y0) ** 2, 1e-300)
    s = np.sqrt(q)
    return z0 - R + s, s


def _fit_cap(x: np.ndarray, y: np.ndarray, z: np.ndarray, max_iter: int = 100, tol: float = 1e-9) -> np.ndarray:
    """Spherical-cap fit: algebraic start, Gauss-Newton on height residuals."""
    xm, ym, zm = x.mean(), y.mean(), z.mean()
    u, v, w = x - xm, y - ym, z - zm
    # plane check: data without curvature cannot define a sphere
    A = np.column_stack([np.ones_like(u), u, v])
    coef, *_ = np.linalg.lstsq(A, w, rcond=None)
    scale = max(np.ptp(u), np.ptp(v), 1e-300)
    if np.sqrt(np.mean((A @ coef - w) ** 2)) <= 1e-9 * max(scale, np.ptp(w)):
        raise ValueError("no curvature: samples are planar")
    # algebraic sphere: u^2+v^2+w^2 + D u + E v + F w + G = 0
    M = np.column_stack([u, v, w, np.ones_like(u)])
    rhs = -(u * u + v * v + w * w)
    (D, E, F, G), *_ = np.linalg.lstsq(M, rhs, rcond=None)
    cu, cv, cw = -D / 2, -E / 2, -F / 2
    r2 = cu * cu + cv * cv + cw * cw - G
    if not np.isfinite(r2) or r2 <= 0 or math.sqrt(r2) > 1e6 * scale:
        raise ValueError("no curvature: algebraic fit is degenerate")
    R = math.sqrt(r2)
    params = np.array([cu, cv, cw + R, R])
    for _ in range(max_iter):
        model, s = _cap(params, u, v)
        res = w - model
        du = (u - params[0]) / s
        dv = (v - params[1]) / s
        J = np.column_stack([du, dv, np.ones_like(u), -1.0 + params[3] / s])
        step, *_ = np.linalg.lstsq(J, res, rcond=None)
        params = params + step
        if np.max(np.abs(step)) < tol:
            break
    if params[3] <= 0:
        raise ValueError("no curvature: fit converged to a non-positive radius")
    return params + np.array([xm, ym, zm, 0.0])


def fit_sphere(profile: SurfaceProfile, lens_region) -> SphereFit:
    """Least-squares spherical cap through every in-region sample above the
    lens boundary's mean height. ``lens_region`` is an ApertureSpec or an
    (n, 2) vertex array."""
    X, Y = _grid_coords(profile)
    inside = _points_in_polygon(X, Y, lens_region)
    bpts = _boundary_points(lens_region, profile.pitch / 2)
    baseline = float(_bilinear(profile, bpts[:, 0], bpts[:, 1]).mean())
    return _sphere_from_samples(X[inside], Y[inside], profile.height[inside], baseline)


def _sphere_from_samples(x: np.ndarray, y: np.ndarray, h: np.ndarray, baseline: float) -> SphereFit:
    sel = h > baseline
    n = int(sel.sum())
    if n < 16:
        if h.size >= 16 and np.ptp(h) == 0:
            raise ValueError("no curvature: lens region is flat")
        raise ValueError(f"need at least 16 samples above the lens baseline, found {n}")
    x, y, z = x[sel], y[sel], h[sel]
    params = _fit_cap(x, y, z)
    dev = z - _cap(params, x, y)[0]
    x0, y0, z0, R = (float(p) for p in params)
    rms = float(np.sqrt(np.mean(dev**2)))
    return SphereFit((x0, y0, z0 - R), R, rms, max(float(np.max(np.abs(dev))), rms), n)


def roughness_ra(profile: SurfaceProfile, window: Rect) -> RoughnessReport:
    """Ra in nm: mean |height - least-squares mean plane| over the window."""
    x0, y0, x1, y1 = profile.extent
    if window.x0 < x0 or window.y0 < y0 or window.x1 > x1 or window.y1 > y1:
        raise ValueError("roughness window extends outside the profile domain")
    X, Y = _grid_coords(profile)
    sel = (X >= window.x0) & (X <= window.x1) & (Y >= window.y0) & (Y <= window.y1)
    n = int(sel.sum())
    if n < 4:
        raise ValueError(f"roughness window holds {n} samples; need at least 4")
    x, y, z = X[sel], Y[sel], profile.height[sel]
    x = x - x.mean()
    y = y - y.mean()
    zc = z - z.mean()
    A = np.column_stack([np.ones_like(x), x, y])
    coef, *_ = np.linalg.lstsq(A, zc, rcond=None)
    ra_um = float(np.mean(np.abs(zc - A @ coef)))
    return RoughnessReport(ra_um * 1000.0, window, n)


def lens_regime(values: np.ndarray, edge: np.ndarray, film: float, thresholds: Thresholds = Thresholds()):
    """Classify one lens from its interior and boundary heights.

    Returns (regime, sag, plateau_fraction, modulation_depth, peak, edge_min).
    """
    peak = float(values.max())
    edge_min = float(edge.min())
    sag = max(peak - float(edge.mean()), 0.0)
    plateau = float(np.mean(values >= (1.0 - thresholds.plateau_tolerance) * film)) if film > 0 else 0.0
    modulation = min(max((peak - edge_min) / peak, 0.0), 1.0) if peak > 0 else 0.0
    if plateau > thresholds.plateau:
        regime = Regime.FLAT_TOP
    elif modulation < thresholds.modulation or sag < thresholds.sag:
        regime = Regime.BLURRED
    else:
        regime = Regime.CONVEX
    return regime, sag, plateau, modulation, peak, edge_min


class LensSampler:
    """Per-lens sample sets for one layout on one grid geometry.

    Built once and reused across many height maps of the same shape, which
    keeps calibration loops cheap.
    """

    def __init__(self, layout: MaskLayout, shape: tuple[int, int], pitch: float, origin=(0.0, 0.0)):
        self.layout = layout
        self.shape = tuple(shape)
        self.pitch = pitch
        self.origin = tuple(origin)
        ref = SurfaceProfile(np.zeros(shape), pitch, origin)
        X, Y = _grid_coords(ref)
        x0, y0, x1, y1 = ref.extent
        self.inside: list[np.ndarray | None] = []
        self.boundary: list[np.ndarray | None] = []
        for i, ap in enumerate(layout.apertures):
            bx0, by0, bx1, by1 = ap.bounds()
            if bx1 < x0 or by1 < y0 or bx0 > x1 or by0 > y1:
                self.inside.append(None)
                self.boundary.append(None)
                continue
            c0 = max(int((bx0 - x0) / pitch) - 1, 0)
            c1 = min(int((bx1 - x0) / pitch) + 2, shape[1])
            r0 = max(int((by0 - y0) / pitch) - 1, 0)
            r1 = min(int((by1 - y0) / pitch) + 2, shape[0])
            sub = _points_in_polygon(X[r0:r1, c0:c1], Y[r0:r1, c0:c1], ap)
            rows, cols = np.nonzero(sub)
            flat = (rows + r0) * shape[1] + (cols + c0)
            self.inside.append(flat if flat.size else None)
            b = _boundary_points(ap, pitch / 2)
            b[:, 0] = np.clip(b[:, 0], x0, x1)
            b[:, 1] = np.clip(b[:, 1], y0, y1)
            self.boundary.append(np.vstack([(b[:, 1] - y0) / pitch - 0.5, (b[:, 0] - x0) / pitch - 0.5]))

    def measure(self, profile: SurfaceProfile, thresholds: Thresholds = Thresholds(), fit: bool = True,
                interior_only: bool = False) -> list[LensMetrics]:
        if profile.height.shape != self.shape:
            raise ValueError("profile does not match the sampler grid")
        h = profile.height
        flat = h.ravel()
        film = profile.film_thickness if profile.film_thickness is not None else float(h.max())
        out = []
        for i, ap in enumerate(self.layout.apertures):
            if interior_only and self.layout.touches_boundary(i):
                continue
            idx = self.inside[i]
            if idx is None:
                log.warning("lens %d has no samples on the profile grid; skipped", i)
                continue
            vals = flat[idx]
            edge = ndimage.map_coordinates(h, self.boundary[i], order=1, mode="nearest")
            regime, sag, plateau, modulation, peak, edge_min = lens_regime(vals, edge, film, thresholds)
            sphere = None
            if fit:
                ny_, nx_ = self.shape
                xs = self.origin[0] + (idx % nx_ + 0.5) * self.pitch
                ys = self.origin[1] + (idx // nx_ + 0.5) * self.pitch
                try:
                    sphere = _sphere_from_samples(xs, ys, vals, float(edge.mean()))
                except ValueError:
                    sphere = None
            out.append(LensMetrics(i, sag, sphere, regime, plateau, modulation, peak, edge_min))
        return out


def classify_regime(profile: SurfaceProfile, layout: MaskLayout, thresholds: Thresholds = Thresholds(),
                    fit: bool = True) -> list[LensMetrics]:
    """Per-lens metrics and regime labels, ordered by lens id."""
    sampler = LensSampler(layout, profile.height.shape, profile.pitch, profile.origin)
    return sampler.measure(profile, thresholds, fit=fit)


def realized_fill_factor(profile: SurfaceProfile, layout: MaskLayout, min_sag: float,
                         metrics: list[LensMetrics] | None = None) -> float:
    """Region fraction covered by lenses whose sag exceeds ``min_sag``."""
    if metrics is None:
        metrics = classify_regime(profile, layout, fit=False)
    area = sum(layout.apertures[m.lens_id].clipped_area(layout.region) for m in metrics if m.sag > min_sag)
    return min(area / layout.region.area, 1.0)
