"""Gap sweeps, resist calibration and packing comparisons.

A sweep runs the full mask -> aerial image -> dose -> profile -> metrology
chain at each proximity gap. Calibration searches the resist parameters
for a recipe whose per-gap regime labels match a target sequence.
"""

from __future__ import annotations

import concurrent.futures as cf
import hashlib
import io
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .gridio import Grid, atomic_write, fmt, write_grid, write_table
from .layout import (
    ApertureSpec,
    Footprint,
    Inclusion,
    Lattice,
    MaskLayout,
    Rect,
    Shape,
    fill_factor,
    generate_gapless_array,
    lattice_fill_factor,
    rasterize,
)
from .metrology import LensMetrics, LensSampler, Regime, Thresholds, lens_regime
from .optics import AerialImage, SourceSpec, aerial_image, edge_spread_width
from .recipe import LayoutParams, ProcessRecipe
from .resist import ResistRecipe, accumulate_dose, develop, response

__all__ = [
    "REFERENCE_GAPS",
    "REFERENCE_LABELS",
    "SweepConfig",
    "GapRecord",
    "SweepResult",
    "CalibrationSpec",
    "CalibrationResult",
    "build_layout",
    "config_from_recipe",
    "run_sweep",
    "calibrate",
    "labels_for",
    "packing_study",
    "triangle_edge_spread",
]

log = logging.getLogger(__name__)

REFERENCE_GAPS = (120.0, 240.0, 360.0, 480.0, 600.0, 720.0, 840.0, 960.0)
REFERENCE_LABELS = (Regime.FLAT_TOP,) + (Regime.CONVEX,) * 6 + (Regime.BLURRED,)
CALIBRATED = ("dose_threshold", "dose_saturation", "contrast_gamma", "blur_sigma")


@dataclass(frozen=True)
class SweepConfig:
    """Everything that determines a sweep's numbers.

    ``output_dir`` and ``threads`` affect where and how fast results are
    produced, never what they are, so they are left out of the hash.
    """

    gaps: tuple[float, ...]
    recipe: ResistRecipe
    layout: LayoutParams
    source: SourceSpec
    grid_pitch: float
    supersampling: int = 4
    margin: float = 0.0
    padding: str = "auto"
    thresholds: Thresholds = Thresholds()
    output_dir: str | None = None
    threads: int = 1

    def __post_init__(self):
        gaps = tuple(float(g) for g in self.gaps)
        object.__setattr__(self, "gaps", gaps)
        if not gaps:
            raise ValueError("gap list is empty")
        if any(g < 0 for g in gaps) or any(b <= a for a, b in zip(gaps, gaps[1:])):
            raise ValueError("gaps must be non-negative and strictly increasing")
        if not self.grid_pitch > 0:
            raise ValueError("grid pitch must be positive")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    def canonical(self) -> str:
        """Stable JSON echo of the hashed fields."""

        def clean(v):
            if isinstance(v, (float, np.floating)):
                return repr(float(v))
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if hasattr(v, "value"):
                return v.value
            return v

        body = {
            "gaps": self.gaps,
            "recipe": asdict(self.recipe),
            "layout": asdict(self.layout),
            "source": asdict(self.source),
            "grid_pitch": self.grid_pitch,
            "supersampling": self.supersampling,
            "margin": self.margin,
            "padding": self.padding,
            "thresholds": asdict(self.thresholds),
        }
        return json.dumps(clean(body), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def config_from_recipe(recipe: ProcessRecipe, preset: str = "full", output_dir=None, threads: int = 1) -> SweepConfig:
    if preset not in ("full", "smoke"):
        raise ValueError(f"unknown preset {preset!r}; expected full or smoke")
    sim = recipe.simulation
    return SweepConfig(
        gaps=recipe.gaps,
        recipe=recipe.resist,
        layout=recipe.layout,
        source=recipe.source,
        grid_pitch=sim.grid_pitch if preset == "full" else sim.smoke_pitch,
        supersampling=sim.supersampling,
        margin=sim.margin,
        padding=sim.padding,
        thresholds=recipe.thresholds,
        output_dir=None if output_dir is None else str(output_dir),
        threads=threads,
    )


def build_layout(params: LayoutParams) -> MaskLayout:
    return generate_gapless_array(params.lattice, params.circumradius, params.region, params.pitch, params.inclusion)


@dataclass(frozen=True)
class GapRecord:
    gap: float
    label: Regime | None
    histogram: dict
    mean_sag: float
    mean_roc: float
    fill_factor: float
    edge_spread: float
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    records: tuple[GapRecord, ...]
    config_hash: str
    config_echo: str

    @property
    def labels(self) -> tuple[Regime | None, ...]:
        return tuple(r.label for r in self.records)

    def summary_table(self) -> str:
        buf = io.StringIO()
        header = ["gap_um", "label", "n_flat_top", "n_convex", "n_blurred", "mean_sag_um", "mean_roc_um",
                  "fill_factor", "edge_spread_um", "error"]
        rows = []
        for r in self.records:
            h = r.histogram
            rows.append([
                r.gap, r.label.value if r.label else "-",
                h.get(Regime.FLAT_TOP, 0), h.get(Regime.CONVEX, 0), h.get(Regime.BLURRED, 0),
                r.mean_sag, r.mean_roc, r.fill_factor, r.edge_spread, r.error or "-",
            ])
        write_table(buf, header, rows, comments=[f"config_sha256 {self.config_hash}", f"config {self.config_echo}"])
        return buf.getvalue()


def _majority(regimes: Sequence[Regime]) -> Regime | None:
    if not regimes:
        return None
    c = Counter(regimes)
    return max(Regime, key=lambda r: (c[r], -list(Regime).index(r)))


def gap_label(metrics: Sequence[LensMetrics], layout: MaskLayout) -> Regime | None:
    """Majority regime of lenses clear of the region boundary.

    Lenses cut by the boundary see a dark surround no real array has;
    they are used only when no interior lens exists.
    """
    inner = [m.regime for m in metrics if not layout.touches_boundary(m.lens_id)]
    return _majority(inner or [m.regime for m in metrics])


def triangle_edge_spread(source: SourceSpec, circumradius: float, gap: float, pitch: float,
                         supersampling: int = 4) -> float:
    """10-90% edge-spread width across the base of one isolated triangle."""
    L = circumradius
    ap = ApertureSpec(Shape.TRIANGLE_UP, L, (0.0, 0.0))
    region = Rect(*ap.bounds())
    layout = MaskLayout([ap], region, Lattice.TRIANGULAR_GAPLESS, L)
    margin = 2 * L + 4 * source.blur_width(gap)
    mask = rasterize(layout, pitch, supersampling, margin=margin)
    image = aerial_image(mask, source, gap)
    return edge_spread_width(image, (0.0, -1.5 * L), (0.0, 0.0), plateau=None)


class _Pipeline:
    """Shared per-config state: layout, mask, lens sampler."""

    def __init__(self, config: SweepConfig):
        self.config = config
        self.layout = build_layout(config.layout)
        if not len(self.layout):
            raise ValueError("layout region holds no apertures")
        self.mask = rasterize(self.layout, config.grid_pitch, config.supersampling,
                              line_width=config.layout.line_width, margin=config.margin)
        self.sampler = LensSampler(self.layout, self.mask.shape, self.mask.pitch, self.mask.origin)
        self.interior = [i for i in range(len(self.layout)) if not self.layout.touches_boundary(i)]

    def image(self, gap: float) -> AerialImage:
        return aerial_image(self.mask, self.config.source, gap, padding=self.config.padding)

    def record(self, gap: float, write: bool) -> GapRecord:
        cfg = self.config
        try:
            image = self.image(gap)
            profile = develop(accumulate_dose(image, cfg.source, cfg.recipe), cfg.recipe)
            metrics = self.sampler.measure(profile, cfg.thresholds, fit=True)
            label = gap_label(metrics, self.layout)
            hist = dict(Counter(m.regime for m in metrics))
            inner = [m for m in metrics if not self.layout.touches_boundary(m.lens_id)] or metrics
            sags = [m.sag for m in inner]
            rocs = [m.sphere.radius_of_curvature for m in inner if m.sphere is not None]
            area = sum(self.layout.apertures[m.lens_id].clipped_area(self.layout.region)
                       for m in metrics if m.sag > cfg.thresholds.sag)
            spread = triangle_edge_spread(cfg.source, cfg.layout.circumradius, gap, cfg.grid_pitch, cfg.supersampling)
            if write and cfg.output_dir is not None:
                write_grid(Path(cfg.output_dir) / f"height_{fmt(gap)}um.grid",
                           Grid("height", profile.height, profile.pitch, profile.origin, gap,
                                f"config_sha256 {cfg.digest()}"))
            return GapRecord(
                gap, label, hist,
                float(np.mean(sags)) if sags else math.nan,
                float(np.mean(rocs)) if rocs else math.nan,
                min(area / self.layout.region.area, 1.0),
                spread,
            )
        except (ValueError, ArithmeticError, MemoryError) as exc:
            log.error("gap %g um failed: %s", gap, exc)
            return GapRecord(gap, None, {}, math.nan, math.nan, math.nan, math.nan, str(exc).replace("\t", " "))


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with cf.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_sweep(config: SweepConfig) -> SweepResult:
    """Simulate, measure and (optionally) write every configured gap.

    Writes one height grid per gap and ``summary.tsv`` into
    ``config.output_dir`` when it is set. Records are in gap order and do
    not depend on the thread count.
    """
    pipe = _Pipeline(config)
    records = _map(lambda g: pipe.record(g, True), list(config.gaps), config.threads)
    result = SweepResult(tuple(records), config.digest(), config.canonical())
    if config.output_dir is not None:
        atomic_write(Path(config.output_dir) / "summary.tsv", result.summary_table())
    return result


# --- calibration -----------------------------------------------------------


@dataclass(frozen=True)
class CalibrationSpec:
    """Search box, target labels and evaluation budget.

    ``bounds`` maps a subset of dose_threshold, dose_saturation,
    contrast_gamma and blur_sigma to (lower, upper). A parameter whose
    lower bound is 0 gets 0 plus a log-spaced lattice above it.
    """

    bounds: dict
    target: tuple[Regime, ...]
    budget: int = 3000
    tolerance: int = 0
    lattice_points: int = 9
    refinements: int = 6

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(Regime(t) for t in self.target))
        object.__setattr__(self, "bounds", {k: (float(lo), float(hi)) for k, (lo, hi) in self.bounds.items()})
        if not self.bounds:
            raise ValueError("no free parameters")
        for k, (lo, hi) in self.bounds.items():
            if k not in CALIBRATED:
                raise ValueError(f"{k!r} is not a calibration parameter; choose from {', '.join(CALIBRATED)}")
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"bounds for {k} must be finite with lower < upper")
            if lo < 0 or (lo == 0 and k != "blur_sigma"):
                raise ValueError(f"lower bound for {k} must be positive")
        if not self.target:
            raise ValueError("empty target")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.lattice_points < 3:
            raise ValueError("lattice needs at least 3 points")

    @classmethod
    def default(cls, target: Sequence[Regime] = REFERENCE_LABELS, **kw) -> "CalibrationSpec":
        bounds = {
            "dose_threshold": (1.0, 400.0),
            "dose_saturation": (10.0, 1000.0),
            "contrast_gamma": (0.25, 4.0),
            "blur_sigma": (0.0, 20.0),
        }
        return cls(bounds, tuple(target), **kw)

    def lattice(self, name: str) -> np.ndarray:
        lo, hi = self.bounds[name]
        n = self.lattice_points
        if lo == 0:
            return np.concatenate([[0.0], np.geomspace(hi / 2 ** (n - 2), hi, n - 1)])
        return np.geomspace(lo, hi, n)


@dataclass(frozen=True)
class CalibrationResult:
    recipe: ResistRecipe
    mismatches: int
    labels: tuple
    target: tuple
    margin: float
    evaluations: int
    calibrated: bool
    bounds: dict = field(default_factory=dict)

    def report(self) -> str:
        lines = ["# proxlitho calibration report v1", f"status {'calibrated' if self.calibrated else 'uncalibrated'}",
                 f"mismatches {self.mismatches}", f"evaluations {self.evaluations}", f"margin {fmt(self.margin)}"]
        for k in CALIBRATED:
            v = getattr(self.recipe, k)
            b = self.bounds.get(k)
            lines.append(f"param {k} {fmt(v)}" + (f" bounds {fmt(b[0])} {fmt(b[1])}" if b else " fixed"))
        lines.append("target " + " ".join(t.value for t in self.target))
        lines.append("labels " + " ".join(l.value if l else "-" for l in self.labels))
        return "\n".join(lines) + "\n"


class _LensCache:
    """Dose samples at each interior lens, for fast relabelling.

    Heights at grid samples are response(dose); boundary heights are the
    bilinear blend of the four neighbouring sample heights, exactly as
    ``LensSampler`` reads them off a developed profile.
    """

    def __init__(self, pipe: _Pipeline, doses: list[np.ndarray], sigma: float):
        self.lenses = []
        pitch = pipe.mask.pitch
        ids = pipe.interior or list(range(len(pipe.layout)))
        self.per_gap = []
        for d in doses:
            if sigma > 0:
                d = ndimage.gaussian_filter(d, sigma / pitch, mode="nearest", truncate=4.0)
            ny, nx = d.shape
            flat = d.ravel()
            lenses = []
            for i in ids:
                idx = pipe.sampler.inside[i]
                if idx is None:
                    continue
                r, c = pipe.sampler.boundary[i]
                r = np.clip(r, 0, ny - 1)
                c = np.clip(c, 0, nx - 1)
                r0 = np.minimum(np.floor(r).astype(int), ny - 2) if ny > 1 else np.zeros(len(r), int)
                c0 = np.minimum(np.floor(c).astype(int), nx - 2) if nx > 1 else np.zeros(len(c), int)
                fr, fc = r - r0, c - c0
                corners = np.stack([d[r0, c0], d[r0, c0 + 1], d[r0 + 1, c0], d[r0 + 1, c0 + 1]])
                weights = np.stack([(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc])
                lenses.append((flat[idx], corners, weights))
            self.per_gap.append(lenses)

    def evaluate(self, recipe: ResistRecipe, thresholds: Thresholds):
        """Per-gap majority labels and median (plateau, modulation, sag)."""
        labels, stats = [], []
        for lenses in self.per_gap:
            regimes, rows = [], []
            for vals, corners, weights in lenses:
                edge = (weights * response(corners, recipe)).sum(axis=0)
                regime, sag, plateau, mod, _, _ = lens_regime(response(vals, recipe), edge, recipe.film_thickness,
                                                              thresholds)
                regimes.append(regime)
                rows.append((plateau, mod, sag))
            labels.append(_majority(regimes))
            stats.append(tuple(np.median(rows, axis=0)) if rows else (0.0, 0.0, 0.0))
        return tuple(labels), stats


def _violation(target: Regime, plateau: float, modulation: float, sag: float, t: Thresholds) -> float:
    """How far a lens is from the target regime, in threshold units; 0 if it is there."""
    over = max(plateau - t.plateau, 0.0) / t.plateau
    if target is Regime.FLAT_TOP:
        return max(t.plateau - plateau, 0.0) / t.plateau
    if target is Regime.CONVEX:
        return over + max(t.modulation - modulation, 0.0) / t.modulation + max(t.sag - sag, 0.0) / t.sag
    return over + min(max(modulation - t.modulation, 0.0) / t.modulation, max(sag - t.sag, 0.0) / t.sag)


class _Objective:
    def __init__(self, pipe: _Pipeline, spec: CalibrationSpec, threads: int):
        cfg = pipe.config
        if len(spec.target) != len(cfg.gaps):
            raise ValueError(f"target has {len(spec.target)} labels for {len(cfg.gaps)} gaps")
        self.pipe, self.spec, self.cfg = pipe, spec, cfg
        unit = cfg.recipe.replace(blur_sigma=0.0)
        images = _map(pipe.image, list(cfg.gaps), threads)
        self.doses = [accumulate_dose(im, cfg.source, unit).dose for im in images]
        self.caches: dict[float, _LensCache] = {}
        self.evaluations = 0
        self.seen: dict[tuple, tuple] = {}

    def __call__(self, recipe: ResistRecipe):
        key = tuple(getattr(recipe, k) for k in CALIBRATED)
        if key in self.seen:
            return self.seen[key]
        self.evaluations += 1
        s = recipe.blur_sigma
        if s not in self.caches:
            self.caches[s] = _LensCache(self.pipe, self.doses, s)
        t = self.cfg.thresholds
        labels, stats = self.caches[s].evaluate(recipe, t)
        mismatch = sum(a != b for a, b in zip(labels, self.spec.target))
        violation = sum(_violation(want, *st, t) for got, want, st in zip(labels, self.spec.target, stats)
                        if got != want)
        convex = [i for i, g in enumerate(self.spec.target) if g is Regime.CONVEX]
        edges = {convex[0], convex[-1]} if convex else set()
        margin = min((stats[i][1] - t.modulation for i in edges), default=0.0)
        out = (mismatch, violation, margin, labels)
        self.seen[key] = out
        return out


def _make(base: ResistRecipe, values: dict) -> ResistRecipe | None:
    try:
        return base.replace(**values)
    except ValueError:
        return None  # e.g. threshold above saturation


def calibrate(spec: CalibrationSpec, config: SweepConfig) -> CalibrationResult:
    """Coordinate descent over log lattices, then local lattice refinement.

    Each step tries every lattice value of one parameter with the others
    held, keeping the best by (mismatch, violation, -margin), where the
    violation measures how far the median lens of each mislabelled gap is
    from its target regime. Ties keep the earlier lattice value, so the
    search is deterministic. Refinement rounds halve
    the log step around the incumbent. The report is written to
    ``calibration.txt`` when ``config.output_dir`` is set.
    """
    pipe = _Pipeline(config)
    obj = _Objective(pipe, spec, config.threads)
    names = [k for k in CALIBRATED if k in spec.bounds]
    lattices = {k: spec.lattice(k) for k in names}

    def key(res):
        return (res[0], res[1], -res[2])

    cur = {k: float(lattices[k][len(lattices[k]) // 2]) for k in names}
    if "dose_threshold" in cur and "dose_saturation" in cur and cur["dose_threshold"] >= cur["dose_saturation"]:
        cur["dose_threshold"] = float(lattices["dose_threshold"][0])
    best_recipe = _make(config.recipe, cur)
    if best_recipe is None:
        best_recipe = config.recipe
        cur = {k: getattr(best_recipe, k) for k in names}
    best = obj(best_recipe)

    def descend(candidates_for):
        nonlocal best, best_recipe, cur
        while obj.evaluations < spec.budget:
            improved = False
            for k in names:
                for v in candidates_for(k):
                    r = _make(config.recipe, {**cur, k: float(v)})
                    if r is None:
                        continue
                    if obj.evaluations >= spec.budget:
                        break
                    res = obj(r)
                    if key(res) < key(best):
                        best, best_recipe, cur = res, r, {**cur, k: float(v)}
                        improved = True
            if not improved:
                break

    descend(lambda k: lattices[k])
    for level in range(1, spec.refinements + 1):
        def local(k, level=level):
            lat = lattices[k]
            lo, hi = spec.bounds[k]
            v = cur[k]
            if v <= 0:
                step = lat[1] / 2**level
                return [x for x in (0.0, step, 2 * step) if lo <= x <= hi]
            ratio = (lat[-1] / lat[-2]) ** (1.0 / 2**level)
            return [x for x in (v / ratio**2, v / ratio, v, v * ratio, v * ratio**2) if lo <= x <= hi]

        descend(local)

    # final labels from the full pipeline, not the relabelling cache
    check = replace(config, recipe=best_recipe, output_dir=None)
    cpipe = _Pipeline(check)

    def full_label(g):
        im = cpipe.image(g)
        prof = develop(accumulate_dose(im, check.source, best_recipe), best_recipe)
        return gap_label(cpipe.sampler.measure(prof, check.thresholds, fit=False), cpipe.layout)

    labels = tuple(_map(full_label, list(config.gaps), config.threads))
    mismatch = sum(a != b for a, b in zip(labels, spec.target))
    result = CalibrationResult(
        best_recipe, mismatch, labels, spec.target, best[2], obj.evaluations,
        mismatch <= spec.tolerance, dict(spec.bounds),
    )
    if not result.calibrated:
        log.warning("calibration did not reach the target: %d mismatches after %d evaluations",
                    mismatch, obj.evaluations)
    if config.output_dir is not None:
        atomic_write(Path(config.output_dir) / "calibration.txt", result.report())
    return result


def labels_for(config: SweepConfig) -> tuple[Regime | None, ...]:
    """Per-gap labels of ``config.recipe`` without writing anything."""
    pipe = _Pipeline(replace(config, output_dir=None))

    def one(g):
        im = pipe.image(g)
        prof = develop(accumulate_dose(im, config.source, config.recipe), config.recipe)
        return gap_label(pipe.sampler.measure(prof, config.thresholds, fit=False), pipe.layout)

    return tuple(_map(one, list(config.gaps), config.threads))


# --- packing ---------------------------------------------------------------


def packing_study(circumradius: float, region: Rect, inclusion: Inclusion = Inclusion.FULL) -> list[dict]:
    """Lens counts and fill factors for the five layouts.

    ``region_fill`` is the lens area inside ``region`` over its area;
    ``lattice_fill`` is the infinite-lattice value.
    """
    if not circumradius > 0:
        raise ValueError("circumradius must be positive")
    rows = []
    for lat in Lattice:
        layout = generate_gapless_array(lat, circumradius, region, 0.0, inclusion)
        rows.append({
            "lattice": lat.value,
            "count": len(layout),
            "region_fill": fill_factor(layout),
            "lattice_fill": lattice_fill_factor(lat, circumradius, 0.0, Footprint.AS_APERTURE),
        })
    return rows
