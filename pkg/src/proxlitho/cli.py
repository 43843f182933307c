"""Command-line interface.

Exit status: 0 on success, 1 on usage errors, 2 when a run fails. Data go
to files under ``--out`` (or to standard output when it is not given);
diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .gridio import Grid, GridFormatError, atomic_write, fmt, read_grid, write_grid, write_table
from .harness import CalibrationSpec, build_layout, calibrate, config_from_recipe, run_sweep
from .layout import ApertureSpec, Lattice, MaskLayout, Rect, Shape, TransmissionGrid, rasterize, read_layout, write_layout
from .metrology import LensSampler, cross_section
from .optics import aerial_image
from .recipe import SHIPPED_RECIPES, ProcessRecipe, RecipeError, calibrated_recipe, default_recipe, format_recipe, load_recipe
from .resist import SurfaceProfile, accumulate_dose, develop

__all__ = ["main", "PRESET_ENV"]

log = logging.getLogger("proxlitho")

PRESET_ENV = "PROXLITHO_PRESET"
METRIC_COLUMNS = ["lens_id", "sag_um", "roc_um", "rms_dev_um", "plateau_fraction", "modulation_depth", "regime"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--recipe", help="process recipe file, or 'default' / 'calibrated' for a shipped one "
                                   "(default: default)")
    g.add_argument("--out", help="output directory (default: write to standard output)")
    g.add_argument("--threads", type=int, default=1, help="worker threads for per-gap work (default 1)")
    g.add_argument("--preset", choices=("smoke", "full"), default=None,
                   help=f"grid preset: smoke = coarse pitch, full = recipe pitch (default: ${PRESET_ENV} or full)")
    g.add_argument("--strict", action="store_true", help="reject unknown recipe keys instead of warning")

    p = _Parser(prog="proxlitho", description="UV proximity-printing simulator for microlens arrays.",
                parents=[common])
    p.add_argument("--version", action="version", version=f"proxlitho {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    s = sub.add_parser("layout", parents=[common], help="generate the aperture layout")
    s.add_argument("--count", action="store_true", help="print only the number of apertures")
    sub.add_parser("rasterize", parents=[common], help="write the mask transmission grid")
    s = sub.add_parser("image", parents=[common], help="aerial image at one gap")
    s.add_argument("--gap", type=float, required=True, help="proximity gap in um")
    s = sub.add_parser("simulate", parents=[common], help="developed profile and lens metrics at one gap")
    s.add_argument("--gap", type=float, required=True, help="proximity gap in um")
    sub.add_parser("sweep", parents=[common], help="run every gap in the recipe")
    s = sub.add_parser("calibrate", parents=[common], help="fit resist parameters to the regime sequence")
    s.add_argument("--budget", type=int, default=3000, help="maximum objective evaluations")
    s = sub.add_parser("metrics", parents=[common], help="per-lens metrics of a height grid")
    s.add_argument("--in", dest="input", required=True, help="height grid file")
    s.add_argument("--layout", help="layout file (default: the recipe layout if --recipe is given, "
                                    "else one square lens filling the grid)")
    s = sub.add_parser("section", parents=[common], help="cross-section of a height grid")
    s.add_argument("--in", dest="input", required=True, help="height grid file")
    s.add_argument("--from", dest="start", type=float, nargs=2, required=True, metavar=("X", "Y"))
    s.add_argument("--to", dest="end", type=float, nargs=2, required=True, metavar=("X", "Y"))
    s.add_argument("--samples", type=int, default=201)
    return p


def _recipe(args) -> ProcessRecipe:
    name = args.recipe or "default"
    if name in SHIPPED_RECIPES and not os.path.exists(name):
        return default_recipe(args.strict) if name == "default" else calibrated_recipe(args.strict)
    return load_recipe(name, strict=args.strict)


def _preset(args) -> str:
    preset = args.preset or os.environ.get(PRESET_ENV, "full")
    if preset not in ("smoke", "full"):
        raise UsageError(f"{PRESET_ENV} must be 'smoke' or 'full', got {preset!r}")
    return preset


def _emit(args, name: str, text: str) -> None:
    if args.out:
        atomic_write(Path(args.out) / name, text)
    else:
        sys.stdout.write(text)


def _grid_text(grid: Grid) -> str:
    buf = io.StringIO()
    write_grid(buf, grid)
    return buf.getvalue()


def _mask(recipe: ProcessRecipe, pitch: float) -> tuple[MaskLayout, TransmissionGrid]:
    layout = build_layout(recipe.layout)
    sim = recipe.simulation
    return layout, rasterize(layout, pitch, sim.supersampling, line_width=recipe.layout.line_width, margin=sim.margin)


def _metrics_text(metrics) -> str:
    rows = []
    for m in metrics:
        roc = m.sphere.radius_of_curvature if m.sphere else float("nan")
        rms = m.sphere.rms_deviation if m.sphere else float("nan")
        rows.append([m.lens_id, float(m.sag), float(roc), float(rms), float(m.plateau_fraction),
                     float(m.modulation_depth), m.regime.value])
    buf = io.StringIO()
    write_table(buf, METRIC_COLUMNS, rows)
    return buf.getvalue()


def _single_lens(grid: Grid) -> MaskLayout:
    ny, nx = grid.values.shape
    x0, y0 = grid.origin
    w, h = nx * grid.pitch, ny * grid.pitch
    side = min(w, h) - grid.pitch
    ap = ApertureSpec(Shape.SQUARE, side / np.sqrt(2.0), (x0 + w / 2, y0 + h / 2))
    return MaskLayout([ap], Rect(x0, y0, x0 + w, y0 + h), Lattice.SQUARE_GAPLESS, ap.circumradius)


def _run(args) -> int:
    cmd = args.command
    if cmd in ("metrics", "section"):
        grid = read_grid(args.input, expect="height")
        profile = SurfaceProfile(grid.values, grid.pitch, grid.origin)
        if cmd == "section":
            sec = cross_section(profile, tuple(args.start), tuple(args.end), args.samples)
            buf = io.StringIO()
            write_table(buf, ["s_um", "height_um"], [[float(a), float(b)] for a, b in sec])
            _emit(args, "section.tsv", buf.getvalue())
            return 0
        recipe = _recipe(args) if args.recipe else None
        if args.layout:
            with open(args.layout, encoding="utf-8") as fh:
                layout = read_layout(fh)
        elif recipe:
            layout = build_layout(recipe.layout)
        else:
            layout = _single_lens(grid)
        sampler = LensSampler(layout, grid.values.shape, grid.pitch, grid.origin)
        if recipe:
            profile = SurfaceProfile(grid.values, grid.pitch, grid.origin, recipe.resist.film_thickness)
            metrics = sampler.measure(profile, recipe.thresholds)
        else:
            metrics = sampler.measure(profile)
        _emit(args, "metrics.tsv", _metrics_text(metrics))
        return 0

    recipe = _recipe(args)
    preset = _preset(args)
    pitch = recipe.simulation.grid_pitch if preset == "full" else recipe.simulation.smoke_pitch
    if cmd == "layout":
        layout = build_layout(recipe.layout)
        if args.count:
            _emit(args, "count.txt", f"{len(layout)}\n")
        else:
            buf = io.StringIO()
            write_layout(layout, buf)
            _emit(args, "layout.txt", buf.getvalue())
        return 0
    if cmd == "rasterize":
        _, mask = _mask(recipe, pitch)
        _emit(args, "mask.grid", _grid_text(Grid("transmission", mask.values, mask.pitch, mask.origin)))
        return 0
    if cmd in ("image", "simulate"):
        if args.gap < 0:
            raise ValueError("gap must be non-negative")
        layout, mask = _mask(recipe, pitch)
        image = aerial_image(mask, recipe.source, args.gap, padding=recipe.simulation.padding)
        if cmd == "image":
            _emit(args, f"intensity_{fmt(args.gap)}um.grid",
                  _grid_text(Grid("intensity", image.intensity, image.pitch, image.origin, args.gap)))
            return 0
        profile = develop(accumulate_dose(image, recipe.source, recipe.resist), recipe.resist)
        metrics = LensSampler(layout, mask.shape, mask.pitch, mask.origin).measure(profile, recipe.thresholds)
        _emit(args, f"height_{fmt(args.gap)}um.grid",
              _grid_text(Grid("height", profile.height, profile.pitch, profile.origin, args.gap)))
        if args.out:
            _emit(args, f"metrics_{fmt(args.gap)}um.tsv", _metrics_text(metrics))
        else:
            sys.stderr.write(_metrics_text(metrics))
        return 0
    if cmd == "sweep":
        if not args.out:
            raise UsageError("sweep needs --out for its per-gap grids")
        result = run_sweep(config_from_recipe(recipe, preset, args.out, args.threads))
        failed = [r.gap for r in result.records if r.error]
        if failed:
            log.error("gaps failed: %s", ", ".join(fmt(g) for g in failed))
            return 2
        return 0
    if cmd == "calibrate":
        config = config_from_recipe(recipe, preset, args.out, args.threads)
        result = calibrate(CalibrationSpec.default(budget=args.budget), config)
        calibrated = ProcessRecipe(recipe.layout, recipe.source, result.recipe, recipe.simulation, recipe.gaps,
                                   recipe.thresholds)
        if args.out:
            atomic_write(Path(args.out) / "calibrated.recipe", format_recipe(calibrated))
        else:
            sys.stdout.write(result.report())
        return 0 if result.calibrated else 2
    raise UsageError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="proxlitho: %(levelname)s: %(message)s", stream=sys.stderr)
    parser = _parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return _run(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (RecipeError, GridFormatError, ValueError, OSError) as exc:
        print(f"proxlitho: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
