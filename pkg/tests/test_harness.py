import math
from dataclasses import replace

import numpy as np
import pytest

from proxlitho.harness import (
    CalibrationSpec,
    SweepConfig,
    calibrate,
    config_from_recipe,
    labels_for,
    packing_study,
    run_sweep,
)
from proxlitho.layout import Lattice, Rect
from proxlitho.metrology import Regime
from proxlitho.optics import SourceSpec
from proxlitho.recipe import LayoutParams, default_recipe
from proxlitho.resist import ResistRecipe

RECIPE = ResistRecipe(film_thickness=35.0, exposure_time=16.0, dose_threshold=40.0, dose_saturation=200.0)
TRIANGLES = LayoutParams(Lattice.TRIANGULAR_GAPLESS, 40.0, Rect(0, 0, 210, 130), 0.0, line_width=4.0)
# 20 um squares tiling the region exactly: a binary (all-open) mask at pitch 1
SQUARES = LayoutParams(Lattice.SQUARE_GAPLESS, 10 * math.sqrt(2), Rect(0, 0, 80, 60), 0.0)


def _config(gaps, layout=TRIANGLES, recipe=RECIPE, **kw):
    return SweepConfig(gaps, recipe, layout, SourceSpec.uniform(), kw.pop("grid_pitch", 2.0), **kw)


def test_zero_gap_saturating_dose_is_all_flat_top(tmp_path):
    cfg = _config([0.0], recipe=RECIPE.replace(dose_saturation=100.0), output_dir=str(tmp_path))
    result = run_sweep(cfg)
    (rec,) = result.records
    assert rec.label is Regime.FLAT_TOP
    assert set(rec.histogram) == {Regime.FLAT_TOP}
    assert rec.error is None
    assert (tmp_path / "height_0um.grid").exists()
    assert result.config_hash == cfg.digest()
    assert result.summary_table().startswith(f"# config_sha256 {cfg.digest()}\n")


@pytest.mark.parametrize("gaps", [[], [100.0, 100.0], [200.0, 100.0], [-1.0]])
def test_invalid_gap_lists_rejected(gaps):
    with pytest.raises(ValueError):
        _config(gaps)


def test_sweep_is_deterministic_and_hash_ignores_output_location(tmp_path):
    a = run_sweep(_config([60.0, 240.0], output_dir=str(tmp_path / "a")))
    b = run_sweep(_config([60.0, 240.0], output_dir=str(tmp_path / "b"), threads=2))
    assert a.summary_table() == b.summary_table()
    assert (tmp_path / "a" / "summary.tsv").read_bytes() == (tmp_path / "b" / "summary.tsv").read_bytes()


def test_hash_tracks_every_physical_input():
    base = _config([120.0])
    changed = [
        replace(base, gaps=(121.0,)),
        replace(base, recipe=RECIPE.replace(contrast_gamma=1.5)),
        replace(base, source=SourceSpec.uniform(half_angle=1.0)),
        replace(base, grid_pitch=1.0),
        replace(base, layout=SQUARES),
    ]
    assert len({c.digest() for c in [base, *changed]}) == 6
    assert replace(base, threads=4, output_dir="x").digest() == base.digest()


def test_failing_gap_is_recorded_and_sweep_continues():
    # an absurd gap overflows the padded grid; the other gap still runs
    result = run_sweep(_config([120.0, 1e7]))
    assert result.records[0].error is None
    assert result.records[1].error and "maximum safe gap" in result.records[1].error
    assert "maximum safe gap" in result.summary_table()


def test_records_are_in_gap_order_and_spread_grows():
    result = run_sweep(_config([60.0, 240.0, 480.0]))
    assert [r.gap for r in result.records] == [60.0, 240.0, 480.0]
    spread = [r.edge_spread for r in result.records]
    assert spread == sorted(spread)


def test_single_gap_calibration_trivially_satisfiable():
    spec = CalibrationSpec.default([Regime.FLAT_TOP], budget=200)
    result = calibrate(spec, _config([60.0]))
    assert result.calibrated and result.mismatches == 0
    assert result.evaluations <= 200
    assert "status calibrated" in result.report()


def test_convex_at_zero_gap_with_binary_mask_is_infeasible(tmp_path):
    # every lens boundary is shared with a neighbour at the same height, so sag is 0
    cfg = _config([0.0], layout=SQUARES, grid_pitch=1.0, output_dir=str(tmp_path))
    result = calibrate(CalibrationSpec.default([Regime.CONVEX], budget=300), cfg)
    assert not result.calibrated
    assert result.mismatches == 1 and result.evaluations <= 300
    assert (tmp_path / "calibration.txt").read_text().splitlines()[1] == "status uncalibrated"


def test_self_consistency_on_a_small_array(rng):
    cfg = _config([60.0, 180.0, 300.0, 420.0])
    for _ in range(2):
        dt = float(np.exp(rng.uniform(np.log(10), np.log(100))))
        truth = RECIPE.replace(dose_threshold=dt, dose_saturation=dt * float(rng.uniform(1.5, 4)),
                               contrast_gamma=float(rng.uniform(0.5, 2.5)))
        target = labels_for(replace(cfg, recipe=truth))
        result = calibrate(CalibrationSpec.default(target), cfg)
        assert result.mismatches == 0, (truth, target, result.labels)


def test_calibration_spec_validation():
    with pytest.raises(ValueError, match="not a calibration parameter"):
        CalibrationSpec({"film_thickness": (1, 2)}, [Regime.CONVEX])
    with pytest.raises(ValueError):
        CalibrationSpec({"dose_threshold": (5, 1)}, [Regime.CONVEX])
    with pytest.raises(ValueError):
        CalibrationSpec.default([Regime.CONVEX], budget=0)
    with pytest.raises(ValueError, match="target has 1 labels for 2 gaps"):
        calibrate(CalibrationSpec.default([Regime.CONVEX]), _config([60.0, 120.0]))


def test_lattice_includes_zero_blur():
    lat = CalibrationSpec.default().lattice("blur_sigma")
    assert lat[0] == 0.0 and lat[-1] == 20.0 and np.all(np.diff(lat) > 0)


def test_config_from_shipped_recipe():
    r = default_recipe()
    full = config_from_recipe(r, "full")
    smoke = config_from_recipe(r, "smoke")
    assert full.grid_pitch == 0.5 and smoke.grid_pitch == 2.0
    assert full.gaps == tuple(120.0 * k for k in range(1, 9))
    with pytest.raises(ValueError):
        config_from_recipe(r, "medium")


def test_packing_study_table():
    rows = {r["lattice"]: r for r in packing_study(78.0, Rect(0, 0, 500, 500))}
    assert [rows[k]["count"] for k in ("triangular", "square", "hexagonal")] == [24, 16, 9]
    assert rows["square_round"]["lattice_fill"] == pytest.approx(math.pi / 4, rel=1e-12)
    assert rows["hex_round"]["lattice_fill"] == pytest.approx(math.pi / (2 * math.sqrt(3)), rel=1e-12)
    for k in ("triangular", "square", "hexagonal"):
        assert rows[k]["lattice_fill"] == pytest.approx(1.0, rel=1e-12)
        assert 0 < rows[k]["region_fill"] <= 1
