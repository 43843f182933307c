import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.ops import unary_union

from proxlitho.layout import (
    ApertureSpec,
    Footprint,
    Inclusion,
    Lattice,
    MaskLayout,
    Rect,
    Shape,
    circle_rect_area,
    count_lenses,
    fill_factor,
    generate_gapless_array,
    lattice_fill_factor,
    lattice_period,
    rasterize,
    read_layout,
    write_layout,
)

SQUARE_500 = Rect(0, 0, 500, 500)
POLYGONAL = (Lattice.TRIANGULAR_GAPLESS, Lattice.SQUARE_GAPLESS, Lattice.HEX_GAPLESS)


# --- generation ------------------------------------------------------------


@pytest.mark.parametrize(
    "inclusion, counts",
    [(Inclusion.FULL, (24, 16, 9)), (Inclusion.CENTROID, (32, 25, 16))],
)
def test_counts_per_inclusion_rule(inclusion, counts):
    got = tuple(len(generate_gapless_array(lat, 78, SQUARE_500, 0, inclusion)) for lat in POLYGONAL)
    assert got == counts
    assert got[0] > got[1] > got[2]


def test_region_smaller_than_one_triangle_is_empty():
    layout = generate_gapless_array(Lattice.TRIANGULAR_GAPLESS, 80, Rect(0, 0, 100, 100))
    assert len(layout) == 0
    assert count_lenses(layout) == 0
    assert fill_factor(layout) == 0.0


def test_invalid_shape_for_lattice_rejected():
    with pytest.raises(ValueError, match="cannot be placed"):
        generate_gapless_array(Lattice.SQUARE_GAPLESS, 10, SQUARE_500, shape=Shape.HEXAGON)
    with pytest.raises(ValueError):
        generate_gapless_array(Lattice.TRIANGULAR_GAPLESS, -1, SQUARE_500)


def test_triangles_alternate_within_rows():
    layout = generate_gapless_array(Lattice.TRIANGULAR_GAPLESS, 80, Rect(0, 0, 700, 500))
    rows: dict[float, list[ApertureSpec]] = {}
    for ap in layout:
        base = round(ap.bounds()[1], 6)
        rows.setdefault(base, []).append(ap)
    assert len(rows) >= 2
    for aps in rows.values():
        aps.sort(key=lambda a: a.center[0])
        shapes = [a.shape for a in aps]
        assert all(a != b for a, b in zip(shapes, shapes[1:]))
        steps = np.diff([a.center[0] for a in aps])
        assert np.allclose(steps, 80 * math.sqrt(3) / 2)


def test_full_inclusion_keeps_apertures_inside():
    region = Rect(10, -5, 610, 455)
    for lat in Lattice:
        for ap in generate_gapless_array(lat, 37, region):
            x0, y0, x1, y1 = ap.bounds()
            assert x0 >= region.x0 - 1e-9 and y0 >= region.y0 - 1e-9
            assert x1 <= region.x1 + 1e-9 and y1 <= region.y1 + 1e-9


def test_first_row_rests_on_lower_edge():
    region = Rect(3, 7, 503, 507)
    for lat in Lattice:
        layout = generate_gapless_array(lat, 40, region)
        assert min(ap.bounds()[1] for ap in layout) == pytest.approx(region.y0, abs=1e-9)


def test_pitch_separates_neighbours():
    layout = generate_gapless_array(Lattice.SQUARE_GAPLESS, 10 * math.sqrt(2), Rect(0, 0, 100, 100), pitch=5)
    xs = sorted({round(ap.center[0], 9) for ap in layout})
    assert np.allclose(np.diff(xs), 25)


@pytest.mark.parametrize("lattice", POLYGONAL)
def test_tiling_is_exact(lattice):
    layout = generate_gapless_array(lattice, 41.3, Rect(0, 0, 600, 480))
    polys = [ap.to_shapely() for ap in layout]
    total = sum(p.area for p in polys)
    union = unary_union(polys).area
    assert abs(total - union) <= 1e-9 * total


@settings(max_examples=40, deadline=None)
@given(R=st.floats(5, 60), w=st.floats(6.5, 20), h=st.floats(6.5, 20))
def test_packing_order_full_inclusion(R, w, h):
    # regions under ~6 circumradii on a side can hold a row of squares
    # where a row of whole triangles does not fit (e.g. 6 R x 5.75 R)
    region = Rect(0, 0, w * R, h * R)
    n = [len(generate_gapless_array(lat, R, region, 0, Inclusion.FULL)) for lat in POLYGONAL]
    assert n[0] >= n[1] >= n[2]


@settings(max_examples=40, deadline=None)
@given(R=st.floats(5, 60), w=st.floats(4, 20), h=st.floats(4, 20))
def test_packing_order_centroid_inclusion(R, w, h):
    region = Rect(0, 0, w * R, h * R)
    n = [len(generate_gapless_array(lat, R, region, 0, Inclusion.CENTROID)) for lat in POLYGONAL]
    assert n[0] >= n[1] >= n[2]


# --- fill factor -----------------------------------------------------------


@pytest.mark.parametrize("lattice", POLYGONAL)
def test_gapless_tiling_fills_commensurate_region(lattice):
    pw, ph = lattice_period(lattice, 30.0)
    layout = generate_gapless_array(lattice, 30.0, Rect(0, 0, 3 * pw, 3 * ph), 0, Inclusion.OVERLAP)
    assert fill_factor(layout, Footprint.AS_APERTURE) == pytest.approx(1.0, abs=1e-12)


def test_square_tiling_fill_factor_is_one_exactly():
    layout = generate_gapless_array(Lattice.SQUARE_GAPLESS, 25 * math.sqrt(2), Rect(0, 0, 200, 150))
    assert len(layout) == 12
    assert fill_factor(layout) == 1.0


def test_round_lens_lattice_fill_factors():
    assert lattice_fill_factor(Lattice.SQUARE_LATTICE, 78.0) == pytest.approx(math.pi / 4, rel=1e-12)
    assert lattice_fill_factor(Lattice.HEX_LATTICE, 78.0) == pytest.approx(math.pi / (2 * math.sqrt(3)), rel=1e-12)


def test_inscribed_circle_footprint_of_squares_is_pi_over_four():
    assert lattice_fill_factor(Lattice.SQUARE_GAPLESS, 20.0, lens_footprint="inscribed_circle") == pytest.approx(
        math.pi / 4, rel=1e-12
    )


@settings(max_examples=60, deadline=None)
@given(
    cx=st.floats(-20, 120), cy=st.floats(-20, 120), r=st.floats(0.5, 60),
)
def test_circle_rect_area_matches_polygon_clip(cx, cy, r):
    from shapely.geometry import Point, box

    rect = Rect(0, 0, 100, 80)
    ref = Point(cx, cy).buffer(r, quad_segs=2048).intersection(box(0, 0, 100, 80)).area
    # the inscribed 8192-gon misses at most (2 pi / n)^2 / 6 ~ 1e-7 of the disk,
    # wherever the clip falls, so the bound scales with the disk, not the clip
    assert abs(circle_rect_area(cx, cy, r, rect) - ref) <= 1e-7 * math.pi * r * r


# --- rasterization ---------------------------------------------------------


def test_aperture_covering_region_is_fully_open():
    ap = ApertureSpec(Shape.SQUARE, 50 * math.sqrt(2), (50, 50))
    grid = rasterize(MaskLayout([ap], Rect(0, 0, 100, 100), Lattice.SQUARE_GAPLESS, ap.circumradius), 1.0)
    assert grid.shape == (100, 100)
    assert np.all(grid.values == 1.0)


def test_empty_layout_is_opaque():
    layout = generate_gapless_array(Lattice.TRIANGULAR_GAPLESS, 80, Rect(0, 0, 50, 50))
    grid = rasterize(layout, 1.0)
    assert np.all(grid.values == 0.0)


@pytest.mark.parametrize("ss", [1, 2, 4, 8])
def test_half_plane_boundary_column(ss, backend):
    # a square so large that only its left edge (x = 10.5) crosses the grid
    big = 1e4
    ap = ApertureSpec(Shape.SQUARE, big / math.sqrt(2), (10.5 + big / 2, 20.0))
    layout = MaskLayout([ap], Rect(0, 0, 40, 40), Lattice.SQUARE_GAPLESS, ap.circumradius)
    v = rasterize(layout, 1.0, ss).values
    assert np.all(v[:, :10] == 0.0)
    assert np.all(v[:, 11:] == 1.0)
    assert np.all(np.abs(v[:, 10] - 0.5) <= 1.0 / ss**2)


def test_under_resolved_pitch_states_required_pitch():
    layout = generate_gapless_array(Lattice.TRIANGULAR_GAPLESS, 10, Rect(0, 0, 100, 100))
    with pytest.raises(ValueError, match=r"pitch <= 2\.16506"):
        rasterize(layout, 3.0)


def test_grid_dimensions_are_even_and_cover_margin():
    layout = generate_gapless_array(Lattice.HEX_GAPLESS, 20, Rect(0, 0, 101, 77))
    grid = rasterize(layout, 1.0, margin=5)
    assert grid.shape[0] % 2 == 0 and grid.shape[1] % 2 == 0
    assert grid.origin == (-5, -5)
    assert grid.shape[1] * grid.pitch >= 111 and grid.shape[0] * grid.pitch >= 87


def test_line_width_insets_every_aperture():
    layout = generate_gapless_array(Lattice.SQUARE_GAPLESS, 20 * math.sqrt(2), Rect(0, 0, 80, 80))
    open_area = rasterize(layout, 0.5, 4, line_width=4).values.sum() * 0.25
    assert open_area == pytest.approx(4 * 36.0**2, rel=1e-12)


def test_rasterization_error_halves_with_supersampling(rng):
    circles = [ApertureSpec(Shape.CIRCLE, rng.uniform(6, 12), tuple(rng.uniform(15, 45, 2))) for _ in range(200)]
    rms = []
    for ss in (1, 2, 4, 8, 16):
        err = []
        for c in circles:
            layout = MaskLayout([c], Rect(0, 0, 60, 60), Lattice.SQUARE_LATTICE, c.circumradius)
            err.append((rasterize(layout, 1.0, ss).values.sum() - c.area) / c.area)
        rms.append(math.sqrt(np.mean(np.square(err))))
    for coarse, fine in zip(rms, rms[1:]):
        assert fine <= 0.5 * coarse


def test_rasterized_area_matches_union_area():
    layout = generate_gapless_array(Lattice.HEX_LATTICE, 23.3, Rect(0, 0, 300, 250))
    grid = rasterize(layout, 0.5, 8)
    union = sum(ap.area for ap in layout)
    assert grid.values.sum() * 0.25 == pytest.approx(union, rel=2e-4)


# --- counting and export ---------------------------------------------------


def test_count_single_aperture():
    ap = ApertureSpec(Shape.HEXAGON, 10, (20, 20))
    assert count_lenses(MaskLayout([ap], Rect(0, 0, 40, 40), Lattice.HEX_GAPLESS, 10)) == 1


@pytest.mark.parametrize("lattice", list(Lattice))
def test_layout_text_round_trip(lattice):
    layout = generate_gapless_array(lattice, 31.7, Rect(1.5, -2.25, 301.5, 197.75), 0.3, Inclusion.CENTROID)
    buf = io.StringIO()
    write_layout(layout, buf)
    again = read_layout(io.StringIO(buf.getvalue()))
    assert again == layout


def test_layout_reader_reports_line():
    text = "# proxlitho layout v1\nunit um region 0 0 10 10\nlattice square circumradius 1 pitch 0\nsquare 1 2 3 0 1 2\n"
    with pytest.raises(ValueError, match="line 4"):
        read_layout(io.StringIO(text))
