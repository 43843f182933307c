import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxlitho.layout import ApertureSpec, Lattice, Rect, Shape, generate_gapless_array
from proxlitho.metrology import (
    LensSampler,
    Regime,
    Thresholds,
    classify_regime,
    cross_section,
    fit_sphere,
    lens_regime,
    realized_fill_factor,
    roughness_ra,
)
from proxlitho.resist import SurfaceProfile


def cap_height(X, Y, center, R, sag):
    """Spherical cap of radius R and height sag standing on z = 0."""
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2
    return np.maximum(np.sqrt(np.maximum(R * R - r2, 0.0)) - (R - sag), 0.0)


def grid(n, pitch=1.0, origin=(0.0, 0.0)):
    x = origin[0] + (np.arange(n) + 0.5) * pitch
    y = origin[1] + (np.arange(n) + 0.5) * pitch
    return np.meshgrid(x, y)


@pytest.fixture
def cap_profile():
    X, Y = grid(200)
    return SurfaceProfile(cap_height(X, Y, (100.3, 99.1), 150.0, 20.0), 1.0)


# --- cross sections --------------------------------------------------------


def test_flat_profile_section_is_constant():
    prof = SurfaceProfile(np.full((20, 30), 3.25), 0.5)
    sec = cross_section(prof, (0.0, 0.0), (15.0, 10.0), 57)
    assert sec.shape == (57, 2)
    assert np.all(sec[:, 1] == 3.25)
    assert sec[-1, 0] == pytest.approx(math.hypot(15, 10))


def test_section_through_cap_centre_follows_arc(cap_profile):
    c = (100.3, 99.1)
    sec = cross_section(cap_profile, c, (c[0] + 70.0, c[1]), 141)
    s = sec[:, 0]
    exact = np.sqrt(150.0**2 - s**2) - 130.0
    # bilinear error is bounded by pitch^2 / 8 times the second derivative, per axis
    curv = 150.0**2 / (150.0**2 - 70.0**2) ** 1.5
    assert np.max(np.abs(sec[:, 1] - exact)) <= 2 * curv / 8


def test_section_rejects_degenerate_and_outside(cap_profile):
    with pytest.raises(ValueError, match="coincide"):
        cross_section(cap_profile, (10, 10), (10, 10))
    with pytest.raises(ValueError, match="outside"):
        cross_section(cap_profile, (10, 10), (250, 10))


@settings(max_examples=30, deadline=None)
@given(dx=st.floats(-500, 500), dy=st.floats(-500, 500))
def test_section_translation_equivariance(dx, dy):
    X, Y = grid(40)
    h = np.sin(X / 7.0) * np.cos(Y / 5.0) + 2.0
    a = cross_section(SurfaceProfile(h, 1.0), (3.0, 4.0), (31.0, 22.0), 50)
    b = cross_section(SurfaceProfile(h, 1.0, (dx, dy)), (3.0 + dx, 4.0 + dy), (31.0 + dx, 22.0 + dy), 50)
    assert np.allclose(a, b, rtol=0, atol=1e-9)


# --- sphere fit ------------------------------------------------------------


def test_exact_cap_recovered(cap_profile):
    lens = ApertureSpec(Shape.CIRCLE, 80.0, (100.0, 100.0))
    fit = fit_sphere(cap_profile, lens)
    assert fit.radius_of_curvature == pytest.approx(150.0, rel=1e-6)
    assert fit.rms_deviation < 1e-9
    assert fit.center[0] == pytest.approx(100.3, abs=1e-6)
    assert fit.center[1] == pytest.approx(99.1, abs=1e-6)
    assert fit.center[2] == pytest.approx(-130.0, abs=1e-6)
    assert fit.max_deviation >= fit.rms_deviation
    assert fit.sample_count > 16


def test_cap_with_noise_deviation_bounded(rng):
    X, Y = grid(200)
    eps = 0.05
    h = cap_height(X, Y, (100.0, 100.0), 150.0, 20.0)
    noisy = np.where(h > 0, h + rng.uniform(-eps, eps, h.shape), 0.0)
    fit = fit_sphere(SurfaceProfile(noisy, 1.0), ApertureSpec(Shape.CIRCLE, 80.0, (100.0, 100.0)))
    assert fit.rms_deviation <= eps
    assert fit.rms_deviation <= fit.max_deviation
    assert fit.radius_of_curvature == pytest.approx(150.0, rel=1e-2)


def test_triangular_lens_region():
    X, Y = grid(200)
    prof = SurfaceProfile(cap_height(X, Y, (100.0, 90.0), 120.0, 15.0), 1.0)
    tri = ApertureSpec(Shape.TRIANGLE_UP, 60.0, (100.0, 90.0))
    fit = fit_sphere(prof, tri.vertices())
    assert fit.radius_of_curvature == pytest.approx(120.0, rel=1e-6)


@pytest.mark.parametrize("tilt", [0.0, 0.3])
def test_planar_profile_rejected(tilt):
    X, Y = grid(50)
    prof = SurfaceProfile(2.0 + tilt * X - 0.1 * tilt * Y, 1.0)
    with pytest.raises(ValueError, match="no curvature"):
        fit_sphere(prof, ApertureSpec(Shape.SQUARE, 20.0, (25.0, 25.0)))


# --- roughness -------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-0.05, 0.05), c=st.floats(-0.05, 0.05))
def test_plane_has_zero_roughness(a, b, c):
    X, Y = grid(20, 0.25)
    prof = SurfaceProfile(10.0 + a + b * X + c * Y, 0.25)
    rep = roughness_ra(prof, Rect(0, 0, 5, 5))
    assert rep.ra < 1e-12 * 1e3  # nm
    assert rep.sample_count == 400


def square_wave(n, A):
    # +--+ repeated: zero mean and no correlation with x, so the mean plane is z = 0
    s = np.where((np.arange(n) + 1) % 4 < 2, A, -A)
    return np.tile(s, (n, 1))


def test_square_wave_roughness_is_amplitude():
    A = 0.00577
    prof = SurfaceProfile(square_wave(16, A) + 7.0, 0.3125)
    rep = roughness_ra(prof, Rect(0, 0, 5, 5))
    assert rep.ra == pytest.approx(A * 1e3, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-0.5, 0.5), c=st.floats(-0.5, 0.5))
def test_roughness_invariant_under_added_plane(a, b, c):
    X, Y = grid(16, 0.3125)
    base = SurfaceProfile(square_wave(16, 0.01) + np.sin(X * 3.1) * 0.002 + 5.0, 0.3125)
    shifted = SurfaceProfile(base.height + a + b * X + c * Y, 0.3125)
    w = Rect(0, 0, 5, 5)
    assert abs(roughness_ra(base, w).ra - roughness_ra(shifted, w).ra) <= 1e-12 * 1e3


def test_roughness_window_checks():
    prof = SurfaceProfile(np.zeros((10, 10)), 1.0)
    with pytest.raises(ValueError, match="outside"):
        roughness_ra(prof, Rect(5, 5, 12, 8))
    with pytest.raises(ValueError, match="at least 4"):
        roughness_ra(prof, Rect(0.1, 0.1, 0.9, 0.9))


# --- regimes ---------------------------------------------------------------


SQUARES = generate_gapless_array(Lattice.SQUARE_GAPLESS, 20 * math.sqrt(2), Rect(0, 0, 160, 160))


def lens_caps(layout, heights, R=60.0, base=10.0, n=320, pitch=0.5):
    """Caps on every lens, ``base`` high at the lens corners."""
    X, Y = grid(n, pitch)
    h = np.zeros_like(X)
    half_diag = layout.circumradius
    for ap, on in zip(layout, heights):
        inside = (np.abs(X - ap.center[0]) <= 20) & (np.abs(Y - ap.center[1]) <= 20)
        r2 = (X - ap.center[0]) ** 2 + (Y - ap.center[1]) ** 2
        cap = np.sqrt(np.maximum(R * R - r2, 0.0)) - math.sqrt(R * R - half_diag**2)
        h = np.where(inside, (base + cap) if on else 0.0, h)
    return SurfaceProfile(h, pitch, film_thickness=35.0)


def test_saturated_profile_is_all_flat_top():
    prof = SurfaceProfile(np.full((320, 320), 35.0), 0.5, film_thickness=35.0)
    metrics = classify_regime(prof, SQUARES)
    assert len(metrics) == 16
    assert all(m.regime is Regime.FLAT_TOP for m in metrics)
    assert all(m.plateau_fraction == 1.0 for m in metrics)


def test_caps_meeting_above_zero_are_all_convex():
    prof = lens_caps(SQUARES, [True] * 16)
    metrics = classify_regime(prof, SQUARES)
    assert [m.lens_id for m in metrics] == list(range(16))
    assert all(m.regime is Regime.CONVEX for m in metrics)
    assert all(m.edge_min >= 10.0 - 1e-9 for m in metrics)
    for m in metrics:
        assert m.sphere is not None and m.sphere.radius_of_curvature == pytest.approx(60.0, rel=1e-3)
        assert 0 <= m.plateau_fraction <= 1 and 0 <= m.modulation_depth <= 1


def test_low_mound_is_blurred():
    X, Y = grid(320, 0.5)
    h = 10.0 + 0.1 * np.cos(X * 2 * np.pi / 40) * np.cos(Y * 2 * np.pi / 40)
    metrics = classify_regime(SurfaceProfile(h, 0.5, film_thickness=35.0), SQUARES)
    assert all(m.regime is Regime.BLURRED for m in metrics)
    assert all(m.modulation_depth < 0.05 for m in metrics)


def test_regime_thresholds_order():
    t = Thresholds()
    flat = np.full(100, 35.0)
    assert lens_regime(flat, np.zeros(10), 35.0, t)[0] is Regime.FLAT_TOP
    low = np.linspace(0, 0.5, 100)
    assert lens_regime(low, np.zeros(10), 35.0, t)[0] is Regime.BLURRED  # sag below 1 um
    mound = np.linspace(0, 5, 100)
    assert lens_regime(mound, np.zeros(10), 35.0, t)[0] is Regime.CONVEX


@settings(max_examples=50, deadline=None)
@given(
    vals=st.lists(st.floats(0, 35), min_size=1, max_size=40),
    edge=st.lists(st.floats(0, 35), min_size=1, max_size=10),
)
def test_every_lens_gets_exactly_one_label(vals, edge):
    regime, sag, plateau, mod, _, _ = lens_regime(np.array(vals), np.array(edge), 35.0)
    assert regime in set(Regime)
    assert sag >= 0 and 0 <= plateau <= 1 and 0 <= mod <= 1


def test_lens_without_samples_is_skipped(caplog):
    layout = generate_gapless_array(Lattice.SQUARE_GAPLESS, 20 * math.sqrt(2), Rect(0, 0, 160, 160))
    prof = SurfaceProfile(np.ones((40, 40)), 1.0)  # covers only the lower-left 40 x 40 um
    metrics = classify_regime(prof, layout, fit=False)
    assert [m.lens_id for m in metrics] == [0]
    assert "no samples" in caplog.text


def test_sampler_matches_fit_sphere():
    prof = lens_caps(SQUARES, [True] * 16)
    sampler = LensSampler(SQUARES, prof.height.shape, prof.pitch, prof.origin)
    m = sampler.measure(prof)[5]
    direct = fit_sphere(prof, SQUARES.apertures[5])
    assert m.sphere.radius_of_curvature == pytest.approx(direct.radius_of_curvature, rel=1e-9)


# --- realized fill factor --------------------------------------------------


def test_all_lenses_formed_fill_whole_region():
    assert realized_fill_factor(lens_caps(SQUARES, [True] * 16), SQUARES, 1.0) == 1.0


def test_zero_profile_fills_nothing():
    prof = SurfaceProfile(np.zeros((320, 320)), 0.5, film_thickness=35.0)
    assert realized_fill_factor(prof, SQUARES, 1.0) == 0.0


def test_half_the_lenses_formed_is_half():
    on = [ap.center[0] < 80 for ap in SQUARES]
    assert sum(on) == 8
    assert realized_fill_factor(lens_caps(SQUARES, on, base=0.0), SQUARES, 1.0) == pytest.approx(0.5, abs=1e-12)
