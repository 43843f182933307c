"""Simulate UV proximity printing of gapless microlens arrays.

Mask layouts are propagated across the proximity gap with the exact
angular-spectrum method, exposed into a negative resist and measured
lens by lens.
"""

__version__ = "0.1.0"

from .harness import (  # noqa: E402
    CalibrationSpec,
    SweepConfig,
    calibrate,
    config_from_recipe,
    packing_study,
    run_sweep,
)
from .layout import (  # noqa: E402
    ApertureSpec,
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
from .metrology import Regime, Thresholds, classify_regime, cross_section, fit_sphere, roughness_ra  # noqa: E402
from .optics import SampledField, SourceSpec, aerial_image, propagate, rayleigh_sommerfeld  # noqa: E402
from .recipe import format_recipe, load_recipe, parse_recipe  # noqa: E402
from .resist import ResistRecipe, accumulate_dose, develop, simulate_process  # noqa: E402
