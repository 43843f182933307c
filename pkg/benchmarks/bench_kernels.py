"""Compiled vs pure-numpy kernels on representative inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N wall time for each backend
and the speed-up. Both backends are checked to agree before timing.
"""

import argparse
import time

import numpy as np

from proxlitho import kernels
from proxlitho.layout import Lattice, Rect, generate_gapless_array, rasterize
from proxlitho.recipe import default_recipe


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases():
    r = default_recipe()
    layout = generate_gapless_array(r.layout.lattice, r.layout.circumradius, r.layout.region)
    hexes = generate_gapless_array(Lattice.HEX_GAPLESS, 12.0, Rect(0, 0, 600, 600))
    rng = np.random.default_rng(1)
    field = np.zeros((48, 48), complex)
    field[12:36, 12:36] = rng.uniform(0, 1, (24, 24))

    def raster(lay, pitch, ss):
        return lambda: rasterize(lay, pitch, ss).values

    return [
        ("coverage: shipped array, 0.5 um, ss 4", raster(layout, 0.5, 4)),
        ("coverage: 3000 hexagons, 0.5 um, ss 2", raster(hexes, 0.5, 2)),
        ("rs_direct: 48x48 field, 576 sources", lambda: kernels.rs_direct(field, 0.5, 0.4, 200.0)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels._compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    before = kernels.BACKEND
    print(f"{'kernel':42s} {'compiled s':>11s} {'python s':>11s} {'speed-up':>9s}")
    try:
        for name, fn in cases():
            kernels.use_backend("compiled")
            ref = fn()
            tc = best_of(fn, args.repeat)
            kernels.use_backend("python")
            assert np.allclose(fn(), ref, rtol=1e-12, atol=1e-15), name
            tp = best_of(fn, args.repeat)
            print(f"{name:42s} {tc:11.4f} {tp:11.4f} {tp / tc:8.1f}x")
    finally:
        kernels.use_backend(before)


if __name__ == "__main__":
    main()
