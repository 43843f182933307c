"""Pure-numpy implementations of the hot kernels.

Signatures match the compiled ``_kernels`` module exactly.
"""

import numpy as np


def coverage(polys, nverts, circles, origin_x, origin_y, pitch, nx, ny, ss):
    """Fraction of each grid cell inside the union of convex polygons and disks.

    Each cell is point-sampled on an ``ss`` x ``ss`` sub-grid at sub-cell centres.
    Polygons are counter-clockwise; points on an edge count as inside.
    """
    sub = pitch / ss
    inside = np.zeros((ny * ss, nx * ss), dtype=bool)

    def window(xmin, ymin, xmax, ymax):
        i0 = max(int(np.floor((xmin - origin_x) / sub - 0.5)), 0)
        i1 = min(int(np.ceil((xmax - origin_x) / sub - 0.5)) + 1, nx * ss)
        j0 = max(int(np.floor((ymin - origin_y) / sub - 0.5)), 0)
        j1 = min(int(np.ceil((ymax - origin_y) / sub - 0.5)) + 1, ny * ss)
        if i1 <= i0 or j1 <= j0:
            return None
        xs = origin_x + (np.arange(i0, i1) + 0.5) * sub
        ys = origin_y + (np.arange(j0, j1) + 0.5) * sub
        return i0, i1, j0, j1, xs[None, :], ys[:, None]

    for p in range(len(nverts)):
        v = polys[p, : nverts[p]]
        w = window(v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max())
        if w is None:
            continue
        i0, i1, j0, j1, xs, ys = w
        m = np.ones((j1 - j0, i1 - i0), dtype=bool)
        n = len(v)
        for e in range(n):
            ax, ay = v[e]
            bx, by = v[(e + 1) % n]
            m &= (bx - ax) * (ys - ay) - (by - ay) * (xs - ax) >= 0
        inside[j0:j1, i0:i1] |= m

    for cx, cy, r in circles:
        w = window(cx - r, cy - r, cx + r, cy + r)
        if w is None:
            continue
        i0, i1, j0, j1, xs, ys = w
        inside[j0:j1, i0:i1] |= (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r

    return inside.reshape(ny, ss, nx, ss).mean(axis=(1, 3))


def rs_kernel(nx, ny, pitch, wavelength, gap):
    """First Rayleigh-Sommerfeld impulse response times the sample area,
    tabulated on all (2ny-1) x (2nx-1) grid offsets."""
    k = 2 * np.pi / wavelength
    dx = (np.arange(-(nx - 1), nx)) * pitch
    dy = (np.arange(-(ny - 1), ny)) * pitch
    r2 = dx[None, :] ** 2 + dy[:, None] ** 2 + gap * gap
    r = np.sqrt(r2)
    return gap / (2 * np.pi * r2) * (1.0 / r - 1j * k) * np.exp(1j * k * r) * pitch * pitch


def rs_direct(field, pitch, wavelength, gap):
    """Direct (non-FFT) Rayleigh-Sommerfeld summation onto the same grid."""
    field = np.asarray(field, dtype=complex)
    ny, nx = field.shape
    h = rs_kernel(nx, ny, pitch, wavelength, gap)
    out = np.zeros((ny, nx), dtype=complex)
    for jy, jx in zip(*np.nonzero(field)):
        out += field[jy, jx] * h[ny - 1 - jy : 2 * ny - 1 - jy, nx - 1 - jx : 2 * nx - 1 - jx]
    return out
