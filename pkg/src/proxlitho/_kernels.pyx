# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_fallback`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, ceil, cos, sin, M_PI

cnp.import_array()


cdef inline bint _in_poly(const double[:, :, ::1] polys, Py_ssize_t p, Py_ssize_t n, double x, double y) nogil:
    cdef Py_ssize_t e, f
    for e in range(n):
        f = e + 1 if e + 1 < n else 0
        if ((polys[p, f, 0] - polys[p, e, 0]) * (y - polys[p, e, 1])
                - (polys[p, f, 1] - polys[p, e, 1]) * (x - polys[p, e, 0])) < 0:
            return False
    return True


cdef inline void _span(cnp.uint8_t[:, ::1] inside, Py_ssize_t j, double lo, double hi, double origin_x,
                       double sub, Py_ssize_t W, Py_ssize_t *a, Py_ssize_t *b) nogil:
    # sub-sample columns [a, b) lie strictly between lo and hi with a sample of slack
    a[0] = max(<Py_ssize_t>ceil((lo - origin_x) / sub - 0.5) + 2, 0)
    b[0] = min(<Py_ssize_t>floor((hi - origin_x) / sub - 0.5) - 1, W)
    cdef Py_ssize_t i
    for i in range(a[0], b[0]):
        inside[j, i] = 1


def coverage(const double[:, :, ::1] polys, const long[::1] nverts, const double[:, ::1] circles,
             double origin_x, double origin_y, double pitch, int nx, int ny, int ss):
    """Same result as the fallback. Each convex shape meets a sub-sample row
    in one interval: its interior is filled directly and only the samples
    within two of either end get the exact per-point test."""
    cdef double sub = pitch / ss
    cdef Py_ssize_t W = nx * ss, H = ny * ss
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] inside_arr = np.zeros((H, W), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] inside = inside_arr
    cdef Py_ssize_t p, e, f, n, i, j, i0, i1, j0, j1, a, b
    cdef double xmin, xmax, ymin, ymax, x, y, lo, hi, A, B, cx, cy, r, half
    cdef bint empty

    for p in range(nverts.shape[0]):
        n = nverts[p]
        xmin = xmax = polys[p, 0, 0]
        ymin = ymax = polys[p, 0, 1]
        for e in range(1, n):
            xmin = min(xmin, polys[p, e, 0]); xmax = max(xmax, polys[p, e, 0])
            ymin = min(ymin, polys[p, e, 1]); ymax = max(ymax, polys[p, e, 1])
        i0 = max(<Py_ssize_t>floor((xmin - origin_x) / sub - 0.5), 0)
        i1 = min(<Py_ssize_t>ceil((xmax - origin_x) / sub - 0.5) + 1, W)
        j0 = max(<Py_ssize_t>floor((ymin - origin_y) / sub - 0.5), 0)
        j1 = min(<Py_ssize_t>ceil((ymax - origin_y) / sub - 0.5) + 1, H)
        for j in range(j0, j1):
            y = origin_y + (j + 0.5) * sub
            # edge e keeps x with A - B x >= 0
            lo, hi, empty = xmin, xmax, False
            for e in range(n):
                f = e + 1 if e + 1 < n else 0
                B = polys[p, f, 1] - polys[p, e, 1]
                A = (polys[p, f, 0] - polys[p, e, 0]) * (y - polys[p, e, 1]) + B * polys[p, e, 0]
                if B > 0:
                    hi = min(hi, A / B)
                elif B < 0:
                    lo = max(lo, A / B)
                elif A < 0:
                    empty = True
            if empty or lo > hi + sub:
                for i in range(i0, i1):
                    if not inside[j, i] and _in_poly(polys, p, n, origin_x + (i + 0.5) * sub, y):
                        inside[j, i] = 1
                continue
            _span(inside, j, lo, hi, origin_x, sub, W, &a, &b)
            if b <= a:
                a = b = i0
            for i in range(i0, a):
                if not inside[j, i] and _in_poly(polys, p, n, origin_x + (i + 0.5) * sub, y):
                    inside[j, i] = 1
            for i in range(max(b, a), i1):
                if not inside[j, i] and _in_poly(polys, p, n, origin_x + (i + 0.5) * sub, y):
                    inside[j, i] = 1

    for p in range(circles.shape[0]):
        cx = circles[p, 0]; cy = circles[p, 1]; r = circles[p, 2]
        i0 = max(<Py_ssize_t>floor((cx - r - origin_x) / sub - 0.5), 0)
        i1 = min(<Py_ssize_t>ceil((cx + r - origin_x) / sub - 0.5) + 1, W)
        j0 = max(<Py_ssize_t>floor((cy - r - origin_y) / sub - 0.5), 0)
        j1 = min(<Py_ssize_t>ceil((cy + r - origin_y) / sub - 0.5) + 1, H)
        for j in range(j0, j1):
            y = origin_y + (j + 0.5) * sub
            half = r * r - (y - cy) * (y - cy)
            if half > 0:
                half = sqrt(half)
                _span(inside, j, cx - half, cx + half, origin_x, sub, W, &a, &b)
            else:
                a = b = i0
            if b <= a:
                a = b = i0
            for i in range(i0, a):
                x = origin_x + (i + 0.5) * sub
                if (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r:
                    inside[j, i] = 1
            for i in range(max(b, a), i1):
                x = origin_x + (i + 0.5) * sub
                if (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r:
                    inside[j, i] = 1

    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.zeros((ny, nx))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t u, v
    cdef long count
    cdef double norm = ss * ss
    for j in range(ny):
        for i in range(nx):
            count = 0
            for u in range(ss):
                for v in range(ss):
                    count += inside[j * ss + u, i * ss + v]
            out[j, i] = count / norm  # divide, as the fallback's mean does
    return out_arr


def rs_kernel(int nx, int ny, double pitch, double wavelength, double gap):
    cdef double k = 2 * M_PI / wavelength
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] h_arr = np.empty((2 * ny - 1, 2 * nx - 1), dtype=np.complex128)
    cdef double complex[:, ::1] h = h_arr
    cdef Py_ssize_t i, j
    cdef double dx, dy, r2, r, amp, ph
    cdef double area = pitch * pitch
    for j in range(2 * ny - 1):
        dy = (j - (ny - 1)) * pitch
        for i in range(2 * nx - 1):
            dx = (i - (nx - 1)) * pitch
            r2 = dx * dx + dy * dy + gap * gap
            r = sqrt(r2)
            amp = gap / (2 * M_PI * r2) * area
            ph = k * r
            # amp * (1/r - i k) * exp(i k r)
            h[j, i] = amp * ((1.0 / r) * cos(ph) + k * sin(ph)) + 1j * amp * ((1.0 / r) * sin(ph) - k * cos(ph))
    return h_arr


def rs_direct(field, double pitch, double wavelength, double gap):
    cdef const double complex[:, ::1] f = np.ascontiguousarray(field, dtype=np.complex128)
    cdef Py_ssize_t ny = f.shape[0], nx = f.shape[1]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] h_arr = rs_kernel(nx, ny, pitch, wavelength, gap)
    cdef const double[:, ::1] h = h_arr.view(np.float64)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] out_arr = np.zeros((ny, nx), dtype=np.complex128)
    cdef double[:, ::1] out = out_arr.view(np.float64)
    cdef Py_ssize_t ky, kx, jy, jx, off
    cdef double fr, fi, hr, hi
    # source-major like the fallback, so both accumulate in the same order
    for jy in range(ny):
        for jx in range(nx):
            fr = f[jy, jx].real
            fi = f[jy, jx].imag
            if fr == 0 and fi == 0:
                continue
            off = 2 * (nx - 1 - jx)
            for ky in range(ny):
                for kx in range(nx):
                    hr = h[ky - jy + ny - 1, off + 2 * kx]
                    hi = h[ky - jy + ny - 1, off + 2 * kx + 1]
                    out[ky, 2 * kx] += fr * hr - fi * hi
                    out[ky, 2 * kx + 1] += fr * hi + fi * hr
    return out_arr
