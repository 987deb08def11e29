# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled sweep kernels: hot inner loops of reconstruction, shadows, AO.

Mirrors mock3d._kernels_py sample for sample: same positions, the same
bilinear expression, the same floor(x + 0.5) rounding.  Built with
-ffp-contract=off so results are bit-comparable with the numpy fallback.
Single threaded by contract (determinism across thread counts).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, floor, sin

cnp.import_array()

BACKEND_NAME = "compiled"


cdef inline double _bil(const double[:, ::1] arr, double x, double y) nogil:
    cdef Py_ssize_t h = arr.shape[0]
    cdef Py_ssize_t w = arr.shape[1]
    cdef double fx, fy, a00, a10, a01, a11, v0, v1
    cdef Py_ssize_t x0, y0
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    x0 = <Py_ssize_t>x
    y0 = <Py_ssize_t>y
    if x0 > w - 2:
        x0 = w - 2
    if y0 > h - 2:
        y0 = h - 2
    fx = x - x0
    fy = y - y0
    a00 = arr[y0, x0]
    a10 = arr[y0, x0 + 1]
    a01 = arr[y0 + 1, x0]
    a11 = arr[y0 + 1, x0 + 1]
    v0 = a00 + fx * (a10 - a00)
    v1 = a01 + fx * (a11 - a01)
    return v0 + fy * (v1 - v0)


def sweep_integrate(const double[:, ::1] prem0, const double[:, ::1] prem1,
                    const double[:, ::1] zmap, bint has_z, long n_quant,
                    const double[:, ::1] dirs, const double[:, ::1] origins,
                    const long[::1] order, const long[::1] ray_start,
                    const double[::1] pix_len, double step):
    cdef Py_ssize_t npix = pix_len.shape[0]
    cdef Py_ssize_t m = ray_start.shape[0] - 1
    g0_arr = np.zeros(npix)
    g1_arr = np.zeros(npix)
    cdef double[::1] g0 = g0_arr
    cdef double[::1] g1 = g1_arr
    cdef double inv_n = 1.0 / n_quant
    cdef Py_ssize_t k, a, b, idx, pix, cell, ncells
    cdef double ox, oy, dx, dy, t_mid, t_edge, cum0, cum1
    cdef double z_prev, z_next, lens, rem, t_part, f_p, z_a, z_b, slope

    with nogil:
        for k in range(m):
            a = ray_start[k]
            b = ray_start[k + 1]
            if b <= a:
                continue
            ox = origins[k, 0]
            oy = origins[k, 1]
            dx = dirs[k, 0]
            dy = dirs[k, 1]
            cum0 = 0.0
            cum1 = 0.0
            cell = 0
            if has_z:
                z_prev = _bil(zmap, ox, oy)
            for idx in range(a, b):
                pix = order[idx]
                lens = pix_len[pix]
                ncells = <Py_ssize_t>floor(lens / step)
                while cell < ncells:
                    t_mid = (cell + 0.5) * step
                    cum0 = cum0 + (_bil(prem0, ox + dx * t_mid, oy + dy * t_mid) * dx +
                                   _bil(prem1, ox + dx * t_mid, oy + dy * t_mid) * dy) * step
                    if has_z:
                        t_edge = (cell + 1) * step
                        z_next = _bil(zmap, ox + dx * t_edge, oy + dy * t_edge)
                        slope = (z_next - z_prev) / step
                        cum1 = cum1 + floor(n_quant * slope + 0.5) * (inv_n * step)
                        z_prev = z_next
                    cell += 1
                rem = lens - ncells * step
                t_part = ncells * step + rem * 0.5
                f_p = (_bil(prem0, ox + dx * t_part, oy + dy * t_part) * dx +
                       _bil(prem1, ox + dx * t_part, oy + dy * t_part) * dy)
                g0[pix] = cum0 + f_p * rem
                if has_z:
                    if rem > 1e-12:
                        z_a = _bil(zmap, ox + dx * (ncells * step), oy + dy * (ncells * step))
                        z_b = _bil(zmap, ox + dx * lens, oy + dy * lens)
                        g1[pix] = cum1 + floor(n_quant * (z_b - z_a) / rem + 0.5) * inv_n * rem
                    else:
                        g1[pix] = cum1
    return g0_arr, g1_arr


def horizon_sweep(const double[:, ::1] height_map,
                  const double[:, ::1] dirs, const double[:, ::1] origins,
                  const double[::1] t0,
                  const long[::1] order, const long[::1] ray_start,
                  const double[::1] pix_len, const double[::1] thr,
                  double step, int mode, double light_z, double slope_m):
    cdef Py_ssize_t npix = pix_len.shape[0]
    cdef Py_ssize_t m = ray_start.shape[0] - 1
    out_arr = np.zeros(npix, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    cdef Py_ssize_t k, a, b, idx, pix, sample, j
    cdef double ox, oy, dx, dy, t_mid, t_abs, key, runmax, hv

    with nogil:
        for k in range(m):
            a = ray_start[k]
            b = ray_start[k + 1]
            if b <= a:
                continue
            ox = origins[k, 0]
            oy = origins[k, 1]
            dx = dirs[k, 0]
            dy = dirs[k, 1]
            runmax = -1e300
            sample = 0
            for idx in range(a, b):
                pix = order[idx]
                j = <Py_ssize_t>floor(pix_len[pix] / step + 0.5) - 1
                while sample < j:
                    t_mid = (sample + 0.5) * step
                    hv = _bil(height_map, ox + dx * t_mid, oy + dy * t_mid)
                    t_abs = t0[k] + t_mid
                    if mode == 0:
                        key = (hv - light_z) / t_abs
                    else:
                        key = hv + slope_m * t_abs
                    if key > runmax:
                        runmax = key
                    sample += 1
                if j >= 1 and runmax > thr[pix]:
                    out[pix] = 1
    return out_arr


def ao_scan(const double[:, ::1] height_map, const double[:, ::1] h_at_pix,
            int k_dirs, const double[::1] dists):
    cdef Py_ssize_t h = height_map.shape[0]
    cdef Py_ssize_t w = height_map.shape[1]
    cdef Py_ssize_t nd = dists.shape[0]
    out_arr = np.zeros((h, w))
    cdef double[:, ::1] out = out_arr
    dirx_arr = np.cos(2.0 * np.pi * np.arange(k_dirs) / k_dirs)
    diry_arr = np.sin(2.0 * np.pi * np.arange(k_dirs) / k_dirs)
    cdef double[::1] dirx = dirx_arr
    cdef double[::1] diry = diry_arr
    cdef double hmax = np.asarray(height_map).max()
    cdef Py_ssize_t y, x, d, i
    cdef double best, t, qx, qy, slope, total, hp, ceiling

    with nogil:
        for y in range(h):
            for x in range(w):
                hp = h_at_pix[y, x]
                ceiling = hmax - hp
                total = 0.0
                for d in range(k_dirs):
                    best = -1e300
                    for i in range(nd):
                        t = dists[i]
                        # no farther sample can raise the clamped max slope
                        if ceiling <= t * best or ceiling <= 0.0:
                            break
                        qx = x + dirx[d] * t
                        qy = y + diry[d] * t
                        if qx < 0.0 or qx > w - 1.0 or qy < 0.0 or qy > h - 1.0:
                            break  # a straight ray never re-enters the raster
                        slope = (_bil(height_map, qx, qy) - hp) / t
                        if slope > best:
                            best = slope
                    if best < 0.0:
                        best = 0.0
                    total += 1.0 / (1.0 + best)
                out[y, x] = total / k_dirs
    return out_arr
