"""Pure-numpy sweep kernels; the fallback when the compiled core is absent.

Semantics are identical to the compiled module (mock3d._kernels): same
sample positions, same bilinear expression, same rounding, so both
backends can be compared to 1e-9 and the shadow sweep matches a per-pixel
oracle that replays the same arithmetic.

All kernels are single threaded by contract; determinism across process
and thread configurations is part of the renderer's output guarantee.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

# ~2M float64 of scratch per ray chunk
_CHUNK_BUDGET = 2_000_000


def _bilinear(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Clamped bilinear gather; expression mirrors the compiled kernel."""
    h, w = arr.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(xs.astype(np.int64), w - 2)
    y0 = np.minimum(ys.astype(np.int64), h - 2)
    fx = xs - x0
    fy = ys - y0
    a00 = arr[y0, x0]
    a10 = arr[y0, x0 + 1]
    a01 = arr[y0 + 1, x0]
    a11 = arr[y0 + 1, x0 + 1]
    v0 = a00 + fx * (a10 - a00)
    v1 = a01 + fx * (a11 - a01)
    return v0 + fy * (v1 - v0)


def _ray_chunks(ray_start: np.ndarray, pix_len: np.ndarray, order: np.ndarray, step: float):
    """Yield (k0, k1, ncells_max_per_ray) covering all non-empty rays."""
    m = ray_start.shape[0] - 1
    counts = np.diff(ray_start)
    last = np.zeros(m, dtype=np.int64)
    nonempty = counts > 0
    last_idx = order[ray_start[1:][nonempty] - 1]
    ncells_last = np.floor(pix_len[last_idx] / step).astype(np.int64)
    last[nonempty] = ncells_last
    k0 = 0
    while k0 < m:
        k1 = k0
        budget = 0
        while k1 < m:
            need = int(last[k1]) + 2
            if k1 > k0 and budget + need > _CHUNK_BUDGET:
                break
            budget += need
            k1 += 1
        yield k0, k1, last[k0:k1]
        k0 = k1


def sweep_integrate(prem0, prem1, zmap, has_z, n_quant,
                    dirs, origins, order, ray_start, pix_len, step):
    """Prefix-sum line integrals along a ray grid.

    Returns flat (g0, g1) per pixel: g0 is the midpoint-rule integral of
    the alpha-premultiplied field projected on the ray direction, g1 the
    quantized z-slope integral.  Each pixel closes with a partial cell so
    the result is continuous in its arclength.
    """
    npix = pix_len.shape[0]
    g0 = np.zeros(npix)
    g1 = np.zeros(npix)
    inv_n = 1.0 / n_quant

    for k0, k1, ncmax in _ray_chunks(ray_start, pix_len, order, step):
        nk = k1 - k0
        nmax = int(ncmax.max()) if nk else 0
        sel = order[ray_start[k0]:ray_start[k1]]
        if sel.size == 0:
            continue
        # ray-local index per selected pixel
        ray_of = np.repeat(np.arange(nk), np.diff(ray_start[k0:k1 + 1]))
        ox = origins[k0:k1, 0][:, None]
        oy = origins[k0:k1, 1][:, None]
        dx = dirs[k0:k1, 0][:, None]
        dy = dirs[k0:k1, 1][:, None]

        if nmax > 0:
            t_mid = (np.arange(nmax) + 0.5) * step
            live = t_mid[None, :] <= (ncmax[:, None] * step)
            xs = ox + dx * t_mid[None, :]
            ys = oy + dy * t_mid[None, :]
            f = _bilinear(prem0, xs, ys) * dx + _bilinear(prem1, xs, ys) * dy
            f = np.where(live, f * step, 0.0)
            cum0 = np.cumsum(f, axis=1)
        lens = pix_len[sel]
        ncells = np.floor(lens / step).astype(np.int64)
        rem = lens - ncells * step

        base0 = np.zeros(sel.shape[0])
        if nmax > 0:
            nz = ncells > 0
            base0[nz] = cum0[ray_of[nz], ncells[nz] - 1]
        # partial closing cell, midpoint rule on the remainder
        pdx = dirs[k0 + ray_of, 0]
        pdy = dirs[k0 + ray_of, 1]
        pox = origins[k0 + ray_of, 0]
        poy = origins[k0 + ray_of, 1]
        t_part = ncells * step + rem * 0.5
        xs_p = pox + pdx * t_part
        ys_p = poy + pdy * t_part
        f_p = _bilinear(prem0, xs_p, ys_p) * pdx + _bilinear(prem1, xs_p, ys_p) * pdy
        g0[sel] = base0 + f_p * rem

        if has_z:
            if nmax > 0:
                t_edge = np.arange(nmax + 1) * step
                zx = ox + dx * t_edge[None, :]
                zy = oy + dy * t_edge[None, :]
                zs = _bilinear(zmap, zx, zy)
                slope = (zs[:, 1:] - zs[:, :-1]) / step
                q = np.floor(n_quant * slope + 0.5) * (inv_n * step)
                q = np.where(live, q, 0.0)
                cum1 = np.cumsum(q, axis=1)
                base1 = np.zeros(sel.shape[0])
                nz = ncells > 0
                base1[nz] = cum1[ray_of[nz], ncells[nz] - 1]
            else:
                base1 = np.zeros(sel.shape[0])
            z_a = _bilinear(zmap, pox + pdx * (ncells * step), poy + pdy * (ncells * step))
            z_b = _bilinear(zmap, pox + pdx * lens, poy + pdy * lens)
            ok = rem > 1e-12
            q_p = np.zeros(sel.shape[0])
            q_p[ok] = np.floor(n_quant * (z_b[ok] - z_a[ok]) / rem[ok] + 0.5) * inv_n * rem[ok]
            g1[sel] = base1 + q_p
    return g0, g1


def horizon_sweep(height_map, dirs, origins, t0, order, ray_start, pix_len,
                  thr, step, mode, light_z, slope_m):
    """Running-max horizon test along a ray grid.

    mode 0 (point anchor): sample key is (H(q) - light_z) / d(q) with d the
    arclength from the anchor.  mode 1 (parallel): key is H(q) + slope_m * t.
    A pixel is shadowed when the running max over samples strictly before it
    (with a half-step guard) exceeds its precomputed threshold ``thr``.
    """
    npix = pix_len.shape[0]
    out = np.zeros(npix, dtype=np.uint8)

    for k0, k1, ncmax in _ray_chunks(ray_start, pix_len, order, step):
        nk = k1 - k0
        nmax = int(ncmax.max()) if nk else 0
        sel = order[ray_start[k0]:ray_start[k1]]
        if sel.size == 0:
            continue
        ray_of = np.repeat(np.arange(nk), np.diff(ray_start[k0:k1 + 1]))
        lens = pix_len[sel]
        j = np.floor(lens / step + 0.5).astype(np.int64) - 1  # half-step guard
        if nmax == 0:
            continue
        ox = origins[k0:k1, 0][:, None]
        oy = origins[k0:k1, 1][:, None]
        dx = dirs[k0:k1, 0][:, None]
        dy = dirs[k0:k1, 1][:, None]
        t_mid = (np.arange(nmax) + 0.5) * step
        xs = ox + dx * t_mid[None, :]
        ys = oy + dy * t_mid[None, :]
        hs = _bilinear(height_map, xs, ys)
        t_abs = t0[k0:k1][:, None] + t_mid[None, :]
        if mode == 0:
            keys = (hs - light_z) / t_abs
        else:
            keys = hs + slope_m * t_abs
        runmax = np.maximum.accumulate(keys, axis=1)
        jc = np.clip(j, 0, nmax) - 1
        has = j >= 1
        vals = np.full(sel.shape[0], -np.inf)
        vals[has] = runmax[ray_of[has], jc[has]]
        out[sel] = (vals > thr[sel]).astype(np.uint8)
    return out


def ao_scan(height_map, h_at_pix, k_dirs, dists):
    """Horizon-slope ambient occlusion over k evenly spaced directions.

    For each direction the occlusion slope is the max of
    (H(q) - H(p)) / dist over samples at the given distances; samples
    outside the raster are skipped.  Returns mean over directions of
    1 / (1 + max(0, slope)).
    """
    h, w = height_map.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    total = np.zeros((h, w))
    for d in range(k_dirs):
        ang = 2.0 * np.pi * d / k_dirs
        dx, dy = np.cos(ang), np.sin(ang)
        best = np.full((h, w), -np.inf)
        for t in dists:
            qx = xs + dx * t
            qy = ys + dy * t
            inside = (qx >= 0.0) & (qx <= w - 1.0) & (qy >= 0.0) & (qy <= h - 1.0)
            slope = (_bilinear(height_map, qx, qy) - h_at_pix) / t
            best = np.where(inside, np.maximum(best, slope), best)
        total += 1.0 / (1.0 + np.maximum(best, 0.0))
    return total / k_dirs
