"""Ray-fan discretization shared by the sweep kernels.

A fan is a family of 2D rays (radial from a center point, or parallel at a
fixed angle) quantized so neighboring rays are at most one step apart where
they cross the raster.  Every pixel is assigned to its nearest ray together
with its arclength along that ray; the assignment is what lets prefix-sum
sweeps replace per-pixel marching while staying reproducible: a pixel's
value is exactly the quadrature along its assigned ray up to its projected
position.

Rounding is floor(x + 0.5) (round half up) everywhere so the compiled and
pure-python backends agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class RayGrid:
    """Quantized fan over a width x height raster."""

    dirs: np.ndarray  # [M, 2] unit directions
    origins: np.ndarray  # [M, 2] ray start points (on the raster rectangle edge)
    t0: np.ndarray  # [M] arclength from the fan anchor to each ray's start
    pix_ray: np.ndarray  # [H*W] int64, ray id per pixel
    pix_len: np.ndarray  # [H*W] float64, arclength origin -> pixel projection
    order: np.ndarray  # [H*W] int64, pixel ids sorted by (ray, len)
    ray_start: np.ndarray  # [M+1] int64 offsets into order
    width: int
    height: int
    step: float

    @property
    def ray_count(self) -> int:
        return self.dirs.shape[0]


def _clip_lines(px, py, dx, dy, xmax: float, ymax: float):
    """Clip lines p + d*t against [0, xmax] x [0, ymax].

    Returns (t_in, t_out, hit). Degenerate axes (|d| ~ 0) pass when the
    fixed coordinate is inside the slab.
    """
    t_in = np.full(px.shape, -np.inf)
    t_out = np.full(px.shape, np.inf)
    hit = np.ones(px.shape, dtype=bool)
    for c, d, hi in ((px, dx, xmax), (py, dy, ymax)):
        small = np.abs(d) < 1e-12
        inside = (c >= 0.0) & (c <= hi)
        hit &= ~small | inside
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = np.where(small, -np.inf, (0.0 - c) / d)
            tb = np.where(small, np.inf, (hi - c) / d)
        lo = np.minimum(ta, tb)
        hi_t = np.maximum(ta, tb)
        t_in = np.maximum(t_in, np.where(small, -np.inf, lo))
        t_out = np.minimum(t_out, np.where(small, np.inf, hi_t))
    hit &= t_in <= t_out
    return t_in, t_out, hit


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5).astype(np.int64)


def _finalize(dirs, origins, t0, pix_ray, pix_len, w, h, step) -> RayGrid:
    m = dirs.shape[0]
    flat_ray = pix_ray.ravel()
    flat_len = pix_len.ravel()
    order = np.lexsort((flat_len, flat_ray))
    ray_start = np.searchsorted(flat_ray[order], np.arange(m + 1))
    return RayGrid(
        dirs=np.ascontiguousarray(dirs),
        origins=np.ascontiguousarray(origins),
        t0=np.ascontiguousarray(t0),
        pix_ray=flat_ray,
        pix_len=np.ascontiguousarray(flat_len),
        order=order.astype(np.int64),
        ray_start=ray_start.astype(np.int64),
        width=w,
        height=h,
        step=step,
    )


def point_fan(width: int, height: int, center, step: float = 1.0, from_center: bool = False) -> RayGrid:
    """Radial fan anchored at ``center`` (any finite 2D point, inside or out).

    Rays are the full lines through the center clipped to the raster
    rectangle, so integration starts on the rectangle edge *behind* the
    center.  With ``from_center`` rays start at the center itself (used by
    shadow sweeps, where the anchor is a light, not a path origin).
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    cx, cy = float(center[0]), float(center[1])
    if not (math.isfinite(cx) and math.isfinite(cy)):
        raise ValueError("ray center must be finite")
    w1, h1 = width - 1.0, height - 1.0
    corners = np.array([[0.0, 0.0], [w1, 0.0], [0.0, h1], [w1, h1]])
    r_max = float(np.max(np.hypot(corners[:, 0] - cx, corners[:, 1] - cy)))
    m = max(8, int(math.ceil(TWO_PI * max(r_max, 1.0) / step)))
    theta = TWO_PI * np.arange(m) / m
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)

    t_in, t_out, hit = _clip_lines(
        np.full(m, cx), np.full(m, cy), dirs[:, 0], dirs[:, 1], w1, h1
    )
    if from_center:
        t_in = np.maximum(t_in, 0.0)
    t_in = np.where(hit, t_in, 0.0)
    t_out = np.where(hit, np.maximum(t_out, t_in), t_in)
    origins = np.array([cx, cy]) + dirs * t_in[:, None]

    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = xs - cx
    dy = ys - cy
    ang = np.arctan2(dy, dx)
    ang[(dx == 0.0) & (dy == 0.0)] = 0.0
    k = _round_half_up(ang * (m / TWO_PI)) % m
    t_p = dx * dirs[k, 0] + dy * dirs[k, 1]
    pix_len = np.clip(t_p - t_in[k], 0.0, (t_out - t_in)[k])
    return _finalize(dirs, origins, t_in, k, pix_len, width, height, step)


def directional_fan(width: int, height: int, theta: float, step: float = 1.0) -> RayGrid:
    """Parallel fan at a fixed angle, rays one step apart perpendicular."""
    if step <= 0.0:
        raise ValueError("step must be positive")
    dx, dy = math.cos(theta), math.sin(theta)
    px, py = -dy, dx
    w1, h1 = width - 1.0, height - 1.0
    corners = np.array([[0.0, 0.0], [w1, 0.0], [0.0, h1], [w1, h1]])
    u = corners[:, 0] * px + corners[:, 1] * py
    u_min, u_max = float(u.min()), float(u.max())
    m = int(math.floor((u_max - u_min) / step + 0.5)) + 1

    u_k = u_min + step * np.arange(m)
    base = np.stack([u_k * px, u_k * py], axis=1)
    dirs = np.tile(np.array([[dx, dy]]), (m, 1))
    t_in, t_out, hit = _clip_lines(base[:, 0], base[:, 1], dirs[:, 0], dirs[:, 1], w1, h1)
    t_in = np.where(hit, t_in, 0.0)
    t_out = np.where(hit, np.maximum(t_out, t_in), t_in)
    origins = base + dirs * t_in[:, None]

    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    u_pix = xs * px + ys * py
    k = np.clip(_round_half_up((u_pix - u_min) / step), 0, m - 1)
    t_p = xs * dx + ys * dy
    pix_len = np.clip(t_p - t_in[k], 0.0, (t_out - t_in)[k])
    return _finalize(dirs, origins, t_in, k, pix_len, width, height, step)
