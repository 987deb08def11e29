"""Line integrals over shape-map fields and the surfaces they induce.

The core construction: pick a ray fan (all rays through one center, or all
parallel), integrate the field along each ray from the raster edge, and
read off a height per pixel.  Conservative fields give the same heights
for every fan; fields with curl give view-dependent geometry, which is the
point.  Diagnostics (curl, circulation, view dependence) quantify that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from ._backend import kernels
from ._rays import RayGrid, directional_fan, point_fan
from .shapemap import ShapeMap, sample_field

__all__ = [
    "RayFan",
    "IntegralParams",
    "DepthChannel",
    "HeightSheet",
    "ray_entry_point",
    "integrate_g0",
    "integrate_g1",
    "reconstruct_sheet",
    "curl_map",
    "loop_residual",
    "view_dependence_map",
    "export_diverging_png",
]

VALID_ALPHA = 0.5  # geometric coverage threshold for sheet validity


@dataclass(frozen=True)
class RayFan:
    """Fan spec: mode "point" with a finite center, or "directional" with a
    fixed angle theta (radians).  step is arclength per sample in pixels."""

    mode: str
    center: tuple[float, float] | None = None
    theta: float | None = None
    step: float = 1.0

    def __post_init__(self):
        if self.mode not in ("point", "directional"):
            raise ValueError(f"unknown fan mode {self.mode!r}")
        if self.step <= 0.0:
            raise ValueError("step must be positive")
        if self.mode == "point":
            if self.center is None or not all(map(math.isfinite, self.center)):
                raise ValueError("point fan needs a finite center")
        elif self.theta is None:
            raise ValueError("directional fan needs theta")

    def grid(self, width: int, height: int) -> RayGrid:
        if self.mode == "point":
            return point_fan(width, height, self.center, self.step)
        return directional_fan(width, height, self.theta, self.step)


@dataclass(frozen=True)
class IntegralParams:
    """Scales for the field integral (s0), the z-slope integral (s1) and
    thickness (s2), plus the integer slope quantizer n."""

    s0: float = 1.0
    s1: float = 1.0
    s2: float = 0.5
    n: int = 1

    def __post_init__(self):
        for name in ("s0", "s1", "s2"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError(f"n must be a positive integer, got {self.n}")


@dataclass(frozen=True)
class DepthChannel:
    """Per-pixel embedded depth Z (canvas z units)."""

    z: np.ndarray

    @classmethod
    def constant(cls, height: int, width: int, value: float = 0.0) -> "DepthChannel":
        return cls(np.full((height, width), float(value)))

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        if not np.isfinite(z).all():
            raise ValueError("depth channel must be finite")
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class HeightSheet:
    """Front (f0) and back (f1) reconstructed heights plus validity."""

    f0: np.ndarray
    f1: np.ndarray
    valid: np.ndarray
    fan: RayFan
    params: IntegralParams


def _require_inside(p, width: int, height: int) -> None:
    x, y = float(p[0]), float(p[1])
    if not (0.0 <= x <= width - 1 and 0.0 <= y <= height - 1):
        raise ValueError(f"point {p} outside image rectangle [0,{width-1}]x[0,{height-1}]")


def _backward_clip(p1, theta: float, width: int, height: int) -> float:
    """Arclength from p1 back to the rectangle edge along (-cos t, -sin t)."""
    x, y = float(p1[0]), float(p1[1])
    dx, dy = -math.cos(theta), -math.sin(theta)
    t_hi = math.inf
    for c, d, hi in ((x, dx, width - 1.0), (y, dy, height - 1.0)):
        if abs(d) < 1e-12:
            continue
        ta = (0.0 - c) / d
        tb = (hi - c) / d
        t_hi = min(t_hi, max(ta, tb))
    return max(t_hi, 0.0)


def ray_entry_point(mask: np.ndarray, p1, theta: float) -> tuple[float, float]:
    """March from p1 in direction (-cos theta, -sin theta) to the raster
    rectangle edge; the integrand handles alpha = 0 interior holes, so the
    entry point ignores the mask content and depends only on its shape."""
    h, w = np.asarray(mask).shape[:2]
    _require_inside(p1, w, h)
    t = _backward_clip(p1, theta, w, h)
    return (float(p1[0]) - math.cos(theta) * t, float(p1[1]) - math.sin(theta) * t)


def integrate_g0(m: ShapeMap, p1, theta: float, step: float = 1.0) -> float:
    """Midpoint-rule integral of the alpha-weighted field projected on the
    ray direction, from the rectangle edge to p1, closing with a partial
    cell so the value is continuous in p1."""
    if step <= 0.0:
        raise ValueError("step must be positive")
    _require_inside(p1, m.width, m.height)
    prem0, prem1 = m.premultiplied()
    dx, dy = math.cos(theta), math.sin(theta)
    length = _backward_clip(p1, theta, m.width, m.height)
    ox = float(p1[0]) - dx * length
    oy = float(p1[1]) - dy * length
    ncells = int(math.floor(length / step))
    total = 0.0
    for i in range(ncells):
        t = (i + 0.5) * step
        total += (
            _bil_scalar(prem0, ox + dx * t, oy + dy * t) * dx
            + _bil_scalar(prem1, ox + dx * t, oy + dy * t) * dy
        ) * step
    rem = length - ncells * step
    t = ncells * step + rem * 0.5
    total += (
        _bil_scalar(prem0, ox + dx * t, oy + dy * t) * dx
        + _bil_scalar(prem1, ox + dx * t, oy + dy * t) * dy
    ) * rem
    return total


def integrate_g1(depth: DepthChannel, p1, theta: float, n: int = 1, step: float = 1.0) -> float:
    """Quantized z-slope integral: smooth slopes with |n * slope| < 0.5
    contribute exactly 0, depth discontinuities survive."""
    if step <= 0.0:
        raise ValueError("step must be positive")
    z = depth.z
    h, w = z.shape
    _require_inside(p1, w, h)
    dx, dy = math.cos(theta), math.sin(theta)
    length = _backward_clip(p1, theta, w, h)
    ox = float(p1[0]) - dx * length
    oy = float(p1[1]) - dy * length
    ncells = int(math.floor(length / step))
    total = 0.0
    z_prev = _bil_scalar(z, ox, oy)
    for i in range(ncells):
        t = (i + 1) * step
        z_next = _bil_scalar(z, ox + dx * t, oy + dy * t)
        total += math.floor(n * (z_next - z_prev) / step + 0.5) / n * step
        z_prev = z_next
    rem = length - ncells * step
    if rem > 1e-12:
        z_end = _bil_scalar(z, ox + dx * length, oy + dy * length)
        total += math.floor(n * (z_end - z_prev) / rem + 0.5) / n * rem
    return total


def _bil_scalar(arr: np.ndarray, x: float, y: float) -> float:
    h, w = arr.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = min(int(x), w - 2)
    y0 = min(int(y), h - 2)
    fx = x - x0
    fy = y - y0
    v0 = arr[y0, x0] + fx * (arr[y0, x0 + 1] - arr[y0, x0])
    v1 = arr[y0 + 1, x0] + fx * (arr[y0 + 1, x0 + 1] - arr[y0 + 1, x0])
    return float(v0 + fy * (v1 - v0))


def reconstruct_sheet(
    m: ShapeMap,
    depth: DepthChannel | None,
    fan: RayFan,
    params: IntegralParams = IntegralParams(),
) -> HeightSheet:
    """Sweep the fan with cumulative sums and read per-pixel heights.

    f0 = s0 * G0 + s1 * G1 along each pixel's assigned ray; f1 = f0 - s2 * T.
    Cost is O(pixels), and per pixel the value equals the independent
    quadrature (integrate_g0/g1) along its assigned ray.
    """
    if depth is not None and depth.z.shape != m.n0.shape:
        raise ValueError(
            f"depth dimensions {depth.z.shape} do not match map {m.n0.shape}"
        )
    grid = fan.grid(m.width, m.height)
    prem0, prem1 = m.premultiplied()
    has_z = depth is not None and params.s1 != 0.0
    zarr = depth.z if has_z else np.zeros_like(m.n0)
    g0, g1 = kernels.sweep_integrate(
        np.ascontiguousarray(prem0),
        np.ascontiguousarray(prem1),
        np.ascontiguousarray(zarr),
        bool(has_z),
        int(params.n),
        grid.dirs,
        grid.origins,
        grid.order,
        grid.ray_start,
        grid.pix_len,
        grid.step,
    )
    shape = m.n0.shape
    f0 = (params.s0 * g0 + params.s1 * g1).reshape(shape)
    f1 = f0 - params.s2 * m.thickness
    valid = m.alpha > VALID_ALPHA
    return HeightSheet(f0=f0, f1=f1, valid=valid, fan=fan, params=params)


def curl_map(m: ShapeMap) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference curl (dN1/dx - dN0/dy) per interior pixel.

    Returns (curl, valid): boundary pixels and pixels whose 5-point stencil
    touches alpha <= 0.5 are marked invalid (curl forced to 0 there).
    """
    n0, n1 = m.n0, m.n1
    curl = np.zeros_like(n0)
    curl[1:-1, 1:-1] = (n1[1:-1, 2:] - n1[1:-1, :-2]) / 2.0 - (
        n0[2:, 1:-1] - n0[:-2, 1:-1]
    ) / 2.0
    dom = m.alpha > VALID_ALPHA
    valid = np.zeros_like(dom)
    valid[1:-1, 1:-1] = (
        dom[1:-1, 1:-1]
        & dom[1:-1, 2:]
        & dom[1:-1, :-2]
        & dom[2:, 1:-1]
        & dom[:-2, 1:-1]
    )
    curl[~valid] = 0.0
    return curl, valid


def loop_residual(m: ShapeMap, loop, step: float = 0.5) -> float:
    """Circulation of the field around a closed polyline (midpoint rule).

    By Green's theorem this equals the flux of the curl through the
    enclosed region for smooth fields; it vanishes for conservative ones.
    """
    pts = np.asarray(loop, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("loop must be a list of 2D points")
    if not np.allclose(pts[0], pts[-1], atol=1e-9):
        raise ValueError("open polyline: loop must end where it starts")
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        seg = b - a
        seg_len = math.hypot(*seg)
        if seg_len == 0.0:
            continue
        pieces = max(1, int(math.ceil(seg_len / step)))
        ts = (np.arange(pieces) + 0.5) / pieces
        mids = a[None, :] + ts[:, None] * seg[None, :]
        d = seg / pieces
        for mid in mids:
            n0, n1, _, _ = sample_field(m, mid)
            total += n0 * d[0] + n1 * d[1]
    return total


def view_dependence_map(
    m: ShapeMap,
    depth: DepthChannel | None,
    params: IntegralParams,
    centers,
    step: float = 1.0,
) -> np.ndarray:
    """Per-pixel max - min of f0 across point-fan reconstructions, one per
    center.  Zero (up to discretization) iff the field is conservative."""
    centers = list(centers)
    if len(centers) < 2:
        raise ValueError("need at least 2 ray centers")
    stack = []
    valid = None
    for c in centers:
        sheet = reconstruct_sheet(m, depth, RayFan("point", center=tuple(c), step=step), params)
        stack.append(sheet.f0)
        valid = sheet.valid if valid is None else valid
    arr = np.stack(stack)
    out = arr.max(axis=0) - arr.min(axis=0)
    out[~valid] = 0.0
    return out


def export_diverging_png(values: np.ndarray, path: str) -> float:
    """Write a false-color PNG with a symmetric diverging map
    (blue -> white -> red over [-vmax, +vmax]) plus a ``<path>.vmax.txt``
    sidecar recording vmax.  Returns vmax."""
    v = np.asarray(values, dtype=np.float64)
    vmax = float(np.max(np.abs(v))) if v.size else 0.0
    vmax = max(vmax, 1e-12)
    t = np.clip((v + vmax) / (2.0 * vmax), 0.0, 1.0)
    lo = np.array([59, 76, 192], dtype=np.float64)  # blue
    mid = np.array([255, 255, 255], dtype=np.float64)
    hi = np.array([180, 4, 38], dtype=np.float64)  # red
    rgb = np.where(
        t[..., None] < 0.5,
        lo + (mid - lo) * (t[..., None] / 0.5),
        mid + (hi - mid) * ((t[..., None] - 0.5) / 0.5),
    )
    img = np.floor(rgb + 0.5).astype(np.uint8)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")
    with open(str(path) + ".vmax.txt", "w", encoding="utf-8") as fh:
        fh.write(f"{vmax:.9g}\n")
    return vmax
