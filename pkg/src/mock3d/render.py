"""CPU renderer: shading, height-field shadows, AO, reflection/refraction,
depth-keyed compositing — all from sheets reconstructed per ray fan.

Everything is deterministic: kernels are single threaded, the only RNG
(glossy jitter) is seeded per render.  Canvas coordinates: x right, y down,
z toward the viewer; the camera is orthographic looking along -z.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from ._backend import backend_name, kernels
from ._rays import directional_fan, point_fan
from .errors import SceneError
from .fieldcalc import DepthChannel, HeightSheet, RayFan, reconstruct_sheet
from .scene import Layer, Light, Scene, validate_scene
from .shapemap import normal_from_field

__all__ = [
    "RenderOutput",
    "fresnel_weight",
    "shade_diffuse_specular",
    "horizon_shadow",
    "shadow_mask",
    "ambient_occlusion",
    "refraction_pass",
    "reflection_pass",
    "composite",
    "render_scene",
    "save_png",
]

EMPTY_HEIGHT = -1.0e9  # canvas pixels not covered by any layer
AMBIENT = 0.2
SPECULAR_EXPONENT = 32.0
PLAIN_REFLECTION_WEIGHT = 0.5  # blend weight when reflection is on but fresnel is off
VIEW = np.array([0.0, 0.0, 1.0])


@dataclass
class RenderOutput:
    color: np.ndarray  # [H, W, 4] uint8
    aux: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# placement helpers

def _offset(layer: Layer) -> tuple[int, int]:
    return int(round(layer.translate[0])), int(round(layer.translate[1]))


def _paste(dst: np.ndarray, src: np.ndarray, tx: int, ty: int, where=None) -> None:
    h, w = src.shape[:2]
    ch, cw = dst.shape[:2]
    x0, y0 = max(tx, 0), max(ty, 0)
    x1, y1 = min(tx + w, cw), min(ty + h, ch)
    if x0 >= x1 or y0 >= y1:
        return
    sview = src[y0 - ty : y1 - ty, x0 - tx : x1 - tx]
    dview = dst[y0:y1, x0:x1]
    if where is None:
        dview[...] = sview
    else:
        wv = where[y0 - ty : y1 - ty, x0 - tx : x1 - tx]
        dview[wv] = sview[wv]


def _paste_max(dst: np.ndarray, src: np.ndarray, tx: int, ty: int, where) -> None:
    h, w = src.shape[:2]
    ch, cw = dst.shape[:2]
    x0, y0 = max(tx, 0), max(ty, 0)
    x1, y1 = min(tx + w, cw), min(ty + h, ch)
    if x0 >= x1 or y0 >= y1:
        return
    sview = src[y0 - ty : y1 - ty, x0 - tx : x1 - tx]
    wview = where[y0 - ty : y1 - ty, x0 - tx : x1 - tx]
    dview = dst[y0:y1, x0:x1]
    np.maximum(dview, np.where(wview, sview, EMPTY_HEIGHT), out=dview)


def _crop(canvas_arr: np.ndarray, layer: Layer, fill=0.0) -> np.ndarray:
    """Layer-local view of a canvas raster (fill outside the canvas)."""
    tx, ty = _offset(layer)
    h, w = layer.shape
    out_shape = (h, w) + canvas_arr.shape[2:]
    out = np.full(out_shape, fill, dtype=canvas_arr.dtype)
    ch, cw = canvas_arr.shape[:2]
    x0, y0 = max(tx, 0), max(ty, 0)
    x1, y1 = min(tx + w, cw), min(ty + h, ch)
    if x0 < x1 and y0 < y1:
        out[y0 - ty : y1 - ty, x0 - tx : x1 - tx] = canvas_arr[y0:y1, x0:x1]
    return out


def _local_fan(view: RayFan, layer: Layer) -> RayFan:
    if view.mode == "point":
        tx, ty = _offset(layer)
        return RayFan("point", center=(view.center[0] - tx, view.center[1] - ty),
                      step=view.step)
    return view


def _layer_sheet(scene: Scene, layer: Layer, fan: RayFan | None = None) -> HeightSheet:
    fan = fan or scene.view
    return reconstruct_sheet(
        layer.shapemap, DepthChannel(layer.depth_z), _local_fan(fan, layer), layer.params
    )


def _layer_normals(layer: Layer) -> np.ndarray:
    return normal_from_field(layer.shapemap.n0, layer.shapemap.n1, layer.normal_params)


def _surface_height(layer: Layer, sheet: HeightSheet) -> np.ndarray:
    return layer.z_offset + layer.depth_z + sheet.f0


def _canvas_heights(scene: Scene, sheets: dict) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel max layer surface height; EMPTY_HEIGHT where uncovered."""
    heights = np.full((scene.height, scene.width), EMPTY_HEIGHT)
    covered = np.zeros((scene.height, scene.width), dtype=bool)
    for layer in scene.layers:
        sheet = sheets[layer.id]
        tx, ty = _offset(layer)
        _paste_max(heights, _surface_height(layer, sheet), tx, ty, sheet.valid)
        cov = np.zeros((scene.height, scene.width), dtype=bool)
        _paste(cov, sheet.valid, tx, ty)
        covered |= cov
    return heights, covered


# ---------------------------------------------------------------------------
# shading

def fresnel_weight(cos_v, ior):
    """Schlick reflectance: R0 + (1 - R0) * (1 - cos_v)^5."""
    r0 = ((ior - 1.0) / (ior + 1.0)) ** 2
    return r0 + (1.0 - r0) * (1.0 - np.asarray(cos_v)) ** 5


def shade_diffuse_specular(
    scene: Scene, layer: Layer, light: Light, sheet: HeightSheet | None = None,
    normals: np.ndarray | None = None,
) -> np.ndarray:
    """Lambert + Blinn-Phong for one light, in layer-local space.

    Returns [H, W, 3]; zero outside the layer's valid domain.
    """
    sheet = sheet or _layer_sheet(scene, layer)
    n = normals if normals is not None else _layer_normals(layer)
    h, w = layer.shape
    if light.kind == "directional":
        l = -np.asarray(light.direction)
        l = np.broadcast_to(l, (h, w, 3))
    else:
        tx, ty = _offset(layer)
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        sp = np.stack([xs + tx, ys + ty, _surface_height(layer, sheet)], axis=-1)
        l = np.asarray(light.position) - sp
        l = l / np.maximum(np.linalg.norm(l, axis=-1, keepdims=True), 1e-12)

    lambert = np.maximum((n * l).sum(axis=-1), 0.0)
    half = l + VIEW
    half = half / np.maximum(np.linalg.norm(half, axis=-1, keepdims=True), 1e-12)
    blinn = np.maximum((n * half).sum(axis=-1), 0.0) ** SPECULAR_EXPONENT
    blinn = blinn * np.asarray(layer.channels.specular)

    tint = np.asarray(light.color) * light.intensity
    rgb = (lambert + blinn)[..., None] * layer.channels.diffuse * tint
    rgb[~sheet.valid] = 0.0
    return rgb


# ---------------------------------------------------------------------------
# shadows

def horizon_shadow(heights: np.ndarray, light: Light, step: float = 1.0,
                   covered: np.ndarray | None = None) -> np.ndarray:
    """Height-field horizon test against an arbitrary height raster.

    Point lights sweep radially from the light's 2D projection comparing
    (H - z_light)/distance slopes; directional lights sweep parallel rays
    comparing H + tan(elevation) * t keys.  A straight-down directional
    light cannot occlude anything and returns an empty mask.
    """
    h, w = heights.shape
    heights = np.ascontiguousarray(heights)
    if light.kind == "point":
        lx, ly, lz = light.position
        grid = point_fan(w, h, (lx, ly), step=step, from_center=True)
        d_pix = grid.t0[grid.pix_ray] + grid.pix_len
        with np.errstate(divide="ignore", invalid="ignore"):
            thr = np.where(d_pix > 0.0, (heights.ravel() - lz) / d_pix, np.inf)
        mode, lz_or_zero, slope_m = 0, lz, 0.0
    else:
        dx, dy, dz = light.direction
        horiz = math.hypot(dx, dy)
        if horiz < 1e-9:
            return np.zeros((h, w), dtype=bool)
        theta = math.atan2(dy, dx)
        slope_m = abs(dz) / horiz
        grid = directional_fan(w, h, theta, step=step)
        t_pix = grid.t0[grid.pix_ray] + grid.pix_len
        thr = heights.ravel() + slope_m * t_pix
        mode, lz_or_zero = 1, 0.0

    shadowed = kernels.horizon_sweep(
        heights, grid.dirs, grid.origins, grid.t0, grid.order, grid.ray_start,
        grid.pix_len, np.ascontiguousarray(thr), step, mode, lz_or_zero, slope_m,
    ).reshape(h, w).astype(bool)
    if covered is not None:
        shadowed &= covered
    return shadowed


def shadow_mask(scene: Scene, light: Light, step: float = 1.0) -> np.ndarray:
    """Canvas-space boolean mask: True where the light is occluded.

    Shadow geometry is reconstructed with the fan anchored at the light
    (its 2D projection for point lights, its azimuth for directional), so
    the occluding heights are the light's own view of the scene.
    """
    if light.kind == "point":
        fan = RayFan("point", center=(light.position[0], light.position[1]), step=step)
    else:
        dx, dy, _ = light.direction
        if math.hypot(dx, dy) < 1e-9:
            return np.zeros((scene.height, scene.width), dtype=bool)
        fan = RayFan("directional", theta=math.atan2(dy, dx), step=step)
    sheets = {l.id: _layer_sheet(scene, l, fan) for l in scene.layers}
    heights, covered = _canvas_heights(scene, sheets)
    return horizon_shadow(heights, light, step=step, covered=covered)


# ---------------------------------------------------------------------------
# ambient occlusion

def ao_sample_distances(radius: float, step: float = 1.0) -> np.ndarray:
    """Radial sample schedule: every step out to 6 steps, then geometric
    growth, always ending exactly at the radius."""
    out = []
    t = step
    while t <= radius + 1e-9:
        out.append(t)
        t = t + step if t < 6.0 * step - 1e-9 else t * 1.3
    if not out or out[-1] < radius - 1e-9:
        out.append(float(radius))
    return np.asarray(out)


def ambient_occlusion(scene: Scene, sheets: dict | None = None) -> np.ndarray:
    """Horizon-slope AO in [0, 1] over the canvas (1 where uncovered)."""
    if scene.settings.ao_k < 4:
        raise SceneError("ambient occlusion needs k >= 4 directions")
    sheets = sheets or {l.id: _layer_sheet(scene, l) for l in scene.layers}
    heights, covered = _canvas_heights(scene, sheets)
    ao = kernels.ao_scan(
        np.ascontiguousarray(heights), np.ascontiguousarray(heights),
        int(scene.settings.ao_k), ao_sample_distances(scene.settings.ao_radius),
    )
    ao[~covered] = 1.0
    return ao


# ---------------------------------------------------------------------------
# reflection / refraction

def _bilinear_rgb(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(xs.astype(np.int64), w - 2)
    y0 = np.minimum(ys.astype(np.int64), h - 2)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    v0 = img[y0, x0] + fx * (img[y0, x0 + 1] - img[y0, x0])
    v1 = img[y0 + 1, x0] + fx * (img[y0 + 1, x0 + 1] - img[y0 + 1, x0])
    return v0 + fy * (v1 - v0)


def refract_directions(n: np.ndarray, ior: float) -> tuple[np.ndarray, np.ndarray]:
    """Vector Snell for the fixed view ray (0, 0, -1) hitting normals n.

    Returns (t, tir): refracted unit directions [..., 3] (z < 0) and a
    total-internal-reflection mask (empty for ior >= 1).
    """
    mu = 1.0 / ior
    cos_i = np.clip(n[..., 2], 0.0, 1.0)
    sin2_t = mu * mu * (1.0 - cos_i * cos_i)
    tir = sin2_t > 1.0
    cos_t = np.sqrt(np.clip(1.0 - sin2_t, 0.0, None))
    i = np.array([0.0, 0.0, -1.0])
    t = mu * i + (mu * cos_i - cos_t)[..., None] * n
    norm = np.maximum(np.linalg.norm(t, axis=-1, keepdims=True), 1e-12)
    return t / norm, tir


def refraction_pass(
    scene: Scene, layer: Layer, background: np.ndarray, sheet: HeightSheet | None = None,
    normals: np.ndarray | None = None,
) -> np.ndarray:
    """Bend the view ray at the front surface, travel s2 * thickness, and
    sample the background there (single-interface thickness approximation).

    Where thickness is exactly 0 the output is the background, bit for bit.
    """
    if layer.channels.ior is None:
        raise SceneError(f"layer {layer.id} has no index of refraction")
    sheet = sheet or _layer_sheet(scene, layer)
    n = normals if normals is not None else _layer_normals(layer)
    t, tir = refract_directions(n, layer.channels.ior)
    d = layer.params.s2 * layer.shapemap.thickness
    tz = np.maximum(np.abs(t[..., 2]), 1e-9)
    ox = t[..., 0] / tz * d
    oy = t[..., 1] / tz * d

    h, w = layer.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    out = _bilinear_rgb(background, xs + ox, ys + oy)
    if tir.any():
        refl = reflection_pass(scene, layer) if scene.environment is not None else background
        out[tir] = refl[tir]
    exact = (d == 0.0) | ~sheet.valid
    out[exact] = background[exact]
    return out


def reflect_directions(n: np.ndarray) -> np.ndarray:
    """Mirror the view direction (0, 0, -1) about normals n."""
    nz = n[..., 2]
    return np.stack([2.0 * nz * n[..., 0], 2.0 * nz * n[..., 1], 2.0 * nz * nz - 1.0], axis=-1)


def sample_environment(env: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Nearest-texel lat-long lookup.

    Longitude: atan2(dy, dx), column 0 is the -x direction and +x maps to
    the middle column.  Latitude: asin(dz), row 0 is the zenith (+z).
    """
    eh, ew = env.shape[:2]
    lon = np.arctan2(directions[..., 1], directions[..., 0])
    lat = np.arcsin(np.clip(directions[..., 2], -1.0, 1.0))
    u = (lon + math.pi) / (2.0 * math.pi) * ew
    v = (math.pi / 2.0 - lat) / math.pi * eh
    ix = np.floor(u).astype(np.int64) % ew
    iy = np.clip(np.floor(v).astype(np.int64), 0, eh - 1)
    return env[iy, ix]


def reflection_pass(
    scene: Scene, layer: Layer, rng: np.random.Generator | None = None,
    normals: np.ndarray | None = None,
) -> np.ndarray:
    """Environment reflection; glossy variant averages jittered normals."""
    if scene.environment is None:
        raise SceneError("reflection requires an environment image")
    n = normals if normals is not None else _layer_normals(layer)
    j = scene.settings.glossy_samples
    if j <= 1:
        return sample_environment(scene.environment, reflect_directions(n))
    rng = rng or np.random.default_rng(0)
    acc = np.zeros(layer.shape + (3,))
    for _ in range(j):
        jit = n + rng.normal(0.0, 0.1, n.shape)
        jit[..., 2] = np.abs(jit[..., 2])
        jit = jit / np.maximum(np.linalg.norm(jit, axis=-1, keepdims=True), 1e-12)
        acc += sample_environment(scene.environment, reflect_directions(jit))
    return acc / j


# ---------------------------------------------------------------------------
# compositing

def composite(scene: Scene, layer_rgb: dict, layer_alpha: dict,
              layer_key: dict, layer_tie: dict) -> np.ndarray:
    """Depth-keyed source-over blend, background last.

    Per pixel, layers sort by descending key (z_offset + Z); the sheet
    height f0 breaks key ties, and scene file order breaks exact ties
    (lexsort stability).  Returns float RGBA in [0, 1].
    """
    hc, wc = scene.height, scene.width
    ids = [l.id for l in scene.layers]
    nl = len(ids)
    rgb = np.stack([layer_rgb[i] for i in ids])  # [L, H, W, 3]
    alpha = np.stack([layer_alpha[i] for i in ids])  # [L, H, W]
    keys = np.stack([layer_key[i] for i in ids])
    ties = np.stack([layer_tie[i] for i in ids])

    # lexsort: last key is primary; negate for descending, stable on ties
    order = np.lexsort((-ties, -keys), axis=0)  # [L, H, W]
    acc_rgb = np.zeros((hc, wc, 3))
    acc_a = np.zeros((hc, wc))
    for rank in range(nl):
        idx = order[rank]  # [H, W] layer index at this rank
        a = np.take_along_axis(alpha, idx[None], axis=0)[0]
        c = np.take_along_axis(rgb, idx[None, ..., None], axis=0)[0]
        w = (1.0 - acc_a) * a
        acc_rgb += w[..., None] * c
        acc_a += w

    if isinstance(scene.background, np.ndarray):
        bg = scene.background[..., :3]
    else:
        bg = np.broadcast_to(np.asarray(scene.background), (hc, wc, 3))
    out = np.empty((hc, wc, 4))
    out[..., :3] = acc_rgb + (1.0 - acc_a)[..., None] * bg
    out[..., 3] = 1.0
    return out


# ---------------------------------------------------------------------------
# orchestration

def _background_below(scene: Scene, index: int, layer_rgb, layer_alpha) -> np.ndarray:
    """Scene as composited below layer ``index`` in file order."""
    if isinstance(scene.background, np.ndarray):
        out = scene.background[..., :3].astype(np.float64).copy()
    else:
        out = np.tile(np.asarray(scene.background, dtype=np.float64), (scene.height, scene.width, 1))
    for lower in scene.layers[:index]:
        a = layer_alpha[lower.id][..., None]
        out = out * (1.0 - a) + layer_rgb[lower.id] * a
    return out


def render_scene(scene: Scene, seed: int = 0, return_aux: bool = False) -> RenderOutput:
    """Run all enabled passes and composite to an 8-bit RGBA canvas."""
    diags = [d for d in validate_scene(scene) if d.severity == "error"]
    if diags:
        raise SceneError("; ".join(str(d) for d in diags))

    timings: dict[str, float] = {}
    t_start = time.perf_counter()
    rng = np.random.default_rng(seed)
    settings = scene.settings

    t0 = time.perf_counter()
    sheets = {l.id: _layer_sheet(scene, l) for l in scene.layers}
    timings["sheets"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ao = ambient_occlusion(scene, sheets) if settings.ao_enabled else None
    timings["ao"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    shadow_masks = []
    if settings.shadows:
        shadow_masks = [shadow_mask(scene, light) for light in scene.lights]
    timings["shadows"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    layer_rgb: dict[str, np.ndarray] = {}
    layer_alpha: dict[str, np.ndarray] = {}
    layer_key: dict[str, np.ndarray] = {}
    layer_tie: dict[str, np.ndarray] = {}

    for index, layer in enumerate(scene.layers):
        sheet = sheets[layer.id]
        tx, ty = _offset(layer)
        normals = _layer_normals(layer)

        ao_local = _crop(ao, layer, fill=1.0) if ao is not None else 1.0
        shaded = AMBIENT * layer.channels.diffuse * np.asarray(ao_local)[..., None]
        for light, mask in zip(scene.lights, shadow_masks or [None] * len(scene.lights)):
            direct = shade_diffuse_specular(scene, layer, light, sheet, normals=normals)
            if mask is not None:
                lit = ~_crop(mask, layer, fill=False)
                direct = direct * lit[..., None]
            shaded = shaded + direct

        base = shaded
        if settings.refraction and layer.channels.ior is not None:
            below = _background_below(scene, index, layer_rgb, layer_alpha)
            base = refraction_pass(scene, layer, _crop(below, layer), sheet, normals=normals)

        if settings.reflection:
            refl = reflection_pass(scene, layer, rng, normals=normals)
            if settings.fresnel:
                ior = layer.channels.ior if layer.channels.ior is not None else 1.5
                f = fresnel_weight(np.clip(normals[..., 2], 0.0, 1.0), ior)
            else:
                f = PLAIN_REFLECTION_WEIGHT
            base = np.asarray(f)[..., None] * refl + (1.0 - np.asarray(f))[..., None] * base

        alpha_eff = layer.shapemap.alpha.copy()
        if layer.channels.transparency is not None:
            alpha_eff = alpha_eff * layer.channels.transparency

        crgb = np.zeros((scene.height, scene.width, 3))
        calpha = np.zeros((scene.height, scene.width))
        ckey = np.full((scene.height, scene.width), -np.inf)
        ctie = np.full((scene.height, scene.width), -np.inf)
        _paste(crgb, base, tx, ty)
        _paste(calpha, alpha_eff, tx, ty)
        _paste(ckey, layer.z_offset + layer.depth_z, tx, ty)
        _paste(ctie, sheet.f0, tx, ty)
        ckey[calpha == 0.0] = -np.inf
        layer_rgb[layer.id] = crgb
        layer_alpha[layer.id] = calpha
        layer_key[layer.id] = ckey
        layer_tie[layer.id] = ctie
    timings["shading"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    out = composite(scene, layer_rgb, layer_alpha, layer_key, layer_tie)
    np.clip(out, 0.0, 1.0, out=out)
    color = np.floor(out * 255.0 + 0.5).astype(np.uint8)
    timings["composite"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_start

    manifest = {
        "scene_sha256": scene.source_hash,
        "seed": seed,
        "backend": backend_name(),
        "canvas": [scene.width, scene.height],
        "settings": {
            "shadows": settings.shadows,
            "ao": {"enabled": settings.ao_enabled, "k": settings.ao_k,
                   "radius": settings.ao_radius},
            "reflection": settings.reflection,
            "refraction": settings.refraction,
            "fresnel": settings.fresnel,
        },
        "timings": {k: round(v, 6) for k, v in timings.items()},
    }

    aux = {}
    if return_aux:
        aux["sheets"] = sheets
        if ao is not None:
            aux["ao"] = ao
        for i, mask in enumerate(shadow_masks):
            aux[f"shadow_{i}"] = mask
    return RenderOutput(color=color, aux=aux, manifest=manifest)


def save_png(color: np.ndarray, path: str) -> None:
    """Write RGBA bytes as PNG tagged sRGB (perceptual intent)."""
    info = PngInfo()
    info.add(b"sRGB", b"\x00")
    Image.fromarray(color, mode="RGBA").save(path, format="PNG", pnginfo=info)
