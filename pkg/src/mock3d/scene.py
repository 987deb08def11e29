"""Scene data model: layers, channels, lights, settings, JSON loading.

A scene is an orthographic canvas stacking shape-map layers.  Scene files
are JSON; image assets are referenced by path relative to the file.  All
lengths are pixels, depths are canvas z units, y grows downward.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image

from .errors import SceneError
from .fieldcalc import IntegralParams, RayFan
from .shapemap import NormalParams, ShapeMap, load_shapemap

__all__ = [
    "Light",
    "LayerChannels",
    "Layer",
    "Settings",
    "Scene",
    "Diagnostic",
    "load_scene",
    "validate_scene",
]

DEFAULT_S = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class Light:
    """Point light (3D position) or directional light (unit travel direction)."""

    kind: str
    position: tuple[float, float, float] | None = None
    direction: tuple[float, float, float] | None = None
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)
    intensity: float = 1.0

    def __post_init__(self):
        if self.kind not in ("point", "directional"):
            raise SceneError(f"unknown light kind {self.kind!r}")
        if self.intensity < 0:
            raise SceneError("light intensity must be >= 0")
        if self.kind == "point":
            if self.position is None:
                raise SceneError("point light needs a position")
        else:
            if self.direction is None:
                raise SceneError("directional light needs a direction")
            n = math.sqrt(sum(c * c for c in self.direction))
            if abs(n - 1.0) > 1e-6:
                raise SceneError(f"directional light direction must be unit length, |d| = {n:.6f}")
        if any(not (0.0 <= c <= 1.0) for c in self.color):
            raise SceneError("light color components must be in [0, 1]")


@dataclass(frozen=True)
class LayerChannels:
    """Material channels: all rasters are float in [0, 1], layer-sized."""

    diffuse: np.ndarray  # [H, W, 3]
    specular: float | np.ndarray = 0.0
    transparency: np.ndarray | None = None  # opacity multiplier, 1 = opaque
    ior: float | None = None


@dataclass(frozen=True)
class Layer:
    id: str
    shapemap: ShapeMap
    channels: LayerChannels
    depth_z: np.ndarray  # [H, W] canvas z units
    z_offset: float = 0.0
    translate: tuple[float, float] = (0.0, 0.0)
    params: IntegralParams = IntegralParams()
    normal_params: NormalParams = NormalParams()
    mesh_path: str | None = None

    @property
    def shape(self):
        return self.shapemap.n0.shape


@dataclass(frozen=True)
class Settings:
    shadows: bool = False
    ao_enabled: bool = False
    ao_k: int = 16
    ao_radius: int = 32
    reflection: bool = False
    refraction: bool = False
    fresnel: bool = False
    glossy_samples: int = 1

    def __post_init__(self):
        if self.ao_k < 4:
            raise SceneError("ambient occlusion needs k >= 4 directions")
        if self.glossy_samples < 1:
            raise SceneError("glossy_samples must be >= 1")


@dataclass(frozen=True)
class Scene:
    width: int
    height: int
    background: tuple[float, float, float] | np.ndarray
    layers: tuple[Layer, ...]
    lights: tuple[Light, ...]
    view: RayFan
    settings: Settings = Settings()
    environment: np.ndarray | None = None
    source_hash: str = ""

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise SceneError("canvas dimensions must be positive")
        if not self.layers:
            raise SceneError("scene needs at least one layer")
        ids = [l.id for l in self.layers]
        if len(set(ids)) != len(ids):
            raise SceneError(f"layer ids must be unique, got {ids}")

    def layer(self, layer_id: str) -> Layer:
        for l in self.layers:
            if l.id == layer_id:
                return l
        raise SceneError(f"no layer with id {layer_id!r}")

    def with_layer(self, new_layer: Layer) -> "Scene":
        layers = tuple(new_layer if l.id == new_layer.id else l for l in self.layers)
        return replace(self, layers=layers)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    layer: str | None = None

    def __str__(self):
        where = f" [layer {self.layer}]" if self.layer else ""
        return f"{self.severity}{where}: {self.message}"


def _parse_color(s) -> tuple[float, float, float]:
    if isinstance(s, (list, tuple)) and len(s) == 3:
        return tuple(float(c) for c in s)
    if isinstance(s, str) and s.startswith("#") and len(s) == 7:
        return tuple(int(s[i : i + 2], 16) / 255.0 for i in (1, 3, 5))
    raise SceneError(f"cannot parse color {s!r}")


def _load_rgb(path: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB")).astype(np.float64) / 255.0
    except FileNotFoundError:
        raise SceneError(f"missing asset: {path}")
    except Exception as exc:
        raise SceneError(f"cannot read image asset {path}: {exc}")


def _load_gray(path: str) -> np.ndarray:
    rgb = _load_rgb(path)
    return rgb.mean(axis=2)


def _resolve(base: str, rel: str) -> str:
    return rel if os.path.isabs(rel) else os.path.join(base, rel)


def _layer_from_json(obj: dict, base: str, canvas_wh: tuple[int, int]) -> Layer:
    lid = obj.get("id")
    if not lid:
        raise SceneError("layer without id")

    src = obj.get("shapemap")
    depth_from_mesh = None
    mesh_path = None
    if isinstance(src, str):
        path = _resolve(base, src)
        if not os.path.exists(path):
            raise SceneError(f"missing asset: {path} (layer {lid})")
        smap = load_shapemap(path)
    elif isinstance(src, dict) and "patchmesh" in src:
        from .author import load_mesh, rasterize_shapemap

        mesh_path = _resolve(base, src["patchmesh"])
        if not os.path.exists(mesh_path):
            raise SceneError(f"missing asset: {mesh_path} (layer {lid})")
        mesh = load_mesh(mesh_path)
        res = int(src.get("resolution", 0)) or min(canvas_wh)
        smap, depth_from_mesh = rasterize_shapemap(mesh, res, with_depth=True)
    else:
        raise SceneError(f"layer {lid}: shapemap must be a path or {{'patchmesh': path}}")

    h, w = smap.n0.shape
    ch = obj.get("channels", {})
    if "diffuse" in ch:
        diffuse = _load_rgb(_resolve(base, ch["diffuse"]))
    else:
        diffuse = np.ones((h, w, 3))
    spec = ch.get("specular", 0.0)
    if isinstance(spec, str):
        spec = _load_gray(_resolve(base, spec))
    else:
        spec = float(spec)
    transparency = None
    if ch.get("transparency") is not None:
        transparency = _load_gray(_resolve(base, ch["transparency"]))
    ior = ch.get("ior")
    if ior is not None:
        ior = float(ior)
        if ior < 1.0:
            raise SceneError(f"layer {lid}: index of refraction must be >= 1, got {ior}")

    depth = obj.get("depth", {})
    z_offset = float(depth.get("z_offset", 0.0))
    if depth.get("image"):
        z = _load_gray(_resolve(base, depth["image"])) * float(depth.get("z_scale", 1.0))
    elif depth_from_mesh is not None:
        z = depth_from_mesh
    else:
        z = np.zeros((h, w))

    pj = obj.get("params", {})
    params = IntegralParams(
        s0=float(pj.get("s0", 1.0)),
        s1=float(pj.get("s1", 1.0)),
        s2=float(pj.get("s2", 0.5)),
        n=int(pj.get("n", 1)),
    )
    normal_params = NormalParams(s=float(pj.get("s", DEFAULT_S)))
    translate = tuple(float(v) for v in obj.get("translate", (0.0, 0.0)))

    return Layer(
        id=lid,
        shapemap=smap,
        channels=LayerChannels(diffuse=diffuse, specular=spec, transparency=transparency, ior=ior),
        depth_z=z,
        z_offset=z_offset,
        translate=translate,
        params=params,
        normal_params=normal_params,
        mesh_path=mesh_path,
    )


def _light_from_json(obj: dict) -> Light:
    kind = obj.get("kind")
    common = dict(
        color=_parse_color(obj.get("color", [1, 1, 1])),
        intensity=float(obj.get("intensity", 1.0)),
    )
    if kind == "point":
        return Light("point", position=tuple(float(v) for v in obj["position"]), **common)
    if kind == "directional":
        d = np.asarray(obj["direction"], dtype=np.float64)
        n = np.linalg.norm(d)
        if n == 0:
            raise SceneError("directional light direction cannot be zero")
        return Light("directional", direction=tuple(d / n), **common)
    raise SceneError(f"unknown light kind {kind!r}")


def scene_from_json(doc: dict, base: str, source_hash: str = "") -> Scene:
    canvas = doc.get("canvas")
    if not canvas:
        raise SceneError("scene is missing 'canvas'")
    width, height = int(canvas["width"]), int(canvas["height"])

    bg = canvas.get("background", "#000000")
    if isinstance(bg, dict) and "image" in bg:
        background = _load_rgb(_resolve(base, bg["image"]))
    else:
        background = _parse_color(bg)

    environment = None
    env = doc.get("environment")
    if env and env.get("image"):
        environment = _load_rgb(_resolve(base, env["image"]))

    vj = doc.get("view", {})
    mode = vj.get("mode", "point")
    if mode == "point":
        center = vj.get("center", [(width - 1) / 2.0, (height - 1) / 2.0])
        view = RayFan("point", center=tuple(float(v) for v in center))
    else:
        view = RayFan("directional", theta=float(vj.get("theta", 0.0)))

    layers = tuple(_layer_from_json(l, base, (width, height)) for l in doc.get("layers", []))
    lights = tuple(_light_from_json(l) for l in doc.get("lights", []))

    sj = doc.get("settings", {})
    ao = sj.get("ao", {})
    settings = Settings(
        shadows=bool(sj.get("shadows", False)),
        ao_enabled=bool(ao.get("enabled", False)),
        ao_k=int(ao.get("k", 16)),
        ao_radius=int(ao.get("radius", 32)),
        reflection=bool(sj.get("reflection", False)),
        refraction=bool(sj.get("refraction", False)),
        fresnel=bool(sj.get("fresnel", False)),
        glossy_samples=int(sj.get("glossy_samples", 1)),
    )

    scene = Scene(
        width=width,
        height=height,
        background=background,
        layers=layers,
        lights=lights,
        view=view,
        settings=settings,
        environment=environment,
        source_hash=source_hash,
    )
    errors = [d for d in validate_scene(scene) if d.severity == "error"]
    if errors:
        raise SceneError("; ".join(str(d) for d in errors))
    return scene


def load_scene(path: str) -> Scene:
    """Load and fully resolve a scene JSON file; raises SceneError naming
    the offending asset or field on any problem."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError:
        raise SceneError(f"missing scene file: {path}")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SceneError(f"scene file {path} is not valid JSON: {exc}")
    return scene_from_json(doc, os.path.dirname(os.path.abspath(path)),
                           hashlib.sha256(raw).hexdigest())


def validate_scene(scene: Scene) -> list[Diagnostic]:
    """Non-fatal warnings plus fatal errors, as a list of diagnostics."""
    out: list[Diagnostic] = []
    for layer in scene.layers:
        h, w = layer.shape
        if layer.channels.diffuse.shape[:2] != (h, w):
            out.append(Diagnostic(
                "error",
                f"diffuse texture {layer.channels.diffuse.shape[:2]} does not match "
                f"shape map {(h, w)}",
                layer.id,
            ))
        tr = layer.channels.transparency
        if tr is not None and tr.shape != (h, w):
            out.append(Diagnostic("error", "transparency texture dimension mismatch", layer.id))
        sp = layer.channels.specular
        if isinstance(sp, np.ndarray) and sp.shape != (h, w):
            out.append(Diagnostic("error", "specular texture dimension mismatch", layer.id))
        if layer.depth_z.shape != (h, w):
            out.append(Diagnostic("error", "depth channel dimension mismatch", layer.id))
        if layer.channels.ior is not None and layer.channels.ior < 1.0:
            out.append(Diagnostic("error", "index of refraction must be >= 1", layer.id))

    if scene.settings.refraction:
        refractive = [l for l in scene.layers if l.channels.ior is not None]
        if not refractive:
            out.append(Diagnostic("warning", "refraction enabled but no layer has an ior"))
        elif all(l.shapemap.thickness.max() == 0.0 for l in refractive):
            out.append(Diagnostic(
                "warning", "refraction will be an identity mapping (all thickness is 0)"
            ))
    if scene.settings.reflection and scene.environment is None:
        out.append(Diagnostic("error", "reflection enabled but no environment image present"))
    if isinstance(scene.background, np.ndarray) and scene.background.shape[:2] != (
        scene.height,
        scene.width,
    ):
        out.append(Diagnostic("error", "background image does not match canvas dimensions"))
    return out
