"""Local HTTP service for the browser studio.

Renders are stateless against the current scene snapshot; authoring
mutations (field edits, param edits) are serialized through one lock and
swap the affected layer atomically, so concurrent renders never observe a
half-recompiled layer.  Malformed requests get 400 with a JSON error body.
"""

from __future__ import annotations

import base64
import io
import json
import threading
from dataclasses import replace

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response

from .errors import Mock3DError, SceneError
from .fieldcalc import IntegralParams, RayFan, curl_map, export_diverging_png
from .scene import Light, Scene, load_scene
from .shapemap import NormalParams, encode_shapemap
from .render import render_scene

__all__ = ["make_app"]


def _png_bytes(rgba: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def _scene_to_json(scene: Scene) -> dict:
    view = {"mode": scene.view.mode}
    if scene.view.mode == "point":
        view["center"] = list(scene.view.center)
    else:
        view["theta"] = scene.view.theta
    return {
        "canvas": {"width": scene.width, "height": scene.height},
        "view": view,
        "layers": [
            {
                "id": l.id,
                "size": [l.shape[1], l.shape[0]],
                "translate": list(l.translate),
                "z_offset": l.z_offset,
                "has_mesh": l.mesh_path is not None,
                "params": {
                    "s0": l.params.s0,
                    "s1": l.params.s1,
                    "s2": l.params.s2,
                    "n": l.params.n,
                    "s": l.normal_params.s,
                },
            }
            for l in scene.layers
        ],
        "lights": [
            {
                "kind": l.kind,
                **({"position": list(l.position)} if l.kind == "point"
                   else {"direction": list(l.direction)}),
                "color": list(l.color),
                "intensity": l.intensity,
            }
            for l in scene.lights
        ],
        "settings": {
            "shadows": scene.settings.shadows,
            "ao": {"enabled": scene.settings.ao_enabled, "k": scene.settings.ao_k},
            "reflection": scene.settings.reflection,
            "refraction": scene.settings.refraction,
            "fresnel": scene.settings.fresnel,
        },
    }


def _light_from_json(obj: dict) -> Light:
    kind = obj.get("kind")
    if kind == "point":
        return Light("point", position=tuple(float(v) for v in obj["position"]),
                     color=tuple(obj.get("color", (1, 1, 1))),
                     intensity=float(obj.get("intensity", 1.0)))
    if kind == "directional":
        d = np.asarray(obj["direction"], dtype=np.float64)
        n = np.linalg.norm(d)
        if n == 0:
            raise SceneError("light direction cannot be zero")
        return Light("directional", direction=tuple(d / n),
                     color=tuple(obj.get("color", (1, 1, 1))),
                     intensity=float(obj.get("intensity", 1.0)))
    raise SceneError(f"unknown light kind {kind!r}")


def _apply_overrides(scene: Scene, body: dict) -> Scene:
    if body.get("lights") is not None:
        scene = replace(scene, lights=tuple(_light_from_json(l) for l in body["lights"]))
    if body.get("view") is not None:
        v = body["view"]
        if v.get("mode", "point") == "point":
            scene = replace(scene, view=RayFan("point", center=tuple(v["center"])))
        else:
            scene = replace(scene, view=RayFan("directional", theta=float(v["theta"])))
    if body.get("settings") is not None:
        s = body["settings"]
        ao = s.get("ao", {})
        scene = replace(scene, settings=replace(
            scene.settings,
            shadows=bool(s.get("shadows", scene.settings.shadows)),
            ao_enabled=bool(ao.get("enabled", scene.settings.ao_enabled)),
            ao_k=int(ao.get("k", scene.settings.ao_k)),
            reflection=bool(s.get("reflection", scene.settings.reflection)),
            refraction=bool(s.get("refraction", scene.settings.refraction)),
            fresnel=bool(s.get("fresnel", scene.settings.fresnel)),
        ))
    if body.get("layer_params") is not None:
        for lid, pj in body["layer_params"].items():
            layer = scene.layer(lid)
            scene = scene.with_layer(_layer_with_params(layer, pj))
    return scene


def _layer_with_params(layer, pj: dict):
    params = IntegralParams(
        s0=float(pj.get("s0", layer.params.s0)),
        s1=float(pj.get("s1", layer.params.s1)),
        s2=float(pj.get("s2", layer.params.s2)),
        n=int(pj.get("n", layer.params.n)),
    )
    normal_params = NormalParams(s=float(pj.get("s", layer.normal_params.s)))
    return replace(layer, params=params, normal_params=normal_params)


def make_app(scene_path: str) -> FastAPI:
    app = FastAPI(title="mock3d studio service")
    state = {"scene": load_scene(scene_path), "meshes": {}}
    write_lock = threading.Lock()

    # preload meshes for layers compiled from patch meshes
    from .author import load_mesh

    for layer in state["scene"].layers:
        if layer.mesh_path:
            state["meshes"][layer.id] = load_mesh(layer.mesh_path)

    def bad_request(message: str) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": message})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return bad_request(str(exc))

    @app.exception_handler(Mock3DError)
    async def domain_handler(request: Request, exc: Mock3DError):
        return bad_request(str(exc))

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/scene")
    def get_scene():
        return _scene_to_json(state["scene"])

    @app.post("/render")
    async def render(request: Request):
        try:
            raw = await request.body()
            body = json.loads(raw) if raw else {}
        except json.JSONDecodeError:
            return bad_request("request body must be JSON")
        try:
            scene = _apply_overrides(state["scene"], body)
        except (Mock3DError, KeyError, TypeError, ValueError) as exc:
            return bad_request(f"invalid overrides: {exc}")
        size = body.get("size")
        result = render_scene(scene, seed=int(body.get("seed", 0)))
        color = result.color
        if size:
            color = _resize_nearest(color, int(size[0]), int(size[1]))
        manifest = base64.b64encode(json.dumps(result.manifest).encode()).decode()
        return Response(content=_png_bytes(color), media_type="image/png",
                        headers={"X-Render-Manifest": manifest})

    @app.get("/layers/{layer_id}/shapemap")
    def layer_shapemap(layer_id: str, channel: str = "all"):
        layer = state["scene"].layer(layer_id)
        rgba = encode_shapemap(layer.shapemap)
        if channel == "thickness":
            g = rgba[..., 2]
            rgba = np.stack([g, g, g, np.full_like(g, 255)], axis=2)
        elif channel != "all":
            return bad_request(f"unknown channel {channel!r} (use all|thickness)")
        return Response(content=_png_bytes(rgba), media_type="image/png")

    @app.get("/layers/{layer_id}/curl")
    def layer_curl(layer_id: str):
        import tempfile, os

        layer = state["scene"].layer(layer_id)
        curl, _ = curl_map(layer.shapemap)
        with tempfile.TemporaryDirectory() as td:
            p = os.path.join(td, "curl.png")
            export_diverging_png(curl, p)
            with open(p, "rb") as fh:
                data = fh.read()
        return Response(content=data, media_type="image/png")

    @app.get("/layers/{layer_id}/mesh")
    def layer_mesh(layer_id: str):
        state["scene"].layer(layer_id)  # 400 via handler when unknown
        mesh = state["meshes"].get(layer_id)
        if mesh is None:
            return bad_request(f"layer {layer_id!r} has no patch mesh")
        return {
            "vertices": [
                {"pos": v.pos.tolist(), "z": v.z, "thickness": v.thickness,
                 "control_vector": v.control_vector.tolist()}
                for v in mesh.vertices
            ],
            "edges": [{"v0": e.v0, "v1": e.v1, "ctrl": e.ctrl.tolist()} for e in mesh.edges],
            "faces": [{"edges": list(f.edges), "visible": f.visible} for f in mesh.faces],
        }

    @app.post("/layers/{layer_id}/field")
    async def layer_field(layer_id: str, request: Request):
        from .author import rasterize_shapemap

        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return bad_request("request body must be JSON")
        with write_lock:
            scene = state["scene"]
            layer = scene.layer(layer_id)
            mesh = state["meshes"].get(layer_id)
            if mesh is None:
                return bad_request(f"layer {layer_id!r} has no patch mesh")
            for vid_str, vec in body.items():
                try:
                    vid = int(vid_str)
                    vx, vy = float(vec[0]), float(vec[1])
                except (TypeError, ValueError, IndexError):
                    return bad_request(f"vertex {vid_str}: control vector must be [x, y]")
                if not (0 <= vid < len(mesh.vertices)):
                    return bad_request(f"vertex {vid_str} does not exist")
                if abs(vx) > 1.0 or abs(vy) > 1.0:
                    return bad_request(
                        f"vertex {vid_str}: control vector must lie in [-1, 1]^2"
                    )
                mesh.vertices[vid].control_vector = np.array([vx, vy])
            res = max(layer.shape)
            smap, z = rasterize_shapemap(mesh, res, with_depth=True)
            state["scene"] = scene.with_layer(replace(layer, shapemap=smap, depth_z=z))
        result = render_scene(state["scene"])
        manifest = base64.b64encode(json.dumps(result.manifest).encode()).decode()
        return Response(content=_png_bytes(result.color), media_type="image/png",
                        headers={"X-Render-Manifest": manifest})

    @app.post("/layers/{layer_id}/params")
    async def layer_params(layer_id: str, request: Request):
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return bad_request("request body must be JSON")
        with write_lock:
            scene = state["scene"]
            layer = scene.layer(layer_id)
            try:
                state["scene"] = scene.with_layer(_layer_with_params(layer, body))
            except (ValueError, SceneError) as exc:
                return bad_request(str(exc))
        updated = state["scene"].layer(layer_id)
        return {
            "s0": updated.params.s0,
            "s1": updated.params.s1,
            "s2": updated.params.s2,
            "n": updated.params.n,
            "s": updated.normal_params.s,
        }

    return app


def _resize_nearest(rgba: np.ndarray, w: int, h: int) -> np.ndarray:
    ys = (np.arange(h) * rgba.shape[0] / h).astype(np.int64)
    xs = (np.arange(w) * rgba.shape[1] / w).astype(np.int64)
    return rgba[ys][:, xs]
