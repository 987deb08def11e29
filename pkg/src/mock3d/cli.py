"""Command line entry points.

Exit codes: 0 success, 1 internal error, 2 input/validation error.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from .errors import DecodeError, MeshError, SceneError

INPUT_ERRORS = (SceneError, DecodeError, MeshError, FileNotFoundError, ValueError)


def _fail(exc: BaseException, code: int) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Shape-map authoring, analysis and rendering."""


@main.command()
@click.argument("scene_path", type=click.Path())
@click.option("-o", "--output", "out_path", required=True, type=click.Path())
@click.option("--light-pos", default=None, help="x,y,z override for the first light")
@click.option("--no-shadows", is_flag=True, help="disable the shadow pass")
@click.option("--view", "view_center", default=None, help="cx,cy point view center")
@click.option("--seed", default=0, show_default=True)
def render(scene_path, out_path, light_pos, no_shadows, view_center, seed):
    """Render SCENE_PATH to a PNG plus a JSON render manifest."""
    from dataclasses import replace

    from .render import render_scene, save_png
    from .fieldcalc import RayFan
    from .scene import Light, load_scene

    try:
        scene = load_scene(scene_path)
        if light_pos is not None:
            x, y, z = (float(v) for v in light_pos.split(","))
            first = scene.lights[0] if scene.lights else None
            light = Light(
                "point",
                position=(x, y, z),
                color=first.color if first else (1.0, 1.0, 1.0),
                intensity=first.intensity if first else 1.0,
            )
            scene = replace(scene, lights=(light,) + scene.lights[1:])
        if no_shadows:
            scene = replace(scene, settings=replace(scene.settings, shadows=False))
        if view_center is not None:
            cx, cy = (float(v) for v in view_center.split(","))
            scene = replace(scene, view=RayFan("point", center=(cx, cy)))
    except INPUT_ERRORS as exc:
        _fail(exc, 2)
    try:
        result = render_scene(scene, seed=seed)
        save_png(result.color, out_path)
        manifest_path = os.path.splitext(out_path)[0] + ".manifest.json"
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(result.manifest, fh, indent=1, sort_keys=True)
    except Exception as exc:  # pragma: no cover - internal failure path
        _fail(exc, 1)
    click.echo(f"wrote {out_path}")


@main.command()
@click.argument("map_path", type=click.Path())
@click.option("-o", "--output", "out_dir", required=True, type=click.Path())
@click.option("--centers", default=None,
              help="semicolon-separated x,y ray centers (default: the four corners)")
def analyze(map_path, out_dir, centers):
    """Write curl and view-dependence false-color PNGs plus a JSON summary."""
    from .fieldcalc import IntegralParams, curl_map, export_diverging_png, view_dependence_map
    from .shapemap import load_shapemap

    try:
        smap = load_shapemap(map_path)
    except INPUT_ERRORS as exc:
        _fail(exc, 2)
    try:
        os.makedirs(out_dir, exist_ok=True)
        curl, valid = curl_map(smap)
        export_diverging_png(curl, os.path.join(out_dir, "curl.png"))
        if centers:
            pts = [tuple(float(v) for v in c.split(",")) for c in centers.split(";")]
        else:
            w1, h1 = smap.width - 1.0, smap.height - 1.0
            pts = [(0.0, 0.0), (w1, 0.0), (0.0, h1), (w1, h1)]
        vdm = view_dependence_map(smap, None, IntegralParams(s0=1.0, s1=0.0, s2=0.0), pts)
        export_diverging_png(vdm, os.path.join(out_dir, "view_dependence.png"))
        summary = {
            "max_abs_curl": float(np.abs(curl[valid]).max()) if valid.any() else 0.0,
            "mean_view_dependence": float(vdm.mean()),
        }
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=1, sort_keys=True)
    except Exception as exc:  # pragma: no cover
        _fail(exc, 1)
    click.echo(f"wrote {out_dir}")


@main.command()
@click.argument("height_path", type=click.Path())
@click.option("-o", "--output", "out_path", required=True, type=click.Path())
@click.option("--thickness", default=0.5, show_default=True)
@click.option("--gain", default=1.0, show_default=True)
@click.option("--feather", default=0.0, show_default=True,
              help="thickness feather width near the silhouette, px")
def bake(height_path, out_path, thickness, gain, feather):
    """Bake HEIGHT_PATH (grayscale image) into a shape map PNG + sidecar."""
    from PIL import Image

    from .author import bake_from_heightfield, save_with_sidecar

    try:
        with Image.open(height_path) as im:
            h = np.asarray(im.convert("F"), dtype=np.float64) / 255.0
    except FileNotFoundError as exc:
        _fail(exc, 2)
    except Exception as exc:
        _fail(DecodeError(f"cannot read height field {height_path}: {exc}"), 2)
    try:
        smap = bake_from_heightfield(h, thickness=thickness, gain=gain)
        if feather > 0:
            from scipy.ndimage import distance_transform_edt

            dist = distance_transform_edt(smap.alpha > 0)
            from .shapemap import ShapeMap

            smap = ShapeMap.from_channels(
                smap.n0, smap.n1, smap.thickness * np.clip(dist / feather, 0, 1), smap.alpha
            )
        save_with_sidecar(smap, out_path, gain=gain, feather=feather, source="heightfield")
    except Exception as exc:  # pragma: no cover
        _fail(exc, 1)
    click.echo(f"wrote {out_path}")


@main.command()
@click.argument("photo_path", type=click.Path())
@click.option("--key", required=True, help='background color "#rrggbb"')
@click.option("--tol", default=0.1, show_default=True)
@click.option("--blue", default=0.5, show_default=True)
@click.option("-o", "--output", "out_path", required=True, type=click.Path())
def photo(photo_path, key, tol, blue, out_path):
    """Convert a red/green-lit photograph into a shape map."""
    from PIL import Image

    from .author import photo_to_shapemap, save_with_sidecar

    try:
        with Image.open(photo_path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        key_rgb = tuple(int(key.lstrip("#")[i : i + 2], 16) / 255.0 for i in (0, 2, 4))
    except FileNotFoundError as exc:
        _fail(exc, 2)
    except Exception as exc:
        _fail(DecodeError(f"cannot read photo {photo_path}: {exc}"), 2)
    try:
        smap = photo_to_shapemap(rgb, key=key_rgb, key_tolerance=tol, blue_fill=blue)
        save_with_sidecar(smap, out_path, key=key, tolerance=tol, blue_fill=blue, source="photo")
    except Exception as exc:  # pragma: no cover
        _fail(exc, 1)
    click.echo(f"wrote {out_path}")


@main.command()
@click.argument("mesh_path", type=click.Path())
@click.option("-o", "--output", "out_path", required=True, type=click.Path())
@click.option("--res", default=256, show_default=True)
@click.option("--feather", default=0.0, show_default=True)
def compile(mesh_path, out_path, res, feather):
    """Rasterize a patch-mesh JSON into a shape map PNG."""
    from .author import load_mesh, rasterize_shapemap, save_with_sidecar

    try:
        mesh = load_mesh(mesh_path)
    except INPUT_ERRORS as exc:
        _fail(exc, 2)
    try:
        smap = rasterize_shapemap(mesh, res, feather=feather)
        save_with_sidecar(smap, out_path, resolution=res, feather=feather,
                          source=f"patchmesh:{os.path.basename(mesh_path)}")
    except Exception as exc:  # pragma: no cover
        _fail(exc, 1)
    click.echo(f"wrote {out_path}")


@main.command()
@click.argument("scene_path", type=click.Path())
@click.option("--port", default=8765, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(scene_path, port, host):
    """Serve the render/authoring HTTP API for the browser UI."""
    import uvicorn

    from .service import make_app

    try:
        app = make_app(scene_path)
    except INPUT_ERRORS as exc:
        _fail(exc, 2)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
