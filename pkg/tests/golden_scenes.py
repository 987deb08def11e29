"""Deterministic golden-image fixture scenes (checker, hemisphere, rotation).

Run ``python tests/golden_scenes.py --write`` to (re)generate the committed
goldens after an intentional renderer change; the test compares fresh
renders against them within 2/255 per channel.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(__file__))

from conftest import build_scene, hemisphere_field, rotation_field, simple_layer  # noqa: E402
from mock3d import RayFan, ShapeMap  # noqa: E402
from mock3d.scene import Light, Settings  # noqa: E402

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "goldens")
SIZE = 96


def checker_scene():
    ys, xs = np.mgrid[0:SIZE, 0:SIZE]
    cells = ((xs // 12) + (ys // 12)) % 2
    n0 = np.where(cells == 0, 0.35, -0.35)
    n1 = np.where(cells == 0, -0.35, 0.35)
    m = ShapeMap.from_channels(n0, n1, np.full((SIZE, SIZE), 0.4), np.ones((SIZE, SIZE)))
    diffuse = np.stack([0.9 * np.ones((SIZE, SIZE)), 0.8 * np.ones((SIZE, SIZE)),
                        0.6 * np.ones((SIZE, SIZE))], axis=-1)
    layer = simple_layer("checker", m, diffuse=diffuse, specular=0.4)
    lights = [Light("point", position=(-20.0, -30.0, 120.0), intensity=0.9),
              Light("directional", direction=tuple(np.array([0.5, 0.8, -1.0]) / np.linalg.norm([0.5, 0.8, -1.0])),
                    color=(0.9, 0.9, 1.0), intensity=0.4)]
    return build_scene([layer], lights, background=(0.12, 0.1, 0.18),
                       settings=Settings(shadows=True, ao_enabled=True, ao_k=16))


def hemisphere_scene():
    n0, n1, inside = hemisphere_field(SIZE, 34.0)
    m = ShapeMap.from_channels(n0, n1, np.where(inside, 0.6, 0.0), inside * 1.0)
    diffuse = np.stack([np.full((SIZE, SIZE), 0.85), np.full((SIZE, SIZE), 0.3),
                        np.full((SIZE, SIZE), 0.25)], axis=-1)
    layer = simple_layer("dome", m, diffuse=diffuse, specular=0.8)
    lights = [Light("directional",
                    direction=tuple(np.array([1.0, 0.4, -0.8]) / np.linalg.norm([1.0, 0.4, -0.8])))]
    return build_scene([layer], lights, background=(0.05, 0.07, 0.1),
                       settings=Settings(shadows=True, ao_enabled=True, ao_k=16))


def rotation_scene():
    n0, n1 = rotation_field(SIZE, 0.6 / (SIZE / 2))
    ys, xs = np.mgrid[0:SIZE, 0:SIZE].astype(float)
    c = (SIZE - 1) / 2.0
    inside = np.hypot(xs - c, ys - c) < 42.0
    m = ShapeMap.from_channels(np.where(inside, n0, 0.0), np.where(inside, n1, 0.0),
                               np.where(inside, 0.5, 0.0), inside * 1.0)
    layer = simple_layer("vortex", m)
    lights = [Light("point", position=(10.0, 10.0, 80.0))]
    return build_scene([layer], lights, background=(0.2, 0.2, 0.2),
                       view=RayFan("point", center=(8.0, 88.0)),
                       settings=Settings(ao_enabled=True, ao_k=16))


SCENES = {
    "checker": checker_scene,
    "hemisphere": hemisphere_scene,
    "rotation": rotation_scene,
}


def write_goldens():
    from mock3d.render import render_scene, save_png

    os.makedirs(GOLDEN_DIR, exist_ok=True)
    for name, factory in SCENES.items():
        out = render_scene(factory(), seed=0)
        path = os.path.join(GOLDEN_DIR, f"{name}.png")
        save_png(out.color, path)
        print("wrote", path)


if __name__ == "__main__":
    if "--write" in sys.argv:
        write_goldens()
    else:
        print(__doc__)
