import numpy as np
import pytest

from mock3d import IntegralParams, RayFan, ShapeMap
from mock3d.scene import Layer, LayerChannels, Light, Scene, Settings


def build_scene(layers, lights=(), width=None, height=None, settings=None,
                view=None, background=(0.0, 0.0, 0.0), environment=None):
    """Programmatic Scene for renderer tests (canvas defaults to layer 0)."""
    h, w = layers[0].shape
    width = width or w
    height = height or h
    return Scene(
        width=width,
        height=height,
        background=background,
        layers=tuple(layers),
        lights=tuple(lights),
        view=view or RayFan("point", center=((width - 1) / 2.0, (height - 1) / 2.0)),
        settings=settings or Settings(),
        environment=environment,
        source_hash="test",
    )


def simple_layer(layer_id, smap, diffuse=None, z=None, **kw):
    h, w = smap.n0.shape
    channels = LayerChannels(
        diffuse=diffuse if diffuse is not None else np.ones((h, w, 3)),
        specular=kw.pop("specular", 0.0),
        transparency=kw.pop("transparency", None),
        ior=kw.pop("ior", None),
    )
    return Layer(
        id=layer_id,
        shapemap=smap,
        channels=channels,
        depth_z=z if z is not None else np.zeros((h, w)),
        **kw,
    )


def gaussian_bump(size: int, sigma: float, amp: float):
    """Height field h plus its analytic gradient sampled at pixel centers."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    r2 = (xs - c) ** 2 + (ys - c) ** 2
    h = amp * np.exp(-r2 / (2.0 * sigma**2))
    gx = -(xs - c) / sigma**2 * h
    gy = -(ys - c) / sigma**2 * h
    return h, gx, gy


def rotation_field(size: int, k: float):
    """(n0, n1) = (-k*(y-c), k*(x-c)); curl is 2k everywhere."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    return -k * (ys - c), k * (xs - c)


def full_map(n0, n1, thickness=None):
    n0 = np.asarray(n0, dtype=np.float64)
    if thickness is None:
        thickness = np.zeros_like(n0)
    return ShapeMap.from_channels(n0, n1, thickness, np.ones_like(n0))


def hemisphere_field(size: int, radius: float):
    """Unit-hemisphere normals: n0 = (x-c)/R, n1 = (y-c)/R inside, 0 outside."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    dx = (xs - c) / radius
    dy = (ys - c) / radius
    inside = dx**2 + dy**2 < 1.0
    return np.where(inside, dx, 0.0), np.where(inside, dy, 0.0), inside


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
