"""Shape maps from height fields and from red/green-lit photographs."""

from __future__ import annotations

import json

import numpy as np

from ..shapemap import ShapeMap, encode_shapemap

__all__ = ["bake_from_heightfield", "photo_to_shapemap", "save_with_sidecar"]


def bake_from_heightfield(h: np.ndarray, thickness=0.5, gain: float = 1.0) -> ShapeMap:
    """Gradient-render a height field: n0 = gain * dh/dx, n1 = gain * dh/dy
    (central differences), clamped to [-1, 1]; thickness is a constant or a
    raster; alpha is 1 everywhere.  Record ``gain`` in a sidecar so the
    reconstruction can be scaled back to height units.
    """
    h = np.asarray(h, dtype=np.float64)
    if not np.isfinite(h).all():
        raise ValueError("height field must be finite")
    gy, gx = np.gradient(h)
    n0 = np.clip(gain * gx, -1.0, 1.0)
    n1 = np.clip(gain * gy, -1.0, 1.0)
    if np.isscalar(thickness):
        t = np.full_like(h, float(thickness))
    else:
        t = np.asarray(thickness, dtype=np.float64)
    return ShapeMap.from_channels(n0, n1, t, np.ones_like(h))


def photo_to_shapemap(
    photo: np.ndarray, key, key_tolerance: float = 0.1, blue_fill: float = 0.5
) -> ShapeMap:
    """Convert a photo lit by red light from the left and green from the top.

    Pixels within ``key_tolerance`` (euclidean RGB distance, channels in
    [0, 1]) of the ``key`` background color become transparent; elsewhere
    the red/green channels decode to the field exactly like a shape-map
    image and thickness is the constant ``blue_fill``.
    """
    photo = np.asarray(photo, dtype=np.float64)
    if photo.ndim != 3 or photo.shape[2] < 3:
        raise ValueError("photo must be an RGB raster")
    if photo.max() > 1.0:
        photo = photo / 255.0
    if not (0.0 < blue_fill <= 1.0):
        raise ValueError("blue_fill must be in (0, 1]")
    key = np.asarray(key, dtype=np.float64)
    if key.max() > 1.0:
        key = key / 255.0
    dist = np.sqrt(((photo[:, :, :3] - key) ** 2).sum(axis=2))
    alpha = (dist > key_tolerance).astype(np.float64)
    n0 = 2.0 * photo[:, :, 0] - 1.0
    n1 = 2.0 * photo[:, :, 1] - 1.0
    t = np.full(alpha.shape, blue_fill)
    return ShapeMap.from_channels(n0, n1, t, alpha)


def save_with_sidecar(smap: ShapeMap, path: str, **meta) -> None:
    """Write the PNG plus a JSON sidecar (gain, feather width, source kind)."""
    from PIL import Image

    Image.fromarray(encode_shapemap(smap), mode="RGBA").save(path, format="PNG")
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
