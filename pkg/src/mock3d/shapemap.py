"""Shape-map rasters: decode/encode, continuous sampling, normal rebuild.

A shape map packs a 2D vector field (red/green), a thickness field (blue)
and the object domain (alpha) into one RGBA image.  Channel conventions:

    n0 = 2*(r/255) - 1      in [-1, 1]
    n1 = 2*(g/255) - 1      in [-1, 1]
    thickness = b/255       in [0, 1]
    alpha = a/255           in [0, 1]

Raster axes follow image convention: index [y, x], y grows downward.
Continuous coordinates put pixel centers at integer positions, so the
image rectangle is [0, width-1] x [0, height-1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DecodeError

__all__ = [
    "ShapeMap",
    "NormalParams",
    "decode_shapemap",
    "encode_shapemap",
    "load_shapemap",
    "save_shapemap",
    "sample_field",
    "normal_from_field",
]


@dataclass(frozen=True)
class NormalParams:
    """Field-flattening scale for normal reconstruction, 0 < s <= 1."""

    s: float = 1.0 / math.sqrt(2.0)

    def __post_init__(self):
        if not (0.0 < self.s <= 1.0):
            raise ValueError(f"normal scale s must be in (0, 1], got {self.s}")


@dataclass(frozen=True)
class ShapeMap:
    """Immutable raster bundle (n0, n1, thickness, alpha), all [H, W] float64."""

    n0: np.ndarray
    n1: np.ndarray
    thickness: np.ndarray
    alpha: np.ndarray

    @property
    def width(self) -> int:
        return self.n0.shape[1]

    @property
    def height(self) -> int:
        return self.n0.shape[0]

    @classmethod
    def from_channels(cls, n0, n1, thickness, alpha, normalize: bool = True) -> "ShapeMap":
        """Build from array-likes, optionally zeroing channels where alpha == 0."""
        n0 = np.asarray(n0, dtype=np.float64).copy()
        n1 = np.asarray(n1, dtype=np.float64).copy()
        thickness = np.asarray(thickness, dtype=np.float64).copy()
        alpha = np.asarray(alpha, dtype=np.float64).copy()
        if normalize:
            masked = alpha == 0.0
            n0[masked] = 0.0
            n1[masked] = 0.0
            thickness[masked] = 0.0
        m = cls(n0, n1, thickness, alpha)
        m.validate()
        for arr in (n0, n1, thickness, alpha):
            arr.flags.writeable = False
        return m

    def validate(self) -> None:
        """Raise ValueError on any invariant violation."""
        shapes = {a.shape for a in (self.n0, self.n1, self.thickness, self.alpha)}
        if len(shapes) != 1 or self.n0.ndim != 2:
            raise ValueError(f"channel rasters must share one 2D shape, got {shapes}")
        if self.n0.shape[0] < 2 or self.n0.shape[1] < 2:
            raise ValueError("shape map must be at least 2x2")
        if np.abs(self.n0).max() > 1.0 + 1e-12 or np.abs(self.n1).max() > 1.0 + 1e-12:
            raise ValueError("field components must lie in [-1, 1]")
        for name, arr in (("thickness", self.thickness), ("alpha", self.alpha)):
            if arr.min() < -1e-12 or arr.max() > 1.0 + 1e-12:
                raise ValueError(f"{name} must lie in [0, 1]")
        masked = self.alpha == 0.0
        if masked.any():
            for name, arr in (("n0", self.n0), ("n1", self.n1), ("thickness", self.thickness)):
                if np.abs(arr[masked]).max() > 0.0:
                    raise ValueError(f"not in normalized form: {name} nonzero where alpha == 0")

    def premultiplied(self):
        """(n0*alpha, n1*alpha) pair used by the line integrals."""
        return self.n0 * self.alpha, self.n1 * self.alpha


def decode_shapemap(rgba: np.ndarray) -> ShapeMap:
    """Decode an 8-bit RGBA raster (uint8 [H, W, 4]) into a ShapeMap.

    Channels are normalized: wherever alpha is 0 the field and thickness
    are forced to exact 0 so masked pixels are exact zeros downstream.
    """
    rgba = np.asarray(rgba)
    if rgba.ndim != 3 or rgba.shape[2] != 4:
        raise DecodeError(f"expected [H, W, 4] RGBA raster, got shape {rgba.shape}")
    if rgba.shape[0] == 0 or rgba.shape[1] == 0:
        raise DecodeError("zero-sized image")
    if rgba.dtype == np.uint8:
        scale = 255.0
    elif rgba.dtype == np.uint16:
        scale = 65535.0
    else:
        raise DecodeError(f"expected uint8 or uint16 pixels, got {rgba.dtype}")
    f = rgba.astype(np.float64) / scale
    return ShapeMap.from_channels(
        2.0 * f[:, :, 0] - 1.0,
        2.0 * f[:, :, 1] - 1.0,
        f[:, :, 2],
        f[:, :, 3],
        normalize=True,
    )


def encode_shapemap(m: ShapeMap) -> np.ndarray:
    """Encode to an 8-bit RGBA raster with round-half-up quantization.

    Nonzero alpha never quantizes below byte 1: decode re-normalizes under
    alpha == 0, so letting a faint pixel hit byte 0 would wipe its other
    channels and break the 1/255 roundtrip guarantee.
    """
    m.validate()

    def q(v):
        return np.floor(v * 255.0 + 0.5).astype(np.uint8)

    a = q(m.alpha)
    a[(m.alpha > 0.0) & (a == 0)] = 1
    return np.stack(
        [
            q((m.n0 + 1.0) / 2.0),
            q((m.n1 + 1.0) / 2.0),
            q(m.thickness),
            a,
        ],
        axis=2,
    )


def _png_bit_depth(path: str) -> int:
    with open(path, "rb") as fh:
        header = fh.read(26)
    if len(header) < 26 or header[:8] != b"\x89PNG\r\n\x1a\n":
        return 8
    return header[24]


def _read_rgba16(path: str) -> np.ndarray:
    """Read a 16-bit PNG as uint16 RGBA (Pillow truncates those to 8-bit)."""
    try:
        import cv2
    except ImportError as exc:  # pragma: no cover
        raise DecodeError(
            f"{path} is a 16-bit PNG; install opencv-python-headless to read it"
        ) from exc
    bgra = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if bgra is None:
        raise DecodeError(f"cannot read image: {path}")
    if bgra.ndim == 2:
        bgra = np.stack([bgra] * 3 + [np.full_like(bgra, 65535)], axis=2)
    if bgra.shape[2] == 3:
        bgra = np.concatenate([bgra, np.full_like(bgra[:, :, :1], 65535)], axis=2)
    rgba = bgra[:, :, [2, 1, 0, 3]]
    return np.ascontiguousarray(rgba.astype(np.uint16))


def load_shapemap(path: str) -> ShapeMap:
    """Load a shape map from a PNG file (8-bit canonical, 16-bit accepted)."""
    try:
        if str(path).lower().endswith(".png") and _png_bit_depth(str(path)) == 16:
            return decode_shapemap(_read_rgba16(str(path)))
        with Image.open(path) as im:
            rgba = np.asarray(im.convert("RGBA"))
    except DecodeError:
        raise
    except Exception as exc:
        raise DecodeError(f"cannot read image: {path}: {exc}") from exc
    return decode_shapemap(rgba)


def save_shapemap(m: ShapeMap, path: str) -> None:
    """Write the canonical 8-bit RGBA PNG."""
    Image.fromarray(encode_shapemap(m), mode="RGBA").save(path, format="PNG")


def _bilinear_weights(x: float, y: float, w: int, h: int):
    x0 = int(math.floor(x))
    y0 = int(math.floor(y))
    x0 = min(max(x0, 0), w - 2) if w > 1 else 0
    y0 = min(max(y0, 0), h - 2) if h > 1 else 0
    fx = x - x0
    fy = y - y0
    return x0, y0, fx, fy


def sample_field(m: ShapeMap, p) -> tuple[float, float, float, float]:
    """Alpha-weighted bilinear sample of (n0, n1, thickness, alpha) at point p.

    Channels are premultiplied by alpha before interpolation and divided
    back out after, so masked pixels never bleed their zero-fill into the
    domain.  Outside [0, w-1] x [0, h-1] returns (0, 0, 0, 0).
    """
    x, y = float(p[0]), float(p[1])
    h, w = m.n0.shape
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        return (0.0, 0.0, 0.0, 0.0)
    x0, y0, fx, fy = _bilinear_weights(x, y, w, h)
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    w00 = (1 - fx) * (1 - fy)
    w10 = fx * (1 - fy)
    w01 = (1 - fx) * fy
    w11 = fx * fy

    def lerp(arr, weighted):
        src = arr * m.alpha if weighted else arr
        return (
            w00 * src[y0, x0] + w10 * src[y0, x1] + w01 * src[y1, x0] + w11 * src[y1, x1]
        )

    a = lerp(m.alpha, False)
    if a <= 0.0:
        return (0.0, 0.0, 0.0, 0.0)
    return (
        lerp(m.n0, True) / a,
        lerp(m.n1, True) / a,
        lerp(m.thickness, True) / a,
        a,
    )


def normal_from_field(n0, n1, params: NormalParams = NormalParams()) -> np.ndarray:
    """Rebuild unit surface normals from field values.

    Accepts scalars or broadcastable arrays; returns [..., 3] with z >= 0.
    z is sqrt(1 - s^2 n0^2 - s^2 n1^2) clamped at 0 before renormalizing,
    so over-unit painted fields degrade to in-plane normals instead of NaN.
    """
    s = params.s
    x = s * np.asarray(n0, dtype=np.float64)
    y = s * np.asarray(n1, dtype=np.float64)
    rad = 1.0 - x * x - y * y
    z = np.sqrt(np.maximum(rad, 0.0))
    n = np.stack(np.broadcast_arrays(x, y, z), axis=-1)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    # x = y = 0 with s <= 1 cannot make norm 0; guard anyway for safety
    return n / np.where(norm == 0.0, 1.0, norm)
