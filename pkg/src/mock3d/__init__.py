"""mock3d: shape-map images to relightable, view-dependent 2.5D scenes."""

from ._backend import backend_name
from .fieldcalc import (
    DepthChannel,
    HeightSheet,
    IntegralParams,
    RayFan,
    curl_map,
    integrate_g0,
    integrate_g1,
    loop_residual,
    ray_entry_point,
    reconstruct_sheet,
    view_dependence_map,
)
from .shapemap import (
    NormalParams,
    ShapeMap,
    decode_shapemap,
    encode_shapemap,
    load_shapemap,
    normal_from_field,
    sample_field,
    save_shapemap,
)

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "ShapeMap",
    "NormalParams",
    "decode_shapemap",
    "encode_shapemap",
    "load_shapemap",
    "save_shapemap",
    "sample_field",
    "normal_from_field",
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
    "__version__",
]
