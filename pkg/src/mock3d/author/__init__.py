"""Authoring tools: patch-mesh field synthesis, height-field and photo bakers."""

from .bake import bake_from_heightfield, photo_to_shapemap, save_with_sidecar
from .fields import EdgeField, coons_field, edge_vector_at, face_edge_fields, interpolate_edge_field
from .mesh import (
    Edge,
    Face,
    QuadPatchMesh,
    Vertex,
    bezier_point,
    bezier_tangent,
    de_casteljau_split,
    default_corner_vectors,
    evaluate_patch,
    load_mesh,
    make_grid,
    make_polygon_disk,
    save_mesh,
    split_edge,
)
from .raster import rasterize_shapemap

__all__ = [
    "Vertex",
    "Edge",
    "Face",
    "QuadPatchMesh",
    "bezier_point",
    "bezier_tangent",
    "de_casteljau_split",
    "make_grid",
    "make_polygon_disk",
    "split_edge",
    "evaluate_patch",
    "default_corner_vectors",
    "load_mesh",
    "save_mesh",
    "EdgeField",
    "interpolate_edge_field",
    "edge_vector_at",
    "coons_field",
    "face_edge_fields",
    "rasterize_shapemap",
    "bake_from_heightfield",
    "photo_to_shapemap",
    "save_with_sidecar",
]
