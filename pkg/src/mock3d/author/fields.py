"""Vector-field synthesis on patches: rotate corner vectors along edges,
Coons-blend the edge fields across each quad's interior."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import MeshError
from .mesh import Face, QuadPatchMesh, bezier_arclength_table

__all__ = [
    "EdgeField",
    "interpolate_edge_field",
    "edge_vector_at",
    "coons_field",
    "face_edge_fields",
]


def _angle_lerp(a0: float, a1: float, t):
    """Shortest-arc interpolation; an exact pi gap resolves counterclockwise."""
    diff = (a1 - a0) % (2.0 * math.pi)
    if diff > math.pi + 1e-12:
        diff -= 2.0 * math.pi
    # diff == pi stays +pi: counterclockwise tie-break
    return a0 + diff * np.asarray(t)


def _param_to_arc(ctrl: np.ndarray, t):
    ts, arcs = bezier_arclength_table(ctrl)
    return np.interp(np.asarray(t, dtype=np.float64), ts, arcs)


def edge_vector_at(v_start: np.ndarray, v_end: np.ndarray, ctrl: np.ndarray, t):
    """Field vector at curve parameter t: angle rotates linearly along
    normalized arc length (shortest arc, CCW at ties), magnitude lerps."""
    s = _param_to_arc(ctrl, t)
    m0, m1 = np.linalg.norm(v_start), np.linalg.norm(v_end)
    a0 = math.atan2(v_start[1], v_start[0]) if m0 > 0 else math.atan2(v_end[1], v_end[0])
    a1 = math.atan2(v_end[1], v_end[0]) if m1 > 0 else a0
    ang = _angle_lerp(a0, a1, s)
    mag = (1.0 - s) * m0 + s * m1
    return np.stack([mag * np.cos(ang), mag * np.sin(ang)], axis=-1)


@dataclass(frozen=True)
class EdgeField:
    """Sampled vector field along one edge (arc-length spaced samples).

    A reversed view evaluates the original rotation at 1 - t instead of
    re-deriving from swapped endpoints: re-deriving would flip the tie
    direction for antipodal corner vectors and faces sharing the edge
    would disagree along the stitch.
    """

    v_start: np.ndarray
    v_end: np.ndarray
    ctrl: np.ndarray
    samples: np.ndarray  # [S, 2]
    flip: bool = False

    def at(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.flip:
            t = 1.0 - t
        return edge_vector_at(self.v_start, self.v_end, self.ctrl, t)

    def reversed(self) -> "EdgeField":
        return EdgeField(
            v_start=self.v_start,
            v_end=self.v_end,
            ctrl=self.ctrl,
            samples=self.samples[::-1].copy(),
            flip=not self.flip,
        )


def interpolate_edge_field(
    v_start, v_end, ctrl: np.ndarray, samples: int = 17
) -> EdgeField:
    """Build the rotating field along one Bezier edge.

    Endpoint samples equal the corner control vectors exactly.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    v_start = np.asarray(v_start, dtype=np.float64)
    v_end = np.asarray(v_end, dtype=np.float64)
    ts = np.linspace(0.0, 1.0, samples)
    vals = edge_vector_at(v_start, v_end, ctrl, ts)
    vals[0] = v_start
    vals[-1] = v_end
    return EdgeField(v_start=v_start, v_end=v_end, ctrl=ctrl.copy(), samples=vals)


def face_edge_fields(mesh: QuadPatchMesh, face: Face) -> tuple[EdgeField, ...]:
    """(bottom(u), top(u), left(v), right(v)) fields in patch orientation.

    Each underlying edge's field is built once in its stored direction and
    reversed as needed, so stitched faces share identical values along
    common edges.
    """
    fields = []
    for k, (eid, rev) in enumerate(zip(face.edges, face.reversed)):
        e = mesh.edges[eid]
        f = interpolate_edge_field(
            mesh.vertices[e.v0].control_vector, mesh.vertices[e.v1].control_vector, e.ctrl
        )
        # patch orientation: bottom v0->v1, right v1->v2, top v3->v2, left v0->v3
        flip = rev if k in (0, 1) else not rev
        fields.append(f.reversed() if flip else f)
    bottom, right, top, left = fields
    return bottom, top, left, right


def coons_field(b0: EdgeField, b1: EdgeField, c0: EdgeField, c1: EdgeField, u, v):
    """Componentwise Coons blend of four boundary fields over (u, v).

    b0/b1 run along u at v = 0/1; c0/c1 run along v at u = 0/1.  Edge
    fields must agree at shared corners (1e-6); output clamps to [-1, 1]^2.
    """
    corners = [
        (b0.at(0.0), c0.at(0.0)),
        (b0.at(1.0), c1.at(0.0)),
        (b1.at(0.0), c0.at(1.0)),
        (b1.at(1.0), c1.at(1.0)),
    ]
    for a, b in corners:
        if np.abs(a - b).max() > 1e-6:
            raise MeshError(f"edge fields disagree at a shared corner: {a} vs {b}")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    uu = u[..., None]
    vv = v[..., None]
    p00 = b0.at(0.0)
    p10 = b0.at(1.0)
    p01 = b1.at(0.0)
    p11 = b1.at(1.0)
    blend = (
        (1 - vv) * b0.at(u)
        + vv * b1.at(u)
        + (1 - uu) * c0.at(v)
        + uu * c1.at(v)
        - ((1 - uu) * (1 - vv) * p00 + uu * (1 - vv) * p10 + (1 - uu) * vv * p01 + uu * vv * p11)
    )
    return np.clip(blend, -1.0, 1.0)
