"""Quad patch meshes: cubic Bezier edges, corner control vectors, stitching.

Faces are quads whose four edges are cubic Bezier curves; every face loop
is stored in canonical orientation (positive shoelace area in image
coordinates) so boundary normals are well defined.  More than two faces
may share an edge (stitched pseudo-complexes); visibility flags carve the
rendered region out of the manifold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import MeshError

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
]

DEFAULT_THICKNESS = 0.5


@dataclass
class Vertex:
    pos: np.ndarray  # (2,) canvas px
    z: float = 0.0
    thickness: float = DEFAULT_THICKNESS
    control_vector: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class Edge:
    v0: int
    v1: int
    ctrl: np.ndarray  # [4, 2] cubic Bezier control points, ctrl[0] at v0


@dataclass
class Face:
    edges: tuple[int, int, int, int]  # loop order
    reversed: tuple[bool, bool, bool, bool]  # per-edge traversal direction
    loop: tuple[int, int, int, int]  # vertex ids around the loop
    visible: bool = True


@dataclass
class QuadPatchMesh:
    vertices: list[Vertex]
    edges: list[Edge]
    faces: list[Face]

    def edge_curve(self, edge_id: int, rev: bool) -> np.ndarray:
        ctrl = self.edges[edge_id].ctrl
        return ctrl[::-1].copy() if rev else ctrl.copy()

    def face_corners(self, face: Face) -> np.ndarray:
        return np.stack([self.vertices[v].pos for v in face.loop])

    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges) + len(self.faces)


# ---------------------------------------------------------------------------
# Bezier primitives

def bezier_point(ctrl: np.ndarray, t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)[..., None]
    s = 1.0 - t
    return (
        s**3 * ctrl[0] + 3 * s**2 * t * ctrl[1] + 3 * s * t**2 * ctrl[2] + t**3 * ctrl[3]
    )


def bezier_tangent(ctrl: np.ndarray, t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)[..., None]
    s = 1.0 - t
    return 3 * (
        s**2 * (ctrl[1] - ctrl[0]) + 2 * s * t * (ctrl[2] - ctrl[1]) + t**2 * (ctrl[3] - ctrl[2])
    )


def de_casteljau_split(ctrl: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Subdivide a cubic at t; returns the two control polygons."""
    p01 = (1 - t) * ctrl[0] + t * ctrl[1]
    p12 = (1 - t) * ctrl[1] + t * ctrl[2]
    p23 = (1 - t) * ctrl[2] + t * ctrl[3]
    p012 = (1 - t) * p01 + t * p12
    p123 = (1 - t) * p12 + t * p23
    mid = (1 - t) * p012 + t * p123
    left = np.stack([ctrl[0], p01, p012, mid])
    right = np.stack([mid, p123, p23, ctrl[3]])
    return left, right


def _straight_ctrl(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack([a, a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0, b])


def bezier_arclength_table(ctrl: np.ndarray, samples: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """(params, normalized cumulative arclength) lookup for a cubic."""
    ts = np.linspace(0.0, 1.0, samples)
    pts = bezier_point(ctrl, ts)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0.0:
        return ts, ts.copy()
    return ts, cum / total


# ---------------------------------------------------------------------------
# face construction

def _shoelace(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _chain_face(mesh: QuadPatchMesh, edge_ids) -> Face:
    """Order four edges into a closed loop with canonical orientation."""
    if len(edge_ids) != 4:
        raise MeshError(f"face needs exactly 4 edges, got {len(edge_ids)}")
    remaining = list(edge_ids)
    first = remaining.pop(0)
    e = mesh.edges[first]
    chain = [(first, False)]
    loop = [e.v0, e.v1]
    while remaining:
        tail = loop[-1]
        for i, eid in enumerate(remaining):
            cand = mesh.edges[eid]
            if cand.v0 == tail:
                chain.append((eid, False))
                loop.append(cand.v1)
                break
            if cand.v1 == tail:
                chain.append((eid, True))
                loop.append(cand.v0)
                break
        else:
            raise MeshError(f"edges {edge_ids} do not form a closed loop")
        remaining.pop(i)
    if loop[-1] != loop[0]:
        raise MeshError(f"edges {edge_ids} do not close")
    loop = loop[:-1]
    pts = np.stack([mesh.vertices[v].pos for v in loop])
    if _shoelace(pts) < 0.0:
        # flip traversal: same start vertex, loop walked the other way
        chain = [(eid, not rev) for eid, rev in reversed(chain)]
        loop = [loop[0]] + loop[1:][::-1]
    return Face(
        edges=tuple(eid for eid, _ in chain),
        reversed=tuple(rev for _, rev in chain),
        loop=tuple(loop),
    )


def add_face(mesh: QuadPatchMesh, edge_ids, visible: bool = True) -> None:
    face = _chain_face(mesh, edge_ids)
    mesh.faces.append(replace(face, visible=visible))


# ---------------------------------------------------------------------------
# creation operators

def make_grid(nx: int, ny: int) -> QuadPatchMesh:
    """(nx+1)(ny+1) vertices, nx*ny unit quads, straight edges, default
    thickness, outward boundary control vectors."""
    if nx < 1 or ny < 1:
        raise MeshError("grid needs nx >= 1 and ny >= 1")
    mesh = QuadPatchMesh([], [], [])
    vid = {}
    for j in range(ny + 1):
        for i in range(nx + 1):
            vid[(i, j)] = len(mesh.vertices)
            mesh.vertices.append(Vertex(pos=np.array([float(i), float(j)])))

    hedge = {}
    vedge = {}
    for j in range(ny + 1):
        for i in range(nx):
            hedge[(i, j)] = len(mesh.edges)
            a, b = vid[(i, j)], vid[(i + 1, j)]
            mesh.edges.append(Edge(a, b, _straight_ctrl(mesh.vertices[a].pos, mesh.vertices[b].pos)))
    for j in range(ny):
        for i in range(nx + 1):
            vedge[(i, j)] = len(mesh.edges)
            a, b = vid[(i, j)], vid[(i, j + 1)]
            mesh.edges.append(Edge(a, b, _straight_ctrl(mesh.vertices[a].pos, mesh.vertices[b].pos)))

    for j in range(ny):
        for i in range(nx):
            add_face(mesh, [hedge[(i, j)], vedge[(i + 1, j)], hedge[(i, j + 1)], vedge[(i, j)]])
    default_corner_vectors(mesh)
    return mesh


def make_polygon_disk(sides: int) -> QuadPatchMesh:
    """Regular polygon fanned from a center vertex into sides/2 quads.

    Odd side counts would need a zero-length edge (degenerate triangles)
    and are rejected.
    """
    if sides < 4 or sides % 2 != 0:
        raise MeshError("polygon disk needs an even side count >= 4")
    mesh = QuadPatchMesh([], [], [])
    mesh.vertices.append(Vertex(pos=np.zeros(2)))  # center
    for i in range(sides):
        ang = 2.0 * np.pi * i / sides
        mesh.vertices.append(Vertex(pos=np.array([np.cos(ang), np.sin(ang)])))

    boundary = []
    for i in range(sides):
        a, b = 1 + i, 1 + (i + 1) % sides
        boundary.append(len(mesh.edges))
        mesh.edges.append(Edge(a, b, _straight_ctrl(mesh.vertices[a].pos, mesh.vertices[b].pos)))
    spokes = {}
    for i in range(0, sides, 2):
        spokes[i] = len(mesh.edges)
        a = 1 + i
        mesh.edges.append(Edge(0, a, _straight_ctrl(mesh.vertices[0].pos, mesh.vertices[a].pos)))

    for i in range(0, sides, 2):
        add_face(mesh, [spokes[i], boundary[i], boundary[i + 1], spokes[(i + 2) % sides]])
    default_corner_vectors(mesh)
    return mesh


# ---------------------------------------------------------------------------
# topology helpers

def _edge_faces(mesh: QuadPatchMesh, edge_id: int, visible_only: bool = False):
    return [
        fi
        for fi, f in enumerate(mesh.faces)
        if edge_id in f.edges and (f.visible or not visible_only)
    ]


def boundary_edges(mesh: QuadPatchMesh) -> set[int]:
    """Edges used by exactly one visible face."""
    count: dict[int, int] = {}
    for f in mesh.faces:
        if not f.visible:
            continue
        for e in f.edges:
            count[e] = count.get(e, 0) + 1
    return {e for e, c in count.items() if c == 1}


def default_corner_vectors(mesh: QuadPatchMesh) -> QuadPatchMesh:
    """Assign outward unit boundary normals to boundary vertices, zero to
    interior vertices (mutates and returns the mesh)."""
    for v in mesh.vertices:
        v.control_vector = np.zeros(2)
    bset = boundary_edges(mesh)
    sums: dict[int, np.ndarray] = {}
    for f in mesh.faces:
        if not f.visible:
            continue
        for (eid, rev) in zip(f.edges, f.reversed):
            if eid not in bset:
                continue
            # outward normal of the loop-directed tangent: (dy, -dx)
            e = mesh.edges[eid]
            for vid, t in ((e.v0, 0.0), (e.v1, 1.0)):
                tan = bezier_tangent(e.ctrl, t)
                if rev:
                    tan = -tan
                n = np.array([tan[1], -tan[0]])
                nlen = np.linalg.norm(n)
                if nlen > 0:
                    sums[vid] = sums.get(vid, np.zeros(2)) + n / nlen
    for vid, n in sums.items():
        nlen = np.linalg.norm(n)
        if nlen > 0:
            mesh.vertices[vid].control_vector = n / nlen
    return mesh


def split_edge(mesh: QuadPatchMesh, edge_id: int, t: float) -> QuadPatchMesh:
    """Split boundary-to-boundary: every face along the perpendicular strip
    becomes two quads; crossed edges subdivide by de Casteljau at t.

    Returns a new mesh.  Raises MeshError if the strip hits an edge shared
    by more than two faces (no unique propagation) or t is out of range.
    """
    if not (0.0 < t < 1.0):
        raise MeshError("split parameter must be in (0, 1)")
    if not (0 <= edge_id < len(mesh.edges)):
        raise MeshError(f"no edge {edge_id}")

    out = QuadPatchMesh(
        [replace(v, pos=v.pos.copy(), control_vector=v.control_vector.copy())
         for v in mesh.vertices],
        [replace(e, ctrl=e.ctrl.copy()) for e in mesh.edges],
        list(mesh.faces),
    )

    # walk the strip, recording (face, entry edge/t, exit edge/t)
    chain: list[tuple[int, int, float, int, float]] = []
    seen_faces = set()
    cur_edge, cur_t = edge_id, t
    faces_here = _edge_faces(out, cur_edge)
    if len(faces_here) > 2:
        raise MeshError("cannot split: starting edge is shared by more than two faces")
    frontier = [(fi, cur_edge, cur_t) for fi in faces_here]
    while frontier:
        fi, eid, et = frontier.pop()
        if fi in seen_faces:
            continue
        seen_faces.add(fi)
        f = out.faces[fi]
        pos = list(f.edges).index(eid)
        opp = f.edges[(pos + 2) % 4]
        # opposite edge runs backwards around the loop, so the iso-parameter
        # u maps to its stored frame mirrored unless it is stored reversed
        u_patch = et if not f.reversed[pos] else 1.0 - et
        opp_t = u_patch if f.reversed[(pos + 2) % 4] else 1.0 - u_patch
        chain.append((fi, eid, et, opp, opp_t))
        nxt = _edge_faces(out, opp)
        if len(nxt) > 2:
            raise MeshError("cannot split: propagation path is non-manifold")
        for nfi in nxt:
            if nfi not in seen_faces:
                frontier.append((nfi, opp, opp_t))

    # split each crossed edge once
    edge_split: dict[int, tuple[int, int, int]] = {}  # eid -> (mid vertex, left eid, right eid)

    def ensure_split(eid: int, et: float):
        if eid in edge_split:
            return edge_split[eid]
        e = out.edges[eid]
        left, right = de_casteljau_split(e.ctrl, et)
        mid_vid = len(out.vertices)
        va, vb = out.vertices[e.v0], out.vertices[e.v1]
        from .fields import edge_vector_at  # pre-split field interpolant

        out.vertices.append(
            Vertex(
                pos=left[3].copy(),
                z=(1 - et) * va.z + et * vb.z,
                thickness=(1 - et) * va.thickness + et * vb.thickness,
                control_vector=edge_vector_at(va.control_vector, vb.control_vector, e.ctrl, et),
            )
        )
        out.edges[eid] = Edge(e.v0, mid_vid, left)
        right_id = len(out.edges)
        out.edges.append(Edge(mid_vid, e.v1, right))
        edge_split[eid] = (mid_vid, eid, right_id)
        return edge_split[eid]

    new_faces: dict[int, list[list[int]]] = {}
    for fi, eid, et, opp, opp_t in chain:
        f = out.faces[fi]
        m_in, in_l, in_r = ensure_split(eid, et)
        m_opp, opp_l, opp_r = ensure_split(opp, opp_t)
        # connecting edge: iso-curve of the Coons patch at the split
        ctrl_conn = _iso_curve(out, f, eid, et)
        conn_id = len(out.edges)
        out.edges.append(Edge(m_in, m_opp, _align_curve(ctrl_conn, out.vertices[m_in].pos)))
        pos = list(f.edges).index(eid)
        side_a = f.edges[(pos + 1) % 4]
        side_b = f.edges[(pos + 3) % 4]
        f1_opp = opp_l if _touches(out, side_b, out.edges[opp_l]) else opp_r
        f2_opp = opp_r if f1_opp == opp_l else opp_l
        new_faces[fi] = [
            [in_l, conn_id, f1_opp, side_b],
            [in_r, side_a, f2_opp, conn_id],
        ]

    rebuilt: list[Face] = []
    for fi, f in enumerate(out.faces):
        if fi not in new_faces:
            rebuilt.append(f)
            continue
        for eids in new_faces[fi]:
            rebuilt.append(replace(_chain_face(out, eids), visible=f.visible))
    out.faces = rebuilt
    return out


def _touches(mesh: QuadPatchMesh, eid_a: int, edge_b: Edge) -> bool:
    a = mesh.edges[eid_a]
    return len({a.v0, a.v1} & {edge_b.v0, edge_b.v1}) > 0


def _align_curve(ctrl: np.ndarray, start_pos: np.ndarray) -> np.ndarray:
    if np.linalg.norm(ctrl[0] - start_pos) <= np.linalg.norm(ctrl[3] - start_pos):
        return ctrl
    return ctrl[::-1].copy()


def _face_boundary_curves(mesh: QuadPatchMesh, face: Face):
    """Boundary cubics (bottom, right, top, left) in patch orientation:
    bottom u: v0->v1, right v: v1->v2, top u: v3->v2, left v: v0->v3."""
    b = mesh.edge_curve(face.edges[0], face.reversed[0])
    r = mesh.edge_curve(face.edges[1], face.reversed[1])
    t = mesh.edge_curve(face.edges[2], not face.reversed[2])
    l = mesh.edge_curve(face.edges[3], not face.reversed[3])
    return b, r, t, l


def _iso_curve(mesh: QuadPatchMesh, face: Face, entry_edge: int, et: float) -> np.ndarray:
    """Bezier control points of the Coons iso-parameter curve starting on
    ``entry_edge`` at parameter et (in that edge's own frame)."""
    pos = list(face.edges).index(entry_edge)
    # rotate the face so the entry edge is "bottom"
    rot_edges = face.edges[pos:] + face.edges[:pos]
    rot_rev = face.reversed[pos:] + face.reversed[:pos]
    rot_loop = face.loop[pos:] + face.loop[:pos]
    rf = Face(edges=rot_edges, reversed=rot_rev, loop=rot_loop, visible=face.visible)
    b, r, t, l = _face_boundary_curves(mesh, rf)
    u = et if not rot_rev[0] else 1.0 - et
    # S(u, v) = (1-v) b(u) + v t(u) + (1-u) l(v) + u r(v) - bilinear(corners)
    # as a cubic in v: Q_j = (1-u) l_j + u r_j + linear part
    bu = bezier_point(b, u)
    tu = bezier_point(t, u)
    p00, p10 = b[0], b[3]
    p01, p11 = t[0], t[3]
    a_lin = bu - ((1 - u) * p00 + u * p10)
    b_lin = tu - ((1 - u) * p01 + u * p11)
    q = np.stack([(1 - u) * l[j] + u * r[j] + (1 - j / 3.0) * a_lin + (j / 3.0) * b_lin
                  for j in range(4)])
    return q


def evaluate_patch(mesh: QuadPatchMesh, face: Face, u, v):
    """Coons position (x, y) plus bilinear corner z at patch params (u, v).

    The patch is the bilinearly blended Coons surface of the four boundary
    cubics, which is itself a bicubic tensor-product surface.
    """
    u_arr = np.asarray(u, dtype=np.float64)
    v_arr = np.asarray(v, dtype=np.float64)
    if (u_arr < -1e-9).any() or (u_arr > 1 + 1e-9).any() or (v_arr < -1e-9).any() or (v_arr > 1 + 1e-9).any():
        raise ValueError("patch parameters must be in [0, 1]")
    if not face.visible:
        raise MeshError("cannot evaluate an invisible face")
    pos = _coons_position(mesh, face, u_arr, v_arr)
    z = _bilinear_corner(
        np.array([mesh.vertices[vid].z for vid in face.loop]), u_arr, v_arr
    )
    return pos, z


def _coons_position(mesh: QuadPatchMesh, face: Face, u, v):
    b, r, t, l = _face_boundary_curves(mesh, face)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    bu = bezier_point(b, u)
    tu = bezier_point(t, u)
    lv = bezier_point(l, v)
    rv = bezier_point(r, v)
    uu = u[..., None]
    vv = v[..., None]
    blin = (
        (1 - uu) * (1 - vv) * b[0]
        + uu * (1 - vv) * b[3]
        + (1 - uu) * vv * t[0]
        + uu * vv * t[3]
    )
    return (1 - vv) * bu + vv * tu + (1 - uu) * lv + uu * rv - blin


def _coons_jacobian(mesh: QuadPatchMesh, face: Face, u, v):
    b, r, t, l = _face_boundary_curves(mesh, face)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    uu = u[..., None]
    vv = v[..., None]
    dbu = bezier_tangent(b, u)
    dtu = bezier_tangent(t, u)
    lv = bezier_point(l, v)
    rv = bezier_point(r, v)
    dlv = bezier_tangent(l, v)
    drv = bezier_tangent(r, v)
    bu = bezier_point(b, u)
    tu = bezier_point(t, u)
    d_blin_du = (1 - vv) * (b[3] - b[0]) + vv * (t[3] - t[0])
    d_blin_dv = (1 - uu) * (t[0] - b[0]) + uu * (t[3] - b[3])
    su = (1 - vv) * dbu + vv * dtu + (rv - lv) - d_blin_du
    sv = (tu - bu) + (1 - uu) * dlv + uu * drv - d_blin_dv
    return su, sv


def _bilinear_corner(corner_vals: np.ndarray, u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    c00, c10, c11, c01 = corner_vals  # loop order v0, v1, v2, v3
    return (1 - u) * (1 - v) * c00 + u * (1 - v) * c10 + u * v * c11 + (1 - u) * v * c01


# ---------------------------------------------------------------------------
# file format

def save_mesh(mesh: QuadPatchMesh, path: str) -> None:
    doc = {
        "vertices": [
            {
                "pos": v.pos.tolist(),
                "z": v.z,
                "thickness": v.thickness,
                "control_vector": v.control_vector.tolist(),
            }
            for v in mesh.vertices
        ],
        "edges": [
            {"v0": e.v0, "v1": e.v1, "ctrl": e.ctrl.tolist()} for e in mesh.edges
        ],
        "faces": [{"edges": list(f.edges), "visible": f.visible} for f in mesh.faces],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


def load_mesh(path: str) -> QuadPatchMesh:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise MeshError(f"missing mesh file: {path}")
    except json.JSONDecodeError as exc:
        raise MeshError(f"mesh file {path} is not valid JSON: {exc}")
    mesh = QuadPatchMesh([], [], [])
    for v in doc.get("vertices", []):
        mesh.vertices.append(
            Vertex(
                pos=np.asarray(v["pos"], dtype=np.float64),
                z=float(v.get("z", 0.0)),
                thickness=float(v.get("thickness", DEFAULT_THICKNESS)),
                control_vector=np.asarray(v.get("control_vector", [0, 0]), dtype=np.float64),
            )
        )
    for e in doc.get("edges", []):
        mesh.edges.append(Edge(int(e["v0"]), int(e["v1"]), np.asarray(e["ctrl"], dtype=np.float64)))
    for f in doc.get("faces", []):
        add_face(mesh, [int(x) for x in f["edges"]], visible=bool(f.get("visible", True)))
    _validate_mesh(mesh)
    return mesh


def _validate_mesh(mesh: QuadPatchMesh) -> None:
    for i, e in enumerate(mesh.edges):
        if e.ctrl.shape != (4, 2):
            raise MeshError(f"edge {i}: control polygon must be 4 2D points")
        for vid, endpoint in ((e.v0, e.ctrl[0]), (e.v1, e.ctrl[3])):
            if not (0 <= vid < len(mesh.vertices)):
                raise MeshError(f"edge {i}: vertex id {vid} out of range")
            if np.linalg.norm(mesh.vertices[vid].pos - endpoint) > 1e-6:
                raise MeshError(f"edge {i}: endpoints must coincide with vertex positions")
    for v in mesh.vertices:
        if np.abs(v.control_vector).max() > 1.0 + 1e-9:
            raise MeshError("control vectors must lie in [-1, 1]^2")
