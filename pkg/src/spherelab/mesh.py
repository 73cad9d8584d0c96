"""Triangle meshes with vertices on S^d and their induced discrete metrics.

A :class:`SurfaceMesh` is pure combinatorics plus unit-vector vertex
positions.  All measurement goes through a :class:`DiscreteMetric`, a bag of
edge lengths tagged with one of two conventions:

``spherical``
    lengths are great-circle distances and faces are treated as geodesic
    triangles of the unit sphere (angles by the spherical law of cosines,
    areas by spherical excess).  This matches the embedded geometry.

``euclidean``
    lengths are abstract and faces are flat triangles (law of cosines,
    Heron areas).  The conformal flow lives entirely in this convention.

Mixing conventions raises; conversions are explicit.

The discrete scalar curvature is twice the angle defect over the vertex dual
area.  In the spherical convention each face additionally carries interior
curvature (a geodesic triangle of the unit sphere has curvature 1 inside),
whose barycentric share adds exactly +2 to the vertex density; without that
share a geodesic triangulation of a great 2-sphere would report curvature 0
instead of 2.  Both conventions satisfy the polyhedral Gauss-Bonnet theorem
to rounding error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateTriangle,
    DimensionMismatch,
    FieldMeshMismatch,
    MeshInvariantError,
)

__all__ = [
    "SurfaceMesh",
    "DiscreteMetric",
    "VertexField",
    "probe_orientability",
    "induced_metric",
    "euler_characteristic",
    "vertex_dual_areas",
    "total_area",
    "face_areas",
    "face_angles",
    "angle_defect_curvature",
    "refine",
    "save_mesh",
    "load_mesh",
]

SPHERICAL = "spherical"
EUCLIDEAN = "euclidean"

_TRIANGLE_SLACK = 1e-10


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True)
class VertexField:
    """One real value per vertex."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise ValueError("vertex field must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex field contains non-finite entries")


def field_values(f, n_vertices: int) -> np.ndarray:
    """Accept a VertexField or bare array; check the length against the mesh."""
    v = f.values if isinstance(f, VertexField) else np.asarray(f, dtype=float)
    if v.shape != (n_vertices,):
        raise FieldMeshMismatch(f"field has shape {v.shape}, mesh has {n_vertices} vertices")
    return v


# ---------------------------------------------------------------------------
# the mesh


def _halfedges(faces: np.ndarray) -> np.ndarray:
    """Directed edges (3F, 2) in face traversal order: (v0,v1),(v1,v2),(v2,v0)."""
    return faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)


def _edge_table(faces: np.ndarray):
    """Undirected edges and the face->edge incidence.

    Returns ``edges`` (E, 2) with sorted rows, and ``face_edge_ids`` (F, 3)
    where column c is the edge opposite corner c.
    """
    opp = faces[:, [1, 2, 2, 0, 0, 1]].reshape(-1, 2)
    opp = np.sort(opp, axis=1)
    edges, inverse = np.unique(opp, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


def _orientation_scan(faces: np.ndarray, edges: np.ndarray, face_edge_ids: np.ndarray):
    """Try to orient all faces consistently.

    Returns (orientable, flips) where flips is a boolean per-face array such
    that reversing the flagged faces yields a consistent orientation whenever
    orientable is True.
    """
    F = faces.shape[0]
    E = edges.shape[0]
    # for each (face, corner): does the face traverse the opposite edge in
    # ascending vertex order?
    a = faces[:, [1, 2, 0]]
    b = faces[:, [2, 0, 1]]
    ascending = (a < b).ravel()  # per halfedge h = 3f + c

    # pair up the two halfedges of every interior edge
    e_flat = face_edge_ids.ravel()
    order = np.argsort(e_flat, kind="stable")
    counts = np.bincount(e_flat, minlength=E)
    starts = np.concatenate([[0], np.cumsum(counts)])
    first = starts[:-1][counts == 2]
    partner_sorted = np.full(3 * F, -1, dtype=np.int64)
    partner_sorted[first] = first + 1
    partner_sorted[first + 1] = first
    pos = np.empty(3 * F, dtype=np.int64)
    pos[order] = np.arange(3 * F)
    ps = partner_sorted[pos]
    partner = np.where(ps >= 0, order[np.clip(ps, 0, None)], -1)

    flips = np.zeros(F, dtype=bool)
    seen = np.zeros(F, dtype=bool)
    orientable = True
    for start in range(F):
        if seen[start]:
            continue
        seen[start] = True
        stack = [start]
        while stack:
            f = stack.pop()
            for h in range(3 * f, 3 * f + 3):
                ph = partner[h]
                if ph < 0:
                    continue
                g = ph // 3
                # consistent orientation <=> the two faces traverse the shared
                # edge in opposite directions (after undoing any flips)
                want_flip_g = not (bool(ascending[ph]) ^ bool(ascending[h]) ^ bool(flips[f]))
                if not seen[g]:
                    seen[g] = True
                    flips[g] = want_flip_g
                    stack.append(g)
                elif flips[g] != want_flip_g:
                    orientable = False
    return orientable, flips


def probe_orientability(faces: np.ndarray) -> bool:
    """Whether a face list admits a globally consistent orientation."""
    faces = np.asarray(faces, dtype=np.int64)
    edges, face_edge_ids = _edge_table(faces)
    orientable, _ = _orientation_scan(faces, edges, face_edge_ids)
    return orientable


class SurfaceMesh:
    """Closed or bordered triangle mesh with vertices on S^d.

    Parameters
    ----------
    dimension:
        d of the ambient sphere S^d; vertices have d+1 coordinates.
    vertices:
        (V, d+1) array of unit vectors.
    faces:
        (F, 3) integer array of vertex triples.
    boundary_loops:
        vertex index cycles covering exactly the edges incident to one face.
    orientable:
        declared flag; checked against a consistent-orientation scan.
    vertex_normals:
        optional (V, d+1) unit field orthogonal to both the position and the
        surface; attached by parametric builders in S^3 that know it exactly.
    """

    def __init__(self, dimension, vertices, faces, boundary_loops=(), orientable=True,
                 name="", vertex_normals=None):
        self.dimension = int(dimension)
        self.vertices = np.ascontiguousarray(np.asarray(vertices, dtype=float))
        self.faces = np.ascontiguousarray(np.asarray(faces, dtype=np.int64))
        self.boundary_loops = [list(map(int, loop)) for loop in boundary_loops]
        self.orientable = bool(orientable)
        self.name = str(name)
        self.vertex_normals = None if vertex_normals is None else \
            np.ascontiguousarray(np.asarray(vertex_normals, dtype=float))
        self._validate()

    # -- derived combinatorics ------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def edges(self) -> np.ndarray:
        return self._edges

    @property
    def face_edge_ids(self) -> np.ndarray:
        return self._face_edge_ids

    @property
    def n_edges(self) -> int:
        return self._edges.shape[0]

    @property
    def is_closed(self) -> bool:
        return len(self.boundary_loops) == 0

    @property
    def oriented_faces(self) -> np.ndarray:
        """Faces with a globally consistent orientation (orientable meshes)."""
        if not self.orientable:
            raise MeshInvariantError("mesh is not orientable")
        out = self.faces.copy()
        flip = self._orientation_flips
        out[flip] = out[flip][:, ::-1]
        return out

    @property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        for loop in self.boundary_loops:
            mask[loop] = True
        return mask

    # -- validation -----------------------------------------------------------

    def _validate(self):
        d = self.dimension
        if d < 2:
            raise MeshInvariantError(f"ambient dimension {d} below 2")
        V = self.vertices
        if V.ndim != 2 or V.shape[1] != d + 1:
            raise DimensionMismatch(
                f"vertices have shape {V.shape}, expected (*, {d + 1})")
        norms = np.linalg.norm(V, axis=1)
        worst = float(np.max(np.abs(norms - 1.0))) if len(norms) else 0.0
        if worst > 1e-12:
            raise MeshInvariantError(f"vertex norms deviate from 1 by {worst:.3e}")

        F = self.faces
        if F.ndim != 2 or F.shape[1] != 3 or F.shape[0] == 0:
            raise MeshInvariantError("faces must be a nonempty (F, 3) array")
        if F.min() < 0 or F.max() >= self.n_vertices:
            raise MeshInvariantError("face indices out of range")
        if np.any((F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 0] == F[:, 2])):
            raise MeshInvariantError("a face repeats a vertex")

        referenced = np.zeros(self.n_vertices, dtype=bool)
        referenced[F.ravel()] = True
        if not referenced.all():
            missing = int(np.flatnonzero(~referenced)[0])
            raise MeshInvariantError(f"vertex {missing} belongs to no face")

        edges, face_edge_ids = _edge_table(F)
        counts = np.bincount(face_edge_ids.ravel(), minlength=edges.shape[0])
        if counts.max(initial=0) > 2:
            raise MeshInvariantError("an edge is shared by more than two faces")
        boundary = set(map(tuple, edges[counts == 1]))
        declared = set()
        for loop in self.boundary_loops:
            if len(loop) < 3:
                raise MeshInvariantError("boundary loop shorter than 3 vertices")
            for u, v in zip(loop, loop[1:] + loop[:1]):
                declared.add(tuple(sorted((u, v))))
        if boundary != declared:
            raise MeshInvariantError(
                f"boundary loops cover {len(declared)} edges but the mesh has "
                f"{len(boundary)} boundary edges")
        self._edges = edges
        self._face_edge_ids = face_edge_ids

        computed, flips = _orientation_scan(F, edges, face_edge_ids)
        if computed != self.orientable:
            raise MeshInvariantError(
                f"declared orientable={self.orientable} but the orientation "
                f"scan says {computed}")
        self._orientation_flips = flips

        N = self.vertex_normals
        if N is not None:
            if N.shape != V.shape:
                raise DimensionMismatch("vertex_normals shape mismatch")
            if float(np.max(np.abs(np.linalg.norm(N, axis=1) - 1.0))) > 1e-8:
                raise MeshInvariantError("vertex normals are not unit")
            if float(np.max(np.abs(np.sum(N * V, axis=1)))) > 1e-8:
                raise MeshInvariantError("vertex normals are not tangent to the sphere")

    # -- misc -----------------------------------------------------------------

    def with_vertices(self, vertices: np.ndarray) -> "SurfaceMesh":
        """Same combinatorics, new positions (normals are dropped)."""
        return SurfaceMesh(self.dimension, vertices, self.faces,
                           self.boundary_loops, self.orientable, self.name)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "vertices": self.vertices.tolist(),
            "faces": self.faces.tolist(),
            "boundary_loops": [list(l) for l in self.boundary_loops],
            "orientable": self.orientable,
            "name": self.name,
        }


def euler_characteristic(mesh: SurfaceMesh) -> int:
    return mesh.n_vertices - mesh.n_edges + mesh.n_faces


# ---------------------------------------------------------------------------
# metrics


def _triangle_slacks(corner_lengths: np.ndarray) -> np.ndarray:
    """Min triangle-inequality slack per face for (F, 3) side lengths."""
    a, b, c = corner_lengths[:, 0], corner_lengths[:, 1], corner_lengths[:, 2]
    return np.minimum.reduce([b + c - a, c + a - b, a + b - c])


@dataclass(frozen=True)
class DiscreteMetric:
    """Edge lengths over fixed mesh combinatorics.

    ``face_corner_lengths[f, c]`` is the length of the edge opposite corner c
    of face f, the layout every angle/area formula wants.
    """

    edges: np.ndarray
    lengths: np.ndarray
    convention: str
    face_edge_ids: np.ndarray
    n_vertices: int

    def __post_init__(self):
        if self.convention not in (SPHERICAL, EUCLIDEAN):
            raise ValueError(f"unknown length convention {self.convention!r}")
        lengths = np.asarray(self.lengths, dtype=float)
        object.__setattr__(self, "lengths", lengths)
        if np.any(lengths <= 0.0):
            raise DegenerateTriangle("non-positive edge length")
        if self.convention == SPHERICAL and np.any(lengths >= np.pi):
            raise DegenerateTriangle("spherical edge length >= pi")
        slack = _triangle_slacks(self.face_corner_lengths)
        if float(slack.min()) <= _TRIANGLE_SLACK:
            bad = int(np.argmin(slack))
            raise DegenerateTriangle(
                f"face {bad} violates the triangle inequality "
                f"(slack {float(slack.min()):.3e})")

    @property
    def face_corner_lengths(self) -> np.ndarray:
        return self.lengths[self.face_edge_ids]

    def scaled(self, factors_per_edge: np.ndarray, convention=None) -> "DiscreteMetric":
        return DiscreteMetric(self.edges, self.lengths * factors_per_edge,
                              convention or self.convention,
                              self.face_edge_ids, self.n_vertices)

    def as_euclidean(self) -> "DiscreteMetric":
        """Reinterpret the same numbers as flat-triangle lengths."""
        if self.convention == EUCLIDEAN:
            return self
        return DiscreteMetric(self.edges, self.lengths, EUCLIDEAN,
                              self.face_edge_ids, self.n_vertices)


def _check_pair(mesh: SurfaceMesh, metric: DiscreteMetric):
    if metric.n_vertices != mesh.n_vertices or \
            metric.face_edge_ids.shape != mesh.face_edge_ids.shape:
        raise FieldMeshMismatch("metric does not match mesh combinatorics")


def induced_metric(mesh: SurfaceMesh) -> DiscreteMetric:
    """Geodesic edge lengths pulled back from the ambient sphere."""
    from .sphere import geodesic_distances

    p = mesh.vertices[mesh.edges[:, 0]]
    q = mesh.vertices[mesh.edges[:, 1]]
    lengths = geodesic_distances(p, q)
    return DiscreteMetric(mesh.edges, lengths, SPHERICAL,
                          mesh.face_edge_ids, mesh.n_vertices)


def face_angles(metric: DiscreteMetric) -> np.ndarray:
    """Interior angles (F, 3); column c is the angle at corner c."""
    L = metric.face_corner_lengths
    out = np.empty_like(L)
    for c in range(3):
        a = L[:, c]
        b = L[:, (c + 1) % 3]
        cc = L[:, (c + 2) % 3]
        if metric.convention == SPHERICAL:
            num = np.cos(a) - np.cos(b) * np.cos(cc)
            den = np.sin(b) * np.sin(cc)
        else:
            num = b * b + cc * cc - a * a
            den = 2.0 * b * cc
        out[:, c] = np.arccos(np.clip(num / den, -1.0, 1.0))
    return out


def _heron(L: np.ndarray) -> np.ndarray:
    # Kahan's numerically stable Heron: sort sides descending
    s = np.sort(L, axis=1)[:, ::-1]
    a, b, c = s[:, 0], s[:, 1], s[:, 2]
    prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(np.maximum(prod, 0.0))


def _spherical_excess(L: np.ndarray) -> np.ndarray:
    # l'Huilier's formula from side lengths alone
    s = np.sum(L, axis=1) / 2.0
    t = np.tan(s / 2.0)
    for c in range(3):
        t = t * np.tan((s - L[:, c]) / 2.0)
    return 4.0 * np.arctan(np.sqrt(np.maximum(t, 0.0)))


def face_areas(metric: DiscreteMetric) -> np.ndarray:
    """Per-face areas: spherical excess or Heron, per the convention."""
    L = metric.face_corner_lengths
    if metric.convention == SPHERICAL:
        return _spherical_excess(L)
    return _heron(L)


def vertex_dual_areas(mesh: SurfaceMesh, metric: DiscreteMetric) -> VertexField:
    """Barycentric dual areas: one third of each incident face."""
    _check_pair(mesh, metric)
    A = face_areas(metric)
    dual = np.zeros(mesh.n_vertices)
    np.add.at(dual, mesh.faces.ravel(), np.repeat(A / 3.0, 3))
    if np.any(dual <= 0.0):
        raise DegenerateTriangle("a vertex has non-positive dual area")
    return VertexField(dual)


def total_area(mesh: SurfaceMesh, metric: DiscreteMetric) -> float:
    _check_pair(mesh, metric)
    return float(np.sum(face_areas(metric)))


def angle_defect_curvature(mesh: SurfaceMesh, metric: DiscreteMetric) -> VertexField:
    """Discrete scalar curvature s_i = 2 * defect_i / A_i (plus the spherical
    face-interior share, see the module docstring).

    Interior vertices use the 2*pi defect; boundary vertices (Plateau
    patches) use pi.
    """
    _check_pair(mesh, metric)
    ang = face_angles(metric)
    angle_sum = np.zeros(mesh.n_vertices)
    np.add.at(angle_sum, mesh.faces.ravel(), ang.ravel())
    full = np.where(mesh.boundary_vertex_mask, np.pi, 2.0 * np.pi)
    defect = full - angle_sum
    dual = vertex_dual_areas(mesh, metric).values
    s = 2.0 * defect / dual
    if metric.convention == SPHERICAL:
        s = s + 2.0
    return VertexField(s)


# ---------------------------------------------------------------------------
# refinement


def refine(mesh: SurfaceMesh) -> SurfaceMesh:
    """1-to-4 midpoint subdivision with radial re-projection."""
    V = mesh.vertices
    edges = mesh.edges
    mid = V[edges[:, 0]] + V[edges[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    verts = np.vstack([V, mid])

    m = mesh.n_vertices + mesh.face_edge_ids  # midpoint index per (face, corner)
    f = mesh.faces
    faces = np.vstack([
        np.column_stack([f[:, 0], m[:, 2], m[:, 1]]),
        np.column_stack([f[:, 1], m[:, 0], m[:, 2]]),
        np.column_stack([f[:, 2], m[:, 1], m[:, 0]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])

    edge_lookup = {tuple(e): i for i, e in enumerate(map(tuple, edges))}
    loops = []
    for loop in mesh.boundary_loops:
        new_loop = []
        for u, v in zip(loop, loop[1:] + loop[:1]):
            e = edge_lookup[tuple(sorted((u, v)))]
            new_loop.extend([u, mesh.n_vertices + e])
        loops.append(new_loop)

    return SurfaceMesh(mesh.dimension, verts, faces, loops, mesh.orientable, mesh.name)


# ---------------------------------------------------------------------------
# persistence


def save_mesh(mesh: SurfaceMesh, path) -> None:
    doc = mesh.to_dict()
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_mesh(path) -> SurfaceMesh:
    doc = json.loads(Path(path).read_text())
    return SurfaceMesh(
        dimension=doc["dimension"],
        vertices=np.array(doc["vertices"], dtype=float),
        faces=np.array(doc["faces"], dtype=np.int64),
        boundary_loops=doc.get("boundary_loops", []),
        orientable=doc.get("orientable", True),
        name=doc.get("name", ""),
    )
