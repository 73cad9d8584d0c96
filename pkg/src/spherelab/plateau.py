"""Plateau solver for geodesic polygons and reflection closure of the orbit.

A minimal patch spanning a geodesic polygon in S^d is found by projected
gradient descent on total spherical area: interior vertices of a disk mesh
step synchronously along the discrete mean-curvature direction -- the
surface-normal part of the exact gradient of the summed spherical face
areas, per barycentric dual area -- while boundary vertices stay pinned on
the polygon.  A backtracking
line search accepts a step only when the spherical area (l'Huilier per
face) actually drops and every triangle keeps quality 4*sqrt(3)*A/sum(l^2)
above 0.05.  The descent either reaches ``max interior |H| < tol``, runs
out of iterations (the achieved residual is returned for the caller to
judge), or stalls with the line search unable to shrink the area any
further, which raises StalledDescent rather than silently accepting.

The closed surface is the orbit of the solved patch under the group
generated by reflections across the great circles carrying the boundary
arcs.  Tiles are enumerated by breadth-first closure (deduplicated by
centroid), copies reached by an odd number of reflections get their face
windings flipped, and the stack is welded within 1e-6.  The Euler
characteristic of the quotient must equal 2 - 2*expected_genus.

The canonical genus-k quadrilateral in S^3 alternates between the two
orthogonal great circles span{e1,e2} and span{e3,e4}: corners e1, e3,
(cos(pi/(k+1)), sin(pi/(k+1)), 0, 0), e4.  Its orbit closes after
4*(k+1) tiles; k = 2 gives the genus-2 surface, k = 3 genus 3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AntipodalPair, StalledDescent, WeldFailure, WrongEuler
from .mesh import SurfaceMesh, euler_characteristic
from .sphere import AmbientPoint, SphereIsometry, reflection_across_great_circle
from .zoo import weld_vertices

__all__ = [
    "PlateauProblem",
    "PlateauSolution",
    "geodesic_arc",
    "quadrilateral_disk",
    "solve_plateau",
    "assemble_by_reflection",
    "lawson_xi_quadrilateral",
    "load_plateau_problem",
    "build_xi",
]

QUALITY_FLOOR = 0.05
WELD_TOL = 1e-6


def geodesic_arc(a: np.ndarray, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Sample the minor great-circle arc from ``a`` to ``b`` at fractions ``t``.

    Endpoints come back bit-exact (the slerp weights degenerate to 1 and 0),
    which the disk builder and the weld rely on.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ang = float(np.arccos(np.clip(np.dot(a, b), -1.0, 1.0)))
    if ang < 1e-12:
        raise ValueError("arc endpoints coincide; no geodesic to sample")
    if abs(ang - np.pi) < 1e-9:
        raise AntipodalPair("arc endpoints are antipodal; the minor arc is ambiguous")
    t = np.asarray(t, dtype=float)[:, None]
    return (np.sin((1.0 - t) * ang) * a + np.sin(t * ang) * b) / np.sin(ang)


@dataclass(frozen=True)
class PlateauProblem:
    """A geodesic polygon, a disk spanning it, and one reflection per arc.

    Arc i runs from corner i to corner i+1 (cyclically).  Validation checks
    that each generator is an involution fixing its arc -- both corners and
    the geodesic midpoint move by less than 1e-10, which certifies at the
    same time that the stated arc really is the geodesic the reflection
    mirrors across -- and that every boundary vertex of the disk lies on
    the polygon (it must be fixed by at least one generator).
    """

    boundary: tuple
    interior_init: SurfaceMesh
    reflection_generators: tuple

    def __post_init__(self):
        corners = tuple(
            p if isinstance(p, AmbientPoint) else AmbientPoint(np.asarray(p, dtype=float))
            for p in self.boundary
        )
        gens = tuple(
            g if isinstance(g, SphereIsometry) else SphereIsometry(np.asarray(g, dtype=float))
            for g in self.reflection_generators
        )
        object.__setattr__(self, "boundary", corners)
        object.__setattr__(self, "reflection_generators", gens)
        if len(corners) < 3:
            raise ValueError("a geodesic polygon needs at least three corners")
        if len(gens) != len(corners):
            raise ValueError(
                f"{len(corners)} boundary arcs but {len(gens)} reflection generators"
            )
        dim = corners[0].dim
        if any(p.dim != dim for p in corners) or any(g.dim != dim for g in gens):
            raise ValueError("corners and generators disagree about the ambient dimension")
        if self.interior_init.dimension != dim:
            raise ValueError("interior_init lives in a different sphere than the boundary")
        C = np.array([p.coords for p in corners])
        n = len(corners)
        eye = np.eye(dim + 1)
        for i, g in enumerate(gens):
            R = g.matrix
            if float(np.max(np.abs(R @ R - eye))) > 1e-10:
                raise ValueError(f"generator {i} is not an involution")
            a, b = C[i], C[(i + 1) % n]
            m = geodesic_arc(a, b, np.array([0.5]))[0]
            moved = max(
                float(np.linalg.norm(R @ a - a)),
                float(np.linalg.norm(R @ b - b)),
                float(np.linalg.norm(R @ m - m)),
            )
            if moved > 1e-10:
                raise ValueError(
                    f"generator {i} does not fix boundary arc {i} (moved by {moved:.3e})"
                )
        if self.interior_init.is_closed:
            raise ValueError("interior_init must be a disk, not a closed mesh")
        if euler_characteristic(self.interior_init) != 1:
            raise ValueError("interior_init is not a topological disk (chi != 1)")
        rim = self.interior_init.vertices[self.interior_init.boundary_vertex_mask]
        on_polygon = np.zeros(len(rim), dtype=bool)
        for g in gens:
            on_polygon |= (
                np.linalg.norm(rim @ g.matrix.T - rim, axis=1) < 1e-8
            )
        if not on_polygon.all():
            off = int(np.count_nonzero(~on_polygon))
            raise ValueError(
                f"{off} boundary vertices of the disk do not lie on the polygon"
            )


@dataclass(frozen=True)
class PlateauSolution:
    """A solved patch: the mesh, the residual max|H| reached, and bookkeeping."""

    mesh: SurfaceMesh
    residual: float
    iterations: int
    area: float


def _face_corners(V: np.ndarray, F: np.ndarray):
    return V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]


def _spherical_face_areas(V: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Spherical excess per face (l'Huilier) from geodesic edge lengths."""
    p0, p1, p2 = _face_corners(V, F)

    def arc(u, w):
        ch = 0.5 * np.linalg.norm(u - w, axis=1)
        return 2.0 * np.arcsin(np.clip(ch, 0.0, 1.0))

    la, lb, lc = arc(p1, p2), arc(p2, p0), arc(p0, p1)
    s = 0.5 * (la + lb + lc)
    t = (np.tan(0.5 * s) * np.tan(0.5 * (s - la))
         * np.tan(0.5 * (s - lb)) * np.tan(0.5 * (s - lc)))
    return 4.0 * np.arctan(np.sqrt(np.maximum(t, 0.0)))


def _euclidean_face_areas(V: np.ndarray, F: np.ndarray) -> np.ndarray:
    p0, p1, p2 = _face_corners(V, F)
    u, w = p1 - p0, p2 - p0
    g11 = np.einsum("ij,ij->i", u, u)
    g22 = np.einsum("ij,ij->i", w, w)
    g12 = np.einsum("ij,ij->i", u, w)
    return 0.5 * np.sqrt(np.maximum(g11 * g22 - g12 * g12, 0.0))


def _triangle_quality(V: np.ndarray, F: np.ndarray) -> np.ndarray:
    """4*sqrt(3)*A / sum(l^2): 1 for equilateral, 0 for degenerate."""
    p0, p1, p2 = _face_corners(V, F)
    per = (np.einsum("ij,ij->i", p1 - p0, p1 - p0)
           + np.einsum("ij,ij->i", p2 - p1, p2 - p1)
           + np.einsum("ij,ij->i", p0 - p2, p0 - p2))
    return 4.0 * np.sqrt(3.0) * _euclidean_face_areas(V, F) / np.maximum(per, 1e-300)


def _spherical_area_gradient(V: np.ndarray, F: np.ndarray) -> tuple:
    """Exact per-vertex gradient of total spherical area, plus face areas.

    l'Huilier differentiated in closed form: with arcs a, b, c, excess E and
    s = (a+b+c)/2, the derivative in an adjacent arc is

        dE/db = sin(E/2)/2 * (1/sin s + 1/sin(s-a) - 1/sin(s-b) + 1/sin(s-c))

    and cyclically, while the gradient of an arc length in its endpoint is
    minus the unit tangent toward the other endpoint.  The rows come out
    tangent to the sphere by construction.  Descending this gradient can
    reach an exact critical point of the discrete area, so the residual is
    not floored by the consistency error a cotan proxy would have near
    sharp polygon corners.
    """
    p0, p1, p2 = _face_corners(V, F)

    def chord(u, w):
        return np.linalg.norm(u - w, axis=1)

    # arc opposite each corner: a = |p1 p2|, b = |p2 p0|, c = |p0 p1|
    ch = (chord(p1, p2), chord(p2, p0), chord(p0, p1))
    sin_arc = [h * np.sqrt(np.maximum(1.0 - 0.25 * h * h, 0.0)) for h in ch]
    cos_arc = [1.0 - 0.5 * h * h for h in ch]
    a, b, c = [2.0 * np.arcsin(np.clip(0.5 * h, 0.0, 1.0)) for h in ch]
    s = 0.5 * (a + b + c)
    t = (np.tan(0.5 * s) * np.tan(0.5 * (s - a))
         * np.tan(0.5 * (s - b)) * np.tan(0.5 * (s - c)))
    E = 4.0 * np.arctan(np.sqrt(np.maximum(t, 0.0)))
    half = 0.5 * np.sin(0.5 * E)
    inv_s = 1.0 / np.maximum(np.sin(s), 1e-300)
    inv = [1.0 / np.maximum(np.sin(s - x), 1e-300) for x in (a, b, c)]
    # dE/dx carries a minus on its own 1/sin(s - x) term
    dE = [half * (inv_s - inv[i] + inv[(i + 1) % 3] + inv[(i + 2) % 3])
          for i in range(3)]

    def toward(frm, to, arc_idx):
        # unit tangent at `frm` pointing along the arc to `to`
        return (to - cos_arc[arc_idx][:, None] * frm) / \
            np.maximum(sin_arc[arc_idx], 1e-300)[:, None]

    G = np.zeros_like(V)
    corners = (p0, p1, p2)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        # corner i: adjacent arcs are k (to corner j) and j (to corner k)
        contrib = (-dE[k][:, None] * toward(corners[i], corners[j], k)
                   - dE[j][:, None] * toward(corners[i], corners[k], j))
        np.add.at(G, F[:, i], contrib)
    return G, E


def _descent_state(V: np.ndarray, F: np.ndarray, free: np.ndarray,
                   tail: np.ndarray, head: np.ndarray,
                   mu: float) -> tuple:
    """Mean-curvature direction H and the full step direction H + mu*T.

    The tangent plane at each vertex is estimated as the two dominant
    eigenvectors of the covariance of its (sphere-tangentialized, unit)
    edge directions; ``tail``/``head`` list every directed edge both ways.
    H is minus the surface-normal part of the exact spherical-area gradient
    per barycentric dual area.  Splitting off the tangential part matters
    twice over: the raw gradient contains pure reparametrization components
    that grind triangle quality into the line-search floor without changing
    the geometry, while conversely a deforming sliver patch needs vertices
    actively redistributed along the surface to keep up with it.  T is
    therefore the in-tangent-plane umbrella vector per dual area -- an
    area-neutral smoothing term to first order -- and only H enters the
    termination residual.  Both fields vanish on pinned rows.
    """
    G, E = _spherical_area_gradient(V, F)
    t = V[head] - np.einsum("ij,ij->i", V[head], V[tail])[:, None] * V[tail]
    t /= np.maximum(np.linalg.norm(t, axis=1), 1e-300)[:, None]
    amb = V.shape[1]
    C = np.zeros((len(V), amb, amb))
    np.add.at(C, tail, t[:, :, None] * t[:, None, :])
    _, Q = np.linalg.eigh(C)
    dual = np.zeros(len(V))
    np.add.at(dual, F.ravel(), np.repeat(E / 3.0, 3))
    dual = np.maximum(dual, 1e-300)

    Gn = G.copy()
    for col in (-1, -2):
        q = Q[:, :, col]
        Gn -= np.einsum("ij,ij->i", Gn, q)[:, None] * q
    H = -Gn / dual[:, None]
    H[~free] = 0.0

    if mu == 0.0:
        return H, H
    umb = np.zeros_like(V)
    np.add.at(umb, tail, V[head] - V[tail])
    T = np.zeros_like(V)
    for col in (-1, -2):
        q = Q[:, :, col]
        T += np.einsum("ij,ij->i", umb, q)[:, None] * q
    T /= dual[:, None]
    T[~free] = 0.0
    return H, H + mu * T


def _interior_mean_curvature(V: np.ndarray, F: np.ndarray, free: np.ndarray,
                             tail: np.ndarray, head: np.ndarray) -> np.ndarray:
    """Mean-curvature direction on the free vertices, zero elsewhere."""
    return _descent_state(V, F, free, tail, head, 0.0)[0]


def solve_plateau(problem: PlateauProblem, tol: float = 1e-2,
                  max_iter: int = 20000) -> PlateauSolution:
    """Descend total spherical area until the interior is minimal to ``tol``.

    All free vertices move at once along the mean-curvature direction and
    are reprojected to the sphere; the step size backtracks until the
    spherical area strictly decreases and no triangle quality falls to
    QUALITY_FLOOR.  Returns once ``max interior |H| < tol`` or after
    ``max_iter`` accepted steps (the achieved residual is in the result
    either way).  Raises StalledDescent -- carrying the residual, the
    iteration count and the best mesh -- when the line search cannot
    decrease the area at all while the residual still exceeds ``tol``.
    """
    disk = problem.interior_init
    V = disk.vertices.copy()
    F = disk.faces
    free = ~disk.boundary_vertex_mask
    if not free.any():
        raise ValueError("the disk has no interior vertices to move")

    area = float(np.sum(_spherical_face_areas(V, F)))
    edges = V[F[:, [1, 2, 0]]] - V[F[:, [0, 1, 2]]]
    hmin = float(np.min(np.linalg.norm(edges, axis=2)))
    eta = 0.25 * hmin * hmin
    eta_cap = 64.0 * eta
    residual = float("inf")
    tail = np.concatenate([disk.edges[:, 0], disk.edges[:, 1]])
    head = np.concatenate([disk.edges[:, 1], disk.edges[:, 0]])

    for it in range(max_iter):
        H, D = _descent_state(V, F, free, tail, head, mu=0.5)
        residual = float(np.max(np.linalg.norm(H, axis=1)))
        if residual < tol:
            return PlateauSolution(disk.with_vertices(V), residual, it, area)
        while True:
            Vt = V.copy()
            moved = V[free] + eta * D[free]
            Vt[free] = moved / np.linalg.norm(moved, axis=1)[:, None]
            trial = float(np.sum(_spherical_face_areas(Vt, F)))
            if trial < area and float(np.min(_triangle_quality(Vt, F))) > QUALITY_FLOOR:
                break
            eta *= 0.5
            if eta < 1e-14:
                raise StalledDescent(
                    f"line search stalled at residual {residual:.3e} (tol {tol:.3e})",
                    residual=residual, iterations=it, mesh=disk.with_vertices(V))
        V, area = Vt, trial
        eta = min(1.3 * eta, eta_cap)

    return PlateauSolution(disk.with_vertices(V), residual, max_iter, area)


def assemble_by_reflection(patch, generators, expected_genus: int,
                           name: str = "", max_tiles: int = 512) -> SurfaceMesh:
    """Close up a fundamental patch by reflecting it across its boundary arcs.

    Breadth-first closure over reflection words: reflecting the copy with
    matrix M across the image of arc j yields the copy with matrix
    M @ R_j, so the orbit is enumerated by right-multiplication, with tiles
    deduplicated by centroid (distinct tiles of these tessellations sit far
    apart compared to the weld tolerance).  Copies reached by an odd number
    of reflections have their face windings flipped so the quotient can be
    consistently oriented.  Raises WeldFailure when the orbit fails to
    close into a boundaryless mesh within ``max_tiles`` copies, WrongEuler
    when the Euler characteristic is not 2 - 2*expected_genus.
    """
    if isinstance(patch, PlateauSolution):
        patch = patch.mesh
    V, F = patch.vertices, patch.faces
    gens = tuple(g.matrix if isinstance(g, SphereIsometry) else np.asarray(g, dtype=float)
                 for g in generators)
    centroid = V.mean(axis=0)
    mats = [np.eye(V.shape[1])]
    parity = [0]
    seen = [centroid.copy()]
    cursor = 0
    while cursor < len(mats):
        M, p = mats[cursor], parity[cursor]
        cursor += 1
        for R in gens:
            Mn = M @ R
            c = Mn @ centroid
            if min(float(np.linalg.norm(c - s)) for s in seen) < WELD_TOL:
                continue
            if len(mats) >= max_tiles:
                raise WeldFailure(
                    f"reflection orbit did not close within {max_tiles} tiles")
            mats.append(Mn)
            parity.append(1 - p)
            seen.append(c)

    nv = len(V)
    verts = np.concatenate([V @ M.T for M in mats])
    faces = np.concatenate([
        (F[:, ::-1] if p else F) + k * nv
        for k, (M, p) in enumerate(zip(mats, parity))
    ])
    welded = weld_vertices(patch.dimension, verts, faces, tol=WELD_TOL,
                           name=name or (patch.name + "|assembled"))
    if not welded.is_closed:
        raise WeldFailure("reflection assembly left open boundary edges")
    chi = euler_characteristic(welded)
    want = 2 - 2 * expected_genus
    if chi != want:
        raise WrongEuler(
            f"assembled surface has chi = {chi}, expected {want} "
            f"for genus {expected_genus}")
    return welded


def quadrilateral_disk(corners: np.ndarray, n: int, name: str = "") -> SurfaceMesh:
    """Coons-blended disk over a geodesic quadrilateral, (n+1)^2 grid.

    The four boundary rows are overwritten with exact arc samples, so they
    are fixed by the arc reflections to rounding and assembled copies weld
    cleanly; the blended interior is radially projected to the sphere.
    """
    corners = np.asarray(corners, dtype=float)
    if corners.shape[0] != 4:
        raise ValueError("the disk builder expects exactly four corners")
    if n < 2:
        raise ValueError("need at least a 3x3 grid")
    c0, c1, c2, c3 = corners
    t = np.linspace(0.0, 1.0, n + 1)
    bottom = geodesic_arc(c0, c1, t)
    top = geodesic_arc(c3, c2, t)
    left = geodesic_arc(c0, c3, t)
    right = geodesic_arc(c1, c2, t)

    s = t[:, None, None]      # along bottom/top, index i
    u = t[None, :, None]      # along left/right, index j
    P = ((1.0 - u) * bottom[:, None, :] + u * top[:, None, :]
         + (1.0 - s) * left[None, :, :] + s * right[None, :, :]
         - ((1.0 - s) * (1.0 - u) * c0 + s * (1.0 - u) * c1
            + s * u * c2 + (1.0 - s) * u * c3))
    norms = np.linalg.norm(P, axis=2)
    if float(norms.min()) < 1e-6:
        raise ValueError("Coons blend collapsed to the origin; degenerate quadrilateral")
    P /= norms[:, :, None]
    P[:, 0] = bottom
    P[:, n] = top
    P[0, :] = left
    P[n, :] = right

    def vid(i, j):
        return i * (n + 1) + j

    faces = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2:
                faces.extend([(a, b, c), (a, c, d)])
            else:
                faces.extend([(b, c, d), (b, d, a)])
    loop = ([vid(i, 0) for i in range(n)] + [vid(n, j) for j in range(n)]
            + [vid(i, n) for i in range(n, 0, -1)] + [vid(0, j) for j in range(n, 0, -1)])
    return SurfaceMesh(corners.shape[1] - 1, P.reshape(-1, corners.shape[1]),
                       np.array(faces, dtype=np.int64), boundary_loops=[loop],
                       orientable=True, name=name or f"quad-disk-{n}")


def lawson_xi_quadrilateral(k: int):
    """Corners and arc reflections of the genus-k Plateau quadrilateral in S^3.

    Corners alternate between the orthogonal great circles span{e1,e2} and
    span{e3,e4}: e1, e3, (cos a, sin a, 0, 0) with a = pi/(k+1), e4.  The
    corner angles are pi/2 on the first circle and pi/(k+1) on the second,
    so the reflected orbit closes after 4*(k+1) tiles into a genus-k
    surface.
    """
    if k < 1:
        raise ValueError("genus parameter k must be at least 1")
    a = np.pi / (k + 1)
    e1, e3, e4 = np.eye(4)[0], np.eye(4)[2], np.eye(4)[3]
    p2 = np.array([np.cos(a), np.sin(a), 0.0, 0.0])
    corners = np.array([e1, e3, p2, e4])
    planes = [np.array([e1, e3]), np.array([e3, p2]),
              np.array([p2, e4]), np.array([e4, e1])]
    gens = tuple(reflection_across_great_circle(B) for B in planes)
    return corners, gens


def load_plateau_problem(config) -> tuple:
    """Build a PlateauProblem from a JSON config (path, dict, or file object).

    Fields: ``boundary_vertices`` (corner coordinates, one quadrilateral),
    ``generators`` (one orthogonal matrix per arc), ``expected_genus``,
    ``tol``, ``max_iter``; optional ``resolution`` (grid density of the
    initial disk, default 12), ``name`` and a free-text ``note``.  Returns
    the problem together with the parsed config dict.
    """
    if isinstance(config, (str, Path)):
        cfg = json.loads(Path(config).read_text())
    elif isinstance(config, dict):
        cfg = config
    else:
        cfg = json.load(config)
    corners = np.asarray(cfg["boundary_vertices"], dtype=float)
    gens = tuple(SphereIsometry(np.asarray(m, dtype=float)) for m in cfg["generators"])
    disk = quadrilateral_disk(corners, int(cfg.get("resolution", 12)),
                              name=str(cfg.get("name", "")) + "|disk")
    problem = PlateauProblem(boundary=tuple(corners), interior_init=disk,
                             reflection_generators=gens)
    return problem, cfg


def build_xi(config) -> tuple:
    """Solve the configured Plateau problem and close it up by reflection.

    Returns ``(closed_mesh, patch_solution)``; exceptions from the solver
    (StalledDescent) and the assembler (WeldFailure, WrongEuler) propagate
    so callers can report them.
    """
    problem, cfg = load_plateau_problem(config)
    solution = solve_plateau(problem, tol=float(cfg["tol"]),
                             max_iter=int(cfg["max_iter"]))
    closed = assemble_by_reflection(solution.mesh, problem.reflection_generators,
                                    int(cfg["expected_genus"]),
                                    name=str(cfg.get("name", "")))
    return closed, solution
