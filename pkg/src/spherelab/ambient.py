"""Tube-supported extension of conformal factors and its gradient flow.

The conformal factor u produced by the uniformization flow lives on the
surface; here it is extended to the ambient sphere by

    phi_t(x) = u_t(closest surface point of x) * bump(dist(x, surface))

with a C^2 quintic cutoff that is identically 1 within distance epsilon of
the surface and identically 0 beyond 2 epsilon.  Inside the inner tube the
field is constant in the normal directions, so its gradient is tangent to
the surface there; beyond the outer shell the field — and hence the flow —
vanishes identically.  Particles are advected by the sphere-tangent
gradient with classical RK4, re-projecting to the unit sphere each stage.

Distances for the tube profile are Euclidean (chordal) distances to the
piecewise-linear surface; for small tubes these agree with arc length to
second order, and using them keeps the implemented gradient exactly the
derivative of the implemented value (the finite-difference tests depend on
that).  Surface-fixing, by contrast, is measured against the *curved*
faces (radial projections of the flat faces onto the sphere), because the
exact flow of a surface point moves along the great 2-sphere spanned by
its face, never along the chordal triangle.

u is interpolated linearly in time between schedule samples; that choice
is a convention, not a claim.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ClosestPointAmbiguous, StepTooLarge
from .mesh import SurfaceMesh, induced_metric, vertex_dual_areas
from .sphere import AmbientPoint, TangentVector, geodesic_distances

__all__ = [
    "TubeField",
    "ParticleEnsemble",
    "evaluate_tube_field",
    "integrate_palais_flow",
    "build_ensemble",
    "conformality_residual",
    "residual_json",
    "trajectory_csv",
    "area_preservation_residual",
    "curved_surface_distance",
]

_AMBIGUITY_DIST = 1e-9
_AMBIGUITY_U = 1e-6


def _bump(rho: np.ndarray, eps: float):
    """Quintic cutoff: (value, d/d rho); 1 on [0, eps], 0 on [2 eps, inf)."""
    rho = np.asarray(rho, dtype=float)
    s = np.clip((rho - eps) / eps, 0.0, 1.0)
    value = 1.0 - (10 * s ** 3 - 15 * s ** 4 + 6 * s ** 5)
    slope = -30.0 * s ** 2 * (1.0 - s) ** 2 / eps
    return value, slope


class _FaceCache:
    """Precomputed face geometry plus a centroid tree for candidate lookup."""

    def __init__(self, mesh: SurfaceMesh):
        V, F = mesh.vertices, mesh.faces
        self.faces = F
        self.v0 = V[F[:, 0]]
        self.ab = V[F[:, 1]] - self.v0
        self.ac = V[F[:, 2]] - self.v0
        centroids = (V[F[:, 0]] + V[F[:, 1]] + V[F[:, 2]]) / 3.0
        self.tree = cKDTree(centroids)
        diam = np.maximum(np.linalg.norm(self.ab, axis=1),
                          np.linalg.norm(self.ac, axis=1))
        diam = np.maximum(diam, np.linalg.norm(self.ab - self.ac, axis=1))
        self.max_diam = float(np.max(diam))
        # worst centroid-to-vertex distance: certification radius for the
        # candidate search (any face can beat a centroid by at most this)
        spread = max(np.linalg.norm(V[F[:, k]] - centroids, axis=1).max()
                     for k in range(3))
        self.max_spread = float(spread)
        self.n_faces = len(F)


def _closest_on_triangles(P, A, AB, AC):
    """Closest points of row-paired triangles; returns (points, barycentric).

    Standard region decomposition; barycentric entries are exactly zero on
    the region boundaries, which downstream gradient code relies on.
    """
    AP = P - A
    d1 = np.einsum("ij,ij->i", AB, AP)
    d2 = np.einsum("ij,ij->i", AC, AP)
    BP = AP - AB
    d3 = np.einsum("ij,ij->i", AB, BP)
    d4 = np.einsum("ij,ij->i", AC, BP)
    CP = AP - AC
    d5 = np.einsum("ij,ij->i", AB, CP)
    d6 = np.einsum("ij,ij->i", AC, CP)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom

    n = len(P)
    bary = np.zeros((n, 3))
    taken = np.zeros(n, dtype=bool)

    def claim(cond):
        m = cond & ~taken
        taken[m] = True
        return m

    m = claim((d1 <= 0) & (d2 <= 0))                        # vertex A
    bary[m, 0] = 1.0
    m = claim((d3 >= 0) & (d4 <= d3))                       # vertex B
    bary[m, 1] = 1.0
    m = claim((d6 >= 0) & (d5 <= d6))                       # vertex C
    bary[m, 2] = 1.0
    m = claim((vc <= 0) & (d1 >= 0) & (d3 <= 0))            # edge AB
    bary[m, 0] = 1 - v_ab[m]
    bary[m, 1] = v_ab[m]
    m = claim((vb <= 0) & (d2 >= 0) & (d6 <= 0))            # edge AC
    bary[m, 0] = 1 - w_ac[m]
    bary[m, 2] = w_ac[m]
    m = claim((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0))  # edge BC
    bary[m, 1] = 1 - w_bc[m]
    bary[m, 2] = w_bc[m]
    interior = ~taken
    bary[interior, 0] = 1 - v_in[interior] - w_in[interior]
    bary[interior, 1] = v_in[interior]
    bary[interior, 2] = w_in[interior]
    cp = A + bary[:, 1:2] * AB + bary[:, 2:3] * AC
    return cp, bary


def _closest_faces(cache: _FaceCache, X: np.ndarray, k: int = 32):
    """Exact two nearest faces per query point.

    The centroid tree proposes candidates; the answer is certified exact by
    checking that no unexplored centroid can beat the found distance (an
    unexplored face's closest point lies at least its centroid distance
    minus the worst centroid-to-vertex spread away).
    """
    n = len(X)
    out_face = np.empty(n, dtype=np.int64)
    out_cp = np.empty((n, X.shape[1]))
    out_bary = np.empty((n, 3))
    out_dist = np.empty(n)
    out_dist2 = np.empty(n)
    out_cp2 = np.empty((n, X.shape[1]))
    out_face2 = np.empty(n, dtype=np.int64)
    pending = np.arange(n)
    while len(pending):
        k_eff = min(k, cache.n_faces)
        cd, ci = cache.tree.query(X[pending], k=k_eff)
        cd = np.atleast_2d(cd)
        ci = np.atleast_2d(ci)
        m = len(pending)
        flatP = np.repeat(X[pending], k_eff, axis=0)
        flatF = ci.ravel()
        cp, bary = _closest_on_triangles(flatP, cache.v0[flatF],
                                         cache.ab[flatF], cache.ac[flatF])
        dist = np.linalg.norm(flatP - cp, axis=1).reshape(m, k_eff)
        order = np.argsort(dist, axis=1)
        best = order[:, 0]
        second = order[:, 1] if k_eff > 1 else best
        rows = np.arange(m)
        # certified when every unexplored centroid is provably farther
        certified = (k_eff == cache.n_faces) | \
            (cd[:, -1] > dist[rows, best] + cache.max_spread)
        sel = pending[certified]
        bsel = best[certified]
        rsel = rows[certified]
        out_face[sel] = ci[rsel, bsel]
        idx_flat = rsel * k_eff + bsel
        out_cp[sel] = cp[idx_flat]
        out_bary[sel] = bary[idx_flat]
        out_dist[sel] = dist[rsel, bsel]
        s2 = second[certified]
        out_dist2[sel] = dist[rsel, s2]
        out_cp2[sel] = cp[rsel * k_eff + s2]
        out_face2[sel] = ci[rsel, s2]
        pending = pending[~certified]
        k *= 4
    return out_face, out_cp, out_bary, out_dist, out_dist2, out_cp2, out_face2


@dataclass(frozen=True)
class TubeField:
    """A time-dependent conformal factor extended to a tube in the sphere.

    ``u_schedule`` is a tuple of (time, per-vertex values), linearly
    interpolated in time.  ``epsilon`` is the inner tube radius; the field
    is supported within 2 epsilon.
    """

    source_mesh: SurfaceMesh
    u_schedule: tuple
    epsilon: float
    bump: object = _bump
    _cache: object = dataclass_field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("tube radius must be positive")
        times = [t for t, _ in self.u_schedule]
        if len(times) < 1 or list(times) != sorted(times):
            raise ValueError("u_schedule must be nonempty and time-sorted")
        for _, u in self.u_schedule:
            if len(u) != self.source_mesh.n_vertices:
                raise ValueError("schedule field does not match the mesh")
        object.__setattr__(self, "_cache", _FaceCache(self.source_mesh))

    @classmethod
    def from_flow(cls, mesh: SurfaceMesh, u_final: np.ndarray,
                  epsilon: float | None = None) -> "TubeField":
        """Schedule from u(0) = 0 to the uniformized factors, linear in t.

        Default epsilon is half the focal-distance estimate
        min_i 1 / |alpha_i| of the surface.
        """
        if epsilon is None:
            from .extrinsic import second_fundamental_norm

            alpha = second_fundamental_norm(mesh).values
            epsilon = 0.5 / np.sqrt(max(float(np.max(alpha)), 1e-12))
        schedule = ((0.0, np.zeros(mesh.n_vertices)),
                    (1.0, np.asarray(u_final, dtype=float)))
        return cls(mesh, schedule, float(epsilon))

    def u_at(self, t: float) -> np.ndarray:
        times = [s for s, _ in self.u_schedule]
        if t <= times[0]:
            return self.u_schedule[0][1]
        if t >= times[-1]:
            return self.u_schedule[-1][1]
        j = int(np.searchsorted(times, t, side="right"))
        t0, u0 = self.u_schedule[j - 1]
        t1, u1 = self.u_schedule[j]
        w = (t - t0) / (t1 - t0)
        return (1 - w) * u0 + w * u1


def _field_batch(field: TubeField, X: np.ndarray, t: float):
    """(values, ambient gradients) of the tube field at a batch of points.

    The gradient is the exact derivative of the implemented value: the
    closest-point map contributes the face (or edge) Jacobian, the cutoff
    contributes its radial term, and the result is projected tangent to the
    sphere at each query point.
    """
    cache = field._cache
    eps = field.epsilon
    n = len(X)
    values = np.zeros(n)
    grads = np.zeros_like(X)

    # quick reject: points provably beyond the outer shell
    cd1, _ = cache.tree.query(X, k=1)
    live = cd1 - cache.max_diam < 2.0 * eps
    if not np.any(live):
        return values, grads
    Xl = X[live]
    fi, cp, bary, dist, dist2, cp2, fi2 = _closest_faces(cache, Xl)

    u = field.u_at(t)
    inside = dist < 2.0 * eps
    close_pair = dist2 - dist < _AMBIGUITY_DIST
    if np.any(inside & close_pair):
        # Ties between faces sharing a vertex are the continuous edge /
        # vertex crossings of the closest-point map, not an ambiguity.
        # The guard is for distinct sheets (medial-axis contact) where the
        # extension would be genuinely multi-valued.
        V, F = field.source_mesh.vertices, cache.faces
        check = np.flatnonzero(inside & close_pair)
        for i in check:
            fa, fb = int(fi[i]), int(fi2[i])
            if fa == fb or set(F[fa]) & set(F[fb]):
                continue
            ua = _face_value(V, F, u, fa, cp[i])
            ub = _face_value(V, F, u, fb, cp2[i])
            if abs(ua - ub) > _AMBIGUITY_U:
                raise ClosestPointAmbiguous(
                    f"two non-adjacent faces within {_AMBIGUITY_DIST} of a "
                    f"query point disagree on u by {abs(ua - ub):.3e}; "
                    f"shrink epsilon")

    F = cache.faces[fi]
    u0, u1, u2 = u[F[:, 0]], u[F[:, 1]], u[F[:, 2]]
    u_cp = bary[:, 0] * u0 + bary[:, 1] * u1 + bary[:, 2] * u2
    B, dB = field.bump(dist, eps)
    vals = u_cp * B

    # Jacobian term of u o cp, per closest-feature region
    ab, ac = cache.ab[fi], cache.ac[fi]
    g = np.zeros_like(Xl)
    interior = (bary > 0).all(axis=1)
    if np.any(interior):
        e0, e1 = ab[interior], ac[interior]
        m00 = np.sum(e0 * e0, axis=1)
        m01 = np.sum(e0 * e1, axis=1)
        m11 = np.sum(e1 * e1, axis=1)
        det = m00 * m11 - m01 * m01
        r0 = (u1 - u0)[interior]
        r1 = (u2 - u0)[interior]
        c0 = (m11 * r0 - m01 * r1) / det
        c1 = (m00 * r1 - m01 * r0) / det
        g[interior] = c0[:, None] * e0 + c1[:, None] * e1
    for za, zb, zc in ((2, 0, 1), (1, 0, 2), (0, 1, 2)):
        # closest point on the edge (zb, zc): bary[za] == 0, others > 0
        on_edge = (bary[:, za] == 0.0) & (bary[:, zb] > 0) & (bary[:, zc] > 0)
        if not np.any(on_edge):
            continue
        vb = cache.v0[fi[on_edge]] + (ab[on_edge] if zb == 1 else 0) + \
            (ac[on_edge] if zb == 2 else 0)
        vcoord = cache.v0[fi[on_edge]] + (ab[on_edge] if zc == 1 else 0) + \
            (ac[on_edge] if zc == 2 else 0)
        tvec = vcoord - vb
        du = u[F[on_edge, zc]] - u[F[on_edge, zb]]
        g[on_edge] = tvec * (du / np.sum(tvec * tvec, axis=1))[:, None]
    # vertex regions: cp constant, Jacobian zero — g already zero there

    radial = np.zeros_like(Xl)
    off = dist > 0
    radial[off] = (Xl[off] - cp[off]) * (dB[off] / dist[off])[:, None] * \
        u_cp[off][:, None]
    total = B[:, None] * g + radial
    # sphere-tangent projection at the query points
    total -= np.sum(total * Xl, axis=1)[:, None] * Xl

    values[live] = vals
    grads[live] = total
    return values, grads


def _face_value(V, F, u, f, point):
    """Linear interpolation of u over face f at an in-face point."""
    a, b, c = F[f]
    e0, e1 = V[b] - V[a], V[c] - V[a]
    m = np.array([[e0 @ e0, e0 @ e1], [e0 @ e1, e1 @ e1]])
    rhs = np.array([e0 @ (point - V[a]), e1 @ (point - V[a])])
    s, t = np.linalg.solve(m, rhs)
    return (1 - s - t) * u[a] + s * u[b] + t * u[c]


def evaluate_tube_field(field: TubeField, x: AmbientPoint, t: float):
    """Field value and sphere-tangent gradient at one ambient point."""
    vals, grads = _field_batch(field, x.coords[None, :], t)
    return float(vals[0]), TangentVector(x, grads[0])


# ---------------------------------------------------------------------------
# particles


@dataclass
class ParticleEnsemble:
    """Tagged ambient particles with their trajectory log."""

    positions: np.ndarray
    tags: list
    log: list

    def __post_init__(self):
        norms = np.linalg.norm(self.positions, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-8:
            raise ValueError("particles must sit on the unit sphere")


def build_ensemble(field: TubeField, n_surface: int = 20, n_tube: int = 20,
                   n_outside: int = 20, seed: int = 7) -> ParticleEnsemble:
    """Seeded particle placement on, near, and away from the surface.

    Surface particles sit on the curved faces (barycentric samples pushed
    to the sphere); tube particles are surface samples moved a fraction of
    the tube radius along a random tangent of the ambient sphere; outside
    particles are rejection-sampled beyond the 2-epsilon support.
    """
    rng = np.random.default_rng(seed)
    mesh = field.source_mesh
    dim = mesh.vertices.shape[1]
    eps = field.epsilon
    cache = field._cache

    def surface_points(count):
        f = rng.integers(0, mesh.n_faces, size=count)
        r1, r2 = rng.random(count), rng.random(count)
        swap = r1 + r2 > 1
        r1[swap], r2[swap] = 1 - r1[swap], 1 - r2[swap]
        pts = cache.v0[f] + r1[:, None] * cache.ab[f] + r2[:, None] * cache.ac[f]
        return pts / np.linalg.norm(pts, axis=1, keepdims=True)

    on_surface = surface_points(n_surface)

    base = surface_points(n_tube)
    v = rng.standard_normal((n_tube, dim))
    v -= np.sum(v * base, axis=1)[:, None] * base
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    delta = rng.uniform(0.3, 1.4, size=n_tube) * eps
    in_tube = np.cos(delta)[:, None] * base + np.sin(delta)[:, None] * v

    outside = np.empty((0, dim))
    while len(outside) < n_outside:
        cand = rng.standard_normal((4 * n_outside, dim))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        d, _ = cache.tree.query(cand, k=1)
        far = cand[d - cache.max_diam > 2.2 * eps]
        if len(far) == 0:
            # fine meshes leave no slack via the crude centroid bound;
            # fall back to exact distances
            _, _, _, dist, _, _, _ = _closest_faces(cache, cand)
            far = cand[dist > 2.1 * eps]
        outside = np.vstack([outside, far[: n_outside - len(outside)]])

    positions = np.vstack([on_surface, in_tube, outside])
    tags = (["on_surface"] * n_surface + ["in_tube"] * n_tube
            + ["outside"] * n_outside)
    return ParticleEnsemble(positions, tags, [(0.0, positions.copy())])


def _gradient_bound(field: TubeField) -> float:
    """Analytic bound on |grad phi| over space and schedule times."""
    worst = 0.0
    for _, u in field.u_schedule:
        umax = float(np.max(np.abs(u)))
        cache = field._cache
        F = field.source_mesh.faces
        du = np.stack([u[F[:, 1]] - u[F[:, 0]], u[F[:, 2]] - u[F[:, 0]]])
        lens = np.stack([np.linalg.norm(cache.ab, axis=1),
                         np.linalg.norm(cache.ac, axis=1)])
        gbound = float(np.max(np.sum(np.abs(du) / lens, axis=0), initial=0.0))
        worst = max(worst, umax * 1.875 / field.epsilon + gbound)
    return worst


def integrate_palais_flow(field: TubeField, ensemble: ParticleEnsemble,
                          t_end: float, dt: float) -> ParticleEnsemble:
    """Advect the ensemble by RK4 along the tube-field gradient.

    Stages re-project to the sphere; a particle whose four stage velocities
    all vanish is left bit-identical (the field's support guarantee).
    Raises StepTooLarge unless dt <= epsilon / (4 max|grad|), so no
    particle can cross the tube shell in a single step.
    """
    bound = _gradient_bound(field)
    if bound > 0 and dt > field.epsilon / (4.0 * bound):
        raise StepTooLarge(
            f"dt = {dt} exceeds epsilon / (4 max|grad|) = "
            f"{field.epsilon / (4 * bound):.3e}")
    X = ensemble.positions.copy()
    log = list(ensemble.log)
    steps = int(np.ceil(t_end / dt - 1e-12))
    t = 0.0
    for _ in range(steps):
        h = min(dt, t_end - t)
        _, k1 = _field_batch(field, X, t)
        _, k2 = _field_batch(field, _reproject(X + 0.5 * h * k1), t + 0.5 * h)
        _, k3 = _field_batch(field, _reproject(X + 0.5 * h * k2), t + 0.5 * h)
        _, k4 = _field_batch(field, _reproject(X + h * k3), t + h)
        moved = (np.abs(k1).max(axis=1) + np.abs(k2).max(axis=1)
                 + np.abs(k3).max(axis=1) + np.abs(k4).max(axis=1)) > 0.0
        Xn = X[moved] + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)[moved]
        X[moved] = _reproject(Xn)
        t += h
        log.append((t, X.copy()))
    return ParticleEnsemble(X, list(ensemble.tags), log)


def _reproject(X: np.ndarray) -> np.ndarray:
    return X / np.linalg.norm(X, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# measurements


def curved_surface_distance(field_or_mesh, X: np.ndarray) -> np.ndarray:
    """Distance from each point to the union of curved (projected) faces.

    Faces are radially projected onto the sphere: each becomes the patch of
    the great 2-sphere spanned by its vertices with nonnegative cone
    coefficients.  The distance also considers curved edges and vertices,
    so it is the honest distance to the curved surface.
    """
    mesh = field_or_mesh.source_mesh if isinstance(field_or_mesh, TubeField) \
        else field_or_mesh
    cache = _FaceCache(mesh) if not isinstance(field_or_mesh, TubeField) \
        else field_or_mesh._cache
    V, F = mesh.vertices, mesh.faces
    out = np.empty(len(X))
    k = min(12, cache.n_faces)
    _, candidates = cache.tree.query(X, k=k)
    candidates = np.atleast_2d(candidates)
    for i, x in enumerate(X):
        best = np.inf
        for f in candidates[i]:
            tri = V[F[f]]
            # projection onto the linear span, then radially to the sphere
            q, _, _, _ = np.linalg.lstsq(tri.T, x, rcond=None)
            p = tri.T @ q
            norm = np.linalg.norm(p)
            if norm > 1e-14 and (q >= -1e-12).all():
                best = min(best, float(np.linalg.norm(x - p / norm)))
                continue
            for a, b in ((0, 1), (0, 2), (1, 2)):
                pair = tri[[a, b]]
                qq, _, _, _ = np.linalg.lstsq(pair.T, x, rcond=None)
                p = pair.T @ qq
                norm = np.linalg.norm(p)
                if norm > 1e-14 and (qq >= -1e-12).all():
                    best = min(best, float(np.linalg.norm(x - p / norm)))
            best = min(best, float(np.min(np.linalg.norm(tri - x, axis=1))))
        out[i] = best
    return out


def conformality_residual(field: TubeField, flowed_vertices: np.ndarray,
                          u: np.ndarray, surface_fixing_error: float = np.nan) -> dict:
    """Per-edge comparison of flowed geodesic lengths with e^{(ui+uj)/2} l.

    Reports the max and the dual-area-weighted median relative mismatch,
    plus the maximum mean curvature of the flowed mesh.  No pass threshold
    is attached: a constant u moves nothing (zero gradient) and must show
    mismatch e^c - 1, the control case separating particle transport from
    the pullback-metric statement.
    """
    mesh = field.source_mesh
    g = induced_metric(mesh)
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    flowed = _reproject(np.asarray(flowed_vertices, dtype=float))
    d_new = geodesic_distances(flowed[i], flowed[j])
    expected = np.exp(0.5 * (u[i] + u[j])) * g.lengths
    rel = np.abs(d_new - expected) / expected
    A = vertex_dual_areas(mesh, g).values
    w = A[i] + A[j]
    order = np.argsort(rel)
    cum = np.cumsum(w[order])
    median = float(rel[order][np.searchsorted(cum, 0.5 * cum[-1])])

    from .extrinsic import max_mean_curvature

    flowed_mesh = SurfaceMesh(mesh.dimension, flowed, mesh.faces,
                              orientable=mesh.orientable,
                              name=(mesh.name or "mesh") + "|flowed")
    return {
        "max_conformality_residual": float(np.max(rel)),
        "median_conformality_residual": median,
        "max_H_after": float(max_mean_curvature(flowed_mesh)),
        "surface_fixing_error": float(surface_fixing_error),
    }


def residual_json(report: dict) -> str:
    ordered = {k: report[k] for k in sorted(report)}
    return json.dumps({k: (f"{v:.17g}" if isinstance(v, float) else v)
                       for k, v in ordered.items()}, indent=2) + "\n"


def trajectory_csv(ensemble: ParticleEnsemble) -> str:
    """Long-format CSV of the trajectory log: particle_id,tag,t,x0..x_d."""
    dim = ensemble.positions.shape[1]
    out = io.StringIO()
    out.write("particle_id,tag,t," + ",".join(f"x{k}" for k in range(dim)) + "\n")
    for t, X in ensemble.log:
        for pid in range(len(X)):
            coords = ",".join(f"{c:.17g}" for c in X[pid])
            out.write(f"{pid},{ensemble.tags[pid]},{t:.17g},{coords}\n")
    return out.getvalue()


def area_preservation_residual(mesh: SurfaceMesh, u: np.ndarray) -> float:
    """|integral of (e^{2u} - 1) dmu| / area, as the area-functional change.

    The discrete conformal area is the area of the rescaled metric, so the
    integral identity collapses to an exact area comparison; for factors
    coming out of the area-preserving flow this is machine zero.
    """
    from .flow import conformal_lengths
    from .mesh import VertexField, face_areas

    base = induced_metric(mesh).as_euclidean()
    scaled = conformal_lengths(base, VertexField(np.asarray(u, dtype=float)))
    a0 = float(np.sum(face_areas(base)))
    a1 = float(np.sum(face_areas(scaled)))
    return abs(a1 - a0) / a0
