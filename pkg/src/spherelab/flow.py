"""Area-preserving conformal flow to constant scalar curvature.

Starting from the induced metric of a closed mesh, the flow evolves
per-vertex conformal log-factors u by

    u_i  <-  u_i + dt (s_bar - s_i),      s_bar = 4 pi chi / a,

rescales edges as l~_ij = e^{(u_i + u_j)/2} l_ij, and after every step adds
the constant to u that restores the total area to a exactly.  Curvature is
the Euclidean-law angle defect on the scaled metric, which keeps the
Gauss-Bonnet sum at 4 pi chi to machine precision along the whole flow; the
willmore proxy 4*area is then constant by construction, mirroring the
invariance of the Willmore energy under conformal change.

Stepping is explicit Euler with an adaptive dt: halve when a scaled
triangle violates the triangle inequality or the Lyapunov energy
int (s - s_bar)^2 dmu increases, grow by 1.2 after five straight accepted
steps.  Combinatorics are frozen (no edge flips), a documented limitation
for extreme conformal factors.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, TriangleViolation
from .mesh import (
    DiscreteMetric,
    EUCLIDEAN,
    SurfaceMesh,
    VertexField,
    euler_characteristic,
    face_areas,
    induced_metric,
    vertex_dual_areas,
)

__all__ = [
    "FlowState",
    "FlowTrace",
    "conformal_lengths",
    "flow_step",
    "run_uniformization",
    "trace_csv",
]

_SLACK_FLOOR = 1e-10


@dataclass(frozen=True)
class FlowState:
    """One instant of the flow: factors, scaled metric, and diagnostics."""

    u: VertexField
    metric: DiscreteMetric
    time: float
    area: float
    curvature_dev: float


@dataclass(frozen=True)
class FlowTrace:
    """Sampled history of a flow run.

    ``samples`` holds (time, area, curvature_dev, total_scalar,
    willmore_proxy, min_triangle_slack) per accepted step; ``rows`` holds
    the CSV-facing records including step index, dt and the Lyapunov
    energy.
    """

    samples: list
    rows: list

    def check_invariants(self):
        areas = np.array([s[1] for s in self.samples])
        scal = np.array([s[3] for s in self.samples])
        if np.max(np.abs(areas / areas[0] - 1.0)) > 1e-9:
            raise ValueError("area drifts along the trace")
        if np.max(np.abs(scal - scal[0])) > 1e-9 * max(1.0, abs(scal[0])):
            raise ValueError("total scalar curvature drifts along the trace")


def _min_slack(metric: DiscreteMetric) -> float:
    L = metric.face_corner_lengths
    return float(np.min((np.sum(L, axis=1) - 2 * np.max(L, axis=1)) / np.max(L, axis=1)))


def conformal_lengths(base: DiscreteMetric, u: VertexField) -> DiscreteMetric:
    """Scale edges by the geometric mean of the endpoint factors e^u.

    First-order consistent with the smooth scaling of lengths by e^u.
    Raises TriangleViolation, listing the offending faces, when a scaled
    triangle has no flat realisation.
    """
    vals = u.values
    if len(vals) != base.n_vertices:
        raise ValueError("factor field does not match the metric's vertex count")
    scale = np.exp(0.5 * (vals[base.edges[:, 0]] + vals[base.edges[:, 1]]))
    lengths = base.lengths * scale
    L = lengths[base.face_edge_ids]
    slack = np.sum(L, axis=1) - 2 * np.max(L, axis=1)
    bad = np.flatnonzero(slack <= _SLACK_FLOOR * np.max(L, axis=1))
    if len(bad):
        raise TriangleViolation(
            f"{len(bad)} scaled faces violate the triangle inequality",
            faces=[int(f) for f in bad[:32]])
    return DiscreteMetric(base.edges, lengths, EUCLIDEAN, base.face_edge_ids,
                          base.n_vertices)


def _curvature(mesh: SurfaceMesh, metric: DiscreteMetric):
    """(s_i, A_i, area) of an Euclidean-law metric, by angle defect."""
    from .mesh import angle_defect_curvature

    s = angle_defect_curvature(mesh, metric).values
    A = vertex_dual_areas(mesh, metric).values
    return s, A, float(np.sum(face_areas(metric)))


def _renormalized(mesh: SurfaceMesh, base: DiscreteMetric, u: np.ndarray,
                  target_area: float):
    """Scaled metric with u shifted so the area is exactly target_area.

    A uniform additive shift c multiplies every length by e^c and the area
    by e^{2c}, so one exact logarithm restores the area; one extra pass
    absorbs the rounding of exp.
    """
    for _ in range(2):
        metric = conformal_lengths(base, VertexField(u))
        area = float(np.sum(face_areas(metric)))
        c = 0.5 * np.log(target_area / area)
        u = u + c
        if abs(c) < 1e-15:
            break
    metric = conformal_lengths(base, VertexField(u))
    return u, metric


def flow_step(state: FlowState, dt: float, target: float, mesh: SurfaceMesh,
              base: DiscreteMetric) -> FlowState:
    """One explicit Euler step toward curvature ``target``, area-preserving.

    Propagates TriangleViolation untouched so the driver can shrink dt.
    """
    s, _, _ = _curvature(mesh, state.metric)
    u = state.u.values + dt * (target - s)
    u, metric = _renormalized(mesh, base, u, state.area)
    s2, _, area2 = _curvature(mesh, metric)
    dev = float(np.max(np.abs(s2 - target)))
    return FlowState(VertexField(u), metric, state.time + dt, state.area, dev)


def run_uniformization(mesh: SurfaceMesh, tol: float = 1e-4,
                       max_steps: int = 20000):
    """Drive the flow until max_i |s_i - s_bar| < tol.

    Returns (FlowTrace, final u).  Curvature target is s_bar = 4 pi chi / a
    with a the Euclidean-law area of the induced metric (for chi = 0 the
    target is exactly zero).  Raises NonConvergence — with the trace
    attached — when the step budget or the dt floor is exhausted.
    """
    if not mesh.is_closed:
        raise ValueError("the flow runs on closed meshes")
    base = induced_metric(mesh).as_euclidean()
    chi = euler_characteristic(mesh)
    s, A, area = _curvature(mesh, base)
    target = 4.0 * np.pi * chi / area
    u = np.zeros(mesh.n_vertices)
    state = FlowState(VertexField(u), base, 0.0, area,
                      float(np.max(np.abs(s - target))))
    lyap = float(np.sum((s - target) ** 2 * A))
    dt = 0.1 / max(state.curvature_dev, 1e-30)

    samples, rows = [], []

    def record(step, st, dtv, ly):
        s_i, A_i, _ = _curvature(mesh, st.metric)
        total = float(np.sum(s_i * A_i))
        samples.append((st.time, st.area, st.curvature_dev, total,
                        4.0 * st.area, _min_slack(st.metric)))
        rows.append({"step": step, "time": st.time, "dt": dtv, "area": st.area,
                     "curvature_dev": st.curvature_dev, "total_scalar": total,
                     "willmore_proxy": 4.0 * st.area, "lyapunov": ly})

    record(0, state, 0.0, lyap)
    accepted_run = 0
    for step in range(1, max_steps + 1):
        if state.curvature_dev < tol:
            break
        try:
            cand = flow_step(state, dt, target, mesh, base)
        except TriangleViolation:
            dt *= 0.5
            accepted_run = 0
            if dt < 1e-14:
                raise NonConvergence("dt collapsed under triangle violations",
                                     trace=FlowTrace(samples, rows))
            continue
        s_i, A_i, _ = _curvature(mesh, cand.metric)
        cand_lyap = float(np.sum((s_i - target) ** 2 * A_i))
        if cand_lyap > lyap * (1.0 + 1e-12):
            dt *= 0.5
            accepted_run = 0
            if dt < 1e-14:
                raise NonConvergence("dt collapsed under Lyapunov increases",
                                     trace=FlowTrace(samples, rows))
            continue
        state, lyap = cand, cand_lyap
        accepted_run += 1
        if accepted_run >= 5:
            dt *= 1.2
            accepted_run = 0
        record(step, state, dt, lyap)
    else:
        trace = FlowTrace(samples, rows)
        raise NonConvergence(
            f"curvature_dev = {state.curvature_dev:.3e} after {max_steps} steps",
            trace=trace)

    trace = FlowTrace(samples, rows)
    trace.check_invariants()
    return trace, VertexField(state.u.values.copy())


def trace_csv(trace: FlowTrace) -> str:
    """CSV of the flow history, 17 significant digits, reproducible."""
    out = io.StringIO()
    cols = ["step", "time", "dt", "area", "curvature_dev", "total_scalar",
            "willmore_proxy", "lyapunov"]
    out.write(",".join(cols) + "\n")
    for r in trace.rows:
        out.write(",".join(
            str(r["step"]) if c == "step" else f"{r[c]:.17g}" for c in cols) + "\n")
    return out.getvalue()
