"""Admissible horizontal curves and lattice approximations of the Carnot-Caratheodory distance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .frames import Frame


class CurveError(ValueError):
    pass


@dataclass(frozen=True)
class AdmissibleCurve:
    """A sampled path ``r(t_k)`` with horizontal controls ``a(t_k)`` (one per sample)."""

    times: np.ndarray
    points: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise CurveError("times must be a nonempty 1-d array")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise CurveError("times must be strictly increasing")
        if len(self.points) != t.size or len(self.controls) != t.size:
            raise CurveError("points and controls need one row per time sample")

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def to_csv(self) -> str:
        n = self.points.shape[1]
        m = self.controls.shape[1]
        head = ",".join(["t"] + [f"x{a}" for a in range(n)] + [f"a{i}" for i in range(m)])
        rows = [",".join(repr(float(v)) for v in np.r_[t, p, c])
                for t, p, c in zip(self.times, self.points, self.controls)]
        return "\n".join([head] + rows) + "\n"


@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    max_control_excess: float
    max_velocity_violation: float

    def __bool__(self):
        return self.ok


def is_admissible(curve: AdmissibleCurve, frame: Frame, tol: float = 1e-6) -> AdmissibilityReport:
    """Check the control bound and the horizontal-velocity condition of a sampled curve.

    The discrete velocity on each interval is compared with ``a_i X_i`` at the
    interval midpoint. The allowance is ``tol + |a| L |v| dt`` where ``L`` is
    the size of the frame derivative at the midpoint, which absorbs the
    first-order mismatch of explicit Euler sampling.
    """
    if len(curve.times) < 2:
        raise CurveError("need at least two samples")
    a = np.asarray(curve.controls, dtype=float)
    excess = float(np.max(np.sum(a * a, axis=1) - 1.0))
    r = np.asarray(curve.points, dtype=float)
    dt = np.diff(curve.times)
    v = np.diff(r, axis=0) / dt[:, None]
    mid = 0.5 * (r[1:] + r[:-1])
    F = frame(mid)
    L = np.sqrt(np.sum(frame.derivative(mid) ** 2, axis=(1, 2, 3)))
    resid = np.linalg.norm(v - np.einsum("km,kmn->kn", a[:-1], F), axis=1)
    allowed = tol + np.linalg.norm(a[:-1], axis=1) * L * np.linalg.norm(v, axis=1) * dt
    violation = max(float(np.max(resid - allowed)), 0.0)
    excess = max(excess, 0.0)
    return AdmissibilityReport(ok=excess <= 1e-9 and violation == 0.0,
                               max_control_excess=excess, max_velocity_violation=violation)


def curve_time_rescale(curve: AdmissibleCurve, speed: float) -> AdmissibleCurve:
    """Traverse the same path at ``speed`` in (0, 1]: times scale by 1/speed, controls by speed."""
    if not 0 < speed <= 1:
        raise CurveError(f"speed must lie in (0, 1], got {speed}")
    t0 = curve.times[0]
    return AdmissibleCurve(times=t0 + (curve.times - t0) / speed,
                           points=curve.points.copy(), controls=curve.controls * speed)


def control_directions(m: int, count: int, seed: int = 0) -> np.ndarray:
    """Symmetric set of unit controls in R^m containing the +-basis vectors.

    For m = 2 the directions are evenly spaced angles; for m >= 3 a seeded
    uniform sample of the sphere is symmetrized.
    """
    basis = np.vstack([np.eye(m), -np.eye(m)])
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        k = max(4, count + (count % 2))
        ang = 2 * np.pi * np.arange(k) / k
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        rng = np.random.default_rng(seed)
        half = rng.normal(size=(max(1, count // 2), m))
        half /= np.linalg.norm(half, axis=1, keepdims=True)
        dirs = np.vstack([half, -half])
    dirs = np.vstack([dirs, basis])
    dirs[np.abs(dirs) < 1e-15] = 0.0
    keep = []
    for d in dirs:
        if not any(np.allclose(d, k, atol=1e-12) for k in keep):
            keep.append(d)
    return np.array(keep)


@dataclass
class CCDistanceResult:
    value: float
    curve: AdmissibleCurve | None
    grid_resolution: float
    reachable: bool = True
    explored: int = 0
    spacing: np.ndarray = field(default_factory=lambda: np.zeros(0))
    endpoint_error: float = 0.0
    backend: str = ""

    def as_dict(self) -> dict:
        return {
            "value": self.value if self.reachable else None,
            "reachable": self.reachable,
            "grid_resolution": self.grid_resolution,
            "lattice_spacing": self.spacing.tolist(),
            "explored_cells": self.explored,
            "endpoint_error": self.endpoint_error,
            "witness_samples": 0 if self.curve is None else int(len(self.curve.times)),
            "backend": self.backend,
        }


def lattice_spacing(frame: Frame, resolution: float) -> np.ndarray:
    """Cell size per axis: ``resolution**w / 2**(w-1)`` for coordinate degree ``w``."""
    w = np.asarray(frame.weights, dtype=float)
    return resolution ** w / 2.0 ** (w - 1)


def cc_distance(frame: Frame, box, x, y, resolution: float = 0.02, controls_per_step: int = 16,
                seed: int = 0, backend: str | None = None) -> CCDistanceResult:
    """Approximate ``d_X(x, y)`` by a shortest path in a horizontal displacement lattice.

    Edges are Euler steps of duration ``resolution`` with unit controls, so the
    search is breadth-first and the value is ``resolution`` times the number of
    steps needed to reach the cell of ``y``. Cells along degree-w coordinates
    are ``resolution**w / 2**(w-1)`` wide. States keep their exact positions;
    the lattice only decides which state first claims a cell.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    x = frame.check_point(x)
    y = frame.check_point(y)
    if resolution <= 0:
        raise CurveError("resolution must be positive")
    if lo.shape != (frame.n,) or hi.shape != (frame.n,) or np.any(hi <= lo):
        raise CurveError("box must be a nondegenerate rectangle in R^n")
    for pt, label in ((x, "x"), (y, "y")):
        if np.any(pt < lo) or np.any(pt > hi):
            raise CurveError(f"{label} lies outside the box")

    spacing = lattice_spacing(frame, resolution)
    shape = np.floor((hi - lo) / spacing + 0.5).astype(np.int64) + 1
    ncells = int(np.prod(shape))
    strides = np.array([int(np.prod(shape[a + 1:])) for a in range(frame.n)], dtype=np.int64)
    target_idx = np.clip(np.floor((y - lo) / spacing + 0.5).astype(np.int64), 0, shape - 1)
    target_flat = int(target_idx @ strides)
    controls = control_directions(frame.m, controls_per_step, seed)

    parent = np.full(ncells, -1, dtype=np.int64)
    control_of = np.full(ncells, -1, dtype=np.int16)
    kern = kernels.get_backend(backend)
    layers, visited = kern.lattice_bfs(frame, lo, spacing, shape, controls, resolution, x,
                                       target_flat, ncells, parent, control_of)
    if layers < 0:
        return CCDistanceResult(value=float("inf"), curve=None, grid_resolution=resolution,
                                reachable=False, explored=int(visited), spacing=spacing,
                                backend=kern.name)

    seq = []
    cell = target_flat
    while parent[cell] != cell:
        seq.append(int(control_of[cell]))
        cell = int(parent[cell])
    seq.reverse()
    pts = [x.copy()]
    for k in seq:
        z = pts[-1]
        pts.append(z + resolution * controls[k] @ frame(z))
    ctrl = np.array([controls[k] for k in seq] + [controls[seq[-1]] if seq else np.zeros(frame.m)])
    curve = AdmissibleCurve(times=resolution * np.arange(len(pts)), points=np.array(pts),
                            controls=ctrl.reshape(len(pts), frame.m))
    return CCDistanceResult(value=resolution * layers, curve=curve, grid_resolution=resolution,
                            explored=int(visited), spacing=spacing,
                            endpoint_error=float(np.linalg.norm(pts[-1] - y)), backend=kern.name)
