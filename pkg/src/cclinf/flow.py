"""Horizontal gradient flow along a fixed direction in the target space and its invariants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calculus import AnalyticMap, Jet2
from .frames import Frame

DENOM_FLOOR = 1e-12


class FlowError(ValueError):
    pass


class DegenerateDirectionError(FlowError):
    """Raised when the flow direction degenerates (``xi . Xu`` vanishes)."""


@dataclass(frozen=True)
class FlowTrajectory:
    xi: np.ndarray
    times: np.ndarray
    points: np.ndarray
    hnorms: np.ndarray        # |Xu(r(t_k))|^2
    projections: np.ndarray   # xi . u(r(t_k))
    exit_time: float | None = None
    truncated: str | None = None

    def to_csv(self) -> str:
        n = self.points.shape[1]
        head = ",".join(["t"] + [f"r{a}" for a in range(n)] + ["hnorm_sq", "xi_dot_u"])
        rows = [",".join(repr(float(v)) for v in np.r_[t, r, h, q])
                for t, r, h, q in zip(self.times, self.points, self.hnorms, self.projections)]
        return "\n".join([head] + rows) + "\n"


def _unit(xi, N: int) -> np.ndarray:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (N,):
        raise FlowError(f"xi must have length N={N}, got shape {xi.shape}")
    norm = np.linalg.norm(xi)
    if norm == 0 or not np.isfinite(norm):
        raise FlowError("xi must be a nonzero finite vector")
    return xi / norm


def flow_velocity(jet: Jet2, F, xi) -> np.ndarray:
    """Velocity ``(|Xu|^2 / |xi.Xu|^2) X_iA (xi.X_iu)`` of the horizontal gradient flow.

    Along this velocity ``d/dt xi.u(r(t)) = |Xu|^2``. Raises :class:`DegenerateDirectionError`
    when ``|xi.Xu|^2`` falls below ``1e-12 |Xu|^2``.
    """
    F = np.asarray(F, dtype=float)
    H = jet.egrad @ F.T
    xi = _unit(xi, H.shape[0])
    w = xi @ H                                 # (m,) = xi_g X_i u_g
    normsq = float(np.sum(H * H))
    denom = float(w @ w)
    if normsq == 0.0 or denom <= DENOM_FLOOR * normsq:
        raise DegenerateDirectionError(f"degenerate direction: |xi.Xu|^2 = {denom:.3e}, |Xu|^2 = {normsq:.3e}")
    return normsq / denom * (w @ F)


def _in_box(x, lo, hi) -> bool:
    return bool(np.all(x >= lo) and np.all(x <= hi))


def _rk4(vel, x, h):
    k1 = vel(x)
    k2 = vel(x + 0.5 * h * k1)
    k3 = vel(x + 0.5 * h * k2)
    k4 = vel(x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_flow(umap: AnalyticMap, frame: Frame, x0, xi, dt: float, box,
                   max_steps: int = 10_000) -> FlowTrajectory:
    """Classical RK4 for ``r' = flow_velocity(u, X, xi)(r)``, ``r(0) = x0``, until ``r`` leaves the box.

    The crossing is refined by bisection on the step length to ``dt * 1e-3``
    and the boundary point is appended as the last sample. A degenerate
    direction met after the first step truncates the trajectory and records
    the reason instead of raising.
    """
    if dt <= 0:
        raise FlowError("dt must be positive")
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    x0 = frame.check_point(x0)
    if not _in_box(x0, lo, hi):
        raise FlowError("x0 lies outside the domain")
    xi = _unit(xi, umap.N)

    def vel(x):
        return flow_velocity(umap.jet(x), frame(x), xi)

    vel(x0)  # fail loudly if the flow is undefined at the start
    times, points = [0.0], [x0]
    exit_time, reason = None, None
    t, x = 0.0, x0
    for _ in range(max_steps):
        try:
            y = _rk4(vel, x, dt)
        except DegenerateDirectionError as exc:
            reason = str(exc)
            break
        if _in_box(y, lo, hi):
            t, x = t + dt, y
            times.append(t)
            points.append(x)
            continue
        a, b = 0.0, dt
        inside = x
        while b - a > dt * 1e-3:
            s = 0.5 * (a + b)
            try:
                z = _rk4(vel, x, s)
            except DegenerateDirectionError:
                b = s
                continue
            if _in_box(z, lo, hi):
                a, inside = s, z
            else:
                b = s
        if a > 0:
            times.append(t + a)
            points.append(inside)
        exit_time = t + a
        break
    else:
        reason = f"max_steps={max_steps} reached inside the domain"

    pts = np.array(points)
    v, g, _ = umap.jets(pts)
    H = np.einsum("kan,kin->kai", g, frame(pts))
    return FlowTrajectory(xi=xi, times=np.array(times), points=pts,
                          hnorms=np.sum(H * H, axis=(1, 2)), projections=v @ xi,
                          exit_time=exit_time, truncated=reason)


@dataclass(frozen=True)
class AffinityReport:
    slope: float
    intercept: float
    slope_error: float          # |slope - hnorms[0]|
    linear_fit_residual: float  # max |projections - fitted line|
    hnorm_drift: float          # max |hnorms - hnorms[0]|
    affine_defect: float        # max |xi.u(r(t)) - xi.u(x0) - hnorms[0] t|

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def affinity_report(traj: FlowTrajectory) -> AffinityReport:
    """Fit ``xi.u(r(t))`` by a line and measure how far ``|Xu|^2`` drifts along the trajectory."""
    t, q, hn = traj.times, traj.projections, traj.hnorms
    if t.size < 3:
        raise FlowError("affinity report needs at least 3 samples")
    A = np.stack([t, np.ones_like(t)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, q, rcond=None)
    fit = A @ np.array([slope, intercept])
    return AffinityReport(
        slope=float(slope), intercept=float(intercept),
        slope_error=float(abs(slope - hn[0])),
        linear_fit_residual=float(np.max(np.abs(q - fit))),
        hnorm_drift=float(np.max(np.abs(hn - hn[0]))),
        affine_defect=float(np.max(np.abs(q - q[0] - hn[0] * (t - t[0])))),
    )
