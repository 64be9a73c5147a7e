"""Discrete p-energy minimization with Dirichlet data and p-continuation.

Fields are piecewise linear on the Kuhn (Freudenthal) triangulation of the
lattice: every cell is split into n! simplices, one per ordering of the
axes, and the frame is frozen at each simplex barycentre. The horizontal
gradient is then constant per simplex and the discrete energy is

    E_p(u) = sum_simplices vol * |X u|^p.

For the Euclidean frame at p = 2 this is the 5-point (2d) or 7-point (3d)
Laplacian energy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels
from .calculus import fd_jets
from .frames import Frame
from .grid import GridField
from .operators import infinity_laplacian_batch
from .variational import MaxMinReport, compare_interior_boundary


class PSolveError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# triangulation


@dataclass(frozen=True)
class KuhnMesh:
    shape: tuple[int, ...]
    spacing: np.ndarray
    corners: np.ndarray      # (ncells,) flat index of each cell's lowest node
    offsets: np.ndarray      # (n!, n+1) flat offsets of the simplex vertices
    perm_axes: np.ndarray    # (n!, n) axis crossed between consecutive vertices
    barycentres: np.ndarray  # (n!, ncells, n)

    @property
    def simplex_volume(self) -> float:
        return float(np.prod(self.spacing)) / math.factorial(len(self.shape))

    def vertices(self) -> np.ndarray:
        """Flat node indices of every simplex, shape ``(n!, ncells, n+1)``."""
        return self.corners[None, :, None] + self.offsets[:, None, :]


def kuhn_mesh(field: GridField) -> KuhnMesh:
    shape = field.shape
    n = field.n
    strides = np.array([int(np.prod(shape[a + 1:])) for a in range(n)], dtype=np.int64)
    cell_idx = np.stack(np.meshgrid(*[np.arange(s - 1) for s in shape], indexing="ij"), -1).reshape(-1, n)
    corners = (cell_idx @ strides).astype(np.int64)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    offsets = np.zeros((len(perms), n + 1), dtype=np.int64)
    centre_off = np.zeros((len(perms), n))
    for q, perm in enumerate(perms):
        pos = np.zeros(n)
        acc = pos.copy()
        for k, ax in enumerate(perm):
            offsets[q, k + 1] = offsets[q, k] + strides[ax]
            pos[ax] += 1
            acc += pos
        centre_off[q] = acc / (n + 1)
    h = field.spacing
    base = field.lo + cell_idx * h
    bary = base[None, :, :] + centre_off[:, None, :] * h
    return KuhnMesh(tuple(shape), h, corners, offsets, perms, bary)


def _frame_at_simplices(mesh: KuhnMesh, frame: Frame) -> np.ndarray:
    return np.ascontiguousarray(frame(mesh.barycentres))  # (n!, ncells, m, n)


def _grad_operators(mesh: KuhnMesh, F: np.ndarray) -> np.ndarray:
    """``D[q, c] = F B`` with ``B`` mapping vertex values to the Euclidean gradient; ``(n!, ncells, m, n+1)``."""
    nperm, n = mesh.perm_axes.shape
    B = np.zeros((nperm, n, n + 1))
    for q in range(nperm):
        for k, ax in enumerate(mesh.perm_axes[q]):
            B[q, ax, k + 1] += 1.0 / mesh.spacing[ax]
            B[q, ax, k] -= 1.0 / mesh.spacing[ax]
    return np.einsum("qcmn,qnv->qcmv", F, B)


# ---------------------------------------------------------------------------
# energy


class _Problem:
    """Energy evaluation for one (lattice, frame, p) with the frozen nodes held fixed."""

    def __init__(self, field: GridField, frame: Frame, backend: str | None = None):
        if frame.n != field.n:
            raise PSolveError(f"frame acts on R^{frame.n}, lattice lives in R^{field.n}")
        if any(s < 3 for s in field.shape):
            raise PSolveError("lattice needs at least 3 nodes per axis")
        self.field = field
        self.frame = frame
        self.mesh = kuhn_mesh(field)
        self.F = _frame_at_simplices(self.mesh, frame)
        self.kern = kernels.get_backend(backend)
        self.free = ~field.dirichlet_mask.reshape(-1)
        self.template = field.values.reshape(-1, field.N).copy()

    def scaled(self, u: np.ndarray, p: float):
        m = self.mesh
        return self.kern.simplex_energy(u, self.F, m.corners, m.offsets, m.perm_axes, m.spacing, p)

    def full(self, x: np.ndarray) -> np.ndarray:
        u = self.template.copy()
        u[self.free] = x.reshape(-1, self.field.N)
        return u

    def objective(self, x: np.ndarray, p: float):
        """``J = (E/|D|)^(1/p)`` and its gradient over free values, plus ``(smax, E~)``."""
        smax, et, gt = self.scaled(self.full(x), p)
        if smax == 0.0:
            return 0.0, np.zeros_like(x), (0.0, 0.0)
        J = smax * (et / self.field.volume) ** (1.0 / p)
        grad = J * gt[self.free].reshape(-1) / (p * smax * smax * et)
        return J, grad, (smax, et)


def discrete_p_energy(field: GridField, frame: Frame, p: float, backend: str | None = None) -> float:
    """Sum over Kuhn simplices of ``vol * |Xu|^p`` for the piecewise-linear interpolant."""
    if p < 2:
        raise PSolveError(f"p must be >= 2, got {p}")
    smax, et, _ = _Problem(field, frame, backend).scaled(field.values.reshape(-1, field.N), p)
    return float(smax ** p * et) if smax > 0 else 0.0


def simplex_gradient_norms(field: GridField, frame: Frame) -> np.ndarray:
    """``|Xu|`` on every simplex, shape ``(n!, ncells)``."""
    prob = _Problem(field, frame, "python")
    D = _grad_operators(prob.mesh, prob.F)
    verts = field.values.reshape(-1, field.N)[prob.mesh.vertices()]     # (q, c, v, N)
    H = np.einsum("qcmv,qcva->qcam", D, verts)
    return np.sqrt(np.sum(H * H, axis=(-2, -1)))


# ---------------------------------------------------------------------------
# Hessian model used as the L-BFGS preconditioner and by the p = 2 direct solve


def _assemble(prob: _Problem, u: np.ndarray, p: float, reg: float = 1e-6) -> sp.csc_matrix:
    """Second-derivative model of the scaled energy at ``u`` over free values (SPD)."""
    mesh, N = prob.mesh, prob.field.N
    D = _grad_operators(mesh, prob.F)                                   # (q, c, m, v)
    verts = mesh.vertices()
    vol = mesh.simplex_volume
    nv = D.shape[-1]
    K = vol * np.einsum("qcmv,qcmw->qcvw", D, D)                        # p = 2 stiffness blocks
    eye = np.eye(N)
    local = np.einsum("qcvw,ab->qcvawb", K, eye)
    if p != 2:
        H = np.einsum("qcmv,qcva->qcam", D, u[verts])
        s2 = np.sum(H * H, axis=(-2, -1))
        smax2 = s2.max()
        if smax2 > 0:
            r2 = s2 / smax2
            w = p * r2 ** ((p - 2) / 2)
            unit = np.where(s2[..., None, None] > 0, H / np.sqrt(np.where(s2 > 0, s2, 1))[..., None, None], 0)
            proj = np.einsum("qcam,qcmv->qcav", unit, D)                 # hat(H)_a . D_v
            rank1 = vol * (p - 2) * np.einsum("qcav,qcbw->qcvawb", proj, proj)
            local = (w[..., None, None, None, None] * (local + rank1)
                     + reg * p * local)
    else:
        local = 2 * local
    dof = (verts[..., :, None] * N + np.arange(N)).reshape(verts.shape[:2] + (nv * N,))
    rows = np.broadcast_to(dof[..., :, None], dof.shape + (nv * N,)).reshape(-1)
    cols = np.broadcast_to(dof[..., None, :], dof.shape + (nv * N,)).reshape(-1)
    vals = local.reshape(dof.shape[:2] + (nv * N, nv * N)).reshape(-1)
    total = prob.template.size
    A = sp.coo_matrix((vals, (rows, cols)), shape=(total, total)).tocsr()
    free = np.repeat(prob.free, N)
    return A[free][:, free].tocsc(), A[free][:, ~free].tocsc()


def p2_direct_solve(field: GridField, frame: Frame) -> GridField:
    """Exact minimizer of the discrete p = 2 energy by one sparse linear solve."""
    prob = _Problem(field, frame, "python")
    u = prob.template
    A_ff, A_fb = _assemble(prob, u, 2.0)
    ub = u[~prob.free].reshape(-1)
    x = splu(A_ff).solve(-(A_fb @ ub))
    return field.with_values(prob.full(x))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class MinimizeOptions:
    gtol: float = 1e-8
    max_iter: int = 3000
    memory: int = 12
    refresh: int = 25
    precondition: bool = True
    backend: str | None = None


@dataclass
class MinimizeResult:
    field: GridField
    p: float
    energy: float
    objective: float
    smax: float
    iterations: int
    evaluations: int
    stationarity: float
    converged: bool
    message: str
    history: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"p": self.p, "energy": self.energy, "objective": self.objective,
                "sup_norm": self.smax, "iterations": self.iterations,
                "evaluations": self.evaluations, "stationarity": self.stationarity,
                "converged": self.converged, "message": self.message}


def minimize_p(field0: GridField, frame: Frame, p: float, opts: MinimizeOptions | None = None) -> MinimizeResult:
    """Minimize ``(E_p/|D|)^(1/p)`` over the free nodes with preconditioned L-BFGS.

    The initial inverse Hessian is the inverse of a sparse Hessian model of
    the energy, rebuilt every ``opts.refresh`` iterations. Steps use Armijo
    backtracking and are accepted only if the objective does not increase.
    Convergence is declared when ``|D| max|grad J| / node_volume < gtol``,
    a residual of the Euler-Lagrange equation relative to ``J^(p-1)``.
    """
    opts = opts or MinimizeOptions()
    if not np.isfinite(p) or p < 2:
        raise PSolveError(f"p must be finite and >= 2, got {p}")
    prob = _Problem(field0, frame, opts.backend)
    node_vol = float(np.prod(field0.spacing))
    scale = field0.volume / node_vol
    x = prob.template[prob.free].reshape(-1).copy()
    if x.size == 0:
        raise PSolveError("no free nodes to optimize")
    f, g, (smax, et) = prob.objective(x, p)
    if not np.isfinite(f):
        raise PSolveError("non-finite energy at the starting field")
    evals = 1
    S, Y = [], []
    precond = None
    h0_scale = 1.0
    history = [f]
    message = "max_iter reached"
    converged = False
    it = 0
    eps = np.finfo(float).eps

    def apply_h0(v):
        if precond is None:
            return v
        return precond.solve(v)

    for it in range(opts.max_iter + 1):
        stat = scale * float(np.max(np.abs(g)))
        if stat < opts.gtol or f == 0.0:
            converged, message = True, "gradient tolerance reached"
            break
        if it == opts.max_iter:
            break
        if opts.precondition and (precond is None or it % opts.refresh == 0):
            A_ff, _ = _assemble(prob, prob.full(x), p)
            try:
                precond = splu(A_ff)
            except RuntimeError:
                precond = None
            h0_scale = (p * smax * smax * et / f) if f > 0 else 1.0
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s_k, y_k in reversed(list(zip(S, Y))):
            rho = 1.0 / (y_k @ s_k)
            a = rho * (s_k @ q)
            alphas.append((a, rho))
            q -= a * y_k
        if S:
            hy = apply_h0(Y[-1])
            gamma = (S[-1] @ Y[-1]) / (Y[-1] @ hy)
        else:
            gamma = h0_scale if (opts.precondition and precond is not None) else 1.0 / max(np.max(np.abs(g)), 1e-300)
        r = gamma * apply_h0(q)
        for (a, rho), s_k, y_k in zip(reversed(alphas), S, Y):
            b = rho * (y_k @ r)
            r += (a - b) * s_k
        d = -r
        gd = float(g @ d)
        if not gd < 0:
            S, Y = [], []
            d = -(h0_scale * apply_h0(g) if precond is not None else g)
            gd = float(g @ d)
        step = 1.0
        accepted = False
        for _ in range(60):
            xn = x + step * d
            fn, gn, sm = prob.objective(xn, p)
            evals += 1
            if np.isfinite(fn) and fn <= f and fn <= f + 1e-4 * step * gd + 4 * eps * abs(f):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if S:
                S, Y = [], []
                continue
            message = "line search failed"
            break
        s_vec, y_vec = xn - x, gn - g
        if s_vec @ y_vec > 1e-14 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            S.append(s_vec)
            Y.append(y_vec)
            if len(S) > opts.memory:
                S.pop(0)
                Y.pop(0)
        x, f, g, (smax, et) = xn, fn, gn, sm
        history.append(f)
    if not np.isfinite(f):
        raise PSolveError("non-finite energy encountered")
    out = field0.with_values(prob.full(x))
    energy = float(smax ** p * et) if smax > 0 else 0.0
    return MinimizeResult(out, p, energy, f, smax, it, evals, stat, converged, message, history)


# ---------------------------------------------------------------------------
# residuals, continuation and the discrete max principle


def infinity_residual(field: GridField, frame: Frame) -> np.ndarray:
    """``|Delta_inf u|`` at the inner lattice nodes from central-difference jets."""
    _, g, h = fd_jets(field)
    pts = field.coords()[tuple(slice(1, s - 1) for s in field.shape)]
    total, _, _ = infinity_laplacian_batch(g, h, frame(pts), frame.derivative(pts))
    return np.linalg.norm(total, axis=-1)


@dataclass
class ContinuationResult:
    schedule: list
    fields: list
    energies: list
    sup_norms: list
    normalized_energies: list
    residuals: list
    stages: list
    failure: str | None = None

    def as_dict(self) -> dict:
        return {"schedule": self.schedule, "energies": self.energies,
                "sup_norms": self.sup_norms, "normalized_energies": self.normalized_energies,
                "residuals": self.residuals, "stages": [s.as_dict() for s in self.stages],
                "failure": self.failure}


def p_continuation(field0: GridField, frame: Frame, schedule, opts: MinimizeOptions | None = None,
                   gtols=None) -> ContinuationResult:
    """Minimize for each p of an increasing schedule, warm-starting from the previous stage."""
    schedule = [float(p) for p in schedule]
    if not schedule or schedule[0] != 2 or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise PSolveError("schedule must start at p = 2 and increase strictly")
    opts = opts or MinimizeOptions()
    res = ContinuationResult(schedule, [], [], [], [], [], [])
    current = field0
    for k, p in enumerate(schedule):
        stage_opts = opts if gtols is None else MinimizeOptions(**{**opts.__dict__, "gtol": gtols[k]})
        try:
            out = minimize_p(current, frame, p, stage_opts)
        except PSolveError as exc:
            res.failure = f"p={p:g}: {exc}"
            break
        res.stages.append(out)
        res.fields.append(out.field)
        res.energies.append(out.energy)
        res.sup_norms.append(out.smax)
        res.normalized_energies.append(out.objective)
        res.residuals.append(float(np.max(infinity_residual(out.field, frame))))
        current = out.field
        if not out.converged:
            res.failure = f"p={p:g}: {out.message}"
    return res


def nodal_horizontal_norms(field: GridField, frame: Frame) -> np.ndarray:
    """``|Xu|`` at every node from second-order differences (one-sided on the faces)."""
    h = field.spacing
    grads = []
    for a in range(field.N):
        comp = field.values[..., a]
        grads.append(np.stack(np.gradient(comp, *h, edge_order=2), axis=-1))
    egrad = np.stack(grads, axis=-2)                                      # (..., N, n)
    H = np.einsum("...an,...in->...ai", egrad, frame(field.coords()))
    return np.sqrt(np.sum(H * H, axis=(-2, -1)))


def field_max_principle(field: GridField, frame: Frame, tol: float = 1e-10) -> MaxMinReport:
    """Interior sup/inf of the discrete ``|Xu|`` against its max/min on the lattice faces."""
    if any(s < 3 for s in field.shape):
        raise PSolveError("field needs an interior node")
    s = nodal_horizontal_norms(field, frame)
    face = GridField.boundary_mask(field.shape)
    return compare_interior_boundary(s[~face], s[face], tol)
