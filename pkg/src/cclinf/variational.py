"""Sup- and p-energies on boxes, admissible variations and the max-min principle.

Energies are evaluated on a box lattice: ``samples`` are the interior
nodes and ``boundary_samples`` the nodes on the faces. E_inf is the largest
value of ``|Xu|`` over both sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

from .calculus import AnalyticMap
from .frames import RANK_RTOL, Frame

AMPLITUDES = np.logspace(-3, -1, 5)


class VariationalError(ValueError):
    pass


@dataclass(frozen=True)
class Subdomain:
    """Axis-aligned box with a lattice of ``shape`` nodes (faces included)."""

    lo: np.ndarray
    hi: np.ndarray
    shape: tuple[int, ...]

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        shape = tuple(int(s) for s in np.broadcast_to(self.shape, lo.shape))
        if lo.ndim != 1 or hi.shape != lo.shape or np.any(hi <= lo):
            raise VariationalError("box must satisfy lo < hi componentwise")
        if any(s < 3 for s in shape):
            raise VariationalError("need at least 3 lattice nodes per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def box(cls, lo, hi, count: int = 21) -> "Subdomain":
        return cls(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float), (count,) * len(lo))

    @property
    def n(self) -> int:
        return self.lo.size

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.array(self.shape) - 1)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def lattice(self) -> np.ndarray:
        """All nodes, shape ``self.shape + (n,)``."""
        axes = [np.linspace(a, b, s) for a, b, s in zip(self.lo, self.hi, self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def face_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.n):
            sl = [slice(None)] * self.n
            for end in (0, -1):
                sl[ax] = end
                mask[tuple(sl)] = True
        return mask

    @property
    def samples(self) -> np.ndarray:
        return self.lattice()[~self.face_mask()]

    @property
    def boundary_samples(self) -> np.ndarray:
        return self.lattice()[self.face_mask()]

    def quadrature_weights(self) -> np.ndarray:
        """Tensor trapezoid weights over the lattice; they sum to the box volume."""
        w = np.ones(self.shape)
        for ax, (s, h) in enumerate(zip(self.shape, self.spacing)):
            wa = np.full(s, h)
            wa[[0, -1]] = h / 2
            w = w * wa.reshape([-1 if k == ax else 1 for k in range(self.n)])
        return w


def horizontal_matrices(umap: AnalyticMap, frame: Frame, pts: np.ndarray) -> np.ndarray:
    """``X_i u_a`` at stacked points, shape ``(..., N, m)``."""
    return np.einsum("...an,...in->...ai", umap.jets(pts)[1], frame(pts))


def _sup(H: np.ndarray) -> float:
    return float(np.sqrt(np.max(np.sum(H * H, axis=(-2, -1)))))


def sup_energy(umap: AnalyticMap, frame: Frame, D: Subdomain) -> float:
    """Largest ``|Xu|`` over all lattice nodes of ``D``."""
    return _sup(horizontal_matrices(umap, frame, D.lattice()))


def _p_energy_of(H: np.ndarray, D: Subdomain, p: float) -> float:
    s = np.sqrt(np.sum(H * H, axis=(-2, -1)))
    return float(np.sum(D.quadrature_weights() * s ** p))


def p_energy(umap: AnalyticMap, frame: Frame, D: Subdomain, p: float) -> float:
    """Trapezoid approximation of the integral of ``|Xu|^p`` over ``D``."""
    if p < 1:
        raise VariationalError(f"p must be >= 1, got {p}")
    return _p_energy_of(horizontal_matrices(umap, frame, D.lattice()), D, p)


def normalized_p_energy(umap: AnalyticMap, frame: Frame, D: Subdomain, p: float) -> float:
    """``(E_p / |D|)^(1/p)``, a power mean that never exceeds the sup-energy."""
    return (p_energy(umap, frame, D, p) / D.volume) ** (1.0 / p)


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class ScalarFunction:
    """A scalar test function with vectorized value and gradient."""

    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    def scaled(self, c: float) -> "ScalarFunction":
        return ScalarFunction(lambda x: c * self.value(x), lambda x: c * self.grad(x),
                              f"{c:g}*{self.label}")


def constant_function(c: float) -> ScalarFunction:
    return ScalarFunction(lambda x: np.full(np.shape(x)[:-1], float(c)),
                          lambda x: np.zeros(np.shape(x)), f"const({c:g})")


def make_bump(D: Subdomain, delta: float) -> ScalarFunction:
    """``delta * prod_a 4 (x_a - lo_a)(hi_a - x_a) / (hi_a - lo_a)^2``.

    Zero on every face, ``delta`` at the centre, critical point at the centre.
    """
    if delta <= 0:
        raise VariationalError("bump amplitude must be positive")
    lo, hi = D.lo, D.hi
    width2 = (hi - lo) ** 2

    def factors(x):
        return 4 * (x - lo) * (hi - x) / width2, 4 * (lo + hi - 2 * x) / width2

    def value(x):
        q, _ = factors(np.asarray(x, dtype=float))
        return delta * np.prod(q, axis=-1)

    def grad(x):
        q, dq = factors(np.asarray(x, dtype=float))
        out = np.empty(q.shape)
        for a in range(q.shape[-1]):
            others = np.prod(np.delete(q, a, axis=-1), axis=-1)
            out[..., a] = dq[..., a] * others
        return delta * out

    return ScalarFunction(value, grad, f"bump({delta:g})")


# ---------------------------------------------------------------------------
# variations


@dataclass(frozen=True)
class VariationReport:
    base_energy: float
    varied_energy: float
    margin: float
    variation_kind: str
    parameters: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"base_energy": self.base_energy, "varied_energy": self.varied_energy,
                "margin": self.margin, "variation_kind": self.variation_kind,
                "parameters": self.parameters}


def rank_one_test(umap: AnalyticMap, frame: Frame, D: Subdomain, g: ScalarFunction,
                  xi) -> VariationReport:
    """Compare ``E_inf(u)`` with ``E_inf(u + g xi)``; the varied gradient is ``Du + xi (x) Dg``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (umap.N,) or abs(np.linalg.norm(xi) - 1) > 1e-12:
        raise VariationalError("xi must be a unit vector in R^N")
    pts = D.lattice()
    _, eg, _ = umap.jets(pts)
    F = frame(pts)
    base = _sup(np.einsum("...an,...in->...ai", eg, F))
    varied_grad = eg + xi[:, None] * g.grad(pts)[..., None, :]
    varied = _sup(np.einsum("...an,...in->...ai", varied_grad, F))
    return VariationReport(base, varied, varied - base, "rank_one",
                           {"g": g.label, "xi": xi.tolist()})


def quasi_random_units(N: int, count: int, seed: int) -> np.ndarray:
    """``count`` unit vectors from a scrambled Halton sequence (signs alternate for N = 1)."""
    if N == 1:
        return np.array([[1.0 if k % 2 == 0 else -1.0] for k in range(count)])
    u = qmc.Halton(d=N, seed=seed).random(count)
    z = _normal.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def rank_one_draws(umap: AnalyticMap, frame: Frame, D: Subdomain, draws: int = 100,
                   seed: int = 0) -> list[VariationReport]:
    """Rank-one tests with bump amplitudes cycling through ``AMPLITUDES`` and quasi-random xi."""
    xis = quasi_random_units(umap.N, draws, seed)
    return [rank_one_test(umap, frame, D, make_bump(D, AMPLITUDES[k % AMPLITUDES.size]), xis[k])
            for k in range(draws)]


# ---------------------------------------------------------------------------
# vertical fields


def _bottom_projectors(H: np.ndarray, rank: int) -> np.ndarray:
    U = np.linalg.svd(H, full_matrices=True)[0]
    Ur = U[..., :rank]
    return np.eye(H.shape[-2]) - Ur @ np.swapaxes(Ur, -1, -2)


@dataclass
class VerticalField:
    """A unit field ``nu`` with ``nu . X_i u = 0``, continued over the lattice of ``D``.

    ``vectors[k]`` is the field at lattice node ``k`` (flattened ``D.shape``).
    Off the lattice the nearest node's vector is projected onto the nullspace
    of ``Xu^T`` and renormalized.
    """

    umap: AnalyticMap
    frame: Frame
    domain: Subdomain
    vectors: np.ndarray
    rank: int
    basis_index: int = 0

    def _reference(self, pts: np.ndarray) -> np.ndarray:
        D = self.domain
        idx = np.clip(np.rint((pts - D.lo) / D.spacing).astype(int), 0, np.array(D.shape) - 1)
        flat = np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), D.shape)
        return self.vectors[flat]

    def _project(self, pts: np.ndarray, ref: np.ndarray) -> np.ndarray:
        bot = _bottom_projectors(horizontal_matrices(self.umap, self.frame, pts), self.rank)
        v = np.einsum("...ab,...b->...a", bot, ref)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def eval(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        return self._project(pts, self._reference(pts))

    def __call__(self, x) -> np.ndarray:
        return self.eval(x)

    def horizontal_derivative(self, x) -> np.ndarray:
        """``X_i nu_a`` at stacked points, shape ``(..., N, m)``.

        Central differences with step half the lattice spacing; both stencil
        points project the reference vector of the centre point.
        """
        pts = np.asarray(x, dtype=float)
        ref = self._reference(pts)
        steps = self.domain.spacing / 2
        dnu = np.empty(pts.shape[:-1] + (self.umap.N, pts.shape[-1]))
        for a in range(pts.shape[-1]):
            e = np.zeros(pts.shape[-1])
            e[a] = steps[a]
            dnu[..., a] = (self._project(pts + e, ref) - self._project(pts - e, ref)) / (2 * steps[a])
        return np.einsum("...an,...in->...ai", dnu, self.frame(pts))


def vertical_field(umap: AnalyticMap, frame: Frame, D: Subdomain, basis_index: int = 0,
                   tol: float = RANK_RTOL, collapse: float = 1e-6) -> VerticalField:
    """Continue the ``basis_index``-th nullspace direction of ``Xu^T`` over the lattice of ``D``.

    Nodes are visited in lexicographic order. The first node takes a left
    singular vector; every other node projects the vector of its parent
    (the node one step back along the last axis with a positive index) and
    renormalizes.
    """
    pts = D.lattice().reshape(-1, D.n)
    H = horizontal_matrices(umap, frame, pts)
    U, s, _ = np.linalg.svd(H, full_matrices=True)
    smax = s[:, :1] if s.shape[1] else np.zeros((len(pts), 1))
    ranks = np.sum(s > tol * np.where(smax > 0, smax, np.inf), axis=1)
    if np.any(ranks != ranks[0]):
        raise VariationalError(f"rank of Xu varies over the domain ({ranks.min()}..{ranks.max()}); "
                               "no continuous vertical field is guaranteed")
    rank = int(ranks[0])
    kdim = umap.N - rank
    if kdim == 0:
        raise VariationalError("no vertical directions: Xu has full rank N on the domain")
    if not 0 <= basis_index < kdim:
        raise VariationalError(f"basis_index must lie in [0, {kdim})")
    Ur = U[:, :, :rank]
    bot = np.eye(umap.N) - Ur @ np.swapaxes(Ur, 1, 2)

    vectors = np.empty((len(pts), umap.N))
    vectors[0] = U[0, :, rank + basis_index]
    shape = D.shape
    for flat in range(1, len(pts)):
        idx = np.array(np.unravel_index(flat, shape))
        a = int(np.nonzero(idx)[0][-1])
        idx[a] -= 1
        parent = int(np.ravel_multi_index(tuple(idx), shape))
        v = bot[flat] @ vectors[parent]
        nv = np.linalg.norm(v)
        if nv < collapse:
            raise VariationalError(f"vertical field collapsed at {pts[flat].tolist()} (|bot nu| = {nv:.2e})")
        vectors[flat] = v / nv
    return VerticalField(umap, frame, D, vectors, rank, basis_index)


def _vertical_matrices(umap, frame, D, h: ScalarFunction, nu: VerticalField, t: float = 1.0):
    pts = D.lattice()
    base = horizontal_matrices(umap, frame, pts)
    F = frame(pts)
    nuv = nu.eval(pts)
    Xh = np.einsum("...n,...in->...i", h.grad(pts), F)
    var = nuv[..., :, None] * Xh[..., None, :] + h(pts)[..., None, None] * nu.horizontal_derivative(pts)
    return base, base + t * var


def vertical_test(umap: AnalyticMap, frame: Frame, D: Subdomain, h: ScalarFunction,
                  nu: VerticalField) -> VariationReport:
    """Compare ``E_inf(u)`` with ``E_inf(u + h nu)`` using ``X(u + h nu) = Xu + nu (x) Xh + h X nu``."""
    base, varied = _vertical_matrices(umap, frame, D, h, nu)
    b, v = _sup(base), _sup(varied)
    return VariationReport(b, v, v - b, "vertical", {"h": h.label, "basis_index": nu.basis_index})


def vertical_draws(umap: AnalyticMap, frame: Frame, D: Subdomain, nu: VerticalField,
                   draws: int = 20, seed: int = 0) -> list[VariationReport]:
    """Vertical tests alternating constant and bump ``h`` with quasi-random signed amplitudes."""
    signs = quasi_random_units(1, draws, seed)[:, 0]
    amps = 10 ** (-3 + 2 * qmc.Halton(d=1, seed=seed).random(draws)[:, 0])
    out = []
    for k in range(draws):
        c = float(signs[k] * amps[k])
        h = constant_function(c) if k % 2 == 0 else make_bump(D, abs(c)).scaled(np.sign(c))
        out.append(vertical_test(umap, frame, D, h, nu))
    return out


def vertical_energy_profile(umap: AnalyticMap, frame: Frame, D: Subdomain, h: ScalarFunction,
                            nu: VerticalField, p: float, ts) -> np.ndarray:
    """``E_p(u + t h nu, D)`` for each ``t`` in ``ts``."""
    out = []
    for t in np.asarray(ts, dtype=float):
        _, varied = _vertical_matrices(umap, frame, D, h, nu, t)
        out.append(_p_energy_of(varied, D, p))
    return np.array(out)


def midpoint_convexity_defect(values) -> float:
    """Most negative second difference ``f(t-) + f(t+) - 2 f(t)`` (0 if convex)."""
    v = np.asarray(values, dtype=float)
    return float(min(0.0, np.min(v[:-2] + v[2:] - 2 * v[1:-1])))


# ---------------------------------------------------------------------------
# max-min principle


@dataclass(frozen=True)
class MaxMinReport:
    sup_int: float
    max_bdry: float
    min_int: float
    min_bdry: float
    tol: float
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def compare_interior_boundary(norms_int: np.ndarray, norms_bdry: np.ndarray, tol: float) -> MaxMinReport:
    si, mb = float(np.max(norms_int)), float(np.max(norms_bdry))
    ii, nb = float(np.min(norms_int)), float(np.min(norms_bdry))
    return MaxMinReport(si, mb, ii, nb, tol, passed=bool(si <= mb + tol and ii >= nb - tol))


def max_principle_check(umap: AnalyticMap, frame: Frame, D: Subdomain, tol: float = 1e-10) -> MaxMinReport:
    """Interior sup/inf of ``|Xu|`` against its boundary max/min."""
    H = horizontal_matrices(umap, frame, D.lattice())
    s = np.sqrt(np.sum(H * H, axis=(-2, -1)))
    face = D.face_mask()
    return compare_interior_boundary(s[~face], s[face], tol)
