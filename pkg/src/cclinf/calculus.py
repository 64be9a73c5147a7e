"""Second-order jets of maps and horizontal derivatives along a frame."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .frames import RANK_RTOL
from .grid import GridField


class JetError(ValueError):
    pass


class SingularPointError(JetError):
    """Raised when a built-in map is evaluated where its Hessian does not exist."""


@dataclass(frozen=True)
class Jet2:
    """Value ``(N,)``, Euclidean gradient ``(N, n)`` and Hessian ``(N, n, n)`` at a point."""

    value: np.ndarray
    egrad: np.ndarray
    ehess: np.ndarray

    @property
    def N(self) -> int:
        return self.egrad.shape[0]

    @property
    def n(self) -> int:
        return self.egrad.shape[1]


@dataclass(frozen=True)
class HorizontalGradient:
    mat: np.ndarray          # (N, m), mat[a, i] = X_i u_a
    normsq: float
    rank: int
    singular_values: np.ndarray
    left_vectors: np.ndarray  # (N, N) columns are left singular vectors


@dataclass(frozen=True)
class SecondHorizontal:
    tensor: np.ndarray  # (N, m, m), tensor[a, i, j] = X_i X_j u_a


def horizontal_gradient(jet: Jet2, F: np.ndarray, rtol: float = RANK_RTOL) -> HorizontalGradient:
    F = np.asarray(F, dtype=float)
    if F.shape[1] != jet.n:
        raise JetError(f"frame matrix {F.shape} does not act on R^{jet.n}")
    mat = jet.egrad @ F.T
    U, s, _ = np.linalg.svd(mat, full_matrices=True)
    rank = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    return HorizontalGradient(mat=mat, normsq=float(np.sum(mat * mat)), rank=rank,
                              singular_values=s, left_vectors=U)


def second_horizontal(jet: Jet2, F: np.ndarray, dF: np.ndarray) -> SecondHorizontal:
    """``X_i X_j u_a = X_iA (D_A X_jB) D_B u_a + X_iA X_jB D_A D_B u_a``."""
    F = np.asarray(F, dtype=float)
    dF = np.asarray(dF, dtype=float)
    if F.shape[1] != jet.n or dF.shape != F.shape + (jet.n,):
        raise JetError("frame data does not match the jet dimension")
    first = np.einsum("ia,jba,nb->nij", F, dF, jet.egrad)
    second = np.einsum("ia,jb,nab->nij", F, F, jet.ehess)
    return SecondHorizontal(tensor=first + second)


# ---------------------------------------------------------------------------
# analytic maps


JetFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class AnalyticMap:
    """A closed-form map with vectorized value/gradient/Hessian.

    ``fn`` takes points of shape ``(..., n)`` and returns arrays of shape
    ``(..., N)``, ``(..., N, n)`` and ``(..., N, n, n)``.
    """

    name: str
    n: int
    N: int
    fn: JetFn

    def jets(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.n,):
            raise JetError(f"map {self.name!r} lives on R^{self.n}, got points of shape {x.shape}")
        return self.fn(x)

    def jet(self, x) -> Jet2:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise JetError(f"map {self.name!r} needs a single point of R^{self.n}, got shape {x.shape}")
        v, g, h = self.jets(x)
        return Jet2(value=v, egrad=g, ehess=h)

    def __call__(self, x) -> np.ndarray:
        return self.jets(x)[0]

    def grad(self, x) -> np.ndarray:
        return self.jets(x)[1]


def _zeros(x, *dims):
    return np.zeros(x.shape[:-1] + dims)


def _trig_map(x):
    """u(x, y) = e^{ix} - e^{iy} as the map (cos x - cos y, sin x - sin y)."""
    a, b = x[..., 0], x[..., 1]
    ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
    v = np.stack([ca - cb, sa - sb], axis=-1)
    g = _zeros(x, 2, 2)
    g[..., 0, 0], g[..., 0, 1] = -sa, sb
    g[..., 1, 0], g[..., 1, 1] = ca, -cb
    h = _zeros(x, 2, 2, 2)
    h[..., 0, 0, 0], h[..., 0, 1, 1] = -ca, cb
    h[..., 1, 0, 0], h[..., 1, 1, 1] = -sa, sb
    return v, g, h


def _signed_pow(t, q):
    return np.sign(t) * np.abs(t) ** q


def _aronsson(x):
    """x^{4/3} - y^{4/3} with the signed power convention sign(t)|t|^{4/3}."""
    a, b = x[..., 0], x[..., 1]
    if np.any(a == 0) or np.any(b == 0):
        raise SingularPointError("the Aronsson map has no Hessian on the coordinate axes")
    v = (_signed_pow(a, 4 / 3) - _signed_pow(b, 4 / 3))[..., None]
    g = _zeros(x, 1, 2)
    g[..., 0, 0] = 4 / 3 * np.cbrt(a)
    g[..., 0, 1] = -4 / 3 * np.cbrt(b)
    h = _zeros(x, 1, 2, 2)
    h[..., 0, 0, 0] = 4 / 9 / np.cbrt(a) ** 2
    h[..., 0, 1, 1] = -4 / 9 / np.cbrt(b) ** 2
    return v, g, h


def _affine(A, b):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)

    def fn(x):
        v = np.einsum("na,...a->...n", A, x) + b
        g = np.broadcast_to(A, x.shape[:-1] + A.shape).copy()
        return v, g, _zeros(x, *A.shape, A.shape[1])

    return fn


def _square(k):
    def fn(x):
        t = x[..., k]
        g = _zeros(x, 1, x.shape[-1])
        g[..., 0, k] = 2 * t
        h = _zeros(x, 1, x.shape[-1], x.shape[-1])
        h[..., 0, k, k] = 2.0
        return (t * t)[..., None], g, h
    return fn


def _sumsq(x):
    n = x.shape[-1]
    h = np.broadcast_to(2 * np.eye(n), x.shape[:-1] + (n, n))[..., None, :, :].copy()
    return np.sum(x * x, axis=-1)[..., None], 2 * x[..., None, :], h


def _saddle(x):
    a, b = x[..., 0], x[..., 1]
    g = _zeros(x, 1, x.shape[-1])
    g[..., 0, 0], g[..., 0, 1] = 2 * a, -2 * b
    h = _zeros(x, 1, x.shape[-1], x.shape[-1])
    h[..., 0, 0, 0], h[..., 0, 1, 1] = 2.0, -2.0
    return (a * a - b * b)[..., None], g, h


def _gauss(x):
    """exp(-x_0^2)."""
    a = x[..., 0]
    e = np.exp(-a * a)
    g = _zeros(x, 1, x.shape[-1])
    g[..., 0, 0] = -2 * a * e
    h = _zeros(x, 1, x.shape[-1], x.shape[-1])
    h[..., 0, 0, 0] = (4 * a * a - 2) * e
    return e[..., None], g, h


def _radial_gauss(x):
    """exp(-|x|^2)."""
    e = np.exp(-np.sum(x * x, axis=-1))
    g = -2 * x * e[..., None]
    n = x.shape[-1]
    h = (4 * x[..., :, None] * x[..., None, :] - 2 * np.eye(n)) * e[..., None, None]
    return e[..., None], g[..., None, :], h[..., None, :, :]


def _graph_square(x):
    """(x, y, x^2): a horizontal immersion of the plane into R^3 with nonzero mean curvature."""
    a, b = x[..., 0], x[..., 1]
    v = np.stack([a, b, a * a], axis=-1)
    g = _zeros(x, 3, 2)
    g[..., 0, 0] = g[..., 1, 1] = 1.0
    g[..., 2, 0] = 2 * a
    h = _zeros(x, 3, 2, 2)
    h[..., 2, 0, 0] = 2.0
    return v, g, h


def _wave(x):
    """sin(x_0 + 2 x_1) + cos(x_{n-1}) + x_0 x_{n-1}."""
    n = x.shape[-1]
    a, b, c = x[..., 0], x[..., 1], x[..., n - 1]
    s, co = np.sin(a + 2 * b), np.cos(a + 2 * b)
    v = s + np.cos(c) + a * c
    w = np.array([1.0, 2.0] + [0.0] * (n - 2))
    g = co[..., None] * w
    g[..., 0] += c
    g[..., n - 1] += -np.sin(c) + a
    h = -s[..., None, None] * np.outer(w, w)
    h[..., n - 1, n - 1] += -np.cos(c)
    h[..., 0, n - 1] += 1.0
    h[..., n - 1, 0] += 1.0
    return v[..., None], g[..., None, :], h[..., None, :, :]


def _cubic(x):
    """x_0^3 - 3 x_0 x_1^2 + x_0 x_1 x_2 (n >= 3)."""
    a, b, c = x[..., 0], x[..., 1], x[..., 2]
    v = a**3 - 3 * a * b * b + a * b * c
    g = _zeros(x, x.shape[-1])
    g[..., 0] = 3 * a * a - 3 * b * b + b * c
    g[..., 1] = -6 * a * b + a * c
    g[..., 2] = a * b
    h = _zeros(x, x.shape[-1], x.shape[-1])
    h[..., 0, 0] = 6 * a
    h[..., 0, 1] = h[..., 1, 0] = -6 * b + c
    h[..., 0, 2] = h[..., 2, 0] = b
    h[..., 1, 1] = -6 * a
    h[..., 1, 2] = h[..., 2, 1] = a
    return v[..., None], g[..., None, :], h[..., None, :, :]


def _expmix(x):
    """exp(x_0 - x_2 / 2) + x_1^2 x_2 (n >= 3)."""
    a, b, c = x[..., 0], x[..., 1], x[..., 2]
    e = np.exp(a - c / 2)
    v = e + b * b * c
    g = _zeros(x, x.shape[-1])
    g[..., 0] = e
    g[..., 1] = 2 * b * c
    g[..., 2] = -e / 2 + b * b
    h = _zeros(x, x.shape[-1], x.shape[-1])
    h[..., 0, 0] = e
    h[..., 0, 2] = h[..., 2, 0] = -e / 2
    h[..., 2, 2] = e / 4
    h[..., 1, 1] = 2 * c
    h[..., 1, 2] = h[..., 2, 1] = 2 * b
    return v[..., None], g[..., None, :], h[..., None, :, :]


_REGISTRY: dict[str, AnalyticMap] = {}


def register_map(name: str, n: int, N: int, fn: JetFn) -> AnalyticMap:
    """Register a closure-defined map under ``name`` for lookup by :func:`get_map`."""
    amap = AnalyticMap(name=name, n=n, N=N, fn=fn)
    _REGISTRY[name] = amap
    return amap


register_map("paper_exp", 2, 2, _trig_map)
register_map("aronsson", 2, 1, _aronsson)
register_map("saddle", 2, 1, _saddle)
register_map("graph_square", 2, 3, _graph_square)


def _parse_matrix(text: str) -> np.ndarray:
    return np.array([[float(t) for t in row.split(",")] for row in text.split(";")])


def get_map(map_id: str, n: int | None = None) -> AnalyticMap:
    """Resolve a map name.

    Names: ``paper_exp``, ``aronsson``, ``saddle``, ``graph_square``,
    ``coord:k`` (u = x_k, 0-based), ``square:k`` (u = x_k^2), ``sumsq``,
    ``gauss``, ``rgauss``, ``wave``, ``cubic``, ``expmix`` and
    ``affine:a11,a12;a21,a22[+b1,b2]`` (rows separated by ``;``). The
    dimension-generic maps take their dimension from ``n``.
    """
    if map_id in _REGISTRY:
        return _REGISTRY[map_id]
    kind, _, arg = map_id.partition(":")
    if kind == "affine":
        mat, _, off = arg.partition("+")
        A = _parse_matrix(mat)
        b = np.array([float(t) for t in off.split(",")]) if off else None
        if b is not None and b.shape != (A.shape[0],):
            raise JetError(f"offset length does not match rows in {map_id!r}")
        return AnalyticMap(map_id, A.shape[1], A.shape[0], _affine(A, b))
    dim = 2 if n is None else n
    if kind == "coord":
        k = int(arg)
        if not 0 <= k < dim:
            raise JetError(f"coordinate index {k} out of range for n={dim}")
        return AnalyticMap(map_id, dim, 1, _affine(np.eye(dim)[k:k + 1], None))
    if kind == "square":
        k = int(arg)
        if not 0 <= k < dim:
            raise JetError(f"coordinate index {k} out of range for n={dim}")
        return AnalyticMap(map_id, dim, 1, _square(k))
    generic = {"sumsq": (_sumsq, 1), "gauss": (_gauss, 1), "rgauss": (_radial_gauss, 1), "wave": (_wave, 2),
               "cubic": (_cubic, 3), "expmix": (_expmix, 3)}
    if kind in generic:
        fn, nmin = generic[kind]
        if dim < nmin:
            raise JetError(f"map {kind!r} needs n >= {nmin}")
        return AnalyticMap(map_id, dim, 1, fn)
    raise JetError(f"unknown map {map_id!r}")


def analytic_jet(map_id, x) -> Jet2:
    x = np.asarray(x, dtype=float)
    amap = map_id if isinstance(map_id, AnalyticMap) else get_map(map_id, n=x.shape[-1])
    return amap.jet(x)


# ---------------------------------------------------------------------------
# finite-difference jets


def fd_jets(field: GridField):
    """Central-difference gradients and Hessians at every node one cell away from the boundary.

    Returns ``(value, egrad, ehess)`` arrays over the inner lattice
    ``shape - 2`` (node ``k`` of the output is lattice node ``k + 1``).
    """
    u = field.values
    n, h = field.n, field.spacing
    if any(s < 3 for s in field.shape):
        raise JetError("fd jets need at least 3 nodes per axis")

    def sl(offsets):
        return tuple(slice(1 + o, s - 1 + o) for o, s in zip(offsets, field.shape))

    centre = u[sl([0] * n)]
    grad = np.empty(centre.shape + (n,))
    hess = np.empty(centre.shape + (n, n))
    for a in range(n):
        e = [0] * n
        e[a] = 1
        up, dn = u[sl(e)], u[sl([-t for t in e])]
        grad[..., a] = (up - dn) / (2 * h[a])
        hess[..., a, a] = (up - 2 * centre + dn) / h[a] ** 2
        for b in range(a + 1, n):
            def at(sa, sb):
                off = [0] * n
                off[a], off[b] = sa, sb
                return u[sl(off)]
            mixed = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h[a] * h[b])
            hess[..., a, b] = hess[..., b, a] = mixed
    return centre, grad, hess


def fd_jet(field: GridField, index) -> Jet2:
    """Central second-order jet at a lattice node at least one cell from the boundary."""
    index = tuple(int(i) for i in index)
    if len(index) != field.n:
        raise JetError("index dimension does not match the lattice")
    if any(i < 1 or i > s - 2 for i, s in zip(index, field.shape)):
        raise JetError(f"index {index} is too close to the lattice boundary (central stencils need a one-cell margin)")
    u, h, n = field.values, field.spacing, field.n
    idx = np.array(index)

    def at(off):
        return u[tuple(idx + off)]

    grad = np.empty((field.N, n))
    hess = np.empty((field.N, n, n))
    c = at(np.zeros(n, int))
    for a in range(n):
        e = np.zeros(n, int)
        e[a] = 1
        grad[:, a] = (at(e) - at(-e)) / (2 * h[a])
        hess[:, a, a] = (at(e) - 2 * c + at(-e)) / h[a] ** 2
        for b in range(a + 1, n):
            f = np.zeros(n, int)
            f[b] = 1
            mixed = (at(e + f) - at(e - f) - at(f - e) + at(-e - f)) / (4 * h[a] * h[b])
            hess[:, a, b] = hess[:, b, a] = mixed
    return Jet2(value=c.copy(), egrad=grad, ehess=hess)
