"""Vector-field frames on domains of R^n.

A frame is a family of ``m`` vector fields ``X_i = X_iA(x) d/dx_A``. Coefficients
are stored as callables that accept stacked points of shape ``(..., n)`` and
return arrays of shape ``(..., m, n)``; derivative tensors have shape
``(..., m, n, n)`` with ``dcoeff[..., i, A, B] = d X_iA / d x_B``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np

RANK_RTOL = 1e-8
FD_STEP = 1e-5

ArrayFn = Callable[[np.ndarray], np.ndarray]


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    """An immutable frame of ``m`` vector fields on R^n.

    ``weights`` holds the homogeneous degree of each coordinate (1 for
    horizontal directions, 2 for directions reached through one bracket,
    ...). It only affects lattice spacing in :mod:`cclinf.ccgeometry`.
    ``linear`` optionally records an affine coefficient representation
    ``X_iA(x) = C0[i, A] + C1[i, A, B] x_B`` used by the compiled kernels.
    """

    n: int
    m: int
    coeff: ArrayFn
    dcoeff: ArrayFn
    name: str = "custom"
    weights: tuple[int, ...] = ()
    linear: tuple[np.ndarray, np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 1 or not 1 <= self.m <= self.n:
            raise FrameError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")
        if not self.weights:
            object.__setattr__(self, "weights", (1,) * self.n)
        if len(self.weights) != self.n:
            raise FrameError("weights must have one entry per coordinate")

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.n,):
            raise FrameError(f"point has dimension {x.shape[-1:]}, frame {self.name!r} expects {self.n}")
        return x

    def __call__(self, x) -> np.ndarray:
        return self.coeff(self.check_point(x))

    def derivative(self, x) -> np.ndarray:
        return self.dcoeff(self.check_point(x))

    def divergence(self, x) -> np.ndarray:
        """Euclidean divergences ``D_A X_iA`` of the fields, shape ``(..., m)``."""
        return np.trace(self.derivative(x), axis1=-2, axis2=-1)


def central_difference_dcoeff(coeff: ArrayFn, n: int, step: float = FD_STEP) -> ArrayFn:
    """Synthesize ``dcoeff`` from ``coeff`` by central differences (error O(step^2))."""

    def dcoeff(x):
        x = np.asarray(x, dtype=float)
        cols = []
        for b in range(n):
            e = np.zeros(n)
            e[b] = step
            cols.append((coeff(x + e) - coeff(x - e)) / (2 * step))
        return np.stack(cols, axis=-1)

    return dcoeff


def make_frame(coeff: ArrayFn, n: int, m: int, dcoeff: ArrayFn | None = None,
               name: str = "custom", weights=()) -> Frame:
    """Build a user frame. Without ``dcoeff`` the derivative is taken by central differences."""
    if dcoeff is None:
        dcoeff = central_difference_dcoeff(coeff, n)
    return Frame(n=n, m=m, coeff=coeff, dcoeff=dcoeff, name=name, weights=tuple(weights))


def linear_frame(c0, c1, name: str, weights=()) -> Frame:
    """Frame whose coefficients are affine in x: ``X_iA(x) = c0[i,A] + c1[i,A,B] x_B``."""
    c0 = np.array(c0, dtype=float)
    c1 = np.array(c1, dtype=float)
    m, n = c0.shape
    if c1.shape != (m, n, n):
        raise FrameError("c1 must have shape (m, n, n)")
    c0.setflags(write=False)
    c1.setflags(write=False)

    def coeff(x):
        return c0 + np.einsum("iab,...b->...ia", c1, x)

    def dcoeff(x):
        return np.broadcast_to(c1, x.shape[:-1] + c1.shape)

    return Frame(n=n, m=m, coeff=coeff, dcoeff=dcoeff, name=name,
                 weights=tuple(weights), linear=(c0, c1))


def euclidean(n: int) -> Frame:
    return linear_frame(np.eye(n), np.zeros((n, n, n)), name=f"euclidean:{n}")


def heisenberg() -> Frame:
    """First Heisenberg group in coordinates (x, y, t).

    X1 = d_x - (y/2) d_t and X2 = d_y + (x/2) d_t, so that [X1, X2] = d_t.
    """
    c0 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
    c1 = np.zeros((2, 3, 3))
    c1[0, 2, 1] = -0.5
    c1[1, 2, 0] = 0.5
    return linear_frame(c0, c1, name="heisenberg1", weights=(1, 1, 2))


def grushin() -> Frame:
    """Grushin plane: X1 = d_x, X2 = x d_y. The horizontal space drops to rank 1 on {x = 0}."""
    c0 = [[1.0, 0.0], [0.0, 0.0]]
    c1 = np.zeros((2, 2, 2))
    c1[1, 1, 0] = 1.0
    return linear_frame(c0, c1, name="grushin", weights=(1, 2))


def get_frame(name: str) -> Frame:
    """Resolve a built-in frame name: ``euclidean:n``, ``heisenberg1`` or ``grushin``."""
    key = name.strip().lower()
    if key.startswith("euclidean"):
        _, _, dim = key.partition(":")
        try:
            n = int(dim) if dim else 2
        except ValueError:
            raise FrameError(f"bad euclidean dimension in {name!r}") from None
        if n < 1:
            raise FrameError(f"bad euclidean dimension in {name!r}")
        return euclidean(n)
    if key in ("heisenberg1", "heisenberg"):
        return heisenberg()
    if key == "grushin":
        return grushin()
    raise FrameError(f"unknown frame {name!r}")


BUILTIN_FRAMES = ("euclidean:n", "heisenberg1", "grushin")


def eval_frame(frame: Frame, x) -> np.ndarray:
    """Coefficient matrix of the frame at ``x``; row i is the vector X_i(x)."""
    x = frame.check_point(x)
    if not np.all(np.isfinite(x)):
        raise FrameError("point must be finite")
    return frame(x)


@dataclass(frozen=True)
class BracketResult:
    vector: np.ndarray
    order: int


def _check_index(frame: Frame, i: int):
    if not 0 <= i < frame.m:
        raise FrameError(f"field index {i} out of range for m={frame.m}")


def lie_bracket(frame: Frame, i: int, j: int, x) -> BracketResult:
    """``[X_i, X_j]^A = X_iB D_B X_jA - X_jB D_B X_iA`` at ``x`` (0-based indices)."""
    _check_index(frame, i)
    _check_index(frame, j)
    x = frame.check_point(x)
    F = frame(x)
    dF = frame.derivative(x)
    vec = dF[..., j, :, :] @ F[..., i, :, None] - dF[..., i, :, :] @ F[..., j, :, None]
    return BracketResult(vector=vec[..., 0], order=2)


# Iterated brackets are built on callables returning (value, jacobian) with
# jacobian[A, B] = D_B V_A. Frame fields use the analytic derivative; deeper
# brackets difference the previous level.

def _field_of(frame: Frame, i: int):
    def f(x):
        return frame(x)[i], frame.derivative(x)[i]
    return f


def _bracket_field(v, w, step=FD_STEP):
    def value(x):
        vx, dv = v(x)
        wx, dw = w(x)
        return dw @ vx - dv @ wx

    def f(x):
        n = x.shape[0]
        jac = np.empty((n, n))
        for b in range(n):
            e = np.zeros(n)
            e[b] = step
            jac[:, b] = (value(x + e) - value(x - e)) / (2 * step)
        return value(x), jac

    return f


def numerical_rank(vectors: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if vectors.size == 0:
        return 0
    s = np.linalg.svd(vectors, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def bracket_vectors(frame: Frame, x, max_order: int) -> list[np.ndarray]:
    """All left-normed brackets ``[..[[X_i1, X_i2], X_i3].., X_ik]`` with k <= max_order."""
    if max_order < 1:
        raise FrameError("max_order must be >= 1")
    x = frame.check_point(x)
    base = [_field_of(frame, i) for i in range(frame.m)]
    level = base
    out = [f(x)[0] for f in base]
    for _ in range(2, max_order + 1):
        level = [_bracket_field(v, w) for v in level for w in base]
        out.extend(f(x)[0] for f in level)
    return out


def hormander_rank(frame: Frame, x, max_order: int) -> int:
    """Rank of the span of brackets of depth <= max_order at x; equals n iff Hormander's condition holds."""
    vecs = np.array(bracket_vectors(frame, x, max_order))
    return numerical_rank(vecs)


def frame_info(frame: Frame, x=None) -> dict:
    x = np.zeros(frame.n) if x is None else frame.check_point(x)
    return {
        "name": frame.name,
        "n": frame.n,
        "m": frame.m,
        "weights": list(frame.weights),
        "point": x.tolist(),
        "coeff": eval_frame(frame, x).tolist(),
        "brackets": {f"{i},{j}": lie_bracket(frame, i, j, x).vector.tolist()
                     for i, j in product(range(frame.m), repeat=2) if i < j},
    }
