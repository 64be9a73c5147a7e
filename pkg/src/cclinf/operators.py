"""Range/nullspace projectors of the horizontal gradient and the p- and infinity-Laplacians."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calculus import (HorizontalGradient, Jet2, fd_jet, horizontal_gradient,
                       second_horizontal)
from .frames import RANK_RTOL, Frame
from .grid import GridField


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectorPair:
    top: np.ndarray   # projection onto the range of Xu
    bot: np.ndarray   # projection onto the nullspace of Xu^T
    rank_used: int
    tol_used: float
    degenerate: bool = False


@dataclass(frozen=True)
class OperatorValue:
    total: np.ndarray
    term_tangential: np.ndarray
    term_normal: np.ndarray
    rank: int = 0
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "total": self.total.tolist(),
            "term_tangential": self.term_tangential.tolist(),
            "term_normal": self.term_normal.tolist(),
            "rank": self.rank,
            "degenerate": self.degenerate,
        }


def projectors(H: HorizontalGradient, tol: float = RANK_RTOL) -> ProjectorPair:
    """Orthogonal projectors of R^N onto R(Xu) and N(Xu^T).

    Singular directions with sigma > tol * sigma_max span the range. An all-zero
    gradient gives ``top = 0``, ``bot = I`` and ``degenerate=True``.
    """
    if tol <= 0:
        raise OperatorError("tol must be positive")
    N = H.mat.shape[0]
    s = H.singular_values
    if s.size == 0 or s[0] == 0:
        return ProjectorPair(np.zeros((N, N)), np.eye(N), 0, tol, degenerate=True)
    r = int(np.sum(s > tol * s[0]))
    Ur = H.left_vectors[:, :r]
    top = Ur @ Ur.T
    if r == N:
        bot = np.zeros((N, N))
    else:
        Uk = H.left_vectors[:, r:]
        bot = Uk @ Uk.T
    return ProjectorPair(top, bot, r, tol)


def _frame_data(jet: Jet2, F, dF):
    F = np.asarray(F, dtype=float)
    dF = np.asarray(dF, dtype=float)
    H = horizontal_gradient(jet, F)
    T = second_horizontal(jet, F, dF).tensor
    return F, dF, H, T


def _tangential(H: HorizontalGradient, T: np.ndarray) -> np.ndarray:
    # X_i u_a X_j u_b X_i X_j u_b, outer derivative index first
    return np.einsum("ai,bj,bij->a", H.mat, H.mat, T)


def infinity_laplacian(jet: Jet2, F, dF, tol: float = RANK_RTOL) -> OperatorValue:
    """Subelliptic infinity-Laplacian split into its tangential and normal parts."""
    F, dF, H, T = _frame_data(jet, F, dF)
    P = projectors(H, tol)
    tangential = _tangential(H, T)
    normal = H.normsq * (P.bot @ np.trace(T, axis1=1, axis2=2))
    return OperatorValue(total=tangential + normal, term_tangential=tangential,
                         term_normal=normal, rank=P.rank_used, degenerate=P.degenerate)


def infinity_laplacian_batch(egrad, ehess, F, dF, tol: float = RANK_RTOL):
    """Vectorized :func:`infinity_laplacian` over stacked jets.

    ``egrad`` is ``(..., N, n)``, ``ehess`` ``(..., N, n, n)``, ``F``
    ``(..., m, n)`` and ``dF`` ``(..., m, n, n)``. Returns
    ``(total, tangential, normal)``, each ``(..., N)``.
    """
    egrad, ehess, F, dF = (np.asarray(a, dtype=float) for a in (egrad, ehess, F, dF))
    H = np.einsum("...an,...in->...ai", egrad, F)
    T = (np.einsum("...iA,...jBA,...aB->...aij", F, dF, egrad)
         + np.einsum("...iA,...jB,...aAB->...aij", F, F, ehess))
    tangential = np.einsum("...ai,...bj,...bij->...a", H, H, T)
    U, s, _ = np.linalg.svd(H, full_matrices=True)
    smax = s[..., :1]
    keep = s > tol * np.where(smax > 0, smax, np.inf)
    Ur = U[..., :, : s.shape[-1]] * keep[..., None, :]
    bot = np.eye(H.shape[-2]) - Ur @ np.swapaxes(Ur, -1, -2)
    normsq = np.sum(H * H, axis=(-2, -1))
    normal = normsq[..., None] * np.einsum("...ab,...b->...a", bot, np.trace(T, axis1=-2, axis2=-1))
    return tangential + normal, tangential, normal


def divergence_term(jet: Jet2, F, dF) -> np.ndarray:
    """``X_i u_a D_A X_iA + X_i X_i u_a``, the p = 2 operator ``X_i^*(X_i u_a)``."""
    F, dF, H, T = _frame_data(jet, F, dF)
    div = np.trace(dF, axis1=1, axis2=2)
    return H.mat @ div + np.trace(T, axis1=1, axis2=2)


def p_laplacian_expanded(jet: Jet2, F, dF, p: float) -> np.ndarray:
    """Normalized non-divergence p-Laplacian.

    For p > 2 returns ``tangential + |Xu|^2/(p-2) (X_i u D_A X_iA + X_i X_i u)``;
    at p = 2 returns the divergence-form residual ``X_i^*(X_i u)`` itself.
    """
    if not np.isfinite(p) or p < 2:
        raise OperatorError(f"p must be finite and >= 2, got {p}")
    F, dF, H, T = _frame_data(jet, F, dF)
    div = np.trace(dF, axis1=1, axis2=2)
    bracket = H.mat @ div + np.trace(T, axis1=1, axis2=2)
    if p == 2:
        return bracket
    return _tangential(H, T) + H.normsq / (p - 2) * bracket


def p_laplacian_rescaled(jet: Jet2, F, dF, p: float, tol: float = RANK_RTOL) -> np.ndarray:
    """``[Xu]^T A_p + (p-2) [Xu]^perp A_p`` for the expanded operator ``A_p``.

    The normal component of ``A_p`` carries a factor 1/(p-2); undoing it gives an
    operator that tends to the infinity-Laplacian at rate O(1/p) for every jet,
    not only for those with vanishing normal part.
    """
    if p <= 2:
        raise OperatorError("rescaling needs p > 2")
    A = p_laplacian_expanded(jet, F, dF, p)
    P = projectors(horizontal_gradient(jet, np.asarray(F, dtype=float)), tol)
    return P.top @ A + (p - 2) * (P.bot @ A)


def _flux(field: GridField, frame: Frame, p: float, index) -> np.ndarray:
    jet = fd_jet(field, index)
    x = field.point(index)
    F = frame(x)
    H = jet.egrad @ F.T
    s2 = float(np.sum(H * H))
    if p == 2:
        w = 1.0
    elif s2 == 0.0:
        w = 0.0
    else:
        w = s2 ** ((p - 2) / 2)
    return w * H @ F  # (N, n): X_iA |Xu|^{p-2} X_i u_a


def p_laplacian_adjoint(field: GridField, frame: Frame, p: float, index) -> np.ndarray:
    """Divergence-form residual ``D_A(X_iA |Xu|^{p-2} X_i u_a)`` by nested central differences."""
    if not np.isfinite(p) or p < 2:
        raise OperatorError(f"p must be finite and >= 2, got {p}")
    index = np.asarray(index, dtype=int)
    if index.shape != (field.n,):
        raise OperatorError("index dimension does not match the lattice")
    if np.any(index < 2) or np.any(index > np.array(field.shape) - 3):
        raise OperatorError(f"index {index.tolist()} needs a two-cell margin from the lattice boundary")
    h = field.spacing
    out = np.zeros(field.N)
    for a in range(field.n):
        e = np.zeros(field.n, dtype=int)
        e[a] = 1
        out += (_flux(field, frame, p, index + e)[:, a] - _flux(field, frame, p, index - e)[:, a]) / (2 * h[a])
    return out


def normalize_adjoint(value: np.ndarray, normsq: float, p: float) -> np.ndarray:
    """Map the divergence-form residual onto the scale of :func:`p_laplacian_expanded`."""
    if p == 2:
        return value
    return value / ((p - 2) * normsq ** ((p - 4) / 2))


def left_pseudo_inverse(H: HorizontalGradient) -> np.ndarray:
    """Moore-Penrose left inverse ``P`` with ``P @ H.mat = I_m``; needs rank m <= N."""
    N, m = H.mat.shape
    if m > N or H.rank < m:
        raise OperatorError(f"Xu has rank {H.rank}; a left inverse needs full column rank {m}")
    U, s, Vt = np.linalg.svd(H.mat, full_matrices=False)
    return Vt.T @ np.diag(1.0 / s) @ U.T


def operator_at(umap, frame: Frame, x, p="inf", tol: float = RANK_RTOL) -> dict:
    """Evaluate the infinity-Laplacian (``p="inf"``) or the expanded p-Laplacian of a map at x."""
    x = np.asarray(x, dtype=float)
    jet = umap.jet(x)
    F, dF = frame(x), frame.derivative(x)
    H = horizontal_gradient(jet, F)
    rec = {"point": x.tolist(), "normsq": H.normsq, "rank": H.rank}
    if p == "inf" or p == float("inf"):
        rec.update(infinity_laplacian(jet, F, dF, tol).as_dict())
    else:
        rec["total"] = p_laplacian_expanded(jet, F, dF, float(p)).tolist()
    return rec
