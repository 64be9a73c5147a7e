"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation and serve as the
fallback when the compiled extension is unavailable.
"""

from __future__ import annotations

import numpy as np


def lattice_bfs(coeff, lo, spacing, shape, controls, dt, start, target_flat, max_layers,
                parent, control_of):
    """Layered breadth-first search over lattice cells with exact continuous states.

    Every edge is one explicit Euler step ``z -> z + dt * a_i X_i(z)`` for a
    control ``a`` in ``controls``. Among the states of one layer that land in
    a fresh cell, the one nearest the cell centre (in lattice units) claims
    it, ties going to the earlier candidate (frontier order, then control
    order). The next frontier lists cells in order of their first hit.
    ``parent`` and ``control_of`` are filled in place (``parent == -1`` marks
    unvisited cells). Returns ``(layers, visited)`` with ``layers = -1`` if
    the target cell is never reached.
    """
    shape = np.asarray(shape, dtype=np.int64)
    strides = np.array([int(np.prod(shape[a + 1:])) for a in range(len(shape))], dtype=np.int64)
    K = controls.shape[0]

    idx0 = np.floor((start - lo) / spacing + 0.5).astype(np.int64)
    start_flat = int(idx0 @ strides)
    parent[start_flat] = start_flat
    visited = 1
    frontier = np.asarray(start, dtype=float)[None, :]
    frontier_flat = np.array([start_flat], dtype=np.int64)
    if start_flat == target_flat:
        return 0, visited

    for layer in range(1, max_layers + 1):
        if frontier.shape[0] == 0:
            return -1, visited
        F = coeff(frontier)                                    # (P, m, n)
        vel = np.einsum("km,pmn->pkn", controls, F)
        cand = (frontier[:, None, :] + dt * vel).reshape(-1, frontier.shape[1])
        scaled = (cand - lo) / spacing
        cell = np.floor(scaled + 0.5).astype(np.int64)
        inside = np.all((cell >= 0) & (cell < shape), axis=1)
        src = np.nonzero(inside)[0]
        flat = cell[inside] @ strides
        fresh = parent[flat] == -1
        src, flat = src[fresh], flat[fresh]
        off = scaled[src] - cell[src]
        dist = np.sum(off * off, axis=1)
        order = np.lexsort((src, dist, flat))              # per cell: nearest, then earliest
        cells, head = np.unique(flat[order], return_index=True)
        best = src[order[head]]
        first = np.minimum.reduceat(src[order], head) if cells.size else src[:0]
        rank = np.argsort(first, kind="stable")
        new_flat = cells[rank]
        new_src = best[rank]
        parent[new_flat] = frontier_flat[new_src // K]
        control_of[new_flat] = new_src % K
        visited += new_flat.size
        frontier = cand[new_src]
        frontier_flat = new_flat
        if parent[target_flat] != -1:
            return layer, visited
    return -1, visited


def simplex_energy(u, F, corners, offsets, perm_axes, spacing, p):
    """Scaled p-energy of the piecewise-linear interpolant on Kuhn simplices.

    ``u`` is ``(nodes, N)``, ``F`` is ``(nperm, ncells, m, n)`` (frame at the
    simplex barycentres), ``corners`` the flat index of each cell's lowest
    node, ``offsets[q, k]`` the flat offset of vertex k of simplex type q and
    ``perm_axes[q, k]`` the axis traversed between vertices k and k+1.

    Returns ``(smax, scaled_energy, scaled_grad)`` with
    ``E = smax**p * scaled_energy`` and ``dE/du = smax**(p-2) * scaled_grad``.
    """
    nperm, ncells, m, n = F.shape
    N = u.shape[1]
    vol = float(np.prod(spacing))
    for k in range(1, n + 1):
        vol /= k
    hs = []
    for q in range(nperm):
        verts = u[corners[:, None] + offsets[q][None, :]]      # (ncells, n+1, N)
        g = np.empty((ncells, N, n))
        for k in range(n):
            ax = perm_axes[q, k]
            g[:, :, ax] = (verts[:, k + 1] - verts[:, k]) / spacing[ax]
        hs.append(np.einsum("cna,cia->cni", g, F[q]))           # (ncells, N, m)
    H = np.stack(hs)                                            # (nperm, ncells, N, m)
    s2 = np.einsum("qcni,qcni->qc", H, H)
    smax = float(np.sqrt(s2.max())) if s2.size else 0.0
    out = np.zeros_like(u)
    if smax == 0.0:
        return 0.0, 0.0, out
    r2 = s2 / (smax * smax)
    energy = vol * float(np.sum(r2 ** (p / 2)))
    w = p * vol * r2 ** ((p - 2) / 2)
    for q in range(nperm):
        flux = w[q][:, None, None] * np.einsum("cni,cia->cna", H[q], F[q])  # (ncells, N, n)
        for k in range(n):
            ax = perm_axes[q, k]
            contrib = flux[:, :, ax] / spacing[ax]
            # distinct cells map to distinct nodes, so fancy-index updates do not collide
            out[corners + offsets[q, k + 1]] += contrib
            out[corners + offsets[q, k]] -= contrib
    return smax, energy, out
