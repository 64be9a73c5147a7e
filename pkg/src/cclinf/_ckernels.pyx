# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``.

The lattice search only supports frames with affine coefficients
``X_iA(x) = c0[i, A] + c1[i, A, B] x_B``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, pow, sqrt
from libc.stdlib cimport calloc, malloc, realloc, free

cnp.import_array()


cdef int _grow(double **pos, long long **flat, long long *cap, long long need, int n) except -1:
    cdef long long newcap
    cdef double *p2
    cdef long long *f2
    if need <= cap[0]:
        return 0
    newcap = cap[0] * 2
    while newcap < need:
        newcap *= 2
    p2 = <double *> realloc(pos[0], newcap * n * sizeof(double))
    f2 = <long long *> realloc(flat[0], newcap * sizeof(long long))
    if p2 == NULL or f2 == NULL:
        raise MemoryError()
    pos[0] = p2
    flat[0] = f2
    cap[0] = newcap
    return 0


cdef struct Claim:
    long long layer
    long long slot
    double dist


def lattice_bfs_linear(const double[:, ::1] c0, const double[:, :, ::1] c1, const double[::1] lo,
                       const double[::1] spacing, const long long[::1] shape,
                       const double[:, ::1] controls, double dt, const double[::1] start, long long target_flat,
                       long long max_layers, long long[::1] parent, short[::1] control_of):
    cdef int m = c0.shape[0]
    cdef int n = c0.shape[1]
    cdef int K = controls.shape[0]
    cdef long long cap_a = 1024, cap_b = 1024, na = 0, nb = 0
    cdef double *pos_a = <double *> malloc(cap_a * n * sizeof(double))
    cdef double *pos_b = <double *> malloc(cap_b * n * sizeof(double))
    cdef long long *flat_a = <long long *> malloc(cap_a * sizeof(long long))
    cdef long long *flat_b = <long long *> malloc(cap_b * sizeof(long long))
    cdef double *tmp_p
    cdef long long *tmp_f
    cdef long long tmp_c
    cdef double *F = <double *> malloc(m * n * sizeof(double))
    cdef double *cand = <double *> malloc(n * sizeof(double))
    cdef long long *strides = <long long *> malloc(n * sizeof(long long))
    cdef long long visited = 1, layer, cell, c, flat, pidx, s
    cdef long long ncells = 1
    cdef int a, b, i, k, ok
    cdef double v, x, r, d
    cdef long long result = -1
    for a in range(n):
        ncells *= shape[a]
    # per cell: the layer that claimed it, its frontier slot and the claimant's offset from the centre
    cdef Claim *claims = <Claim *> calloc(ncells, sizeof(Claim))

    if pos_a == NULL or pos_b == NULL or flat_a == NULL or flat_b == NULL or claims == NULL:
        free(pos_a); free(pos_b); free(flat_a); free(flat_b); free(claims)
        free(F); free(cand); free(strides)
        raise MemoryError()
    try:
        strides[n - 1] = 1
        for a in range(n - 2, -1, -1):
            strides[a] = strides[a + 1] * shape[a + 1]
        flat = 0
        for a in range(n):
            flat += (<long long> floor((start[a] - lo[a]) / spacing[a] + 0.5)) * strides[a]
            pos_a[a] = start[a]
        parent[flat] = flat
        flat_a[0] = flat
        na = 1
        if flat == target_flat:
            return 0, visited

        for layer in range(1, max_layers + 1):
            if na == 0:
                break
            nb = 0
            for pidx in range(na):
                for i in range(m):
                    for a in range(n):
                        v = c0[i, a]
                        for b in range(n):
                            v += c1[i, a, b] * pos_a[pidx * n + b]
                        F[i * n + a] = v
                for k in range(K):
                    flat = 0
                    ok = 1
                    d = 0.0
                    for a in range(n):
                        v = 0.0
                        for i in range(m):
                            v += controls[k, i] * F[i * n + a]
                        x = pos_a[pidx * n + a] + dt * v
                        cand[a] = x
                        r = (x - lo[a]) / spacing[a]
                        cell = <long long> floor(r + 0.5)
                        if cell < 0 or cell >= shape[a]:
                            ok = 0
                            break
                        r = r - cell
                        d += r * r
                        flat += cell * strides[a]
                    if not ok:
                        continue
                    if parent[flat] != -1:
                        if claims[flat].layer != layer:
                            continue
                        # claimed earlier in this layer: keep the state nearest the centre
                        if d < claims[flat].dist:
                            s = claims[flat].slot
                            claims[flat].dist = d
                            parent[flat] = flat_a[pidx]
                            control_of[flat] = k
                            for a in range(n):
                                pos_b[s * n + a] = cand[a]
                        continue
                    parent[flat] = flat_a[pidx]
                    control_of[flat] = k
                    claims[flat].layer = layer
                    claims[flat].slot = nb
                    claims[flat].dist = d
                    _grow(&pos_b, &flat_b, &cap_b, nb + 1, n)
                    for a in range(n):
                        pos_b[nb * n + a] = cand[a]
                    flat_b[nb] = flat
                    nb += 1
            visited += nb
            tmp_p = pos_a; pos_a = pos_b; pos_b = tmp_p
            tmp_f = flat_a; flat_a = flat_b; flat_b = tmp_f
            tmp_c = cap_a; cap_a = cap_b; cap_b = tmp_c
            na = nb
            if parent[target_flat] != -1:
                result = layer
                break
        return result, visited
    finally:
        free(pos_a); free(pos_b); free(flat_a); free(flat_b); free(claims)
        free(F); free(cand); free(strides)


def simplex_energy(const double[:, ::1] u, const double[:, :, :, ::1] F,
                   const long long[::1] corners, const long long[:, ::1] offsets,
                   const long long[:, ::1] perm_axes, const double[::1] spacing, double p):
    cdef int nperm = F.shape[0]
    cdef long long ncells = F.shape[1]
    cdef int m = F.shape[2]
    cdef int n = F.shape[3]
    cdef int N = u.shape[1]
    cdef double vol = 1.0
    cdef int q, k, ax, al, i, a
    cdef long long c, v0, v1
    cdef double s2, smax2 = 0.0, r2, w, energy = 0.0, t
    cdef double *g = <double *> malloc(N * n * sizeof(double))
    cdef double *H = <double *> malloc(N * m * sizeof(double))
    cdef double *flux = <double *> malloc(N * n * sizeof(double))
    cdef double[:, ::1] s2all = np.empty((nperm, ncells))
    out_arr = np.zeros((u.shape[0], N))
    cdef double[:, ::1] out = out_arr

    if g == NULL or H == NULL or flux == NULL:
        raise MemoryError()
    try:
        for a in range(n):
            vol *= spacing[a] / (a + 1)
        # pass 1: squared horizontal gradient norms and their maximum
        for q in range(nperm):
            for c in range(ncells):
                for k in range(n):
                    ax = perm_axes[q, k]
                    v0 = corners[c] + offsets[q, k]
                    v1 = corners[c] + offsets[q, k + 1]
                    for al in range(N):
                        g[al * n + ax] = (u[v1, al] - u[v0, al]) / spacing[ax]
                s2 = 0.0
                for al in range(N):
                    for i in range(m):
                        t = 0.0
                        for a in range(n):
                            t += g[al * n + a] * F[q, c, i, a]
                        s2 += t * t
                s2all[q, c] = s2
                if s2 > smax2:
                    smax2 = s2
        if smax2 == 0.0:
            return 0.0, 0.0, out_arr
        # pass 2: energy and flux scatter
        for q in range(nperm):
            for c in range(ncells):
                r2 = s2all[q, c] / smax2
                if r2 == 0.0:
                    # flux vanishes on flat simplices (p > 2); at p = 2 it is zero anyway
                    continue
                t = pow(r2, p / 2 - 1)
                energy += vol * t * r2
                w = p * vol * t
                for k in range(n):
                    ax = perm_axes[q, k]
                    v0 = corners[c] + offsets[q, k]
                    v1 = corners[c] + offsets[q, k + 1]
                    for al in range(N):
                        g[al * n + ax] = (u[v1, al] - u[v0, al]) / spacing[ax]
                for al in range(N):
                    for i in range(m):
                        t = 0.0
                        for a in range(n):
                            t += g[al * n + a] * F[q, c, i, a]
                        H[al * m + i] = t
                    for a in range(n):
                        t = 0.0
                        for i in range(m):
                            t += H[al * m + i] * F[q, c, i, a]
                        flux[al * n + a] = w * t
                for k in range(n):
                    ax = perm_axes[q, k]
                    v0 = corners[c] + offsets[q, k]
                    v1 = corners[c] + offsets[q, k + 1]
                    for al in range(N):
                        t = flux[al * n + ax] / spacing[ax]
                        out[v1, al] += t
                        out[v0, al] -= t
        return sqrt(smax2), energy, out_arr
    finally:
        free(g); free(H); free(flux)
