import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from cclinf import kernels
from cclinf.calculus import get_map
from cclinf.frames import euclidean, grushin, heisenberg
from cclinf.grid import GridField
from cclinf.psolve import (MinimizeOptions, PSolveError, discrete_p_energy, field_max_principle, infinity_residual,
                           kuhn_mesh, minimize_p, p2_direct_solve, p_continuation, simplex_gradient_norms)

E2 = euclidean(2)
ARON_BOX = ([0.5, 0.5], [1.5, 1.5])


def sampled(name, lo, hi, nodes, interior=None, n=None):
    amap = get_map(name, n=n or len(lo))
    return GridField.sample(amap, lo, hi, (nodes,) * len(lo), interior=interior)


def five_point_oracle(field):
    """Independent Dirichlet solve of the 5-point Laplacian on the interior nodes."""
    nx, ny = field.shape
    hx, hy = field.spacing
    u = field.values[..., 0].copy()
    ix, iy = nx - 2, ny - 2
    idx = np.arange(ix * iy).reshape(ix, iy)
    A = sp.lil_matrix((ix * iy, ix * iy))
    b = np.zeros(ix * iy)
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            r = idx[i - 1, j - 1]
            A[r, r] = 2 / hx ** 2 + 2 / hy ** 2
            for di, dj, h2 in ((1, 0, hx ** 2), (-1, 0, hx ** 2), (0, 1, hy ** 2), (0, -1, hy ** 2)):
                a, c = i + di, j + dj
                if 0 < a < nx - 1 and 0 < c < ny - 1:
                    A[r, idx[a - 1, c - 1]] = -1 / h2
                else:
                    b[r] += u[a, c] / h2
    u[1:-1, 1:-1] = spsolve(A.tocsr(), b).reshape(ix, iy)
    return u


def test_kuhn_mesh_counts():
    field = sampled("coord:0", [0, 0, 0], [1, 1, 1], 4, n=3)
    mesh = kuhn_mesh(field)
    assert mesh.offsets.shape == (6, 4) and mesh.corners.size == 27
    assert mesh.simplex_volume * 6 * 27 == pytest.approx(1.0)
    assert mesh.vertices().shape == (6, 27, 4)


def test_energy_of_affine_fields():
    field = sampled("affine:2,-1", [0, 0], [1, 1], 9)
    for p in (2, 3, 7.5):
        assert discrete_p_energy(field, E2, p) == pytest.approx(5 ** (p / 2), rel=1e-12)
    assert discrete_p_energy(sampled("coord:0", [0, 0], [1, 1], 5), E2, 2) == pytest.approx(1.0)
    np.testing.assert_allclose(simplex_gradient_norms(field, E2), np.sqrt(5))
    with pytest.raises(PSolveError):
        discrete_p_energy(field, E2, 1.5)


@pytest.mark.parametrize("p", [2, 3, 8])
def test_energy_homogeneity(p, rng):
    field = GridField.sample(lambda x: rng.normal(size=x.shape[:-1] + (2,)), [0, 0], [1, 2], (7, 9))
    e = discrete_p_energy(field, E2, p)
    assert discrete_p_energy(field.with_values(2 * field.values), E2, p) == pytest.approx(2 ** p * e, rel=1e-12)


def test_energy_needs_three_nodes():
    with pytest.raises(PSolveError):
        discrete_p_energy(sampled("coord:0", [0, 0], [1, 1], 2), E2, 2)
    with pytest.raises(PSolveError):
        discrete_p_energy(sampled("coord:0", [0, 0], [1, 1], 5), heisenberg(), 2)


def test_direct_solve_matches_five_point_oracle():
    field = sampled("wave", [0, 0], [1, 1.5], 17, interior=0.0)
    direct = p2_direct_solve(field, E2)
    np.testing.assert_allclose(direct.values[..., 0], five_point_oracle(field), atol=1e-12)


def test_harmonic_extension_of_saddle():
    field = sampled("saddle", [-1, -1], [1, 1], 21, interior=0.0)
    res = minimize_p(field, E2, 2, MinimizeOptions(gtol=1e-10))
    exact = get_map("saddle")(field.coords())
    assert res.converged
    assert np.abs(res.field.values - exact).max() < 1e-8


def test_p2_minimizer_matches_direct_solve():
    field = sampled("aronsson", *ARON_BOX, 33, interior=0.0)
    res = minimize_p(field, E2, 2, MinimizeOptions(gtol=1e-10))
    direct = p2_direct_solve(field, E2).values
    assert np.abs(res.field.values - direct).max() <= 1e-6 * np.abs(direct).max()


def test_frozen_nodes_and_monotone_history(rng):
    field = sampled("aronsson", *ARON_BOX, 17, interior=lambda x: rng.normal(size=x.shape[:-1]))
    before = field.values[field.dirichlet_mask].tobytes()
    res = minimize_p(field, E2, 6, MinimizeOptions(gtol=1e-9))
    assert res.field.values[field.dirichlet_mask].tobytes() == before
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))
    assert res.converged and res.stationarity < 1e-9


@pytest.mark.parametrize("frame, name, lo, hi, nodes", [
    (E2, "affine:1,2;-1,0.5", [0, 0], [1, 1], 13),
    (heisenberg(), "coord:0", [-1, -1, -1], [1, 1, 1], 7),
    (grushin(), "coord:0", [-1, -1], [1, 1], 11),
])
def test_affine_data_with_constant_horizontal_gradient(frame, name, lo, hi, nodes, rng):
    exact = sampled(name, lo, hi, nodes, n=frame.n)
    start = exact.with_values(np.where(exact.dirichlet_mask[..., None], exact.values,
                                       rng.normal(size=exact.values.shape)))
    res = minimize_p(start, frame, 4, MinimizeOptions(gtol=1e-10, max_iter=2000))
    assert res.converged
    assert np.abs(res.field.values - exact.values).max() < 1e-6


def test_p6_residual_improves_on_p2():
    field = sampled("aronsson", *ARON_BOX, 33, interior=0.0)
    r2 = minimize_p(field, E2, 2, MinimizeOptions(gtol=1e-10))
    r6 = minimize_p(r2.field, E2, 6, MinimizeOptions(gtol=1e-9))
    base = infinity_residual(r2.field, E2).max()
    assert infinity_residual(r6.field, E2).max() < base


def test_minimize_rejects_bad_input():
    field = sampled("coord:0", [0, 0], [1, 1], 5)
    for p in (1.0, np.inf):
        with pytest.raises(PSolveError):
            minimize_p(field, E2, p)
    frozen = field.with_values(field.values)
    frozen.dirichlet_mask[:] = True
    with pytest.raises(PSolveError):
        minimize_p(frozen, E2, 2)


def test_continuation_on_affine_data():
    field = sampled("affine:1,-1", [0, 0], [1, 1], 9, interior=0.0)
    res = p_continuation(field, E2, [2, 4, 8])
    assert res.failure is None and len(res.fields) == 3
    assert max(res.residuals) < 1e-6
    for f in res.fields:
        np.testing.assert_allclose(f.values, get_map("affine:1,-1")(f.coords()), atol=1e-7)


@pytest.fixture(scope="module")
def aronsson_run():
    field = sampled("aronsson", *ARON_BOX, 33, interior=0.0)
    return field, p_continuation(field, E2, [2, 4, 8, 16, 32])


def test_continuation_residuals_decrease(aronsson_run):
    _, res = aronsson_run
    assert res.failure is None
    assert all(b < a for a, b in zip(res.residuals, res.residuals[1:]))
    gap = {p: s - e for p, s, e in zip(res.schedule, res.sup_norms, res.normalized_energies)}
    assert 0 <= gap[32] < gap[8]


def test_continuation_max_principle(aronsson_run):
    field, res = aronsson_run
    h = field.spacing.max()
    rep = field_max_principle(res.fields[-1], E2, tol=5 * h)
    assert rep.passed


def test_schedule_validation():
    field = sampled("coord:0", [0, 0], [1, 1], 5)
    for bad in ([4, 8], [2, 2, 4], [2, 8, 4], []):
        with pytest.raises(PSolveError):
            p_continuation(field, E2, bad)


def test_field_max_principle_examples():
    aff = sampled("affine:1,2", [0, 0], [1, 1], 11)
    rep = field_max_principle(aff, E2)
    assert rep.passed and rep.sup_int == pytest.approx(rep.max_bdry, abs=1e-12)
    bumped = aff.values.copy()
    x = aff.coords()
    bumped[..., 0] += 0.5 * np.exp(-40 * np.sum((x - 0.5) ** 2, axis=-1))
    assert not field_max_principle(aff.with_values(bumped), E2).passed
    with pytest.raises(PSolveError):
        field_max_principle(sampled("coord:0", [0, 0], [1, 1], 2), E2)


@pytest.mark.skipif("compiled" not in kernels.available_backends(), reason="compiled kernels not built")
@pytest.mark.parametrize("frame, lo, hi, nodes, N", [
    (E2, [0, 0], [1, 1], 9, 1),
    (grushin(), [-1, -1], [1, 1], 9, 2),
    (heisenberg(), [-1, -1, -1], [1, 1, 1], 5, 1),
])
def test_energy_backends_agree(frame, lo, hi, nodes, N, rng):
    field = GridField.sample(lambda x: rng.normal(size=x.shape[:-1] + (N,)), lo, hi, (nodes,) * len(lo))
    for p in (2, 5, 32):
        a = discrete_p_energy(field, frame, p, backend="python")
        b = discrete_p_energy(field, frame, p, backend="compiled")
        assert a == pytest.approx(b, rel=1e-12)
