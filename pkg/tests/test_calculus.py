import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cclinf.calculus import (JetError, Jet2, SingularPointError, analytic_jet, fd_jet, fd_jets, get_map,
                             horizontal_gradient, register_map, second_horizontal)
from cclinf.frames import heisenberg, lie_bracket
from cclinf.grid import GridField


def jet_of(name, x, n=None):
    return get_map(name, n=n).jet(x)


def test_horizontal_gradient_examples():
    H = horizontal_gradient(jet_of("coord:0", [0.3, 0.4]), np.eye(2))
    np.testing.assert_allclose(H.mat, [[1, 0]])
    assert H.normsq == 1

    frame = heisenberg()
    x = np.array([1.0, 2.0, 0.0])
    H = horizontal_gradient(jet_of("coord:2", x, n=3), frame(x))
    np.testing.assert_allclose(H.mat, [[-1, 0.5]])
    assert H.normsq == pytest.approx(1.25)

    H = horizontal_gradient(jet_of("paper_exp", [0.0, 0.0]), np.eye(2))
    np.testing.assert_allclose(H.mat, [[0, 0], [1, -1]], atol=1e-15)
    assert H.normsq == pytest.approx(2)
    assert H.rank == 1


def test_horizontal_gradient_dimension_check():
    with pytest.raises(JetError):
        horizontal_gradient(jet_of("coord:0", [0.0, 0.0]), np.eye(3))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2 ** 31))
def test_normsq_identity(N, m, seed):
    r = np.random.default_rng(seed)
    n = m + 1
    jet = Jet2(np.zeros(N), r.normal(size=(N, n)), np.zeros((N, n, n)))
    F = r.normal(size=(m, n))
    H = horizontal_gradient(jet, F)
    assert H.normsq == pytest.approx(np.sum((F @ jet.egrad.T) ** 2), rel=1e-12)
    assert H.rank <= min(m, N)


def test_second_horizontal_euclidean_is_hessian(rng):
    amap = get_map("expmix", n=3)
    for x in rng.uniform(-1, 1, size=(5, 3)):
        jet = amap.jet(x)
        T = second_horizontal(jet, np.eye(3), np.zeros((3, 3, 3))).tensor
        np.testing.assert_allclose(T, jet.ehess, atol=1e-14)
    T = second_horizontal(jet_of("sumsq", [1.0, 1.0]), np.eye(2), np.zeros((2, 2, 2))).tensor
    np.testing.assert_allclose(T[0], [[2, 0], [0, 2]])


SCALAR_MAPS_3D = ["coord:2", "sumsq", "gauss", "cubic", "expmix"]


@pytest.mark.parametrize("name", SCALAR_MAPS_3D)
def test_commutator_identity_heisenberg(name, rng):
    frame = heisenberg()
    amap = get_map(name, n=3)
    for x in rng.uniform(-1, 1, size=(20, 3)):
        jet = amap.jet(x)
        T = second_horizontal(jet, frame(x), frame.derivative(x)).tensor
        bracket = lie_bracket(frame, 0, 1, x).vector
        np.testing.assert_allclose(T[:, 0, 1] - T[:, 1, 0], jet.egrad @ bracket, atol=1e-8)
    if name == "coord:2":
        assert T[0, 0, 1] - T[0, 1, 0] == pytest.approx(1.0)


def test_analytic_jet_examples():
    jet = analytic_jet("paper_exp", [0.0, 0.0])
    np.testing.assert_allclose(jet.value, [0, 0], atol=1e-15)
    np.testing.assert_allclose(jet.egrad, [[0, 0], [1, -1]], atol=1e-15)

    jet = analytic_jet("affine:1,2;3,4+5,6", [0.7, -0.2])
    np.testing.assert_array_equal(jet.egrad, [[1, 2], [3, 4]])
    assert not np.any(jet.ehess)
    np.testing.assert_allclose(jet.value, [0.7 - 0.4 + 5, 2.1 - 0.8 + 6])

    jet = analytic_jet("aronsson", [1.0, 1.0])
    np.testing.assert_allclose(jet.egrad, [[4 / 3, -4 / 3]])


def test_aronsson_signed_power_and_singular_axes():
    jet = analytic_jet("aronsson", [-1.0, 8.0])
    assert jet.value[0] == pytest.approx(-1.0 - 16.0)
    with pytest.raises(SingularPointError):
        analytic_jet("aronsson", [0.0, 1.0])


def test_unknown_and_malformed_maps():
    for bad in ("nope", "coord:5", "affine:1,2;3,4+1", "cubic:"):
        with pytest.raises((JetError, ValueError)):
            get_map(bad, n=2)
    with pytest.raises(JetError):
        get_map("paper_exp").jet([1.0, 2.0, 3.0])


def test_register_map_closure():
    def fn(x):
        v = (x[..., 0] * x[..., 1])[..., None]
        g = np.stack([x[..., 1], x[..., 0]], axis=-1)[..., None, :]
        h = np.broadcast_to(np.array([[0.0, 1.0], [1.0, 0.0]]), x.shape[:-1] + (1, 2, 2))
        return v, g, h
    register_map("test_xy", 2, 1, fn)
    jet = analytic_jet("test_xy", [2.0, 3.0])
    assert jet.value[0] == 6.0
    np.testing.assert_array_equal(jet.egrad, [[3.0, 2.0]])


MAPS_2D = ["paper_exp", "aronsson", "saddle", "graph_square", "sumsq", "gauss", "rgauss", "wave",
           "cubic", "expmix", "square:1"]


@pytest.mark.parametrize("name", MAPS_2D)
def test_hessian_symmetry(name, rng):
    amap = get_map(name, n=3 if name in ("cubic", "expmix") else 2)
    pts = rng.uniform(0.2, 1.0, size=(50, amap.n))
    _, _, h = amap.jets(pts)
    np.testing.assert_allclose(h, np.swapaxes(h, -1, -2), atol=1e-10)


@pytest.mark.parametrize("name", MAPS_2D)
def test_fd_jet_agrees_with_analytic(name, rng):
    """Local grids of spacing h and h/2 reproduce the analytic jet with second-order error."""
    amap = get_map(name, n=3 if name in ("cubic", "expmix") else 2)
    n = amap.n
    for x in rng.uniform(0.3, 1.0, size=(10, n)):
        exact = amap.jet(x)
        errs = []
        for h in (2e-2, 1e-2):
            field = GridField.sample(amap, x - h, x + h, (3,) * n)
            jet = fd_jet(field, (1,) * n)
            errs.append(max(np.abs(jet.egrad - exact.egrad).max(), np.abs(jet.ehess - exact.ehess).max()))
        assert errs[1] < 1e-2
        if errs[0] > 1e-9:
            assert errs[0] / errs[1] > 3.0


def test_fd_jet_exactness():
    field = GridField.sample(lambda x: x[..., 0], [0, 0], [1, 1], (11, 11))
    np.testing.assert_allclose(fd_jet(field, (4, 6)).egrad, [[1, 0]], atol=1e-10)
    field = GridField.sample(lambda x: x[..., 0] ** 2, [0, 0], [1, 1], (11, 11))
    assert fd_jet(field, (5, 5)).ehess[0, 0, 0] == pytest.approx(2, abs=1e-8)


def test_fd_jet_richardson():
    errs = []
    for h in (0.1, 0.05):
        field = GridField.sample(lambda x: np.sin(x[..., 0]), [0.5 - h, 0], [0.5 + h, 2 * h], (3, 3))
        errs.append(abs(fd_jet(field, (1, 1)).egrad[0, 0] - np.cos(0.5)))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)


def test_fd_jet_rejects_boundary():
    field = GridField.sample(lambda x: x[..., 0], [0, 0], [1, 1], (5, 5))
    for idx in [(0, 2), (2, 4), (1,)]:
        with pytest.raises(JetError):
            fd_jet(field, idx)


def test_fd_jets_matches_pointwise(rng):
    amap = get_map("wave")
    field = GridField.sample(amap, [0, 0], [1, 2], (7, 9))
    _, g, h = fd_jets(field)
    for idx in [(1, 1), (3, 4), (5, 7)]:
        jet = fd_jet(field, idx)
        k = tuple(i - 1 for i in idx)
        np.testing.assert_allclose(g[k], jet.egrad, atol=1e-12)
        np.testing.assert_allclose(h[k], jet.ehess, atol=1e-9)
    with pytest.raises(JetError):
        fd_jets(GridField.sample(amap, [0, 0], [1, 1], (2, 5)))
