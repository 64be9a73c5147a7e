import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cclinf.frames import (FrameError, central_difference_dcoeff, eval_frame, euclidean, frame_info,
                           get_frame, grushin, heisenberg, hormander_rank, lie_bracket, make_frame)

coords = st.floats(-3, 3, allow_nan=False)


def test_euclidean_eval_is_identity():
    F = eval_frame(euclidean(2), [0.3, -7.0])
    np.testing.assert_array_equal(F, np.eye(2))
    assert not np.any(euclidean(3).derivative(np.ones(3)))


def test_heisenberg_eval():
    H = heisenberg()
    np.testing.assert_array_equal(eval_frame(H, [0, 0, 0]), [[1, 0, 0], [0, 1, 0]])
    np.testing.assert_allclose(eval_frame(H, [1, 2, 0]), [[1, 0, -1], [0, 1, 0.5]])


def test_eval_rejects_bad_points():
    with pytest.raises(FrameError):
        eval_frame(heisenberg(), [1.0, 2.0])
    with pytest.raises(FrameError):
        eval_frame(euclidean(2), [np.nan, 0.0])


def test_get_frame_names():
    assert get_frame("euclidean:4").n == 4
    assert get_frame("Heisenberg1").m == 2
    assert get_frame("grushin").weights == (1, 2)
    for bad in ("euclidean:x", "euclidean:0", "sphere"):
        with pytest.raises(FrameError):
            get_frame(bad)


def test_frame_rejects_bad_sizes():
    with pytest.raises(FrameError):
        make_frame(lambda x: x, n=2, m=3)


@pytest.mark.parametrize("frame, x, expected", [
    (euclidean(2), [0.4, 0.1], [0, 0]),
    (heisenberg(), [0.7, -1.2, 3.0], [0, 0, 1]),
    (grushin(), [0.0, 0.0], [0, 1]),
])
def test_brackets(frame, x, expected):
    res = lie_bracket(frame, 0, 1, x)
    np.testing.assert_allclose(res.vector, expected, atol=1e-14)
    assert res.order >= 1


def test_bracket_index_range():
    with pytest.raises(FrameError):
        lie_bracket(heisenberg(), 0, 2, np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(st.tuples(coords, coords, coords))
def test_bracket_antisymmetry(x):
    H = heisenberg()
    for i in range(2):
        for j in range(2):
            np.testing.assert_array_equal(lie_bracket(H, i, j, x).vector, -lie_bracket(H, j, i, x).vector)


def test_hormander_rank_examples():
    assert hormander_rank(euclidean(2), [0.2, 0.5], 1) == 2
    assert hormander_rank(heisenberg(), np.zeros(3), 1) == 2
    assert hormander_rank(heisenberg(), np.zeros(3), 2) == 3
    assert hormander_rank(grushin(), [0.0, 0.0], 1) == 1
    assert hormander_rank(grushin(), [0.0, 0.0], 2) == 2
    with pytest.raises(FrameError):
        hormander_rank(grushin(), [0.0, 0.0], 0)


def test_hormander_rank_monotone(builtin_frame, rng):
    for x in rng.uniform(-1, 1, size=(5, builtin_frame.n)):
        ranks = [hormander_rank(builtin_frame, x, k) for k in (1, 2, 3)]
        assert ranks == sorted(ranks)
        assert ranks[-1] == builtin_frame.n


def _curved_frame():
    def coeff(x):
        a, b = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = np.cos(b)
        out[..., 0, 1] = np.sin(a * b)
        out[..., 1, 1] = 1 + a ** 2
        return out
    return coeff


def test_fd_dcoeff_second_order(rng):
    """Central differences of coeff approach dcoeff with error ratio near 4 under halving."""
    coeff = _curved_frame()
    exact = central_difference_dcoeff(coeff, 2, step=1e-6)
    for x in rng.uniform(-1, 1, size=(20, 2)):
        ref = exact(x)
        e1 = np.abs(central_difference_dcoeff(coeff, 2, step=0.02)(x) - ref).max()
        e2 = np.abs(central_difference_dcoeff(coeff, 2, step=0.01)(x) - ref).max()
        if e1 > 1e-7:
            assert 3.5 < e1 / e2 < 4.5


def test_builtin_dcoeff_matches_differences(builtin_frame, rng):
    fd = central_difference_dcoeff(builtin_frame.coeff, builtin_frame.n)
    for x in rng.uniform(-2, 2, size=(100, builtin_frame.n)):
        np.testing.assert_allclose(fd(x), builtin_frame.derivative(x), atol=1e-9)


def test_make_frame_without_dcoeff():
    fr = make_frame(_curved_frame(), n=2, m=2, name="curved")
    x = np.array([0.3, 0.8])
    dF = fr.derivative(x)
    assert dF.shape == (2, 2, 2)
    assert dF[1, 1, 0] == pytest.approx(2 * 0.3, abs=1e-8)


def test_frame_info_contents():
    info = frame_info(heisenberg(), [1, 2, 0])
    assert info["brackets"]["0,1"] == pytest.approx([0, 0, 1])
    assert info["coeff"][0] == pytest.approx([1, 0, -1])
