import os
import subprocess
import sys

import numpy as np
import pytest

from cclinf import kernels
from cclinf.grid import GridError, GridField


def field_3d(rng):
    return GridField.sample(lambda x: rng.normal(size=x.shape[:-1] + (2,)), [0, -1, 0.5], [1, 1, 2], (3, 4, 5))


def test_sample_masks_and_interior(rng):
    f = GridField.sample(lambda x: x[..., 0], [0, 0], [1, 1], (4, 5), interior=7.0)
    assert f.shape == (4, 5) and f.N == 1
    assert f.dirichlet_mask.sum() == 4 * 5 - 2 * 3
    assert np.all(f.values[~f.dirichlet_mask] == 7.0)
    np.testing.assert_allclose(f.point((3, 4)), [1, 1])
    assert f.volume == 1.0


def test_grid_validation():
    with pytest.raises(GridError):
        GridField([0, 0], [1, 0], np.zeros((3, 3, 1)), np.zeros((3, 3), bool))
    with pytest.raises(GridError):
        GridField([0, 0], [1, 1], np.zeros((3, 3)), np.zeros((3, 3), bool))
    with pytest.raises(GridError):
        GridField([0, 0], [1, 1], np.zeros((3, 3, 1)), np.zeros((3, 2), bool))


@pytest.mark.parametrize("suffix", [".npz", ".csv"])
def test_save_load_round_trip(suffix, tmp_path, rng):
    f = field_3d(rng)
    path = tmp_path / f"field{suffix}"
    f.save(path)
    g = GridField.load(path)
    np.testing.assert_array_equal(g.values, f.values)
    np.testing.assert_array_equal(g.dirichlet_mask, f.dirichlet_mask)
    np.testing.assert_array_equal(g.lo, f.lo)
    np.testing.assert_array_equal(g.hi, f.hi)


def test_backend_registry():
    assert "python" in kernels.available_backends()
    assert kernels.get_backend("python").name == "python"
    assert kernels.BACKEND in kernels.available_backends()
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_pure_python_switch():
    env = {**os.environ, "CCLINF_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "from cclinf import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
