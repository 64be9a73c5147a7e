"""Backend selection for the hot kernels.

The compiled extension ``_ckernels`` is used when it imports and
``CCLINF_PURE_PYTHON`` is unset; otherwise the numpy fallback runs.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

from . import _kernels_py

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_FORCE_PY = os.environ.get("CCLINF_PURE_PYTHON", "").strip().lower() not in ("", "0", "false", "no")

BACKEND = "compiled" if (_ckernels is not None and not _FORCE_PY) else "python"


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if _ckernels is not None else [])


def _py_backend():
    def lattice_bfs(frame, lo, spacing, shape, controls, dt, start, target_flat, max_layers,
                    parent, control_of):
        return _kernels_py.lattice_bfs(frame.coeff, lo, spacing, shape, controls, dt, start,
                                       target_flat, max_layers, parent, control_of)

    return SimpleNamespace(name="python", lattice_bfs=lattice_bfs,
                           simplex_energy=_kernels_py.simplex_energy)


def _c_backend():
    def lattice_bfs(frame, lo, spacing, shape, controls, dt, start, target_flat, max_layers,
                    parent, control_of):
        if frame.linear is None:
            return _kernels_py.lattice_bfs(frame.coeff, lo, spacing, shape, controls, dt, start,
                                           target_flat, max_layers, parent, control_of)
        c0, c1 = frame.linear
        return _ckernels.lattice_bfs_linear(
            np.ascontiguousarray(c0), np.ascontiguousarray(c1),
            np.ascontiguousarray(lo, dtype=float), np.ascontiguousarray(spacing, dtype=float),
            np.ascontiguousarray(shape, dtype=np.int64), np.ascontiguousarray(controls, dtype=float),
            float(dt), np.ascontiguousarray(start, dtype=float), int(target_flat), int(max_layers),
            parent, control_of)

    def simplex_energy(u, F, corners, offsets, perm_axes, spacing, p):
        return _ckernels.simplex_energy(
            np.ascontiguousarray(u, dtype=float), np.ascontiguousarray(F, dtype=float),
            np.ascontiguousarray(corners, dtype=np.int64), np.ascontiguousarray(offsets, dtype=np.int64),
            np.ascontiguousarray(perm_axes, dtype=np.int64), np.ascontiguousarray(spacing, dtype=float),
            float(p))

    return SimpleNamespace(name="compiled", lattice_bfs=lattice_bfs, simplex_energy=simplex_energy)


def get_backend(name: str | None = None):
    """Kernel namespace for ``name`` (``"python"`` or ``"compiled"``); default is :data:`BACKEND`."""
    name = name or BACKEND
    if name == "python":
        return _py_backend()
    if name == "compiled":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _c_backend()
    raise ValueError(f"unknown backend {name!r}")
