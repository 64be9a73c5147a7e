"""Sampled maps on rectangular lattices."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class GridError(ValueError):
    pass


@dataclass
class GridField:
    """Values of a map ``R^n -> R^N`` on the nodes of a box lattice.

    ``values`` has shape ``shape + (N,)``; ``dirichlet_mask`` marks frozen
    nodes (by default the lattice boundary).
    """

    lo: np.ndarray
    hi: np.ndarray
    values: np.ndarray
    dirichlet_mask: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.dirichlet_mask = np.asarray(self.dirichlet_mask, dtype=bool)
        n = self.lo.shape[0]
        if self.hi.shape != (n,) or np.any(self.hi <= self.lo):
            raise GridError("box must satisfy lo < hi componentwise")
        if self.values.ndim != n + 1:
            raise GridError(f"values must have shape lattice + (N,), got {self.values.shape}")
        if self.dirichlet_mask.shape != self.shape:
            raise GridError("dirichlet_mask must match the lattice shape")
        if any(s < 2 for s in self.shape):
            raise GridError("lattice needs at least 2 nodes per axis")

    @property
    def n(self) -> int:
        return self.lo.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[-1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[:-1]

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.array(self.shape) - 1)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, s) for a, b, s in zip(self.lo, self.hi, self.shape)]

    def coords(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def point(self, index) -> np.ndarray:
        return self.lo + np.asarray(index) * self.spacing

    def copy(self) -> "GridField":
        return GridField(self.lo.copy(), self.hi.copy(), self.values.copy(), self.dirichlet_mask.copy())

    def with_values(self, values) -> "GridField":
        return GridField(self.lo, self.hi, np.asarray(values, dtype=float).reshape(self.values.shape),
                         self.dirichlet_mask)

    @classmethod
    def boundary_mask(cls, shape) -> np.ndarray:
        mask = np.zeros(shape, dtype=bool)
        for ax in range(len(shape)):
            sl = [slice(None)] * len(shape)
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        return mask

    @classmethod
    def sample(cls, fn, lo, hi, shape, interior=None) -> "GridField":
        """Sample ``fn`` (stacked points -> ``(..., N)``) on the lattice.

        ``interior`` replaces the values of non-boundary nodes: a scalar or a
        callable like ``fn``. Boundary nodes are frozen.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        shape = tuple(int(s) for s in shape)
        axes = [np.linspace(a, b, s) for a, b, s in zip(lo, hi, shape)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = np.asarray(fn(pts), dtype=float)
        if vals.ndim == len(shape):
            vals = vals[..., None]
        mask = cls.boundary_mask(shape)
        if interior is not None:
            inner = interior(pts) if callable(interior) else np.full(vals.shape, float(interior))
            inner = np.asarray(inner, dtype=float).reshape(vals.shape)
            vals = np.where(mask[..., None], vals, inner)
        return cls(lo, hi, vals, mask)

    # persistence

    def save(self, path) -> None:
        path = Path(path)
        if path.suffix == ".csv":
            path.write_text(self.to_csv())
        else:
            with open(path, "wb") as fh:
                np.savez(fh, lo=self.lo, hi=self.hi, values=self.values, dirichlet_mask=self.dirichlet_mask)

    @classmethod
    def load(cls, path) -> "GridField":
        path = Path(path)
        if path.suffix == ".csv":
            return cls.from_csv(path.read_text())
        with np.load(path) as data:
            return cls(data["lo"], data["hi"], data["values"], data["dirichlet_mask"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow([f"#lo={' '.join(map(repr, self.lo.tolist()))}",
                    f"hi={' '.join(map(repr, self.hi.tolist()))}",
                    f"shape={' '.join(map(str, self.shape))}"])
        w.writerow([f"x{a}" for a in range(self.n)] + [f"u{b}" for b in range(self.N)] + ["frozen"])
        pts = self.coords().reshape(-1, self.n)
        vals = self.values.reshape(-1, self.N)
        for p, v, f in zip(pts, vals, self.dirichlet_mask.ravel()):
            w.writerow([repr(float(t)) for t in p] + [repr(float(t)) for t in v] + [int(f)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridField":
        rows = list(csv.reader(io.StringIO(text)))
        meta = dict(item.lstrip("#").split("=", 1) for item in rows[0])
        lo = np.array(meta["lo"].split(), dtype=float)
        hi = np.array(meta["hi"].split(), dtype=float)
        shape = tuple(int(s) for s in meta["shape"].split())
        n = len(shape)
        body = np.array(rows[2:], dtype=float)
        values = body[:, n:-1].reshape(shape + (-1,))
        mask = body[:, -1].astype(bool).reshape(shape)
        return cls(lo, hi, values, mask)
