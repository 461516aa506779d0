"""Uniform tensor-lattice functions with axis roles and a small on-disk format.

A GridFunction stores cell-centered values over a box.  Axis roles are 't',
'x' or 'v'; solvers and measurement routines use the roles to find the time
axis and the velocity block without positional conventions.

On-disk format: a one-line JSON header (axis roles, bounds, counts, dtype,
endianness note) terminated by a newline, followed by the value array as
row-major (C-order) little-endian float64.  A CSV export is provided for
plotting; floats are written with 17 significant digits.
"""

import json
from dataclasses import dataclass

import numpy as np

__all__ = ["Axis", "GridFunction"]

_MAGIC = "kinlab-grid-v1"


@dataclass(frozen=True)
class Axis:
    role: str      # 't' | 'x' | 'v'
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.role not in ("t", "x", "v"):
            raise ValueError(f"unknown axis role {self.role!r}")
        if not (self.hi > self.lo):
            raise ValueError("axis bounds must satisfy lo < hi")
        if int(self.n) < 1:
            raise ValueError("axis needs at least one cell")
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self):
        return (self.hi - self.lo) / self.n

    def centers(self):
        return self.lo + (np.arange(self.n) + 0.5) * self.h


class GridFunction:
    """Values on a uniform cell-centered lattice over a box."""

    def __init__(self, axes, values=None):
        self.axes = tuple(axes)
        shape = tuple(a.n for a in self.axes)
        if values is None:
            values = np.zeros(shape)
        values = np.asarray(values, dtype=float)
        if values.shape != shape:
            raise ValueError(f"value shape {values.shape} != lattice shape {shape}")
        self.values = values

    @property
    def shape(self):
        return self.values.shape

    @property
    def cell_volume(self):
        vol = 1.0
        for a in self.axes:
            vol *= a.h
        return vol

    def roles(self):
        return tuple(a.role for a in self.axes)

    def axis_indices(self, role):
        return [i for i, a in enumerate(self.axes) if a.role == role]

    def centers(self):
        """Per-axis cell-center coordinate arrays."""
        return [a.centers() for a in self.axes]

    def meshgrid(self):
        return np.meshgrid(*self.centers(), indexing="ij")

    def copy_with(self, values):
        return GridFunction(self.axes, values)

    # ---- calculus ----------------------------------------------------------

    def integrate(self, mask=None):
        v = self.values if mask is None else self.values[mask]
        return float(v.sum()) * self.cell_volume

    def norm_lp(self, p, mask=None):
        v = self.values if mask is None else self.values[mask]
        if np.isinf(p):
            return float(np.abs(v).max()) if v.size else 0.0
        return float((np.abs(v) ** p).sum() * self.cell_volume) ** (1.0 / p)

    def sample(self, points):
        """Multilinear interpolation at points of shape (..., ndim).

        Points outside the box evaluate to 0; the fraction of queried points
        that fell outside is returned alongside the values.
        """
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, len(self.axes))
        inside = np.ones(flat.shape[0], dtype=bool)
        idx = []
        frac = []
        for k, a in enumerate(self.axes):
            u = (flat[:, k] - a.lo) / a.h - 0.5
            inside &= (flat[:, k] >= a.lo) & (flat[:, k] <= a.hi)
            i0 = np.floor(u).astype(int)
            f = u - i0
            # clamp interpolation stencil to the lattice (constant extrapolation
            # inside the half-cell boundary layer)
            f = np.where(i0 < 0, 0.0, f)
            f = np.where(i0 > a.n - 2, 1.0, f)
            i0 = np.clip(i0, 0, max(a.n - 2, 0))
            idx.append(i0)
            frac.append(f)
        out = np.zeros(flat.shape[0])
        for corner in range(2 ** len(self.axes)):
            w = np.ones(flat.shape[0])
            loc = []
            for k in range(len(self.axes)):
                bit = (corner >> k) & 1
                w = w * (frac[k] if bit else 1.0 - frac[k])
                loc.append(np.minimum(idx[k] + bit, self.axes[k].n - 1))
            out += w * self.values[tuple(loc)]
        out[~inside] = 0.0
        outside_fraction = float((~inside).mean()) if flat.size else 0.0
        return out.reshape(pts.shape[:-1]), outside_fraction

    # ---- persistence -------------------------------------------------------

    def save(self, path):
        header = {
            "magic": _MAGIC,
            "axes": [{"role": a.role, "lo": a.lo, "hi": a.hi, "n": a.n}
                     for a in self.axes],
            "dtype": "float64",
            "order": "C",
            "endianness": "little",
        }
        with open(path, "wb") as fh:
            fh.write((json.dumps(header) + "\n").encode("utf-8"))
            fh.write(self.values.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            if header.get("magic") != _MAGIC:
                raise ValueError("not a kinlab grid file")
            axes = [Axis(a["role"], a["lo"], a["hi"], a["n"]) for a in header["axes"]]
            shape = tuple(a.n for a in axes)
            raw = fh.read()
        values = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(float)
        return cls(axes, values)

    def to_csv(self, path):
        """One row per cell: coordinates then value, 17 significant digits."""
        grids = self.meshgrid()
        cols = [g.ravel() for g in grids] + [self.values.ravel()]
        names = [f"{a.role}{i}" for i, a in enumerate(self.axes)] + ["value"]
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for row in zip(*cols):
                fh.write(",".join(f"{c:.17g}" for c in row) + "\n")
