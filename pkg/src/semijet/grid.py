"""Periodic Cartesian grid bookkeeping and isotropic finite-difference stencils.

Fields are plain ``numpy`` arrays in row-major multi-index order: axis 0 of an
array is the x direction, axis 1 is y (and axis 2 is z in 3D).  A scalar field
has shape ``spec.shape``; a vector field has shape ``(dim,) + spec.shape``.

The second-derivative stencils are the isotropic ones: in 2D their sum is the
9-point Laplacian with weights [1 4 1; 4 -20 4; 1 4 1]/(6 h^2), in 3D the
27-point analog (center -200, face 20, edge 6, corner 1, all over 48 h^2).
They are built from separable one-dimensional passes:

    d/dx    : central difference along x, transverse smoothing (1,4,1)/6
    d2/dx2  : (1,-2,1)/h^2 along x,     transverse smoothing (1,10,1)/12
    d2/dxdy : central differences along x and y

which gives every operator a leading error proportional to a power of the
Laplacian (isotropic to second order).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import UsageError

# one-dimensional kernels used to compose the isotropic operators
_SMOOTH_GRAD = (1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0)
_SMOOTH_CURV = (1.0 / 12.0, 10.0 / 12.0, 1.0 / 12.0)


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic Cartesian grid.

    Parameters
    ----------
    origin : tuple of float
        Lower corner of the domain; its length fixes the dimension (2 or 3).
    n : tuple of int
        Number of unique periodic nodes per axis (each >= 8).
    h : float
        Grid spacing, identical for all axes.  The extent of axis i is
        ``n[i] * h`` and the domain is ``[origin_i, origin_i + n_i h)``.
    """

    origin: tuple[float, ...]
    n: tuple[int, ...]
    h: float

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "n", tuple(int(m) for m in self.n))
        if len(self.origin) != len(self.n):
            raise UsageError("origin and n must have the same length")
        if self.dim not in (2, 3):
            raise UsageError(f"dimension must be 2 or 3, got {self.dim}")
        if any(m < 8 for m in self.n):
            raise UsageError(f"need at least 8 nodes per axis, got {self.n}")
        if not (self.h > 0.0 and np.isfinite(self.h)):
            raise UsageError(f"spacing must be positive and finite, got {self.h}")

    @classmethod
    def cube(cls, n: int, length: float = 4.0, lo: float = -2.0, dim: int = 2) -> "GridSpec":
        """Square/cubic grid on [lo, lo+length)^dim with n nodes per axis."""
        return cls(origin=(lo,) * dim, n=(n,) * dim, h=length / n)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple(m * self.h for m in self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    def axes(self) -> list[np.ndarray]:
        """Node coordinates along each axis."""
        return [self.origin[d] + self.h * np.arange(self.n[d]) for d in range(self.dim)]

    def meshgrid(self) -> list[np.ndarray]:
        """Full coordinate arrays of shape ``spec.shape`` (ij indexing)."""
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def node_positions(self) -> np.ndarray:
        """All node positions as an ``(size, dim)`` array in row-major order."""
        return np.stack([g.ravel() for g in self.meshgrid()], axis=-1)


def node_position(spec: GridSpec, index) -> np.ndarray:
    """Position of the node at a multi-index, ``origin + index * h``."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape != (spec.dim,):
        raise UsageError(f"index must have {spec.dim} entries")
    if np.any(idx < 0) or np.any(idx >= np.asarray(spec.n)):
        raise UsageError(f"index {tuple(idx)} outside grid {spec.n}")
    return np.asarray(spec.origin) + idx * spec.h


def wrap_points(spec: GridSpec, pts: np.ndarray) -> np.ndarray:
    """Map points into [origin, origin + extent) by modular arithmetic."""
    p = np.asarray(pts, dtype=np.float64)
    origin = np.asarray(spec.origin)
    extent = np.asarray(spec.extent)
    out = origin + np.mod(p - origin, extent)
    # guard the the mod(x, L) == L rounding corner case
    over = out - origin >= extent
    if np.any(over):
        out = np.where(over, origin + 0.0 * out, out)
    return out


def min_image(spec: GridSpec, dv: np.ndarray) -> np.ndarray:
    """Shortest periodic image of a displacement vector (array of them)."""
    extent = np.asarray(spec.extent)
    return dv - extent * np.round(dv / extent)


def locate_cells(spec: GridSpec, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Containing cell and local coordinate of each point.

    Returns ``(cells, frac)`` with ``cells`` an ``(N, dim)`` int array and
    ``frac`` in ``[0, 1]``.  Points exactly on a cell face are assigned to the
    lower-index cell (``frac == 1``), so nodes evaluate as cell corners.
    """
    p = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    nvec = np.asarray(spec.n)
    t = np.mod((p - np.asarray(spec.origin)) / spec.h, nvec)
    cells = np.floor(t).astype(np.int64)
    frac = t - cells
    on_face = frac == 0.0
    if np.any(on_face):
        cells = np.where(on_face, cells - 1, cells)
        frac = np.where(on_face, 1.0, frac)
    cells = np.mod(cells, nvec)
    return cells, frac


def apply_axis_kernel(f: np.ndarray, axis: int, weights) -> np.ndarray:
    """Apply a 3-tap periodic kernel (offsets -1, 0, +1) along one axis."""
    wm, w0, wp = weights
    out = np.roll(f, 1, axis=axis) * wm + np.roll(f, -1, axis=axis) * wp
    if w0 != 0.0:
        out += f * w0
    return out


def _smooth_transverse(f: np.ndarray, skip, weights) -> np.ndarray:
    out = f
    for ax in range(f.ndim):
        if ax in skip:
            continue
        out = apply_axis_kernel(out, ax, weights)
    return out


def isotropic_gradient_component(f: np.ndarray, spec: GridSpec, axis: int) -> np.ndarray:
    """Isotropic approximation of df/dx_axis."""
    c = 1.0 / (2.0 * spec.h)
    out = (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) * c
    return _smooth_transverse(out, (axis,), _SMOOTH_GRAD)


def isotropic_gradient(f: np.ndarray, spec: GridSpec) -> np.ndarray:
    """All gradient components, shape ``(dim,) + spec.shape``."""
    return np.stack([isotropic_gradient_component(f, spec, d) for d in range(spec.dim)])


def isotropic_second(f: np.ndarray, spec: GridSpec, axis: int) -> np.ndarray:
    """Isotropic approximation of d2f/dx_axis^2."""
    c = 1.0 / (spec.h * spec.h)
    out = (np.roll(f, -1, axis=axis) + np.roll(f, 1, axis=axis) - 2.0 * f) * c
    return _smooth_transverse(out, (axis,), _SMOOTH_CURV)


def isotropic_cross(f: np.ndarray, spec: GridSpec, ax1: int, ax2: int) -> np.ndarray:
    """Isotropic approximation of d2f/(dx_ax1 dx_ax2), ax1 != ax2."""
    c = 1.0 / (2.0 * spec.h)
    out = (np.roll(f, -1, axis=ax1) - np.roll(f, 1, axis=ax1)) * c
    out = (np.roll(out, -1, axis=ax2) - np.roll(out, 1, axis=ax2)) * c
    return _smooth_transverse(out, (ax1, ax2), _SMOOTH_GRAD)


def isotropic_laplacian(f: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Isotropic discrete Laplacian (9-point in 2D, 27-point in 3D)."""
    out = isotropic_second(f, spec, 0)
    for ax in range(1, spec.dim):
        out += isotropic_second(f, spec, ax)
    return out


def fourth_order_gradient_component(f: np.ndarray, spec: GridSpec, axis: int) -> np.ndarray:
    """Fourth-order central df/dx_axis (5-point), used by the jet curvature path."""
    c = 1.0 / (12.0 * spec.h)
    return (np.roll(f, 2, axis=axis) - 8.0 * np.roll(f, 1, axis=axis)
            + 8.0 * np.roll(f, -1, axis=axis) - np.roll(f, -2, axis=axis)) * c


def fourth_order_second(f: np.ndarray, spec: GridSpec, axis: int) -> np.ndarray:
    """Fourth-order central d2f/dx_axis^2 (5-point)."""
    c = 1.0 / (12.0 * spec.h * spec.h)
    return (-np.roll(f, 2, axis=axis) + 16.0 * np.roll(f, 1, axis=axis) - 30.0 * f
            + 16.0 * np.roll(f, -1, axis=axis) - np.roll(f, -2, axis=axis)) * c


def fourth_order_cross(f: np.ndarray, spec: GridSpec, ax1: int, ax2: int) -> np.ndarray:
    """Fourth-order mixed derivative by composing the 5-point first differences."""
    return fourth_order_gradient_component(
        fourth_order_gradient_component(f, spec, ax1), spec, ax2)


def dump_field_csv(path, spec: GridSpec, values: np.ndarray) -> None:
    """Debug dump: one row per node, ``i,j[,k],x,y[,z],value``."""
    values = np.asarray(values)
    if values.shape != spec.shape:
        raise UsageError(f"field shape {values.shape} != grid shape {spec.shape}")
    idx_names = ["i", "j", "k"][: spec.dim]
    ax_names = ["x", "y", "z"][: spec.dim]
    coords = spec.meshgrid()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(idx_names + ax_names + ["value"])
        for multi in np.ndindex(*spec.shape):
            row = list(multi) + [f"{coords[d][multi]:.17g}" for d in range(spec.dim)]
            row.append(f"{values[multi]:.17g}")
            writer.writerow(row)
