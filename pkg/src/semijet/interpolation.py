"""Cubic cell interpolants on periodic grids.

Two families are provided:

* jet interpolants for the level set: bicubic/tricubic Hermite built from
  corner values and tracked gradients (P1 jet), with the mixed derivatives
  approximated cell-locally from differences of the gradient data; or a
  tensor-product cubic through the 4^dim-node neighborhood when only values
  are tracked (0 jet);
* node interpolants for auxiliary fields (velocity, source terms): always the
  tensor-product cubic through the 4^dim-node neighborhood.

Everything evaluates in batch: ``sample_*`` functions take ``(N, dim)`` point
arrays and locate, gather and contract with numpy.  ``CellInterpolant`` wraps
the monomial coefficient tensor of a single cell for the scalar API.

Local coordinates are ``t = (x - cell_corner)/h`` in ``[0, 1]``; evaluation
slightly outside the cell (|t| overshoot up to ~0.5) is plain polynomial
extrapolation, which departure points landing near faces rely on.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .grid import GridSpec, locate_cells, min_image
from .jet import JetField

# ---------------------------------------------------------------------------
# one-dimensional bases on the unit interval
# ---------------------------------------------------------------------------


def _hermite_basis(t):
    """Value basis (f0, f1) and slope basis (g0, g1) of cubic Hermite."""
    t2 = t * t
    t3 = t2 * t
    f0 = 1.0 - 3.0 * t2 + 2.0 * t3
    f1 = 3.0 * t2 - 2.0 * t3
    g0 = t - 2.0 * t2 + t3
    g1 = t3 - t2
    return f0, f1, g0, g1


def _hermite_basis_deriv(t):
    t2 = t * t
    df0 = 6.0 * (t2 - t)
    df1 = 6.0 * (t - t2)
    dg0 = 1.0 - 4.0 * t + 3.0 * t2
    dg1 = 3.0 * t2 - 2.0 * t
    return df0, df1, dg0, dg1


def _lagrange_basis(t):
    """Cubic Lagrange through nodes at t = -1, 0, 1, 2."""
    t2 = t * t
    t3 = t2 * t
    lm = -(t3 - 3.0 * t2 + 2.0 * t) / 6.0
    l0 = (t3 - 2.0 * t2 - t + 2.0) / 2.0
    l1 = -(t3 - t2 - 2.0 * t) / 2.0
    l2 = (t3 - t) / 6.0
    return lm, l0, l1, l2


def _lagrange_basis_deriv(t):
    t2 = t * t
    dlm = -(3.0 * t2 - 6.0 * t + 2.0) / 6.0
    dl0 = (3.0 * t2 - 4.0 * t - 1.0) / 2.0
    dl1 = -(3.0 * t2 - 2.0 * t - 2.0) / 2.0
    dl2 = (3.0 * t2 - 1.0) / 6.0
    return dlm, dl0, dl1, dl2


# monomial coefficients of the basis functions, one column per basis function
_HERMITE_TO_MONOMIAL = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [-3.0, 3.0, -2.0, -1.0],
    [2.0, -2.0, 1.0, 1.0],
])
_LAGRANGE_TO_MONOMIAL = np.array([
    [0.0, 1.0, 0.0, 0.0],
    [-1.0 / 3.0, -0.5, 1.0, -1.0 / 6.0],
    [0.5, -1.0, 0.5, 0.0],
    [-1.0 / 6.0, 0.5, -0.5, 1.0 / 6.0],
])


# ---------------------------------------------------------------------------
# gathering and contraction helpers
# ---------------------------------------------------------------------------


def _strides(shape):
    s = [1] * len(shape)
    for d in range(len(shape) - 2, -1, -1):
        s[d] = s[d + 1] * shape[d + 1]
    return s


def _contract(data, weights, dim):
    """Contract a per-point data tensor against per-axis weight 4-tuples.

    ``data`` is a nested list (depth ``dim``, fan-out 4) of (N,) arrays,
    ``weights[d]`` a list of four (N,) arrays.  Axes are contracted last
    first so intermediate results are shared-shaped partial sums.
    """
    level = data
    for d in range(dim - 1, -1, -1):
        w = weights[d]
        if d == 0:
            return sum(level[p] * w[p] for p in range(4))
        nxt = []
        for entry in _nested_iter(level, d):
            entry_out = sum(entry[p] * w[p] for p in range(4))
            nxt.append(entry_out)
        level = _renest(nxt, d)
    raise AssertionError("unreachable")


def _nested_iter(level, depth):
    if depth == 1:
        return level
    out = []
    for sub in level:
        out.extend(_nested_iter(sub, depth - 1))
    return out


def _renest(flat, depth):
    if depth == 1:
        return flat
    step = len(flat) // 4
    return [_renest(flat[i * step:(i + 1) * step], depth - 1) for i in range(4)]


def _hermite_corner_data(jet: JetField, cells: np.ndarray):
    """Per-corner (phi, grad components, mixed derivatives) for given cells.

    Returns a dict keyed by slot tuples ``s`` in {0,1}^dim mapping corner
    tuples to (N,) arrays: slot (0,..,0) is phi, a single 1 marks a first
    derivative, two 1s the cell-based mixed derivative, three the triple.
    """
    spec = jet.grid
    dim = spec.dim
    h = spec.h
    strides = _strides(spec.shape)
    phi_flat = jet.phi.reshape(-1)
    grad_flat = [jet.grad[d].reshape(-1) for d in range(dim)]

    idx = [[cells[:, d] % spec.n[d], (cells[:, d] + 1) % spec.n[d]] for d in range(dim)]
    corners = list(itertools.product((0, 1), repeat=dim))
    flat = {}
    for c in corners:
        f = idx[0][c[0]] * strides[0]
        for d in range(1, dim):
            f = f + idx[d][c[d]] * strides[d]
        flat[c] = f

    phi = {c: phi_flat[flat[c]] for c in corners}
    grad = {(d, c): grad_flat[d][flat[c]] for d in range(dim) for c in corners}

    def in_cell_diff(comp, c, along):
        hi = list(c)
        lo = list(c)
        hi[along] = 1
        lo[along] = 0
        return (grad[(comp, tuple(hi))] - grad[(comp, tuple(lo))]) / h

    data = {(0,) * dim: phi}
    for d in range(dim):
        s = [0] * dim
        s[d] = 1
        data[tuple(s)] = {c: grad[(d, c)] for c in corners}
    for i, j in itertools.combinations(range(dim), 2):
        s = [0] * dim
        s[i] = s[j] = 1
        # edge-center mixed derivatives from the corner gradients, averaged
        data[tuple(s)] = {
            c: 0.5 * (in_cell_diff(j, c, i) + in_cell_diff(i, c, j)) for c in corners
        }
    if dim == 3:
        def triple(c):
            acc = 0.0
            for k in range(3):
                i, j = [ax for ax in range(3) if ax != k]
                hi_hi = list(c); hi_hi[i] = 1; hi_hi[j] = 1
                lo_hi = list(c); lo_hi[i] = 0; lo_hi[j] = 1
                hi_lo = list(c); hi_lo[i] = 1; hi_lo[j] = 0
                lo_lo = list(c); lo_lo[i] = 0; lo_lo[j] = 0
                acc = acc + (grad[(k, tuple(hi_hi))] - grad[(k, tuple(lo_hi))]
                             - grad[(k, tuple(hi_lo))] + grad[(k, tuple(lo_lo))])
            return acc / (3.0 * h * h)
        data[(1, 1, 1)] = {c: triple(c) for c in corners}
    return data, corners


def _hermite_data_tensor(jet: JetField, cells: np.ndarray):
    """Nested-list data tensor indexed by p_d = corner_d + 2*slot_d per axis."""
    dim = jet.grid.dim
    data, corners = _hermite_corner_data(jet, cells)

    def build(depth, p_prefix):
        if depth == dim:
            s = tuple(p // 2 for p in p_prefix)
            c = tuple(p % 2 for p in p_prefix)
            return data[s][c]
        return [build(depth + 1, p_prefix + (p,)) for p in range(4)]

    return build(0, ())


def _hermite_weights(frac: np.ndarray, h: float, dim: int, deriv_axis=None):
    """Per-axis weight 4-lists [f0, f1, h*g0, h*g1] (slot order corner+2*slot)."""
    weights = []
    for d in range(dim):
        t = frac[:, d]
        if d == deriv_axis:
            df0, df1, dg0, dg1 = _hermite_basis_deriv(t)
            weights.append([df0 / h, df1 / h, dg0, dg1])
        else:
            f0, f1, g0, g1 = _hermite_basis(t)
            weights.append([f0, f1, h * g0, h * g1])
    return weights


def _lagrange_data_tensor(values: np.ndarray, spec: GridSpec, cells: np.ndarray):
    dim = spec.dim
    strides = _strides(spec.shape)
    flat_vals = values.reshape(-1)
    idx = [[(cells[:, d] + m) % spec.n[d] for m in (-1, 0, 1, 2)] for d in range(dim)]

    def build(depth, acc):
        if depth == dim:
            return flat_vals[acc]
        return [build(depth + 1, acc + idx[depth][p] * strides[depth]) for p in range(4)]

    zero = np.zeros(cells.shape[0], dtype=np.int64)
    return build(0, zero)


def _lagrange_weights(frac: np.ndarray, h: float, dim: int, deriv_axis=None):
    weights = []
    for d in range(dim):
        t = frac[:, d]
        if d == deriv_axis:
            weights.append([w / h for w in _lagrange_basis_deriv(t)])
        else:
            weights.append(list(_lagrange_basis(t)))
    return weights


# ---------------------------------------------------------------------------
# batch samplers
# ---------------------------------------------------------------------------


def sample_jet(jet: JetField, pts: np.ndarray, gradient: bool = False):
    """Evaluate the jet's cell interpolant at arbitrary points.

    Returns values (N,) or ``(values, grads)`` with grads ``(N, dim)`` when
    ``gradient`` is requested.  P1 jets use the Hermite interpolant, 0 jets
    the 4^dim-node cubic.
    """
    spec = jet.grid
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    cells, frac = locate_cells(spec, pts)
    if jet.order == "p1":
        data = _hermite_data_tensor(jet, cells)
        make_w = _hermite_weights
    else:
        data = _lagrange_data_tensor(jet.phi, spec, cells)
        make_w = _lagrange_weights
    vals = _contract(data, make_w(frac, spec.h, spec.dim), spec.dim)
    if not gradient:
        return vals
    grads = np.empty((pts.shape[0], spec.dim))
    for d in range(spec.dim):
        grads[:, d] = _contract(data, make_w(frac, spec.h, spec.dim, deriv_axis=d), spec.dim)
    return vals, grads


def sample_scalar(values: np.ndarray, spec: GridSpec, pts: np.ndarray,
                  gradient: bool = False):
    """Evaluate the 4^dim-node cubic node interpolant of a scalar field."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    cells, frac = locate_cells(spec, pts)
    data = _lagrange_data_tensor(np.asarray(values), spec, cells)
    vals = _contract(data, _lagrange_weights(frac, spec.h, spec.dim), spec.dim)
    if not gradient:
        return vals
    grads = np.empty((pts.shape[0], spec.dim))
    for d in range(spec.dim):
        grads[:, d] = _contract(
            data, _lagrange_weights(frac, spec.h, spec.dim, deriv_axis=d), spec.dim)
    return vals, grads


def sample_vector(values: np.ndarray, spec: GridSpec, pts: np.ndarray) -> np.ndarray:
    """Component-wise node interpolation of a (dim, ...) vector field."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    cells, frac = locate_cells(spec, pts)
    weights = _lagrange_weights(frac, spec.h, spec.dim)
    out = np.empty((pts.shape[0], spec.dim))
    for comp in range(spec.dim):
        data = _lagrange_data_tensor(np.asarray(values[comp]), spec, cells)
        out[:, comp] = _contract(data, weights, spec.dim)
    return out


# ---------------------------------------------------------------------------
# single-cell interpolant objects
# ---------------------------------------------------------------------------


@dataclass
class CellInterpolant:
    """Cubic polynomial of one cell, monomial coefficients in local coords."""

    spec: GridSpec
    cell: tuple[int, ...]
    coeffs: np.ndarray  # shape (4,)*dim, index k along axis d multiplies t_d^k

    def _local(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        corner = np.asarray(self.spec.origin) + np.asarray(self.cell) * self.spec.h
        center = corner + 0.5 * self.spec.h
        rel = min_image(self.spec, pts - center) + 0.5 * self.spec.h
        return rel / self.spec.h

    def eval(self, pts: np.ndarray) -> np.ndarray:
        """Polynomial value at points (periodically wrapped near the cell)."""
        t = self._local(pts)
        return _poly_eval(self.coeffs, t)

    def eval_gradient(self, pts: np.ndarray) -> np.ndarray:
        """Analytic gradient of the polynomial at points."""
        t = self._local(pts)
        out = np.empty_like(t)
        for d in range(self.spec.dim):
            out[:, d] = _poly_eval(_poly_diff(self.coeffs, d), t) / self.spec.h
        return out


def _poly_eval(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    dim = t.shape[1]
    if dim == 2:
        out = 0.0
        for k in range(3, -1, -1):
            row = 0.0
            for l in range(3, -1, -1):
                row = row * t[:, 1] + coeffs[k, l]
            out = out * t[:, 0] + row
        return out
    out = 0.0
    for k in range(3, -1, -1):
        plane = 0.0
        for l in range(3, -1, -1):
            row = 0.0
            for m in range(3, -1, -1):
                row = row * t[:, 2] + coeffs[k, l, m]
            plane = plane * t[:, 1] + row
        out = out * t[:, 0] + plane
    return out


def _poly_diff(coeffs: np.ndarray, axis: int) -> np.ndarray:
    powers = np.arange(coeffs.shape[axis])
    shaped = powers.reshape([-1 if d == axis else 1 for d in range(coeffs.ndim)])
    d = coeffs * shaped
    d = np.roll(d, -1, axis=axis)
    idx = [slice(None)] * coeffs.ndim
    idx[axis] = -1
    d[tuple(idx)] = 0.0
    return d


def build_jet_interpolant(jet: JetField, cell) -> CellInterpolant:
    """Cell interpolant of the jet: Hermite for P1, 16/64-node cubic for 0."""
    spec = jet.grid
    cell = tuple(int(c) % spec.n[d] for d, c in enumerate(cell))
    cells = np.asarray([cell], dtype=np.int64)
    if jet.order == "p1":
        data = _hermite_data_tensor(jet, cells)
        transform = _HERMITE_TO_MONOMIAL
        scale = np.array([1.0, 1.0, spec.h, spec.h])
    else:
        data = _lagrange_data_tensor(jet.phi, spec, cells)
        transform = _LAGRANGE_TO_MONOMIAL
        scale = np.ones(4)
    return CellInterpolant(spec, cell, _to_monomial(data, transform, scale, spec.dim))


def build_node_interpolant(values: np.ndarray, spec: GridSpec, cell) -> CellInterpolant:
    """4^dim-node cubic through nodal values around a cell (P_u / P_S style)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != spec.shape:
        raise UsageError("build_node_interpolant takes one scalar component")
    cell = tuple(int(c) % spec.n[d] for d, c in enumerate(cell))
    cells = np.asarray([cell], dtype=np.int64)
    data = _lagrange_data_tensor(values, spec, cells)
    return CellInterpolant(spec, cell,
                           _to_monomial(data, _LAGRANGE_TO_MONOMIAL, np.ones(4), spec.dim))


def _to_monomial(data, transform, scale, dim):
    """Dense (4,)*dim coefficient tensor from a nested single-point tensor."""
    d = np.empty((4,) * dim)
    for p in itertools.product(range(4), repeat=dim):
        entry = data
        for q in p:
            entry = entry[q]
        s = 1.0
        for q in p:
            s *= scale[q]
        d[p] = entry[0] * s
    out = d
    for ax in range(dim):
        out = np.tensordot(transform, out, axes=([1], [ax]))
        out = np.moveaxis(out, 0, ax)
    return out


# ---------------------------------------------------------------------------
# per-edge cubic restrictions (sub-grid crossing detection)
# ---------------------------------------------------------------------------


def edge_cubics(jet: JetField, axis: int) -> np.ndarray:
    """Monomial coefficients of the interpolant restricted to grid edges.

    Returns ``(4,) + shape``: entry ``[:, i, j(, k)]`` is the cubic in the
    local coordinate of the edge from the node to its +axis neighbor.  For a
    P1 jet this is the Hermite restriction (corner values and gradients);
    for a 0 jet the Lagrange cubic through the four collinear nodes.
    """
    phi = jet.phi
    if jet.order == "p1":
        v0 = phi
        v1 = np.roll(phi, -1, axis=axis)
        d0 = jet.grad[axis] * jet.grid.h
        d1 = np.roll(jet.grad[axis], -1, axis=axis) * jet.grid.h
        c0 = v0
        c1 = d0
        c2 = -3.0 * v0 + 3.0 * v1 - 2.0 * d0 - d1
        c3 = 2.0 * v0 - 2.0 * v1 + d0 + d1
        return np.stack([c0, c1, c2, c3])
    fm = np.roll(phi, 1, axis=axis)
    f0 = phi
    f1 = np.roll(phi, -1, axis=axis)
    f2 = np.roll(phi, -2, axis=axis)
    c0 = f0
    c1 = -fm / 3.0 - f0 / 2.0 + f1 - f2 / 6.0
    c2 = fm / 2.0 - f0 + f1 / 2.0
    c3 = -fm / 6.0 + f0 / 2.0 - f1 / 2.0 + f2 / 6.0
    return np.stack([c0, c1, c2, c3])
