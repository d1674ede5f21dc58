"""Interface geometry: closest points, reinitialization, curvature, measures.

The interface is the zero set of the jet's cell interpolant, not of the nodal
values: edge crossings are found from the cubic restriction of the interpolant
to grid edges, which also catches sub-grid slivers where both edge endpoints
have the same sign.  Closest points are computed by a projected Newton
iteration seeded from the nearest edge crossing, with a bisection fallback
along the nodal gradient direction.

Reinitialization rebuilds the jet as the signed distance to that zero set in
a band of ``width`` grid spacings around the interface; outside, values are
clamped to ``±width·h``.  Integral measures (enclosed volume, interface
length/area, interface-averaged curvature) use a cosine-smoothed Heaviside /
delta pair of half-width ``1.5 h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import InterfaceLost, UsageError
from .grid import (GridSpec, isotropic_cross, isotropic_gradient,
                   isotropic_gradient_component, isotropic_second, min_image,
                   wrap_points)
from .interpolation import edge_cubics, sample_jet, sample_scalar
from .jet import JetField

DEGENERATE_GRADIENT = 1.0e-6


@dataclass(frozen=True)
class BandSpec:
    """Reinitialization band half-width in grid spacings."""

    width: int = 4

    def __post_init__(self):
        if self.width < 2:
            raise UsageError("band width must be >= 2")


@dataclass
class InterfaceSampleSet:
    """Closest points on the interface, one per band node.

    ``node_flat`` indexes the source nodes into the flattened grid,
    ``points`` are the closest points (wrapped into the domain),
    ``distance`` is signed (negative inside), ``flagged`` marks samples that
    needed the bisection fallback.  ``attached`` carries per-sample scalars
    such as curvature or normal speed.

    ``seeds`` are the raw interface points found on grid edges, and
    ``nearest_seed`` maps every grid node (flat order) to one of them; the
    far field and the global velocity extension are built from these.
    """

    spec: GridSpec
    node_flat: np.ndarray
    points: np.ndarray
    distance: np.ndarray
    flagged: np.ndarray
    attached: dict = field(default_factory=dict)
    seeds: np.ndarray | None = None
    nearest_seed: np.ndarray | None = None

    def __len__(self):
        return self.node_flat.size

    @property
    def band_mask(self) -> np.ndarray:
        m = np.zeros(self.spec.size, dtype=bool)
        m[self.node_flat] = True
        return m.reshape(self.spec.shape)

    def dump_csv(self, path, scalar: str | None = "kappa") -> None:
        """Write `x,y[,z],kappa` rows (scalar column optional)."""
        cols = ["x", "y", "z"][: self.spec.dim]
        values = self.attached.get(scalar) if scalar else None
        with open(path, "w") as fh:
            header = ",".join(cols + ([scalar] if values is not None else []))
            fh.write(header + "\n")
            for i in range(len(self)):
                row = ",".join(f"{c:.17g}" for c in self.points[i])
                if values is not None:
                    row += f",{values[i]:.17g}"
                fh.write(row + "\n")


# ---------------------------------------------------------------------------
# interface crossings along grid edges
# ---------------------------------------------------------------------------


def _cubic_eval(c, t):
    return ((c[3] * t + c[2]) * t + c[1]) * t + c[0]


def _critical_points(c):
    """Roots of the derivative 3c3 t^2 + 2c2 t + c1, NaN when absent."""
    a = 3.0 * c[3]
    b = 2.0 * c[2]
    lin = np.abs(a) < 1.0e-300
    r1 = np.full(a.shape, np.nan)
    r2 = np.full(a.shape, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - 4.0 * a * c[1]
        ok = (~lin) & (disc >= 0.0)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        # stable quadratic formula
        q = -0.5 * (b + np.sign(b + (b == 0)) * sq)
        r1 = np.where(ok, q / a, r1)
        r2 = np.where(ok & (np.abs(q) > 0), c[1] / np.where(q == 0, 1, q), r2)
        lin_ok = lin & (np.abs(b) > 1.0e-300)
        r1 = np.where(lin_ok, -c[1] / np.where(lin_ok, b, 1.0), r1)
    return r1, r2


def edge_crossings(jet: JetField, axis: int, prefilter: np.ndarray | None = None):
    """Roots of the interpolant along +axis edges, including sub-grid pairs.

    Returns ``(edge_index, t)``: flat indices of the lower edge node and the
    root's local coordinate in [0, 1].  ``prefilter`` is a boolean mask of
    edges worth scanning (default: all edges).
    """
    coeffs = edge_cubics(jet, axis)
    c = coeffs.reshape(4, -1)
    if prefilter is not None:
        sel = np.flatnonzero(prefilter.reshape(-1))
    else:
        sel = np.arange(c.shape[1])
    c = c[:, sel]
    r1, r2 = _critical_points(c)
    knots = np.stack([np.zeros(c.shape[1]), r1, r2, np.ones(c.shape[1])])
    knots = np.where(np.isfinite(knots), np.clip(knots, 0.0, 1.0), 0.0)
    knots = np.sort(knots, axis=0)

    edges = []
    roots = []
    for k in range(3):
        lo, hi = knots[k], knots[k + 1]
        flo = _cubic_eval(c, lo)
        fhi = _cubic_eval(c, hi)
        cross = ((flo > 0) != (fhi > 0)) & (hi > lo)
        if not np.any(cross):
            continue
        ci = c[:, cross]
        a, b = lo[cross].copy(), hi[cross].copy()
        fa = flo[cross]
        for _ in range(60):
            m = 0.5 * (a + b)
            fm = _cubic_eval(ci, m)
            left = (fm > 0) == (fa > 0)
            a = np.where(left, m, a)
            fa = np.where(left, fm, fa)
            b = np.where(left, b, m)
        edges.append(sel[cross])
        roots.append(0.5 * (a + b))
    if not edges:
        return np.empty(0, dtype=np.int64), np.empty(0)
    return np.concatenate(edges), np.concatenate(roots)


def interface_seeds(jet: JetField, loose: float = 2.0):
    """Interface points on grid edges and the adjacent-node mask.

    Scans edges with a nodal sign change plus, to catch same-sign sub-grid
    dips, edges with an endpoint within ``loose`` spacings of zero.
    """
    spec = jet.grid
    pts = []
    adjacent = np.zeros(spec.shape, dtype=bool)
    near = np.abs(jet.phi) < loose * spec.h
    positive = jet.phi >= 0
    flat_pos = spec.node_positions()
    for axis in range(spec.dim):
        pre = near | np.roll(near, -1, axis=axis)
        pre |= positive != np.roll(positive, -1, axis=axis)
        idx, t = edge_crossings(jet, axis, prefilter=pre)
        if idx.size == 0:
            continue
        p = flat_pos[idx].copy()
        p[:, axis] += t * spec.h
        pts.append(wrap_points(spec, p))
        multi = np.unravel_index(idx, spec.shape)
        adjacent[multi] = True
        upper = list(multi)
        upper[axis] = (upper[axis] + 1) % spec.n[axis]
        adjacent[tuple(upper)] = True
    if not pts:
        raise InterfaceLost("no interface crossing found on any grid edge")
    return np.concatenate(pts), adjacent


def dilate_mask(mask: np.ndarray, steps: int) -> np.ndarray:
    """Chebyshev dilation with periodic wrap."""
    out = mask.copy()
    for _ in range(steps):
        grown = out.copy()
        for ax in range(mask.ndim):
            grown |= np.roll(out, 1, axis=ax)
            grown |= np.roll(out, -1, axis=ax)
        out = grown
    return out


# ---------------------------------------------------------------------------
# closest points
# ---------------------------------------------------------------------------


def _nodal_normals(jet: JetField) -> np.ndarray:
    if jet.order == "p1":
        g = jet.grad
    else:
        g = isotropic_gradient(jet.phi, jet.grid)
    norm = np.sqrt(np.sum(g * g, axis=0))
    safe = np.maximum(norm, DEGENERATE_GRADIENT)
    return g / safe


CP_CONVERGED = 0
CP_FALLBACK = 1
CP_FAILED = 2


def closest_points_batch(jet: JetField, x: np.ndarray, seeds: np.ndarray,
                         max_iter: int = 50, tol_scale: float = 1.0e-10,
                         start_normals: np.ndarray | None = None):
    """Closest point on the interpolant zero set for each query point.

    Returns ``(y, status)`` with ``y`` unwrapped relative to ``x`` (so
    ``x - y`` is the true displacement) and ``status`` one of CP_CONVERGED,
    CP_FALLBACK (Newton stalled, bisection along the line to the nearest
    seed succeeded) or CP_FAILED (no interface crossing found; ``y`` is the
    seed itself and must not be trusted as a closest point).

    The tangential slide is capped at one grid spacing per iteration so
    queries many curvature radii away from the interface walk stably toward
    their foot point instead of overshooting.
    """
    spec = jet.grid
    n_pts = x.shape[0]
    origin = np.asarray(spec.origin)
    extent = np.asarray(spec.extent)
    tree = cKDTree(np.mod(seeds - origin, extent), boxsize=extent)
    _, nearest = tree.query(np.mod(x - origin, extent), workers=-1)
    seed_pts = x + min_image(spec, seeds[nearest] - x)
    y = seed_pts.copy()

    tol_p = tol_scale * spec.h
    active = np.ones(n_pts, dtype=bool)
    for _ in range(max_iter):
        if not np.any(active):
            break
        ya = y[active]
        v, g = sample_jet(jet, ya, gradient=True)
        g2 = np.maximum(np.sum(g * g, axis=1), DEGENERATE_GRADIENT**2)
        ya = ya - (v / g2)[:, None] * g
        d = x[active] - ya
        gn = g / np.sqrt(g2)[:, None]
        tang = d - np.sum(d * gn, axis=1)[:, None] * gn
        tnorm = np.sqrt(np.sum(tang * tang, axis=1))
        step = np.minimum(tnorm, spec.h)
        ya = ya + tang * np.where(tnorm > 0, step / np.maximum(tnorm, 1e-300), 0.0)[:, None]
        y[active] = ya
        dist = np.sqrt(np.sum(d * d, axis=1))
        done = (np.abs(v) < tol_p) & (tnorm < 1.0e-8 * (dist + spec.h))
        idx = np.flatnonzero(active)
        active[idx[done]] = False

    status = np.full(n_pts, CP_CONVERGED, dtype=np.int8)
    if np.any(active):
        yf, okf = _bisection_fallback(jet, x[active], seed_pts[active])
        y[active] = yf
        status[active] = np.where(okf, CP_FALLBACK, CP_FAILED)
    return y, status


def _bisection_fallback(jet: JetField, x: np.ndarray, seed_pts: np.ndarray):
    """Bisect the first sign change on the segment from x through its seed.

    The seed lies on the interface, so scanning slightly past it bounds the
    distance from above; entries with no crossing at all are reported False
    and get the seed point itself.
    """
    spec = jet.grid
    direction = seed_pts - x
    seg = np.sqrt(np.sum(direction * direction, axis=1))
    ok_dir = seg > 1.0e-14
    direction = np.where(ok_dir[:, None], direction / np.maximum(seg, 1e-300)[:, None], 0.0)
    reach = seg + 2.0 * spec.h
    v0 = sample_jet(jet, x)

    n_samples = 49
    svals = np.linspace(0.0, 1.0, n_samples)
    best_lo = np.zeros(x.shape[0])
    best_hi = np.full(x.shape[0], np.nan)
    prev = v0.copy()
    for k in range(1, n_samples):
        s = svals[k] * reach
        v = sample_jet(jet, x + s[:, None] * direction)
        flip = ((v > 0) != (prev > 0)) & np.isnan(best_hi)
        best_lo = np.where(flip, svals[k - 1] * reach, best_lo)
        best_hi = np.where(flip, s, best_hi)
        prev = v
    found = np.isfinite(best_hi) & ok_dir
    lo = best_lo.copy()
    hi = np.where(found, best_hi, 0.0)
    fa = sample_jet(jet, x + lo[:, None] * direction)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = sample_jet(jet, x + mid[:, None] * direction)
        left = (fm > 0) == (fa > 0)
        lo = np.where(left, mid, lo)
        fa = np.where(left, fm, fa)
        hi = np.where(left, hi, mid)
    s = np.where(found, 0.5 * (lo + hi), seg)
    return x + s[:, None] * direction, found


def closest_point(x, jet: JetField):
    """Closest interface point and signed distance from a single location."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    seeds, _ = interface_seeds(jet)
    y, status = closest_points_batch(jet, x, seeds)
    if status[0] == CP_FAILED:
        raise NumericalFailure("closest-point search failed from this location")
    d = float(np.sqrt(np.sum((x - y) ** 2)))
    sgn = 1.0 if sample_jet(jet, x)[0] >= 0 else -1.0
    return y[0], sgn * d


# ---------------------------------------------------------------------------
# reinitialization
# ---------------------------------------------------------------------------


def reinitialize(jet: JetField, band: BandSpec = BandSpec(), pad: int = 2):
    """Signed-distance jet: precise in the band, seed-based everywhere else.

    Nodes within ``width + pad`` spacings get the exact closest-point
    distance from the projected Newton iteration (and, for P1 jets, the
    exact unit gradient).  Every farther node gets the distance to its
    nearest edge-crossing seed and the matching unit direction, so the far
    field is a consistent moving signed distance rather than a frozen
    plateau; a frozen far field pins the implicit smoothing solve and drags
    the interface by roughly ``exp(-band/sqrt(beta*dt))`` per step.

    Samples (one closest point per node) cover the ``width`` band proper;
    the returned sample set also carries the seed list and each node's
    nearest seed for the global velocity extension.
    """
    spec = jet.grid
    w = band.width
    wf = w + pad
    seeds, adjacent = interface_seeds(jet)
    candidates = dilate_mask(adjacent, wf + 1)
    cand_flat = np.flatnonzero(candidates.reshape(-1))
    pos = spec.node_positions()
    x = pos[cand_flat]

    y, status = closest_points_batch(jet, x, seeds)
    delta = x - y
    dist = np.sqrt(np.sum(delta * delta, axis=1))

    phi0 = jet.phi.reshape(-1)
    sgn_all = np.where(phi0 >= 0, 1.0, -1.0)
    sgn_cand = sgn_all[cand_flat]

    exact = (dist <= wf * spec.h) & (status != CP_FAILED)
    exact_flat = cand_flat[exact]
    in_band = dist[exact] <= w * spec.h
    band_flat = exact_flat[in_band]

    # far field: distance and direction to the nearest seed, all nodes
    origin = np.asarray(spec.origin)
    extent = np.asarray(spec.extent)
    tree = cKDTree(np.mod(seeds - origin, extent), boxsize=extent)
    _, nearest_seed = tree.query(np.mod(pos - origin, extent), workers=-1)
    far_delta = min_image(spec, pos - seeds[nearest_seed])
    far_dist = np.sqrt(np.sum(far_delta * far_delta, axis=1))

    phi_new = sgn_all * far_dist
    phi_new[exact_flat] = sgn_cand[exact] * dist[exact]

    grad_new = None
    if jet.order == "p1":
        safe_far = np.maximum(far_dist, 1.0e-12)
        grad_new = (sgn_all[None, :] * far_delta.T / safe_far[None, :])
        d_exact = dist[exact]
        tiny = d_exact < 1.0e-12
        safe = np.where(tiny, 1.0, d_exact)
        psi = sgn_cand[exact][:, None] * delta[exact] / safe[:, None]
        if np.any(tiny):
            _, g = sample_jet(jet, y[exact][tiny], gradient=True)
            gn = np.sqrt(np.maximum(np.sum(g * g, axis=1), DEGENERATE_GRADIENT**2))
            psi[tiny] = g / gn[:, None]
        grad_new[:, exact_flat] = psi.T
        grad_new = grad_new.reshape((spec.dim,) + spec.shape)

    out = JetField(spec, phi_new.reshape(spec.shape), grad_new)
    samples = InterfaceSampleSet(
        spec=spec,
        node_flat=band_flat,
        points=wrap_points(spec, y[exact][in_band]),
        distance=(sgn_cand[exact] * dist[exact])[in_band],
        flagged=(status[exact] != CP_CONVERGED)[in_band],
        seeds=seeds,
        nearest_seed=nearest_seed,
    )
    return out, samples


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------


def curvature_field(jet: JetField) -> np.ndarray:
    """Nodal curvature (2D: 1/r for a circle; 3D: sum of principal curvatures).

    P1 jets average the tracked gradient with finite differences of phi as
    well as the mixed/second derivatives; the differences in that path are
    4th-order central stencils, since any 2nd-order family leaves an
    O(h^2 kappa^3) bias on signed-distance cones that dominates the scheme's
    accuracy.  0 jets use pure 2nd-order isotropic finite differences.
    Nodes with a degenerate gradient get curvature 0.
    """
    from .grid import (fourth_order_cross, fourth_order_gradient_component,
                       fourth_order_second)

    spec = jet.grid
    phi = jet.phi
    dim = spec.dim

    if jet.order == "p1":
        dx = fourth_order_gradient_component
        d1 = [dx(phi, spec, d) for d in range(dim)]
        d2 = [fourth_order_second(phi, spec, d) for d in range(dim)]
        psi = jet.grad
        first = [0.5 * (psi[d] + d1[d]) for d in range(dim)]
        second = [0.5 * (dx(psi[d], spec, d) + d2[d]) for d in range(dim)]
        mixed = {}
        for i in range(dim):
            for j in range(i + 1, dim):
                mixed[(i, j)] = (dx(psi[i], spec, j) + dx(psi[j], spec, i)
                                 + fourth_order_cross(phi, spec, i, j)) / 3.0
    else:
        first = [isotropic_gradient_component(phi, spec, d) for d in range(dim)]
        second = [isotropic_second(phi, spec, d) for d in range(dim)]
        mixed = {}
        for i in range(dim):
            for j in range(i + 1, dim):
                mixed[(i, j)] = isotropic_cross(phi, spec, i, j)

    g2 = sum(f * f for f in first)
    if dim == 2:
        num = second[0] * first[1] ** 2 + second[1] * first[0] ** 2 \
            - 2.0 * mixed[(0, 1)] * first[0] * first[1]
    else:
        num = (second[0] * (first[1] ** 2 + first[2] ** 2)
               + second[1] * (first[0] ** 2 + first[2] ** 2)
               + second[2] * (first[0] ** 2 + first[1] ** 2)
               - 2.0 * (mixed[(0, 1)] * first[0] * first[1]
                        + mixed[(0, 2)] * first[0] * first[2]
                        + mixed[(1, 2)] * first[1] * first[2]))
    degenerate = g2 < DEGENERATE_GRADIENT**2
    den = np.where(degenerate, 1.0, g2) ** 1.5
    return np.where(degenerate, 0.0, num / den)


# ---------------------------------------------------------------------------
# extension and measures
# ---------------------------------------------------------------------------


def extend_to_band(samples: InterfaceSampleSet, values: np.ndarray | str,
                   spec: GridSpec) -> np.ndarray:
    """Field that is constant along normals: each band node takes the value
    at its closest point.

    ``values`` is either a nodal scalar field (interpolated at the closest
    points) or the name of an attached per-sample scalar (assigned directly).
    Nodes outside the band get zero.
    """
    out = np.zeros(spec.size)
    if isinstance(values, str):
        out[samples.node_flat] = samples.attached[values]
    else:
        out[samples.node_flat] = sample_scalar(values, spec, samples.points)
    return out.reshape(spec.shape)


@dataclass(frozen=True)
class Measures:
    volume: float        # enclosed area (2D) / volume (3D)
    area: float          # interface length (2D) / area (3D)
    kappa_avg: float


def smoothed_heaviside(phi: np.ndarray, w: float) -> np.ndarray:
    x = np.clip(phi / w, -1.0, 1.0)
    return 0.5 * (1.0 + x + np.sin(np.pi * x) / np.pi)


def smoothed_delta(phi: np.ndarray, w: float) -> np.ndarray:
    inside = np.abs(phi) < w
    return np.where(inside, (1.0 + np.cos(np.pi * np.clip(phi / w, -1, 1))) / (2.0 * w), 0.0)


def interface_measures(jet: JetField, kappa: np.ndarray | None = None,
                       delta_width: float | None = None) -> Measures:
    """Enclosed volume, interface measure and interface-averaged curvature.

    Quadrature uses the cosine kernel of half-width 1.5h (configurable); the
    jet should be reinitialized so the delta-kernel support is resolved.
    """
    spec = jet.grid
    w = 1.5 * spec.h if delta_width is None else delta_width
    cell = spec.h ** spec.dim
    grad = isotropic_gradient(jet.phi, spec)
    gnorm = np.sqrt(np.sum(grad * grad, axis=0))
    delta = smoothed_delta(jet.phi, w)
    volume = float(np.sum(1.0 - smoothed_heaviside(jet.phi, w)) * cell)
    da = delta * gnorm
    area = float(np.sum(da) * cell)
    if area <= 0.0:
        raise InterfaceLost("interface measure vanished")
    if kappa is None:
        kappa = curvature_field(jet)
    kappa_avg = float(np.sum(kappa * da) * cell / area)
    return Measures(volume=volume, area=area, kappa_avg=kappa_avg)


def count_components(phi: np.ndarray) -> int:
    """Connected components of the enclosed region, with periodic merging."""
    inside = phi < 0
    labels, n = ndimage.label(inside)
    if n == 0:
        return 0
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    for ax in range(phi.ndim):
        lo = np.take(labels, 0, axis=ax).reshape(-1)
        hi = np.take(labels, -1, axis=ax).reshape(-1)
        for a, b in zip(lo, hi):
            if a and b:
                union(int(a), int(b))
    return len({find(i) for i in range(1, n + 1)})
