"""Semi-Lagrangian transport of the jet.

Node values are evolved by tracing characteristics backward (first order:
one Euler step; second order: velocity extrapolation plus a midpoint
correction and a second departure point two steps back) and evaluating the
jet's cell interpolant at the departure locations.

Gradient components are recovered by the tiny-sub-grid trick: each node
carries 2^dim satellite points at offsets ``±eps`` per axis, every satellite
runs the same semi-Lagrangian step (with the interpolated smoothing source
added), and centered differences of the satellite values over ``2 eps`` give
the updated gradient.  The node's own value is *not* taken from the
satellites; it comes from the smoothing solve.

All operations accept an ``active`` node mask.  Outside the mask the update
is the exact identity whenever the velocity vanishes there (interpolants
reproduce corner data), which the caller guarantees by dilating the velocity
support; ``active=None`` runs the full grid.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import NumericalFailure
from .grid import GridSpec, wrap_points
from .interpolation import sample_jet, sample_scalar, sample_vector
from .jet import JetField


def departure_first_order(pts, velocity, dt: float, spec: GridSpec) -> np.ndarray:
    """One backward Euler characteristic step, wrapped into the domain."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    u = velocity(pts)
    return wrap_points(spec, pts - dt * u)


def departure_second_order(pts, velocity_now, velocity_prev, dt: float, spec: GridSpec):
    """Second-order departure points at t_n and t_{n-1}.

    The arrival velocity is extrapolated, a midpoint correction produces the
    t_n departure point, and the t_{n-1} point is reached by a double step
    with the velocity interpolated at the t_n departure location.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    u_hat = 2.0 * velocity_now(pts) - velocity_prev(pts)
    x1 = wrap_points(spec, pts - dt * u_hat)
    xd_n = wrap_points(spec, pts - 0.5 * dt * (u_hat + velocity_now(x1)))
    xd_nm1 = wrap_points(spec, pts - 2.0 * dt * velocity_now(xd_n))
    return xd_n, xd_nm1


def velocity_support_mask(spec: GridSpec, dt: float, *fields) -> np.ndarray:
    """Nodes whose update can differ from the identity: the union of the
    velocity supports dilated by the departure reach plus stencil margin."""
    from .geometry import dilate_mask

    support = np.zeros(spec.shape, dtype=bool)
    vmax = 0.0
    for u in fields:
        if u is None:
            continue
        speed = np.sqrt(np.sum(np.asarray(u) ** 2, axis=0))
        support |= speed > 0.0
        vmax = max(vmax, float(speed.max()))
    if not np.any(support):
        return support
    reach = int(np.ceil(2.0 * dt * vmax / spec.h)) + 4
    return dilate_mask(support, reach)


def _check_departures(pts, departed, dt, vmax, spec):
    disp = pts - departed
    # wrapped displacements: compare against the periodic minimum image
    from .grid import min_image

    d = np.sqrt(np.sum(min_image(spec, disp) ** 2, axis=1))
    limit = 2.0 * dt * vmax * 1.01 + 1.0e-12
    bad = ~(d <= limit)
    if np.any(bad):
        raise NumericalFailure(
            f"departure point escaped: max displacement {np.nanmax(d):.3e} "
            f"exceeds {limit:.3e} (possible velocity blow-up)")


class _Samplers:
    """Interpolating access to the nodal velocity levels and source."""

    def __init__(self, spec, u_now, u_prev=None, source=None):
        self.spec = spec
        self.u_now = u_now
        self.u_prev = u_prev
        self.source = source

    def vel_now(self, pts):
        return sample_vector(self.u_now, self.spec, pts)

    def vel_prev(self, pts):
        return sample_vector(self.u_prev, self.spec, pts)

    def src(self, pts):
        return sample_scalar(self.source, self.spec, pts)


def _departures_for(pts, u_hat_pts, samplers, dt, order, spec):
    """Departure point(s) given the already-extrapolated arrival velocity."""
    if order == 1:
        xd = wrap_points(spec, pts - dt * u_hat_pts)
        return xd, None
    x1 = wrap_points(spec, pts - dt * u_hat_pts)
    xd_n = wrap_points(spec, pts - 0.5 * dt * (u_hat_pts + samplers.vel_now(x1)))
    xd_nm1 = wrap_points(spec, pts - 2.0 * dt * samplers.vel_now(xd_n))
    return xd_n, xd_nm1


def advect_jet_values(jet: JetField, jet_prev: JetField | None, u_now, u_prev,
                      dt: float, order: int, active: np.ndarray | None = None):
    """Tentative departure values of the level set at every node.

    Returns ``(phi_d_n, phi_d_nm1)``; the second field is None for first
    order.  ``u_now``/``u_prev`` are nodal velocity arrays; for second order
    the arrival velocity at nodes is the nodal extrapolation 2u_n - u_{n-1}.
    """
    spec = jet.grid
    phi_d = jet.phi.copy()
    phi_d_prev = None if order == 1 else jet_prev.phi.copy()

    if active is None:
        flat = np.arange(spec.size)
    else:
        flat = np.flatnonzero(active.reshape(-1))
    if flat.size == 0:
        return phi_d, phi_d_prev

    pts = spec.node_positions()[flat]
    samplers = _Samplers(spec, u_now, u_prev)
    if order == 1:
        u_hat = u_now.reshape(spec.dim, -1)[:, flat].T
    else:
        u_hat = (2.0 * u_now - u_prev).reshape(spec.dim, -1)[:, flat].T
    vmax = float(np.sqrt(np.sum(u_hat * u_hat, axis=1)).max()) if flat.size else 0.0

    xd_n, xd_nm1 = _departures_for(pts, u_hat, samplers, dt, order, spec)
    _check_departures(pts, xd_n, dt, max(vmax, _speed_max(u_now)), spec)
    phi_d.reshape(-1)[flat] = sample_jet(jet, xd_n)
    if order == 2:
        phi_d_prev.reshape(-1)[flat] = sample_jet(jet_prev, xd_nm1)
    return phi_d, phi_d_prev


def _speed_max(u):
    return float(np.sqrt(np.sum(np.asarray(u) ** 2, axis=0)).max())


def _subgrid_values(jet, jet_prev, samplers, dt, order, eps, pts):
    """Updated level-set values at one batch of sub-grid satellite points."""
    if order == 1:
        u_q = samplers.vel_now(pts)
        xd = wrap_points(samplers.spec, pts - dt * u_q)
        phi_d = sample_jet(jet, xd)
        return phi_d + dt * samplers.src(pts)
    u_hat = 2.0 * samplers.vel_now(pts) - samplers.vel_prev(pts)
    xd_n, xd_nm1 = _departures_for(pts, u_hat, samplers, dt, 2, samplers.spec)
    phi_d_n = sample_jet(jet, xd_n)
    phi_d_nm1 = sample_jet(jet_prev, xd_nm1)
    return (2.0 * dt * samplers.src(pts) + 4.0 * phi_d_n - phi_d_nm1) / 3.0


def update_subgrid_jet(jet: JetField, jet_prev: JetField | None, u_now, u_prev,
                       source: np.ndarray, dt: float, order: int, eps: float,
                       active: np.ndarray | None = None) -> np.ndarray:
    """Recover the updated gradient by the eps-sub-grid finite differences.

    Every node gets 2^dim satellites at offsets ``q·eps``; each satellite is
    advected with the interpolated source added, and the gradient component
    along axis d is the centered difference ``sum_q q_d phi_q / (2^dim eps)``.
    Outside ``active`` the previous gradient is kept.
    """
    spec = jet.grid
    grad_new = jet.grad.copy()
    if active is None:
        flat = np.arange(spec.size)
    else:
        flat = np.flatnonzero(active.reshape(-1))
    if flat.size == 0:
        return grad_new

    pts = spec.node_positions()[flat]
    samplers = _Samplers(spec, u_now, u_prev, source)
    acc = np.zeros((spec.dim, flat.size))
    for q in itertools.product((-1.0, 1.0), repeat=spec.dim):
        qv = np.asarray(q)
        phi_q = _subgrid_values(jet, jet_prev, samplers, dt, order, eps,
                                pts + eps * qv)
        for d in range(spec.dim):
            acc[d] += qv[d] * phi_q
    acc /= (2 ** spec.dim) * eps
    grad_new.reshape(spec.dim, -1)[:, flat] = acc
    return grad_new


def plain_jet_step(jet: JetField, jet_prev: JetField | None, u_now, u_prev,
                   dt: float, order: int, eps: float,
                   active: np.ndarray | None = None):
    """Reference jet-scheme step without any smoothing pathway.

    Node values come straight from the departure evaluation (BDF2 combination
    for second order); gradients from the sub-grid differences with no source
    term.  Used as the independent check that the smoothing machinery at
    beta = 0 changes nothing.
    """
    spec = jet.grid
    phi_new = jet.phi.copy()
    grad_new = None if jet.grad is None else jet.grad.copy()
    if active is None:
        flat = np.arange(spec.size)
    else:
        flat = np.flatnonzero(active.reshape(-1))
    if flat.size == 0:
        return phi_new, grad_new

    pts = spec.node_positions()[flat]
    samplers = _Samplers(spec, u_now, u_prev)
    if order == 1:
        u_hat = u_now.reshape(spec.dim, -1)[:, flat].T
        xd = wrap_points(spec, pts - dt * u_hat)
        phi_new.reshape(-1)[flat] = sample_jet(jet, xd)
    else:
        u_hat = (2.0 * u_now - u_prev).reshape(spec.dim, -1)[:, flat].T
        xd_n, xd_nm1 = _departures_for(pts, u_hat, samplers, dt, 2, spec)
        phi_new.reshape(-1)[flat] = (4.0 * sample_jet(jet, xd_n)
                                     - sample_jet(jet_prev, xd_nm1)) / 3.0

    if grad_new is not None:
        acc = np.zeros((spec.dim, flat.size))
        for q in itertools.product((-1.0, 1.0), repeat=spec.dim):
            qv = np.asarray(q)
            sat = pts + eps * qv
            if order == 1:
                xq = wrap_points(spec, sat - dt * samplers.vel_now(sat))
                phi_q = sample_jet(jet, xq)
            else:
                uh = 2.0 * samplers.vel_now(sat) - samplers.vel_prev(sat)
                xq_n, xq_m = _departures_for(sat, uh, samplers, dt, 2, spec)
                phi_q = (4.0 * sample_jet(jet, xq_n) - sample_jet(jet_prev, xq_m)) / 3.0
            for d in range(spec.dim):
                acc[d] += qv[d] * phi_q
        acc /= (2 ** spec.dim) * eps
        grad_new.reshape(spec.dim, -1)[:, flat] = acc
    return phi_new, grad_new
