"""Semi-implicit stabilization and the full SemiJet step.

The stiff part of the evolution is damped by adding ``-beta*L(phi_{n+1}) +
beta*L(phi_hat)`` with ``L`` the isotropic Laplacian, which turns each step
into one SPD linear solve ``(I - c L) phi_{n+1} = rhs`` on the periodic grid
(conjugate gradients, matrix free).  The measured effect of that solve,

    S = beta * (L phi_{n+1} - L phi_hat),

is replayed as an explicit source when the sub-grid satellites are advected,
so the tracked gradient fields stay coupled to the smoothed level set without
further solves.

One ``semijet_step`` runs: velocity evaluation, tentative semi-Lagrangian
departure values, the smoothing solve, the source computation, the sub-grid
gradient recovery, reinitialization, and the optional volume-correction
shift.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import NumericalFailure, SolverError
from .geometry import (BandSpec, InterfaceSampleSet, Measures, curvature_field,
                       interface_measures, reinitialize)
from .grid import GridSpec, isotropic_laplacian
from .jet import JetField, SchemeConfig
from .transport import advect_jet_values, update_subgrid_jet, velocity_support_mask


@dataclass(frozen=True)
class SmoothingConfig:
    """Damping strength and linear-solver settings (operator order fixed at 2)."""

    beta: float = 0.5
    rtol: float = 1.0e-8
    maxiter: int = 10_000

    @classmethod
    def from_scheme(cls, cfg: SchemeConfig) -> "SmoothingConfig":
        return cls(beta=cfg.beta, rtol=cfg.solver_rtol, maxiter=cfg.solver_maxiter)


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    residual: float


def _helmholtz_solve(rhs: np.ndarray, c: float, cfg: SmoothingConfig,
                     spec: GridSpec, x0: np.ndarray) -> tuple[np.ndarray, SolveInfo]:
    """CG solve of ``(I - c * Lap) x = rhs`` with periodic isotropic Laplacian."""
    shape = spec.shape

    def matvec(v):
        f = v.reshape(shape)
        return (f - c * isotropic_laplacian(f, spec)).reshape(-1)

    op = LinearOperator((spec.size, spec.size), matvec=matvec, dtype=np.float64)
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    b = rhs.reshape(-1)
    x, info = cg(op, b, x0=x0.reshape(-1), rtol=cfg.rtol, atol=0.0,
                 maxiter=cfg.maxiter, callback=count)
    res = float(np.linalg.norm(b - matvec(x)) / max(np.linalg.norm(b), 1.0e-300))
    if info > 0:
        raise SolverError(
            f"smoothing solve stalled after {iters} iterations, relative "
            f"residual {res:.3e}", residual=res, iterations=iters)
    if not np.all(np.isfinite(x)):
        raise SolverError("smoothing solve produced non-finite values",
                          residual=res, iterations=iters)
    return x.reshape(shape), SolveInfo(iterations=iters, residual=res)


def solve_smoothing_first(phi_d: np.ndarray, phi_n: np.ndarray,
                          cfg: SmoothingConfig, dt: float, spec: GridSpec):
    """First-order smoothed update: ``(I - b dt Lap) phi = phi_d - b dt Lap phi_n``."""
    if cfg.beta == 0.0:
        return phi_d.copy(), SolveInfo(0, 0.0)
    c = cfg.beta * dt
    rhs = phi_d - c * isotropic_laplacian(phi_n, spec)
    return _helmholtz_solve(rhs, c, cfg, spec, x0=phi_d)


def solve_smoothing_second(phi_d_n: np.ndarray, phi_d_nm1: np.ndarray,
                           phi_hat: np.ndarray, cfg: SmoothingConfig,
                           dt: float, spec: GridSpec):
    """BDF2 smoothed update with extrapolated ``phi_hat = 2 phi_n - phi_{n-1}``."""
    explicit = (4.0 * phi_d_n - phi_d_nm1) / 3.0
    if cfg.beta == 0.0:
        return explicit, SolveInfo(0, 0.0)
    c = 2.0 * cfg.beta * dt / 3.0
    rhs = explicit - c * isotropic_laplacian(phi_hat, spec)
    return _helmholtz_solve(rhs, c, cfg, spec, x0=explicit)


def smoothing_source(phi_np1: np.ndarray, phi_hat: np.ndarray,
                     cfg: SmoothingConfig, spec: GridSpec) -> np.ndarray:
    """The measured smoothing effect ``beta * (Lap phi_{n+1} - Lap phi_hat)``."""
    if cfg.beta == 0.0:
        return np.zeros(spec.shape)
    return cfg.beta * (isotropic_laplacian(phi_np1, spec)
                       - isotropic_laplacian(phi_hat, spec))


def amplification_factor(alpha, beta, dt, h, k):
    """Per-step growth factor of mode k for the damped heat model problem.

    ``1 - (4 a dt/h^2 sin^2(hk/2)) / (1 + 4 b dt/h^2 sin^2(hk/2))``; magnitudes
    above 1 mean the mode grows.  Inputs broadcast.
    """
    s = np.sin(0.5 * np.asarray(h) * np.asarray(k)) ** 2
    num = 4.0 * np.asarray(alpha) * np.asarray(dt) / np.asarray(h) ** 2 * s
    den = 1.0 + 4.0 * np.asarray(beta) * np.asarray(dt) / np.asarray(h) ** 2 * s
    return 1.0 - num / den


# ---------------------------------------------------------------------------
# full step orchestration
# ---------------------------------------------------------------------------


@dataclass
class StepState:
    """Everything carried between steps: two jet levels, two velocity levels,
    the last smoothing source, and the interface samples of the current jet."""

    jet: JetField
    samples: InterfaceSampleSet
    dt: float
    jet_prev: JetField | None = None
    u: np.ndarray | None = None
    u_prev: np.ndarray | None = None
    source: np.ndarray | None = None
    step_index: int = 0
    time: float = 0.0


@dataclass
class StepDiagnostics:
    time: float
    max_speed: float
    measures: Measures
    solver: SolveInfo
    band_width: int
    volume_shift: float = 0.0
    phase_seconds: dict = field(default_factory=dict)


def initial_state(jet: JetField, dt: float, cfg: SchemeConfig) -> StepState:
    """Reinitialize the starting jet and wrap it into a step state."""
    jet0, samples = reinitialize(jet, BandSpec(cfg.band_width))
    return StepState(jet=jet0, samples=samples, dt=dt)


def _active_region(state: StepState, cfg: SchemeConfig, dt: float,
                   max_speed: float, order: int):
    """Nodes that get the full semi-Lagrangian treatment.

    Covers the band plus the departure reach, plus six smoothing screening
    lengths sqrt(beta dt) so the tiny mismatch between the exact update and
    the far-field shortcut is attenuated before it can reach the interface
    through the implicit solve.  Returns None when that covers the grid.
    """
    from .geometry import dilate_mask

    spec = state.jet.grid
    c = cfg.beta * dt if order == 1 else 2.0 * cfg.beta * dt / 3.0
    screen = int(np.ceil(6.0 * np.sqrt(max(c, 0.0)) / spec.h))
    reach = int(np.ceil(2.0 * dt * max_speed / spec.h))
    steps = cfg.band_width + reach + max(4, screen) + 2
    if 2 * steps >= max(spec.n):
        return None
    return dilate_mask(state.samples.band_mask, steps)


BOOTSTRAP_SUBSTEPS = 8


def _advance(state: StepState, velocity_model, cfg: SchemeConfig,
             dt: float, order: int):
    """One update at the given order; returns the new state and diagnostics."""
    jet = state.jet
    spec = jet.grid
    scfg = SmoothingConfig.from_scheme(cfg)
    phases = {}

    t0 = time.perf_counter()
    kappa = curvature_field(jet)
    measures = interface_measures(jet, kappa=kappa)
    u = velocity_model.nodal_velocity(jet, state.samples, kappa, measures.kappa_avg)
    max_speed = float(np.sqrt(np.sum(u * u, axis=0)).max())
    phases["velocity"] = time.perf_counter() - t0

    u_prev = state.u if state.u is not None else u
    jet_prev = state.jet_prev if state.jet_prev is not None else jet

    t0 = time.perf_counter()
    active = _active_region(state, cfg, dt, max_speed, order)
    phi_d_n, phi_d_nm1 = advect_jet_values(jet, jet_prev, u, u_prev, dt, order, active)
    if active is not None and not np.all(active):
        # analytic normal-motion shortcut outside the active region: the far
        # field is a signed distance moving with the extended normal speed
        normal = jet.grad if jet.order == "p1" else None
        if normal is None:
            from .grid import isotropic_gradient
            normal = isotropic_gradient(jet.phi, spec)
        speed = np.sum(u * normal, axis=0)
        far = ~active
        phi_d_n[far] += dt * speed[far]
        if order == 2:
            phi_d_nm1[far] += 2.0 * dt * speed[far]
    phases["advect"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if order == 1:
        phi_hat = jet.phi
        phi_np1, solve_info = solve_smoothing_first(phi_d_n, jet.phi, scfg, dt, spec)
    else:
        phi_hat = 2.0 * jet.phi - jet_prev.phi
        phi_np1, solve_info = solve_smoothing_second(phi_d_n, phi_d_nm1, phi_hat,
                                                     scfg, dt, spec)
    source = smoothing_source(phi_np1, phi_hat, scfg, spec)
    phases["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if jet.order == "p1":
        grad_np1 = update_subgrid_jet(jet, jet_prev, u, u_prev, source, dt,
                                      order, cfg.subgrid_eps, active)
    else:
        grad_np1 = None
    phases["subgrid"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    band_w = max(cfg.band_width, int(np.ceil(dt * max_speed / spec.h)) + 2)
    raw = JetField(spec, phi_np1, grad_np1)
    jet_new, samples_new = reinitialize(raw, BandSpec(band_w))
    phases["reinit"] = time.perf_counter() - t0

    shift = 0.0
    if getattr(velocity_model, "correct_volume", False) and \
            getattr(velocity_model, "target_volume", None) is not None:
        from .velocity import volume_correct
        jet_new, samples_new, shift = volume_correct(
            jet_new, velocity_model.target_volume, samples_new)

    new_state = StepState(
        jet=jet_new, samples=samples_new, dt=state.dt, jet_prev=jet,
        u=u, u_prev=state.u, source=source,
        step_index=state.step_index + 1, time=state.time + dt)
    diag = StepDiagnostics(
        time=state.time, max_speed=max_speed, measures=measures,
        solver=solve_info, band_width=band_w, volume_shift=shift,
        phase_seconds=phases)
    return new_state, diag


def semijet_step(state: StepState, velocity_model, cfg: SchemeConfig):
    """Advance one time step; returns ``(new_state, diagnostics)``.

    The very first step of a second-order run is bootstrapped by sub-stepping
    the first-order scheme (the history two levels back does not exist yet);
    sub-stepping keeps the startup error well below one second-order step.
    The history afterwards is (t_1, t_0) as the BDF2 formulas expect.
    """
    if cfg.time_order == 2 and state.step_index == 0:
        jet0, u0 = state.jet, None
        sub = StepState(jet=state.jet, samples=state.samples, dt=state.dt)
        dt_sub = state.dt / BOOTSTRAP_SUBSTEPS
        for _ in range(BOOTSTRAP_SUBSTEPS):
            sub, diag = _advance(sub, velocity_model, cfg, dt_sub, order=1)
            if u0 is None:
                u0 = sub.u
        new_state = StepState(
            jet=sub.jet, samples=sub.samples, dt=state.dt, jet_prev=jet0,
            u=u0, u_prev=None, source=sub.source,
            step_index=1, time=state.dt)
        diag.time = 0.0
        return new_state, diag
    order = 1 if cfg.time_order == 1 else 2
    return _advance(state, velocity_model, cfg, state.dt, order)
