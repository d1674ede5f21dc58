"""Jet data: the level set plus optionally tracked gradient components."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import UsageError
from .grid import GridSpec

JET_ORDERS = ("0", "p1")


@dataclass
class JetField:
    """Level-set values and, for a P1 jet, the tracked gradient.

    ``phi`` has shape ``grid.shape``; ``grad`` is ``(dim,) + grid.shape`` and
    is present exactly when the jet order is ``"p1"``.
    """

    grid: GridSpec
    phi: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.shape != self.grid.shape:
            raise UsageError(f"phi shape {self.phi.shape} != grid shape {self.grid.shape}")
        if self.grad is not None:
            self.grad = np.asarray(self.grad, dtype=np.float64)
            want = (self.grid.dim,) + self.grid.shape
            if self.grad.shape != want:
                raise UsageError(f"grad shape {self.grad.shape} != {want}")

    @property
    def order(self) -> str:
        return "p1" if self.grad is not None else "0"

    def copy(self) -> "JetField":
        return JetField(self.grid, self.phi.copy(),
                        None if self.grad is None else self.grad.copy())


@dataclass(frozen=True)
class SchemeConfig:
    """Knobs of the jet evolution scheme.

    ``beta`` scales the Laplacian damping (0 disables smoothing entirely),
    ``smooth_order`` is the even derivative order of the damping operator
    (only 2 is supported), ``subgrid_eps`` is the tiny sub-grid offset used to
    recover gradient components by finite differences, and ``band_width`` is
    the reinitialization band half-width in grid spacings.
    """

    jet_order: str = "p1"
    time_order: int = 2
    beta: float = 0.5
    smooth_order: int = 2
    subgrid_eps: float = 1.0e-4
    solver_rtol: float = 1.0e-8
    solver_maxiter: int = 10_000
    band_width: int = 4

    def __post_init__(self):
        if self.jet_order not in JET_ORDERS:
            raise UsageError(f"jet_order must be one of {JET_ORDERS}")
        if self.time_order not in (1, 2):
            raise UsageError("time_order must be 1 or 2")
        if self.beta < 0.0:
            raise UsageError("beta must be >= 0")
        if self.smooth_order != 2:
            raise UsageError("only the Laplacian damping operator is supported")
        if not 0.0 < self.subgrid_eps:
            raise UsageError("subgrid_eps must be positive")
        if self.band_width < 2:
            raise UsageError("band_width must be >= 2")

    def with_(self, **kw) -> "SchemeConfig":
        return replace(self, **kw)
