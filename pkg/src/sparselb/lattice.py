"""D3Q19 lattice model and pointwise BGK physics.

All functions here are plain numpy and operate on the trailing axis of
population arrays, so they work for a single site (shape ``(19,)``) or a
batch of sites (shape ``(..., 19)``).  The engine kernels in
:mod:`sparselb.kernels` replicate the same arithmetic in compiled form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

Q = 19

# Direction order is part of the geometry file contract: rest, the six axis
# vectors, then the twelve planar diagonals.  Inverse pairs are adjacent.
VELOCITIES = np.array(
    [
        [0, 0, 0],
        [1, 0, 0], [-1, 0, 0],
        [0, 1, 0], [0, -1, 0],
        [0, 0, 1], [0, 0, -1],
        [1, 1, 0], [-1, -1, 0],
        [1, -1, 0], [-1, 1, 0],
        [1, 0, 1], [-1, 0, -1],
        [1, 0, -1], [-1, 0, 1],
        [0, 1, 1], [0, -1, -1],
        [0, 1, -1], [0, -1, 1],
    ],
    dtype=np.int64,
)

WEIGHTS_EXACT = (Fraction(1, 3),) + (Fraction(1, 18),) * 6 + (Fraction(1, 36),) * 12
WEIGHTS = np.array([float(w) for w in WEIGHTS_EXACT])
CS2_EXACT = Fraction(1, 3)
CS2 = 1.0 / 3.0

INVERSE = np.array(
    [int(np.flatnonzero((VELOCITIES == -c).all(axis=1))[0]) for c in VELOCITIES],
    dtype=np.int64,
)

MACH_WARN_SPEED = 0.1


class DegenerateStateError(ValueError):
    """Raised when populations sum to a non-positive density."""


@dataclass(frozen=True)
class LatticeModel:
    velocities: np.ndarray
    weights: np.ndarray
    inverse: np.ndarray
    cs2: float
    weights_exact: tuple = WEIGHTS_EXACT
    cs2_exact: Fraction = CS2_EXACT

    @property
    def q(self) -> int:
        return len(self.weights)


D3Q19 = LatticeModel(VELOCITIES, WEIGHTS, INVERSE, CS2)


@dataclass(frozen=True)
class SiteMacro:
    rho: np.ndarray
    u: np.ndarray

    @property
    def p(self):
        return CS2 * self.rho


@dataclass(frozen=True)
class RelaxationParams:
    """BGK relaxation time ``tau`` in lattice units (``dt`` is fixed at 1)."""

    tau: float
    dt: float = 1.0

    def __post_init__(self):
        if not self.tau > 0.5 * self.dt:
            raise ValueError(f"tau={self.tau} must exceed dt/2 for positive viscosity")

    @property
    def omega(self) -> float:
        return self.dt / self.tau


def equilibrium(rho, u, model: LatticeModel = D3Q19) -> np.ndarray:
    """Second-order equilibrium populations for density ``rho`` and velocity ``u``.

    ``rho`` has shape ``S`` and ``u`` shape ``S + (3,)``; the result has shape
    ``S + (19,)``.
    """
    rho = np.asarray(rho, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    cu = u @ model.velocities.T.astype(np.float64)
    usq = (u * u).sum(axis=-1)[..., None]
    cs2 = model.cs2
    return model.weights * rho[..., None] * (
        1.0 + cu / cs2 + cu * cu / (2.0 * cs2 * cs2) - usq / (2.0 * cs2)
    )


def moments(f, model: LatticeModel = D3Q19) -> SiteMacro:
    f = np.asarray(f, dtype=np.float64)
    rho = f.sum(axis=-1)
    if np.any(rho <= 0.0):
        raise DegenerateStateError("non-positive density: degenerate state")
    u = (f @ model.velocities.astype(np.float64)) / rho[..., None]
    speed = np.sqrt((u * u).sum(axis=-1))
    if np.any(speed > MACH_WARN_SPEED):
        warnings.warn(
            f"velocity magnitude {float(speed.max()):.3g} exceeds low-Mach bound "
            f"{MACH_WARN_SPEED}",
            RuntimeWarning,
            stacklevel=2,
        )
    return SiteMacro(rho, u)


def bgk_collide(f, params: RelaxationParams, model: LatticeModel = D3Q19) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    m = moments(f, model)
    feq = equilibrium(m.rho, m.u, model)
    return f - params.omega * (f - feq)


def viscosity(params: RelaxationParams, rho=1.0, model: LatticeModel = D3Q19):
    """Dynamic viscosity ``rho * cs2 * (tau - dt/2)`` in lattice units."""
    return rho * model.cs2 * (params.tau - 0.5 * params.dt)
