"""Wall and inlet/outlet boundary rules, time tables and unit conversion.

The per-site functions here are reference implementations used by tests
and tooling.  The engine applies the same rules inside the compiled
kernels (:mod:`sparselb.kernels`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Iolet
from .lattice import CS2, D3Q19, equilibrium

BLOOD_KINEMATIC_VISCOSITY = 4.0e-6  # m^2/s
HEART_PERIOD = 1.0  # s, 60 beats per minute

# Peak inlet speed over one 60 bpm beat, lattice units: a systolic upstroke,
# dicrotic notch and slow diastolic decay.
BEAT_TABLE = (
    (0.00, 0.010),
    (0.05, 0.018),
    (0.10, 0.034),
    (0.15, 0.048),
    (0.20, 0.050),
    (0.25, 0.044),
    (0.30, 0.030),
    (0.35, 0.018),
    (0.40, 0.012),
    (0.45, 0.016),
    (0.50, 0.019),
    (0.60, 0.016),
    (0.70, 0.013),
    (0.85, 0.011),
)


class BoundaryConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TimeTable:
    """Piecewise-linear function of time in seconds.

    With a ``period`` the table repeats and interpolation wraps from the
    last node back to the first; without one it is held constant beyond
    either end.
    """

    times: tuple
    values: tuple
    period: float | None = None

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        if not times:
            raise BoundaryConfigError("time table is empty")
        if len(times) != len(values):
            raise BoundaryConfigError("time table has mismatched time and value columns")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise BoundaryConfigError("time table nodes must be strictly increasing")
        if self.period is not None:
            if not self.period > 0:
                raise BoundaryConfigError("time table period must be positive")
            if times[0] < 0 or times[-1] >= self.period:
                raise BoundaryConfigError("periodic table nodes must lie in [0, period)")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value: float) -> "TimeTable":
        return cls((0.0,), (value,))

    @classmethod
    def from_pairs(cls, pairs, period=None) -> "TimeTable":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), period)

    def __call__(self, t):
        if len(self.times) == 1:
            return np.full_like(np.asarray(t, dtype=np.float64), self.values[0])[()]
        if self.period is None:
            return np.interp(t, self.times, self.values)[()]
        return np.interp(t, self.times, self.values, period=self.period)[()]

    @property
    def min_value(self) -> float:
        return min(self.values)


BEAT_PROFILE = TimeTable.from_pairs(BEAT_TABLE, period=HEART_PERIOD)


def beat_profile(t, table: TimeTable = BEAT_PROFILE):
    """Peak inlet speed (lattice units) at time ``t`` seconds."""
    return table(t)


@dataclass(frozen=True)
class PressureBC:
    iolet: int
    pressure: TimeTable  # lattice units

    kind = "pressure"

    def ghost_density(self, t):
        return self.pressure(t) / CS2

    def check(self):
        if not self.pressure.min_value / CS2 > 0:
            raise BoundaryConfigError(
                f"iolet {self.iolet}: ghost density must stay positive (min pressure "
                f"{self.pressure.min_value})"
            )


@dataclass(frozen=True)
class VelocityBC:
    iolet: int
    max_speed: TimeTable  # lattice units

    kind = "velocity"

    def check(self):
        pass


def parabolic_weight(coords, iolet: Iolet) -> np.ndarray:
    """``1 - (r/R)^2`` with ``r`` the distance from the iolet axis, zero outside ``R``."""
    p = np.asarray(coords, dtype=np.float64) - np.asarray(iolet.center)
    n = np.asarray(iolet.normal)
    radial = p - (p @ n)[..., None] * n
    r2 = (radial * radial).sum(axis=-1)
    return np.clip(1.0 - r2 / (iolet.radius * iolet.radius), 0.0, 1.0)


def bounce_back(f_post, i: int, model=D3Q19):
    """Mid-link bounce-back: returns ``(inverse(i), value)`` for ``f_new`` at the same site."""
    return int(model.inverse[i]), float(f_post[i])


def ladd_velocity(f_post, i: int, rho: float, u_bc, model=D3Q19):
    """Bounce-back off an iolet moving with velocity ``u_bc``; returns ``(inverse(i), value)``."""
    cu = float(np.dot(model.velocities[i], u_bc))
    return int(model.inverse[i]), float(f_post[i]) - 2.0 * model.weights[i] * rho * cu / model.cs2


def nash_pressure(u_site, link_dirs, rho_ghost: float, normal, model=D3Q19) -> dict:
    """Unknown populations at a pressure iolet site.

    For each iolet link direction ``i`` the incoming population in
    ``inverse(i)`` is the equilibrium at the ghost density with the site's
    velocity projected onto the iolet normal.
    """
    n = np.asarray(normal, dtype=np.float64)
    u_n = float(np.dot(u_site, n)) * n
    feq = equilibrium(rho_ghost, u_n, model)
    return {int(model.inverse[i]): float(feq[model.inverse[i]]) for i in link_dirs}


@dataclass(frozen=True)
class LatticeUnits:
    """Physical/lattice conversion fixed by voxel size, viscosity and tau."""

    voxel_size: float
    tau: float
    viscosity: float = BLOOD_KINEMATIC_VISCOSITY

    @property
    def dt(self) -> float:
        """Time step in seconds: ``nu_lattice * dx^2 / nu``."""
        return CS2 * (self.tau - 0.5) * self.voxel_size**2 / self.viscosity

    def time(self, step):
        return step * self.dt

    def steps_for(self, seconds: float) -> int:
        return int(math.ceil(seconds / self.dt - 1e-9))

    def velocity_to_physical(self, u):
        return u * self.voxel_size / self.dt

    def pressure_to_physical(self, p, density=1000.0):
        """Gauge pressure in Pa for lattice pressure ``p`` relative to ``cs2``."""
        return (p - CS2) * density * (self.voxel_size / self.dt) ** 2
