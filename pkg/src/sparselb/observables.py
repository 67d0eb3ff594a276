"""Per-iolet observables, a CSV time-series observer and binary snapshots."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import SparseDomain
from .lattice import CS2

SNAPSHOT_STEP = struct.Struct("<Q")
_SITE_DTYPE = np.dtype([("rho", "<f8"), ("u", "<f8", (3,))])


def measurement_plane(domain: SparseDomain, k: int) -> np.ndarray:
    """Sites in the first lattice layer inside iolet ``k``, within its radius."""
    io = domain.iolets[k]
    c = np.asarray(io.center)
    n = np.asarray(io.normal)
    rel = domain.coords - c
    depth = rel @ n
    radial = rel - depth[:, None] * n
    r = np.linalg.norm(radial, axis=1)
    return np.flatnonzero((depth > 0) & (depth <= 1.0) & (r <= io.radius + 1.0))


def flow_direction(domain: SparseDomain, k: int) -> np.ndarray:
    """Unit vector along which flow through iolet ``k`` counts as positive (downstream)."""
    io = domain.iolets[k]
    n = np.asarray(io.normal, dtype=np.float64)
    return n if io.kind == "inlet" else -n


@dataclass(frozen=True)
class IoletSample:
    max_velocity: float
    pressure: float
    flow_rate: float


def iolet_sample(domain: SparseDomain, k: int, rho, u, plane=None) -> IoletSample:
    """Max speed, mean pressure ``cs2*rho`` and flow rate ``sum(u.n)`` on the plane.

    All values are in lattice units (unit cross-section area per site).
    """
    sites = measurement_plane(domain, k) if plane is None else plane
    if len(sites) == 0:
        return IoletSample(0.0, float("nan"), 0.0)
    uu = u[sites]
    return IoletSample(
        float(np.max(np.linalg.norm(uu, axis=1))),
        float(CS2 * np.mean(rho[sites])),
        float(np.sum(uu @ flow_direction(domain, k))),
    )


class TimeSeriesWriter:
    """Observer writing one CSV row of iolet observables per call."""

    def __init__(self, path, domain: SparseDomain, period: int = 1, units=None):
        self.period = int(period)
        self.domain = domain
        self.units = units
        self.planes = [measurement_plane(domain, k) for k in range(len(domain.iolets))]
        self.rows = []
        self._fh = open(path, "w", newline="") if path is not None else None
        header = ["step", "time"]
        for k, io in enumerate(domain.iolets):
            header += [f"{io.kind}{k}_max_velocity", f"{io.kind}{k}_pressure", f"{io.kind}{k}_flow_rate"]
        self.header = header
        self._csv = csv.writer(self._fh, lineterminator="\n") if self._fh else None
        if self._csv:
            self._csv.writerow(header)

    def __call__(self, sim, step, rho, u):
        t = self.units.time(step) if self.units is not None else float(step)
        row = [step, t]
        for k, plane in enumerate(self.planes):
            s = iolet_sample(self.domain, k, rho, u, plane)
            row += [s.max_velocity, s.pressure, s.flow_rate]
        self.rows.append(row)
        if self._csv:
            self._csv.writerow([repr(x) if isinstance(x, float) else x for x in row])

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=np.float64).reshape(-1, len(self.header))

    def close(self):
        if self._fh is not None and not self._fh.closed:
            self._fh.close()


class SnapshotWriter:
    """Observer appending binary field records: u64 step, then rho and u per site."""

    def __init__(self, path, period: int):
        self.period = int(period)
        self.path = Path(path)
        self._fh = open(self.path, "wb")

    def __call__(self, sim, step, rho, u):
        self._fh.write(encode_snapshot(step, rho, u))

    def close(self):
        if not self._fh.closed:
            self._fh.close()


def encode_snapshot(step: int, rho, u) -> bytes:
    rec = np.empty(len(rho), dtype=_SITE_DTYPE)
    rec["rho"] = rho
    rec["u"] = u
    return SNAPSHOT_STEP.pack(int(step)) + rec.tobytes()


def read_snapshots(path, n_sites: int):
    """All records in a snapshot file as ``[(step, rho, u), ...]``."""
    data = Path(path).read_bytes()
    size = SNAPSHOT_STEP.size + n_sites * _SITE_DTYPE.itemsize
    if len(data) % size:
        raise ValueError(f"{path}: size {len(data)} is not a whole number of {n_sites}-site records")
    out = []
    for off in range(0, len(data), size):
        (step,) = SNAPSHOT_STEP.unpack_from(data, off)
        rec = np.frombuffer(data, dtype=_SITE_DTYPE, count=n_sites, offset=off + SNAPSHOT_STEP.size)
        out.append((int(step), rec["rho"].copy(), rec["u"].copy()))
    return out
