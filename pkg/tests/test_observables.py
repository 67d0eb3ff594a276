import numpy as np
import pytest

from sparselb.engine import SimulationConfig, initialize, run
from sparselb.boundary import PressureBC, TimeTable, VelocityBC
from sparselb.lattice import CS2
from sparselb.observables import (
    SnapshotWriter,
    TimeSeriesWriter,
    encode_snapshot,
    flow_direction,
    iolet_sample,
    measurement_plane,
    read_snapshots,
)


def test_planes_are_end_layers(pipe_small):
    z = pipe_small.coords[:, 2]
    assert np.array_equal(np.sort(measurement_plane(pipe_small, 0)), np.flatnonzero(z == 0))
    assert np.array_equal(np.sort(measurement_plane(pipe_small, 1)), np.flatnonzero(z == 19))
    assert flow_direction(pipe_small, 0) @ flow_direction(pipe_small, 1) == 1.0


def test_sample_values(pipe_small):
    n = pipe_small.n_sites
    rho = np.full(n, 1.2)
    u = np.zeros((n, 3))
    u[:, 2] = 0.01
    s = iolet_sample(pipe_small, 1, rho, u)
    assert s.flow_rate == pytest.approx(0.01 * len(measurement_plane(pipe_small, 1)))
    assert s.pressure == pytest.approx(1.2 * CS2)
    assert s.max_velocity == pytest.approx(0.01)


def test_snapshot_roundtrip(tmp_path, rng):
    rho = rng.random(5)
    u = rng.random((5, 3))
    raw = encode_snapshot(7, rho, u)
    assert len(raw) == 8 + 5 * 32
    assert int.from_bytes(raw[:8], "little") == 7
    assert np.frombuffer(raw[8:16], "<f8")[0] == rho[0]
    p = tmp_path / "s.bin"
    p.write_bytes(raw + encode_snapshot(9, rho * 2, u))
    (s0, r0, u0), (s1, r1, _) = read_snapshots(p, 5)
    assert (s0, s1) == (7, 9)
    assert np.array_equal(r0, rho) and np.array_equal(u0, u) and np.array_equal(r1, 2 * rho)
    with pytest.raises(ValueError):
        read_snapshots(p, 4)


def test_writers_as_observers(pipe_small, tmp_path):
    bcs = {0: VelocityBC(0, TimeTable.constant(0.02)), 1: PressureBC(1, TimeTable.constant(CS2))}
    series = TimeSeriesWriter(tmp_path / "series.csv", pipe_small, period=5)
    snaps = SnapshotWriter(tmp_path / "snap.bin", period=10)
    sim = initialize(pipe_small, SimulationConfig(boundaries=bcs))
    run(sim, 20, [series, snaps])
    lines = (tmp_path / "series.csv").read_text().splitlines()
    assert lines[0].startswith("step,time,inlet0_max_velocity")
    assert [int(l.split(",")[0]) for l in lines[1:]] == [0, 5, 10, 15, 20]
    recs = read_snapshots(tmp_path / "snap.bin", pipe_small.n_sites)
    assert [r[0] for r in recs] == [0, 10, 20]
    rho, u = sim.macros()
    assert np.array_equal(recs[-1][1], rho) and np.array_equal(recs[-1][2], u)
    assert series.as_array()[-1, 4] > 0
