import csv
import io

import numpy as np
import pytest

from sparselb.bench import CSV_FIELDS, MetricsError, compute_metrics, scaling_sweep, summary, sweep_csv
from sparselb.engine import SimulationConfig
from sparselb.boundary import TimeTable, VelocityBC


def test_hundred_mlups():
    r = compute_metrics(10**6, 1000, 10.0)
    assert r.mlups == 100.0
    assert r.mlups_pc == r.mlups == r.mlups_pn


def test_per_worker_division():
    r = compute_metrics(10**6, 1000, 10.0, n_workers=4)
    assert r.mlups == 100.0 and r.mlups_pc == 25.0 and r.mlups_pn == 25.0
    assert r.sites_per_worker == 250000


def test_rate_invariance():
    a = compute_metrics(12345, 100, 0.5)
    b = compute_metrics(12345, 200, 1.0)
    assert a.mlups == pytest.approx(b.mlups, rel=1e-15)


def test_fields_rederive_exactly():
    r = compute_metrics(4321, 77, 0.123, n_workers=3, baseline_time=0.5)
    assert r.mlups == r.n_sites * r.n_steps / (r.sim_time * 1e6)
    assert r.mlups_pc == r.mlups / r.n_workers
    assert r.speedup == 0.5 / 0.123


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_bad_timing(t):
    with pytest.raises(MetricsError):
        compute_metrics(10, 10, t)


def test_sweep_single_row(pipe_small):
    rows = scaling_sweep(pipe_small, [1], 20, warmup=1)
    assert len(rows) == 1 and rows[0].report.speedup == 1.0
    assert rows[0].identical_to_baseline


def test_sweep_rows_physics_identical(pipe_small):
    cfg = SimulationConfig(boundaries={0: VelocityBC(0, TimeTable.constant(0.02))})
    rows = scaling_sweep(pipe_small, [1, 2, 3], 30, cfg, warmup=2)
    assert [r.report.n_workers for r in rows] == [1, 2, 3]
    assert all(r.identical_to_baseline for r in rows)
    assert not np.array_equal(rows[0].u, np.zeros_like(rows[0].u))


def test_sweep_annotates_failures(box5):
    rows = scaling_sweep(box5, [1, 1000], 5, warmup=0)
    assert rows[1].error and rows[1].report.n_steps == 0
    assert "ERROR" in summary(rows)


def test_csv_output(pipe_small):
    rows = scaling_sweep(pipe_small, [1, 2], 10, warmup=0)
    parsed = list(csv.DictReader(io.StringIO(sweep_csv(rows))))
    assert list(parsed[0].keys()) == CSV_FIELDS
    assert [int(r["n_workers"]) for r in parsed] == [1, 2]
    assert float(parsed[1]["sites_per_worker"]) == pipe_small.n_sites / 2
