import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparselb.cli import main, parse_variant, UsageError
from sparselb.config import (
    ConfigFileError,
    IoletSpec,
    RunConfig,
    build_geometry,
    parse_config,
    serialize_config,
)
from sparselb.geometry_io import read_domain
from sparselb.observables import read_snapshots

CFG = """\
geometry = {geom}
steps = {steps}
tau = 0.8
voxel_size = 0.0002
capture_period = 20
series_period = 5

[iolet.0]
kind = velocity
table = beat

[iolet.1]
kind = pressure
table = 0:0.3333333333333333
"""


@pytest.fixture
def setup(tmp_path):
    geom = tmp_path / "pipe.splb"
    assert main(["generate", "pipe:radius=3,length=10", "--out", str(geom)]) == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text(CFG.format(geom="pipe.splb", steps=40))
    return tmp_path, cfg


def test_generate(tmp_path, capsys):
    assert main(["generate", "pipe:radius=4,length=20", "--out", str(tmp_path / "p.splb")]) == 0
    assert read_domain(tmp_path / "p.splb").n_sites == build_geometry("pipe:radius=4,length=20").n_sites
    assert main(["generate", "bifurcation", "--out", str(tmp_path / "b.splb")]) == 0
    assert len(read_domain(tmp_path / "b.splb").iolets) == 3


def test_generate_rejects_bad_dims(tmp_path, capsys):
    assert main(["generate", "pipe:radius=1,length=20", "--out", str(tmp_path / "x.splb")]) == 1
    assert "radius" in capsys.readouterr().err
    assert main(["generate", "torus", "--out", str(tmp_path / "x.splb")]) == 1


def test_run_outputs(setup, capsys):
    tmp, cfg = setup
    assert main(["run", "--config", str(cfg), "--out", str(tmp / "o")]) == 0
    for name in ("series.csv", "snapshots.bin", "report.csv"):
        assert (tmp / "o" / name).exists()
    n = read_domain(tmp / "pipe.splb").n_sites
    assert [s for s, *_ in read_snapshots(tmp / "o" / "snapshots.bin", n)] == [0, 20, 40]
    rows = (tmp / "o" / "series.csv").read_text().splitlines()
    assert len(rows) == 1 + 9


def test_run_deterministic_outputs(setup):
    tmp, cfg = setup
    main(["run", "--config", str(cfg), "--out", str(tmp / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp / "b"), "--workers", "2"])
    for name in ("series.csv", "snapshots.bin"):
        assert (tmp / "a" / name).read_bytes() == (tmp / "b" / name).read_bytes()


def test_run_zero_steps(setup):
    tmp, cfg = setup
    cfg.write_text(CFG.format(geom="pipe.splb", steps=0))
    assert main(["run", "--config", str(cfg), "--out", str(tmp / "z")]) == 0
    assert (tmp / "z" / "series.csv").read_text().count("\n") == 2


def test_run_lists_all_config_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("geometry = pipe:radius=3,length=8\ntau = 0.5\nworkers = 0\nlayout = csr\n[iolet.9]\nkind = pressure\ntable = 0:0.3\n")
    assert main(["run", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    for field in ("tau", "workers", "layout"):
        assert f"config error: {field}:" in err


def test_run_unknown_iolet_and_missing_file(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("geometry = pipe:radius=3,length=8\n[iolet.9]\nkind = pressure\ntable = 0:0.3\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert "iolet.9" in capsys.readouterr().err
    cfg.write_text("geometry = nowhere.splb\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert "nowhere.splb" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "absent.cfg")]) == 1


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as e:
        main(["run"])
    assert e.value.code == 1


def test_compare_identical(setup, capsys):
    tmp, cfg = setup
    code = main([
        "compare", "--config", str(cfg),
        "--variant", "layout=aos", "--variant", "layout=soa,workers=4",
        "--variant", "scheme=pull", "--variant", "sequence=reordered,workers=2",
    ])
    out = capsys.readouterr().out
    assert code == 0, out
    assert out.count("identical") == 4


def test_compare_detects_difference(setup, capsys):
    tmp, cfg = setup
    assert main(["compare", "--config", str(cfg), "--variant", "tau=0.8", "--variant", "tau=0.85"]) == 3
    assert "DIFFERENT" in capsys.readouterr().out


def test_compare_needs_two_variants(setup):
    _, cfg = setup
    assert main(["compare", "--config", str(cfg), "--variant", "layout=soa"]) == 1


def test_compare_reports_variant_failure(setup, capsys):
    _, cfg = setup
    assert main(["compare", "--config", str(cfg), "--variant", "layout=aos", "--variant", "workers=100000"]) == 2
    assert "error" in capsys.readouterr().out


def test_bench(setup):
    tmp, cfg = setup
    assert main(["bench", "--config", str(cfg), "--workers", "1,2", "--steps", "10", "--out", str(tmp / "b")]) == 0
    knee = (tmp / "b" / "knee.csv").read_text().splitlines()
    assert knee[0] == "sites_per_worker,mlups_pc" and len(knee) == 3
    assert (tmp / "b" / "scaling.csv").exists()


def test_parse_variant():
    assert parse_variant("layout=soa,workers=4") == {"layout": "soa", "workers": 4}
    with pytest.raises(UsageError):
        parse_variant("colour=red")


def test_config_example():
    cfg = parse_config(CFG.format(geom="g.splb", steps=5))
    assert cfg.iolets[0] == IoletSpec("velocity", "beat")
    assert cfg.iolets[1].table == ((0.0, 1 / 3),)
    assert cfg.steps == 5 and cfg.tau == 0.8


def test_config_unknown_section_and_key():
    with pytest.raises(ConfigFileError) as e:
        parse_config("geometry = x\ncolour = red\n[outlet]\nkind = x\n")
    msgs = e.value.errors
    assert any(m.startswith("colour:") for m in msgs) and any("outlet" in m for m in msgs)


floats = st.floats(min_value=1e-6, max_value=1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=100, deadline=None)
@given(
    tau=st.floats(0.5001, 5.0),
    steps=st.integers(0, 10**6),
    workers=st.integers(1, 64),
    layout=st.sampled_from(["aos", "soa"]),
    scheme=st.sampled_from(["push", "pull"]),
    voxel=st.one_of(st.none(), floats),
    table=st.lists(st.tuples(floats, floats), min_size=1, max_size=5, unique_by=lambda p: p[0]),
)
def test_config_fixpoint(tau, steps, workers, layout, scheme, voxel, table):
    table = tuple(sorted(table))
    cfg = RunConfig(
        geometry="pipe:radius=4,length=20",
        steps=steps,
        tau=tau,
        voxel_size=voxel,
        workers=workers,
        layout=layout,
        scheme=scheme,
        iolets={0: IoletSpec("velocity", "beat"), 1: IoletSpec("pressure", table)},
    )
    text = serialize_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert serialize_config(again) == text
