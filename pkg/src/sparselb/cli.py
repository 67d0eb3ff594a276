"""Command-line entry point: ``sparselb {generate,run,compare,bench}``.

Exit status: 0 success, 1 usage or configuration error, 2 runtime error,
3 comparison mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (
    ConfigFileError,
    RunConfig,
    build_geometry,
    lattice_units,
    load_config,
    load_geometry,
    simulation_config,
)
from .geometry import GeometryError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_MISMATCH = 3

log = logging.getLogger("sparselb")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sparselb", description="Sparse-geometry D3Q19 lattice Boltzmann solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a builtin geometry as an SPLB file")
    g.add_argument("shape", help="e.g. 'pipe:radius=4,length=20' or 'bifurcation'")
    g.add_argument("--out", required=True, help="output .splb path")
    g.add_argument("--voxel-size", type=float, default=None)

    r = sub.add_parser("run", help="run a simulation from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--workers", type=int)
    r.add_argument("--out")

    c = sub.add_parser("compare", help="run engine variants and diff their snapshots")
    c.add_argument("--config", required=True)
    c.add_argument(
        "--variant",
        action="append",
        default=[],
        metavar="KEY=VAL[,KEY=VAL]",
        help="overrides of layout/scheme/sequence/workers/tau; give at least two",
    )
    c.add_argument("--workers", type=int)
    c.add_argument("--out")

    b = sub.add_parser("bench", help="strong-scaling sweep over worker counts")
    b.add_argument("--config", required=True)
    b.add_argument("--workers", default="1,2,4", help="comma-separated worker counts")
    b.add_argument("--steps", type=int, help="steps per row (default: config steps)")
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--out")
    return p


def _load(args) -> tuple:
    cfg = load_config(args.config)
    if getattr(args, "out", None):
        cfg = replace(cfg, out=args.out)
    if isinstance(getattr(args, "workers", None), int):
        cfg = replace(cfg, workers=args.workers)
    domain = load_geometry(cfg)
    return cfg, domain


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    from .geometry_io import read_domain, write_domain

    domain = build_geometry(args.shape, args.voxel_size)
    write_domain(domain, args.out)
    read_domain(args.out)
    print(f"wrote {args.out}: {domain.n_sites} sites, {len(domain.iolets)} iolets")
    return EXIT_OK


def execute(cfg: RunConfig, domain, out: Path | None, **overrides):
    """Run ``cfg`` on ``domain``, writing outputs under ``out`` when given."""
    from .engine import initialize, run
    from .observables import SnapshotWriter, TimeSeriesWriter

    sc = simulation_config(cfg, domain, **overrides)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    units = lattice_units(cfg, domain)
    if cfg.step_seconds:
        units = None
    observers = []
    series = TimeSeriesWriter(out / "series.csv" if out else None, domain, cfg.series_period, units)
    observers.append(series)
    if out:
        observers.append(SnapshotWriter(out / "snapshots.bin", cfg.capture_period))
    with initialize(domain, sc) as sim:
        result = run(sim, cfg.steps, observers)
    return result, series


def cmd_run(args) -> int:
    from .bench import sweep_csv, SweepRow, summary

    cfg, domain = _load(args)
    out = Path(cfg.out)
    result, _ = execute(cfg, domain, out)
    rows = [SweepRow(result.report)]
    (out / "report.csv").write_text(sweep_csv(rows))
    print(summary(rows))
    print(f"outputs in {out}")
    return EXIT_OK


_VARIANT_KEYS = {"layout": str, "scheme": str, "sequence": str, "workers": int, "tau": float}


def parse_variant(text: str) -> dict:
    over = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in _VARIANT_KEYS:
            raise UsageError(f"variant {text!r}: {item!r} is not one of {'/'.join(_VARIANT_KEYS)}=VALUE")
        try:
            over[key] = _VARIANT_KEYS[key](val.strip())
        except ValueError:
            raise UsageError(f"variant {text!r}: bad value for {key}") from None
    return over


def compare_variants(cfg: RunConfig, domain, variants):
    """Run each variant; return ``(label, max|drho|, max|du|, error)`` relative to the first."""
    from .engine import initialize, run

    results = []
    for over in variants:
        label = ",".join(f"{k}={v}" for k, v in over.items()) or "config"
        try:
            vcfg = replace(cfg, **over)
            sc = simulation_config(vcfg, domain)
            with initialize(domain, sc) as sim:
                res = run(sim, cfg.steps)
            snaps = {s: res.cache.at(s) for s in res.cache.steps}
            results.append((label, snaps, None))
        except Exception as exc:  # noqa: BLE001 - reported per variant
            results.append((label, None, f"{type(exc).__name__}: {exc}"))
    base = next((r for r in results if r[1] is not None), None)
    rows = []
    for label, snaps, err in results:
        if err is not None or base is None:
            rows.append((label, float("nan"), float("nan"), err or "no successful baseline"))
            continue
        if snaps.keys() != base[1].keys():
            rows.append((label, float("nan"), float("nan"), "capture steps differ"))
            continue
        drho = max((float(np.max(np.abs(snaps[s][0] - base[1][s][0]), initial=0.0)) for s in snaps), default=0.0)
        du = max((float(np.max(np.abs(snaps[s][1] - base[1][s][1]), initial=0.0)) for s in snaps), default=0.0)
        rows.append((label, drho, du, None))
    return rows


def cmd_compare(args) -> int:
    cfg, domain = _load(args)
    if len(args.variant) < 2:
        raise UsageError("compare needs at least two --variant options")
    variants = [parse_variant(v) for v in args.variant]
    rows = compare_variants(cfg, domain, variants)
    lines = ["variant,max_abs_drho,max_abs_du,status"]
    ok = True
    for label, drho, du, err in rows:
        status = "error: " + err if err else ("identical" if drho == 0.0 and du == 0.0 else "DIFFERENT")
        ok &= status == "identical"
        lines.append(f"\"{label}\",{drho!r},{du!r},{status}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = _out_dir(cfg)
        (out / "compare.csv").write_text(text)
    if any(err for *_, err in rows):
        return EXIT_RUNTIME
    return EXIT_OK if ok else EXIT_MISMATCH


def cmd_bench(args) -> int:
    from .bench import scaling_sweep, summary, sweep_csv

    try:
        counts = [int(x) for x in args.workers.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--workers: expected comma-separated integers, got {args.workers!r}") from None
    if not counts:
        raise UsageError("--workers: empty list")
    args.workers = None
    cfg, domain = _load(args)
    steps = args.steps if args.steps is not None else cfg.steps
    if steps < 1:
        raise UsageError("bench needs steps >= 1 (set steps in the config or pass --steps)")
    sc = simulation_config(cfg, domain)
    rows = scaling_sweep(domain, counts, steps, sc, repeats=args.repeats, keep_fields=False)
    out = _out_dir(cfg)
    (out / "scaling.csv").write_text(sweep_csv(rows))
    knee = ["sites_per_worker,mlups_pc"] + [
        f"{r.report.sites_per_worker!r},{r.report.mlups_pc!r}" for r in rows if not r.error
    ]
    (out / "knee.csv").write_text("\n".join(knee) + "\n")
    print(summary(rows))
    print(f"outputs in {out}")
    if any(r.error for r in rows):
        return EXIT_RUNTIME
    if any(r.identical_to_baseline is False for r in rows):
        print("physics differs between worker counts", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


_COMMANDS = {"generate": cmd_generate, "run": cmd_run, "compare": cmd_compare, "bench": cmd_bench}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigFileError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (UsageError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
