"""
Command-line surface: simulate, analyze, cover gen/verify, verify-cutoffs,
selftest.

Exit codes: 0 success, 1 usage error, 2 validation/format failure,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_DIVERGED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors -> exit 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mhdlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the solver, write snapshots")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True, help="output directory")

    ana = sub.add_parser("analyze", help="full cascade analysis of a snapshot series")
    ana.add_argument("--config", required=True)
    ana.add_argument("--snapshots", required=True, help="snapshot directory")
    ana.add_argument("--out", required=True, help="report JSON path")
    ana.add_argument("--csv", default=None, help="flux-vs-scale CSV path (default: <out>.csv)")

    cov = sub.add_parser("cover", help="cover generation and validation")
    cov_sub = cov.add_subparsers(dest="cover_command", required=True)
    cg = cov_sub.add_parser("gen", help="generate a cover as JSON")
    cg.add_argument("--config", required=True)
    cg.add_argument("--out", required=True)
    cg.add_argument("--scale", type=float, default=None, help="ball radius (default: smallest configured scale)")
    cg.add_argument("--seed", type=int, default=None, help="override the configured cover seed")
    cv = cov_sub.add_parser("verify", help="validate a cover JSON file")
    cv.add_argument("--config", required=True)
    cv.add_argument("--cover", required=True)

    vc = sub.add_parser("verify-cutoffs", help="derivative-bound reports for all cutoff kinds")
    vc.add_argument("--config", required=True)

    sub.add_parser("selftest", help="run quick built-in consistency checks")
    return p


def _load_config(path):
    from .config import ConfigError, load_config

    try:
        return load_config(path)
    except FileNotFoundError:
        print(f"config file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _cmd_simulate(args) -> int:
    from .solver import DivergedError, StepRejectedError, run
    from .snapshots import write_snapshot

    cfg = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    init = cfg.initial.build(cfg.grid)
    try:
        series = run(init, cfg.solver)
    except StepRejectedError as exc:
        print(f"time step rejected: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergedError as exc:
        print(f"run diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    for i, state in enumerate(series.states):
        write_snapshot(state, out / f"snap_{i:05d}.mhd")
    meta = {
        "n_snapshots": len(series),
        "times": [float(t) for t in series.times],
        "energy_residuals": series.energy_residuals,
        "grid": {"n": cfg.grid.n, "box_length": cfg.grid.box_length},
        "solver": {
            "viscosity": cfg.solver.viscosity,
            "resistivity": cfg.solver.resistivity,
            "dt": cfg.solver.dt,
            "t_end": cfg.solver.t_end,
            "snapshot_stride": cfg.solver.snapshot_stride,
        },
    }
    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    print(f"wrote {len(series)} snapshots to {out}")
    return EXIT_OK


def _read_series(snap_dir: Path):
    from .snapshots import SnapshotFormatError, read_snapshot
    from .solver import SnapshotSeries

    paths = sorted(snap_dir.glob("snap_*.mhd"))
    if not paths:
        print(f"no snapshots found in {snap_dir}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)
    series = SnapshotSeries()
    for p in paths:
        try:
            series.append(read_snapshot(p))
        except SnapshotFormatError as exc:
            print(f"bad snapshot {p}: {exc}", file=sys.stderr)
            raise SystemExit(EXIT_VALIDATION)
    return series


def report_schema() -> dict:
    ref = importlib.resources.files("mhdlab").joinpath("report_schema.json")
    return json.loads(ref.read_text())


def _cmd_analyze(args) -> int:
    from .ensemble import cascade_check, flux_table_csv, locality_check
    from .kinematics import verify_a1, verify_a3

    cfg = _load_config(args.config)
    series = _read_series(Path(args.snapshots))

    grid = series[0].grid
    if grid != cfg.grid:
        print(
            f"snapshot grid {grid} does not match configured grid {cfg.grid}",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    T = float(series.times[-1])
    if abs(T - cfg.analysis.T) > 1e-9 * max(1.0, cfg.analysis.T):
        print(
            f"snapshot series ends at t={T:g}, config expects T={cfg.analysis.T:g}",
            file=sys.stderr,
        )
        return EXIT_VALIDATION

    report = cascade_check(
        series, cfg.analysis,
        covers_per_scale=cfg.covers_per_scale, seed=cfg.cover_seed,
    )
    locality = locality_check(report, cfg.analysis.K_star)
    a1 = verify_a1(
        series,
        pair_samples=cfg.a1_pair_samples,
        seed=cfg.a1_seed,
        R0=cfg.analysis.R0,
    )
    a3 = verify_a3(series, cfg.analysis)
    report.assumptions = {"a1": a1.to_json(), "a3": a3.to_json()}

    doc = report.to_json()
    doc["locality"] = locality.to_json()
    jsonschema.validate(doc, report_schema())

    out = Path(args.out)
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        fh.write(flux_table_csv(report))
    print(f"wrote {out} and {csv_path}")
    return EXIT_OK


def _cmd_cover(args) -> int:
    from .covers import Cover, CoverParams, InfeasibleCoverError, generate_cover, verify_cover

    cfg = _load_config(args.config)
    ana = cfg.analysis
    if args.cover_command == "gen":
        R = args.scale if args.scale is not None else min(ana.scales)
        seed = args.seed if args.seed is not None else cfg.cover_seed
        try:
            cover = generate_cover(
                CoverParams(K1=ana.K1, K2=ana.K2, R0=ana.R0, R=R), seed=seed
            )
        except (ValueError, InfeasibleCoverError) as exc:
            print(f"cover generation failed: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        cover.save(args.out)
        print(f"wrote cover with {cover.n} elements to {args.out}")
        return EXIT_OK

    try:
        cover = Cover.load(args.cover)
    except (OSError, KeyError, ValueError) as exc:
        print(f"cannot load cover: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report = verify_cover(cover)
    print(json.dumps(report.to_json(), indent=2))
    return EXIT_OK if report.all_ok else EXIT_VALIDATION


def _cmd_verify_cutoffs(args) -> int:
    from .cutoffs import (
        cutoff_for_cover_element,
        make_integral_cutoff,
        make_interior_cutoff,
        verify_cutoff_bounds,
    )

    cfg = _load_config(args.config)
    ana = cfg.analysis
    R = min(ana.scales)
    cp = ana.cutoff_params
    cutoffs = {
        "integral": make_integral_cutoff(ana.R0, cp),
        "interior": make_interior_cutoff(np.zeros(3), R, cp, R0=ana.R0),
        "boundary": cutoff_for_cover_element(
            np.array([ana.R0 - 0.5 * R, 0.0, 0.0]), R, ana.R0, cp
        ),
    }
    ok = True
    for name, c in cutoffs.items():
        report = verify_cutoff_bounds(c)
        ok = ok and report.all_ok
        print(json.dumps({"cutoff": name, **report.to_json()}, indent=2))
    return EXIT_OK if ok else EXIT_VALIDATION


def _cmd_selftest(args) -> int:
    import tempfile

    from .covers import CoverParams, generate_cover, verify_cover
    from .grid import GridSpec
    from .kinematics import m_kernel, sigma_kernel, strain_decomposition_check
    from .snapshots import read_snapshot, write_snapshot
    from .solver import init_random_solenoidal

    checks = []

    def check(name, fn):
        try:
            ok = bool(fn())
        except Exception as exc:  # selftest reports, it does not crash
            print(f"FAIL {name}: {exc}")
            checks.append(False)
            return
        print(("PASS" if ok else "FAIL") + f" {name}")
        checks.append(ok)

    check("sigma kernel at e1", lambda: np.allclose(
        sigma_kernel([1.0, 0.0, 0.0]), np.diag([2.0, -1.0, -1.0])))
    check("sigma kernel trace-free", lambda: abs(np.trace(
        sigma_kernel(np.array([1.0, 2.0, 2.0]) / 3.0))) < 1e-12)
    check("M kernel parallel f", lambda: np.allclose(
        m_kernel([0.0, 1.0, 0.0], [0.0, 5.0, 0.0]), 0.0))

    grid = GridSpec(16, 2.0 * np.pi)
    state = init_random_solenoidal(grid, -2.0, seed=11)
    check("strain decomposition identity", lambda:
          strain_decomposition_check(state.u) < 1e-10)

    def roundtrip():
        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / "snap.mhd"
            write_snapshot(state, path)
            back = read_snapshot(path)
            return (
                np.array_equal(back.u.data, state.u.to_physical().data)
                and np.array_equal(back.b.data, state.b.to_physical().data)
                and back.time == state.time
            )
    check("snapshot round-trip bit-exact", roundtrip)

    def cover_ok():
        R0 = 2.0 * np.pi / 8.0
        cover = generate_cover(CoverParams(K1=8, K2=8, R0=R0, R=R0 / 2.0), seed=3)
        return verify_cover(cover, sample_density=8).all_ok
    check("cover generation valid", cover_ok)

    failed = checks.count(False)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "analyze": _cmd_analyze,
        "cover": _cmd_cover,
        "verify-cutoffs": _cmd_verify_cutoffs,
        "selftest": _cmd_selftest,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
