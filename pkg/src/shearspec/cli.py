"""Command-line interface.

Subcommands:

* ``simulate`` — integrate one configured run; writes ``diagnostics.csv``,
  per-snapshot field files, mode-energy plot data, and a blow-up report
  when the monitor trips.
* ``linear``   — semigroup decay-rate sweep (the ``linear-decay-sweep``
  scenario).
* ``psi``      — pseudospectral bound sweep (the ``psi-sweep`` scenario).
* ``check``    — property suites: ``duhamel-check``, ``energy-audit``,
  ``kernel-props`` (the config's scenario name, or all three).
* ``sweep``    — any named scenario from the config's ``[scenario]``.
* ``plotdata`` — regenerate plot CSV/gnuplot stubs from an output
  directory's existing artifacts.

Exit codes: 0 when everything passed, 1 when a configured check failed,
2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .fieldio import save_field
from .harness import (
    ConfigError,
    InitialData,
    build_grid,
    build_profile,
    build_sim_config,
    emit_plot_data,
    parse_config,
    run_scenario,
    write_csv,
    write_provenance,
    _write_json,
)
from .solver import run_simulation

_CHECK_SUITES = ("duhamel-check", "energy-audit", "kernel-props")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shearspec",
        description=("Fourier-spectral simulation and operator analysis "
                     "for aggregation with fractional diffusion and "
                     "shear advection on the 2-torus"))
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=True):
        p.add_argument("--config", required=True,
                       help="path to a sectioned key = value config file")
        p.add_argument("--out", required=True,
                       help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's random seed")
        if workers:
            p.add_argument("--workers", type=int, default=None,
                           help="process-pool size for sweep points")

    common(sub.add_parser("simulate", help="integrate one configured run"),
           workers=False)
    common(sub.add_parser("linear", help="semigroup decay-rate sweep"))
    common(sub.add_parser("psi", help="pseudospectral bound sweep"))
    common(sub.add_parser("check", help="run property-check suites"))
    common(sub.add_parser("sweep", help="run the config's named scenario"))

    plot = sub.add_parser(
        "plotdata", help="regenerate plot data from run artifacts")
    plot.add_argument("--out", required=True,
                      help="directory holding diagnostics.csv / psi.csv / "
                           "decay_curves.csv")
    return parser


def _cmd_simulate(args) -> int:
    config = parse_config(args.config)
    grid = build_grid(config)
    profile_name = config.get("shear", {}).get("profile", "none")
    u = build_profile(profile_name, grid.ny)
    sim = build_sim_config(config, grid, u)
    if "initial" not in config:
        raise ConfigError("simulate needs an [initial] section")
    n0 = InitialData.from_config(config["initial"]).build(grid)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_provenance(out, config.get("_text"))

    count = [0]

    def sink(state):
        save_field(state.n, out / f"snapshot_{count[0]:06d}.field")
        count[0] += 1

    record, final, report = run_simulation(sim, n0, on_snapshot=sink)

    rows = [[row[c] for c in record.columns] for row in record.rows]
    write_csv(out / "diagnostics.csv", record.columns, rows)
    emit_plot_data(
        "mode-energy",
        [(row["t"], row["l2_zero"] ** 2, row["l2_nonzero"] ** 2)
         for row in record.rows],
        out / "plot_mode_energy")
    if report is not None:
        _write_json(out / "blowup_report.json", report)
    _write_json(out / "run_summary.json", {
        "status": "completed" if report is None else "tripped",
        "t_final": final.t,
        "steps": final.step_count,
        "snapshots": count[0],
        "t0": record.t0,
        "s0": record.s0,
        "negativity_flagged": record.negativity_flagged,
        "report": report,
    })
    status = "completed" if report is None else \
        f"tripped ({report['reason']} at t = {report['time']:.6g})"
    print(f"simulate: {status}; {count[0]} snapshots -> {out}")
    return 0


def _run_named(config: dict, name: str, args) -> int:
    config.setdefault("scenario", {})["name"] = name
    result = run_scenario(config, args.out, workers=args.workers,
                          seed=args.seed)
    print(f"{result.name}: {'PASS' if result.passed else 'FAIL'} -> "
          f"{args.out}")
    return 0 if result.passed else 1


def _cmd_check(args) -> int:
    config = parse_config(args.config)
    name = config.get("scenario", {}).get("name", "all")
    suites = _CHECK_SUITES if name in ("all", None) else (name,)
    for suite in suites:
        if suite not in _CHECK_SUITES:
            raise ConfigError(
                f"check runs one of {', '.join(_CHECK_SUITES)} (or all); "
                f"got {suite!r}")
    worst = 0
    for suite in suites:
        sub_config = dict(config)
        sub_config["scenario"] = dict(config.get("scenario", {}))
        sub_config["scenario"]["name"] = suite
        result = run_scenario(sub_config, Path(args.out) / suite,
                              workers=args.workers, seed=args.seed)
        print(f"{suite}: {'PASS' if result.passed else 'FAIL'}")
        worst = max(worst, 0 if result.passed else 1)
    return worst


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


def _cmd_plotdata(args) -> int:
    out = Path(args.out)
    if not out.is_dir():
        raise ConfigError(f"not a directory: {out}")
    emitted = []

    diag = out / "diagnostics.csv"
    if diag.exists():
        rows = _read_csv(diag)
        emitted += emit_plot_data(
            "mode-energy",
            [(float(r["t"]), float(r["l2_zero"]) ** 2,
              float(r["l2_nonzero"]) ** 2) for r in rows],
            out / "plot_mode_energy")
        emitted += emit_plot_data(
            "decay-curves",
            [("fluctuation_energy", float(r["t"]),
              float(r["l2_nonzero"]) ** 2) for r in rows],
            out / "plot_suppression",
            {"ylabel": "fluctuation L2 energy"})

    curves = out / "decay_curves.csv"
    if curves.exists():
        rows = _read_csv(curves)
        emitted += emit_plot_data(
            "decay-curves",
            [(f"nu={r['nu']}", float(r["t"]), float(r["norm"]))
             for r in rows],
            out / "plot_decay", {"ylabel": "propagator norm"})

    psi = out / "psi.csv"
    if psi.exists():
        rows = _read_csv(psi)
        nus = {r["nu"] for r in rows}
        if len(nus) > 1:
            pts = [(float(r["nu"]), float(r["psi"])) for r in rows]
            meta = {"x_name": "nu", "y_name": "psi"}
        else:
            pts = [(float(r["k"]), float(r["psi"])) for r in rows]
            meta = {"x_name": "k", "y_name": "psi"}
        emitted += emit_plot_data("rate-scaling", pts,
                                  out / "plot_psi_scaling", meta)

    if not emitted:
        raise ConfigError(
            f"no plottable artifacts (diagnostics.csv, decay_curves.csv, "
            f"psi.csv) found in {out}")
    for p in emitted:
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits; normalize for callers
        return int(exc.code) if exc.code else 0

    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "linear":
            config = parse_config(args.config)
            return _run_named(config, "linear-decay-sweep", args)
        if args.command == "psi":
            config = parse_config(args.config)
            return _run_named(config, "psi-sweep", args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "sweep":
            config = parse_config(args.config)
            name = config.get("scenario", {}).get("name")
            if name is None:
                raise ConfigError(
                    "sweep needs [scenario] name = <scenario> in the config")
            return _run_named(config, name, args)
        if args.command == "plotdata":
            return _cmd_plotdata(args)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
