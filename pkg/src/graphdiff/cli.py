"""Command-line entry point: budget, transit, synth, analyze, verify.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical or
convergence failure, 4 not enough data (e.g. too few indexed peaks).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io as gio
from .config import ConfigError, RunConfig, read_config

log = logging.getLogger("graphdiff")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DATA = 0, 2, 3, 4


class InsufficientData(Exception):
    pass


def _emit(args, cfg: RunConfig, text: str, command: str, inputs=()) -> None:
    """Write ``text`` to ``--output`` (with provenance) or stdout."""
    if args.output in (None, "-"):
        sys.stdout.write(text)
        return
    gio.atomic_write(args.output, text)
    gio.write_provenance(args.output, gio.provenance(command, cfg.text, cfg.seed, inputs))


# --- commands --------------------------------------------------------------


def cmd_budget(args, cfg: RunConfig) -> int:
    from .beamline import budget_report

    beam = cfg.beam()
    report = budget_report(beam, cfg.geometry(), cfg.lattice(), cfg["lattice"]["max_ratio"])
    _emit(args, cfg, gio.dumps_json(report), "budget")
    return EXIT_OK


def cmd_transit(args, cfg: RunConfig) -> int:
    from .beamline import Beam
    from .transit import energy_scan, scan_row, scan_to_csv, simulate_transit

    species, energies, cell, pot, tcfg, stopping, crit = cfg.transit_setup()
    rows = []
    for sp in species:
        if args.trajectory_dir:
            out = Path(args.trajectory_dir)
            for e in sorted(energies):
                res = simulate_transit(Beam.of(sp, e), cell, pot, tcfg, stopping)
                gio.atomic_write(out / f"trajectory_{sp.value}_{e:g}eV.csv", res.trajectory.to_csv())
                rows.append(scan_row(res, crit))
        else:
            rows += energy_scan(sp, energies, cell, pot, tcfg, stopping, crit, cfg["transit"]["workers"])
    _emit(args, cfg, scan_to_csv(rows), "transit")
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    from .lattice import enumerate_rings, reciprocal_basis
    from .synth import synthesize

    if not args.output or args.output == "-":
        raise ConfigError("synth needs --output PATH.pgm")
    beam = cfg.beam()
    geom = cfg.geometry()
    rl = reciprocal_basis(cfg.lattice())
    rings = enumerate_rings(rl, cfg["lattice"]["max_ratio"])
    n = cfg["synth"]["frames"]
    if n < 1:
        raise ConfigError("[synth] frames must be >= 1")
    out = Path(args.output)
    paths = [out] if n == 1 else [out.with_name(f"{out.stem}_{i:03d}{out.suffix}") for i in range(n)]
    for i, path in enumerate(paths):
        img = synthesize(beam, rings, rl, geom, cfg.pattern(frame=i))
        gio.write_pgm(path, img, {"seed": img.meta["pattern"]["noise_seed"]})
        gio.write_provenance(path, gio.provenance("synth", cfg.text, cfg.seed))
        print(path)
    return EXIT_OK


def _nominal_beam(cfg: RunConfig, frames):
    from .beamline import Beam

    beam = cfg.beam(energy_required=False)
    if beam is not None:
        return beam
    meta = frames[0].meta
    if "species" in meta and "energy_eV" in meta:
        log.info("nominal beam taken from the image sidecar")
        return Beam.of(meta["species"], float(meta["energy_eV"]))
    raise ConfigError("missing required key [beam] energy (and no image sidecar carries one)")


def cmd_analyze(args, cfg: RunConfig) -> int:
    from .imgproc import InsufficientPeaks
    from .lattice import reciprocal_basis
    from .pipeline import analyze

    if not args.output or args.output == "-":
        raise ConfigError("analyze needs --output PREFIX")
    try:
        frames = [gio.read_image(p) for p in args.images]
        dark = gio.read_image(args.dark).data if args.dark else None
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read input: {exc}") from None
    beam = _nominal_beam(cfg, frames)
    rl = reciprocal_basis(cfg.lattice())
    try:
        res = analyze(frames, beam, rl, cfg.geometry(), cfg.analyze_params(), dark)
    except InsufficientPeaks as exc:
        raise InsufficientData(str(exc)) from None
    inputs = list(args.images) + ([args.dark] if args.dark else [])
    prov = gio.provenance("analyze", cfg.text, cfg.seed, inputs)
    prefix = args.output
    trace_path = Path(prefix + ".trace.csv")
    json_path = Path(prefix + ".assignment.json")
    report = res.report()
    report["n_frames"] = len(frames)
    gio.atomic_write(trace_path, res.trace.to_csv())
    gio.write_provenance(trace_path, prov)
    gio.write_json(json_path, report)
    gio.write_provenance(json_path, prov)
    a = res.refined
    print(
        f"{a.species} nominal {a.nominal_energy_eV:g} eV -> fitted {a.energy_eV:.2f} eV "
        f"({len(res.peaks_mrad)} peaks, {len(a.peaks)} rings used)"
    )
    return EXIT_OK


VERIFY_COLUMNS = (
    "record",
    "species",
    "L",
    "ratio",
    "lambda_fm",
    "sin_theta",
    "n_points",
    "slope_per_m",
    "slope_stderr",
    "intercept",
    "intercept_stderr",
    "expected_slope_per_m",
    "slope_rel_error",
)


def verify_csv(lines) -> str:
    def f(x):
        return "" if x is None or (isinstance(x, float) and not math.isfinite(x)) else f"{x:.9g}"

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VERIFY_COLUMNS)
    for ln in lines:
        for lam, s in zip(ln.wavelength_fm, ln.sin_theta):
            w.writerow(["point", ln.species, ln.loeschian, f(ln.ratio), f(lam), f(s), "", "", "", "", "", "", ""])
    for ln in lines:
        if ln.determined:
            w.writerow(
                [
                    "line", ln.species, ln.loeschian, f(ln.ratio), "", "", len(ln.sin_theta),
                    f(ln.slope), f(ln.slope_stderr), f(ln.intercept), f(ln.intercept_stderr),
                    f(ln.expected_slope), f(ln.slope_error),
                ]
            )  # fmt: skip
    return buf.getvalue()


def cmd_verify(args, cfg: RunConfig) -> int:
    from .imgproc import PeakAssignment, diffraction_lines
    from .lattice import reciprocal_basis

    assignments = []
    for p in args.assignments:
        try:
            d = gio.read_json(p)
            assignments.append(PeakAssignment.from_dict(d.get("assignment", d)))
        except (OSError, ValueError, KeyError, TypeError, AttributeError) as exc:
            raise ConfigError(f"cannot read assignment {p}: {exc!r}") from None
    if not any(a.peaks for a in assignments):
        raise InsufficientData("no indexed peaks in the given assignments")
    lines = diffraction_lines(assignments, reciprocal_basis(cfg.lattice()))
    _emit(args, cfg, verify_csv(lines), "verify", args.assignments)
    return EXIT_OK


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="INI config (default: $GRAPHDIFF_CONFIG)")
    common.add_argument(
        "--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config value"
    )
    common.add_argument("-o", "--output", help="output path ('-' or omitted: stdout where supported)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="graphdiff", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("budget", parents=[common], help="wavelength, ring angles and coherence budget (JSON)")
    t = sub.add_parser("transit", parents=[common], help="classical transit scan (CSV)")
    t.add_argument("--trajectory-dir", help="also dump one trajectory CSV per run here")
    sub.add_parser("synth", parents=[common], help="synthetic detector image(s) (PGM + sidecars)")
    a = sub.add_parser("analyze", parents=[common], help="reduce image(s) to a trace and ring assignment")
    a.add_argument("images", nargs="+", help="PGM or raw 16-bit frames; several are averaged")
    a.add_argument("--dark", help="dark frame to subtract")
    v = sub.add_parser("verify", parents=[common], help="sin(theta) versus wavelength lines (CSV)")
    v.add_argument("assignments", nargs="+", help="assignment JSON files from analyze")
    return p


COMMANDS = {
    "budget": cmd_budget,
    "transit": cmd_transit,
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    from .image import DomainError
    from .transit import IntegrationError, NoTransmission

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = read_config(args.config, args.set)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientData as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (IntegrationError, NoTransmission, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # remaining value errors come from the input data (empty reference region, bad frames)
        print(f"invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
