"""
``nfcal`` command line: one subcommand per pipeline stage plus ``run``.

Exit codes: 0 success, 2 usage error, 3 stage/numeric failure. Errors go to
stderr as a single ``nfcal: error: stage=<name> kind=<type> message=<text>``
line. Relative output paths land under ``$NFCAL_OUTPUT_DIR`` when it is set.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .calibration import (DEFAULT_GUARD, DEFAULT_THRESHOLD_DEG, CalibrationTable, boresight_calibrate,
                          consistency_check, nonboresight_calibrate, parse_registers,
                          reference_pattern_set, registers_text)
from .forward_model import (DEFAULT_GAIN_STEP_DB, ChainErrorModel, DirectionGrid, default_scan_plane,
                            simulate_far_field, simulate_near_field_scan)
from .formats import (field_grid_csv, pattern_csv, pattern_from_csv, read_field_grid, read_spectrum,
                      residual_csv, write_field_grid, write_spectrum)
from .geometry import ALL_SHAPES, ApertureLayout, SubArrayShape, generate_tiling
from .metrics import cut_csv, metrics_csv, pattern_cut, pattern_metrics
from .pipeline import (ScenarioConfig, StageError, reconstruct_aperture, roi_grid, run_pipeline,
                       transform_scan)
from .transforms import ShapeMask, ffnf, locate_aperture

EXIT_USAGE = 2
EXIT_STAGE = 3


class UsageError(Exception):
    pass


def _out(path):
    base = os.environ.get("NFCAL_OUTPUT_DIR")
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _write_text(path, text):
    with open(_out(path), "w", newline="") as f:
        f.write(text)


def _read_text(path):
    with open(path) as f:
        return f.read()


def _pair(text):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'alpha,beta' in degrees, got {text!r}")
    return a, b


def _layout(path) -> ApertureLayout:
    return ApertureLayout.from_json(_read_text(path))


def _errors(args, layout):
    if getattr(args, "errors", None):
        return ChainErrorModel.from_dict(json.loads(_read_text(args.errors)))
    if getattr(args, "error_seed", None) is not None:
        return ChainErrorModel.draw(len(layout.subarrays), args.error_seed)
    return None


def _delta_z(args, layout):
    return args.delta_z_wl * layout.wavelength


def cmd_gen_tiling(args):
    shapes = [SubArrayShape.parse(s) for s in args.shapes.split(",")] if args.shapes else ALL_SHAPES
    layout = generate_tiling(args.rows, args.cols, shapes, args.seed, args.frequency)
    _write_text(args.output, layout.to_json(seed=args.seed) + "\n")
    print(f"{len(layout.subarrays)} sub-arrays -> {args.output}")


def cmd_scan(args):
    layout = _layout(args.layout)
    errors = _errors(args, layout)
    if args.errors_out and errors is not None:
        _write_text(args.errors_out, json.dumps(errors.to_dict(), indent=1) + "\n")
    chains = parse_registers(_read_text(args.registers)) if args.registers else None
    dz = _delta_z(args, layout)
    plane = default_scan_plane(layout, dz, args.spacing_wl * layout.wavelength, args.angle)
    only = [int(v) for v in args.only.split(",")] if args.only else None
    scan = simulate_near_field_scan(layout, chains, errors, plane,
                                    (args.offset[0] * 1e-3, args.offset[1] * 1e-3, dz), only)
    if args.csv:
        _write_text(args.output, field_grid_csv(scan))
    else:
        write_field_grid(_out(args.output), scan)
    print(f"scan {scan.nx}x{scan.ny} at dz={dz:.6g} m -> {args.output}")


def cmd_nfff(args):
    scan = read_field_grid(args.scan)
    dz = args.delta_z_wl * scan.wavelength
    spec = transform_scan(scan, dz, args.pad, args.taper, not args.no_reference, args.floor)
    write_spectrum(_out(args.output), spec)
    print(f"spectrum {spec.values.shape[0]}x{spec.values.shape[1]} -> {args.output}")


def cmd_ffnf(args):
    spec = read_spectrum(args.spectrum)
    dz = args.delta_z_wl * spec.wavelength
    grid = None
    if args.roi:
        layout = _layout(args.layout) if args.layout else None
        if layout is None:
            raise UsageError("--roi needs --layout")
        grid = roi_grid(layout, args.roi, spec.z_plane - dz, args.roi_spacing_wl, args.roi_margin_wl)
    field = ffnf(spec, dz, grid)
    write_field_grid(_out(args.output), field)
    print(f"aperture field {field.nx}x{field.ny} -> {args.output}")


def cmd_locate(args):
    field = read_field_grid(args.field)
    center = locate_aperture(field, ShapeMask.from_layout(_layout(args.layout)))
    text = json.dumps({"center_m": list(center)}) + "\n"
    if args.output:
        _write_text(args.output, text)
    print(text, end="")


def _bore_table(args, layout):
    if args.scan:
        scan = read_field_grid(args.scan)
        _, _, fine, center = reconstruct_aperture(scan, layout, _delta_z(args, layout), args.pad)
    elif args.field:
        fine = read_field_grid(args.field)
        center = locate_aperture(fine, ShapeMask.from_layout(layout))
    else:
        raise UsageError("calibrate needs --scan or --field")
    return boresight_calibrate(fine, layout, center, args.guard, args.threshold, args.gain_step)


def cmd_calibrate(args):
    layout = _layout(args.layout)
    bore = _bore_table(args, layout)
    table = bore
    if tuple(args.direction) != (0.0, 0.0):
        refs = reference_pattern_set(layout, [args.direction])
        table = nonboresight_calibrate(bore, layout, refs, args.direction, args.constant)
    _finish_table(args, table)


def cmd_steer(args):
    layout = _layout(args.layout)
    bore = CalibrationTable.from_csv(_read_text(args.bore), args.gain_step)
    refs = reference_pattern_set(layout, [args.direction])
    _finish_table(args, nonboresight_calibrate(bore, layout, refs, args.direction, args.constant))


def _finish_table(args, table):
    _write_text(args.output, table.to_csv(f"nfcal {__version__}"))
    if args.registers_out:
        _write_text(args.registers_out, registers_text(table.to_chains()))
    print(f"table ({table.alpha}, {table.beta}) -> {args.output}")


def cmd_apply(args):
    layout = _layout(args.layout)
    if args.table:
        chains = CalibrationTable.from_csv(_read_text(args.table), args.gain_step).to_chains()
    elif args.registers:
        chains = parse_registers(_read_text(args.registers), args.gain_step)
    else:
        raise UsageError("apply needs --table or --registers")
    grid = DirectionGrid.regular(step=args.step)
    pat = simulate_far_field(layout, chains, _errors(args, layout), grid)
    _write_text(args.output, pattern_csv(pat))
    print(f"pattern {grid.shape[0]}x{grid.shape[1]} -> {args.output}")


def cmd_metrics(args):
    pat = pattern_from_csv(_read_text(args.pattern))
    area = None
    if args.layout:
        w, h = _layout(args.layout).aperture_size
        area = w * h
    m = pattern_metrics(pat, main=args.main, aperture_area=area)
    text = metrics_csv([m])
    if args.output:
        _write_text(args.output, text)
    print(text, end="")


def cmd_cut(args):
    pat = pattern_from_csv(_read_text(args.pattern))
    _write_text(args.output, cut_csv(*pattern_cut(pat, args.plane, args.at)))
    print(f"{args.plane} cut at {args.at} -> {args.output}")


def cmd_check_consistency(args):
    layout = _layout(args.layout)
    ids = [s.id for s in layout.subarrays]
    for v in (args.k, args.l):
        if v not in ids:
            raise UsageError(f"unknown sub-array id {v}")
    errors = _errors(args, layout)
    dz = _delta_z(args, layout)
    plane = default_scan_plane(layout, dz)
    fk = simulate_near_field_scan(layout, None, errors, plane, (0.0, 0.0, dz), [args.k])
    fl = simulate_near_field_scan(layout, None, errors, plane, (0.0, 0.0, dz), [args.l])
    lim = args.fov
    grid = DirectionGrid.regular((-lim, lim), (-lim, lim), args.step)
    res = consistency_check(layout, args.k, args.l, fk, fl, grid, dz, args.floor)
    _write_text(args.output, residual_csv(grid, res, f"nfcal {__version__} k={args.k} l={args.l}"))
    a = np.abs(res[np.isfinite(res)])
    print(json.dumps({"points": int(a.size), "masked": int(np.isnan(res).sum()),
                      "frac_below_3deg": float(np.mean(a < 3.0)), "max_deg": float(a.max())}))


def cmd_run(args):
    cfg = ScenarioConfig.from_json(_read_text(args.config)) if args.config else ScenarioConfig()
    out = args.output_dir or os.environ.get("NFCAL_OUTPUT_DIR") or cfg.output_dir
    res = run_pipeline(cfg, out)
    print(json.dumps({"output_dir": out, "ledger": res.ledger, "summary": res.metrics["summary"]},
                     indent=1))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nfcal", description="Single-scan near-field phased-array calibration")
    p.add_argument("--version", action="version", version=f"nfcal {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def dz_arg(sp):
        sp.add_argument("--delta-z-wl", type=float, default=10.0, help="probe distance in wavelengths")

    def err_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--errors", help="error-model JSON")
        g.add_argument("--error-seed", type=int, help="draw hidden errors from this seed")

    def gain_arg(sp):
        sp.add_argument("--gain-step", type=float, default=DEFAULT_GAIN_STEP_DB)

    s = sub.add_parser("gen-tiling", help="random exact-cover tiling -> layout JSON")
    s.add_argument("--rows", type=int, default=16)
    s.add_argument("--cols", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--shapes", help="comma list such as 1x8,8x1,2x4,4x2")
    s.add_argument("--frequency", type=float, default=73e9)
    s.add_argument("-o", "--output", default="layout.json")
    s.set_defaults(func=cmd_gen_tiling)

    s = sub.add_parser("scan", help="simulate a near-field probe scan")
    s.add_argument("--layout", required=True)
    err_args(s)
    s.add_argument("--errors-out")
    s.add_argument("--registers", help="register file applied to the chains")
    dz_arg(s)
    s.add_argument("--spacing-wl", type=float, default=0.5)
    s.add_argument("--angle", type=float, default=60.0, help="extent angle of the scan plane (deg)")
    s.add_argument("--offset", type=_pair, default=(0.0, 0.0), help="antenna offset 'dx,dy' in mm")
    s.add_argument("--only", help="comma list of powered sub-array ids")
    s.add_argument("--csv", action="store_true", help="write the CSV export instead of binary")
    s.add_argument("-o", "--output", default="scan.fgrid")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("nfff", help="scan -> reference-corrected angular spectrum")
    s.add_argument("--scan", required=True)
    dz_arg(s)
    s.add_argument("--pad", type=int, default=4)
    s.add_argument("--taper", type=float, default=0.0)
    s.add_argument("--floor", type=float, default=0.05)
    s.add_argument("--no-reference", action="store_true")
    s.add_argument("-o", "--output", default="spectrum.nfs")
    s.set_defaults(func=cmd_nfff)

    s = sub.add_parser("ffnf", help="spectrum -> aperture-plane field")
    s.add_argument("--spectrum", required=True)
    dz_arg(s)
    s.add_argument("--roi", type=_pair, help="fine grid centered at 'x,y' (m)")
    s.add_argument("--layout")
    s.add_argument("--roi-spacing-wl", type=float, default=1.0 / 16.0)
    s.add_argument("--roi-margin-wl", type=float, default=2.0)
    s.add_argument("-o", "--output", default="aperture.fgrid")
    s.set_defaults(func=cmd_ffnf)

    s = sub.add_parser("locate", help="aperture center in a reconstructed field")
    s.add_argument("--field", required=True)
    s.add_argument("--layout", required=True)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_locate)

    s = sub.add_parser("calibrate", help="calibration table from one full-array scan")
    s.add_argument("--layout", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--scan")
    g.add_argument("--field", help="already reconstructed aperture field")
    dz_arg(s)
    s.add_argument("--pad", type=int, default=4)
    s.add_argument("--direction", type=_pair, default=(0.0, 0.0))
    s.add_argument("--guard", type=float, default=DEFAULT_GUARD)
    s.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD_DEG)
    s.add_argument("--constant", type=float, default=0.0)
    gain_arg(s)
    s.add_argument("--registers-out")
    s.add_argument("-o", "--output", default="table.csv")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("steer", help="steered table from a bore-sight table")
    s.add_argument("--layout", required=True)
    s.add_argument("--bore", required=True)
    s.add_argument("--direction", type=_pair, required=True)
    s.add_argument("--constant", type=float, default=0.0)
    gain_arg(s)
    s.add_argument("--registers-out")
    s.add_argument("-o", "--output", default="table.csv")
    s.set_defaults(func=cmd_steer)

    s = sub.add_parser("apply", help="load a table into the chains and simulate the far field")
    s.add_argument("--layout", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--table")
    g.add_argument("--registers")
    err_args(s)
    gain_arg(s)
    s.add_argument("--step", type=float, default=0.5)
    s.add_argument("-o", "--output", default="pattern.csv")
    s.set_defaults(func=cmd_apply)

    s = sub.add_parser("metrics", help="peak, SLL, beamwidth, directivity of a pattern")
    s.add_argument("--pattern", required=True)
    s.add_argument("--main", type=_pair)
    s.add_argument("--layout", help="for the aperture-efficiency estimate")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("cut", help="1-D normalized pattern cut")
    s.add_argument("--pattern", required=True)
    s.add_argument("--plane", choices=["azimuth", "elevation"], default="azimuth")
    s.add_argument("--at", type=float, default=0.0)
    s.add_argument("-o", "--output", default="cut.csv")
    s.set_defaults(func=cmd_cut)

    s = sub.add_parser("check-consistency", help="per-sub-array phase identity residual map")
    s.add_argument("--layout", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--l", type=int, required=True)
    err_args(s)
    dz_arg(s)
    s.add_argument("--fov", type=float, default=15.0)
    s.add_argument("--step", type=float, default=0.5)
    s.add_argument("--floor", type=float, default=0.01)
    s.add_argument("-o", "--output", default="residual.csv")
    s.set_defaults(func=cmd_check_consistency)

    s = sub.add_parser("run", help="end-to-end scenario")
    s.add_argument("--config", help="ScenarioConfig JSON")
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_run)
    return p


def _fail(stage, exc, code):
    msg = str(exc).replace("\n", " ")
    print(f"nfcal: error: stage={stage} kind={type(exc).__name__} message={msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        return _fail(args.command, exc, EXIT_USAGE)
    except FileNotFoundError as exc:
        return _fail(args.command, exc, EXIT_USAGE)
    except StageError as exc:
        return _fail(exc.stage, exc.cause, EXIT_STAGE)
    except Exception as exc:  # noqa: BLE001 - any stage failure maps to exit 3
        return _fail(args.command, exc, EXIT_STAGE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
