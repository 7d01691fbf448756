"""Command-line front end: ``splidar simulate | reconstruct | benchmark | irf-info``.

Every flag may also be given in an INI file passed with ``--config``, in a
``[splidar]`` section whose keys are the flag names (dashes or underscores).
Flags on the command line win. Unknown keys are an error.

Exit codes: 0 success, 1 usage or invalid configuration, 2 I/O or format
error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import Irf, SceneConfig
from .formats import VERSION as SPLF_VERSION
from .formats import FormatError, SplfReader, SplfWriter, read_irf_csv, read_multiband_irf_csv
from .msl import MslSweepSpec, msl_sweep
from .pipeline import CsvSink, Reconstructor, run_sequence
from .sim import SCENARIOS, SweepSpec, cell_rng, make_irf, make_scene_video, rows_to_csv, sweep, truth_rows

log = logging.getLogger("splidar")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _pixel_list(text: str) -> list[int | tuple[int, int]]:
    """``"3,17"`` (flat indices) or ``"0:3,1:1"`` (row:col pairs)."""
    out = []
    for item in _str_list(text):
        try:
            if ":" in item:
                r, c = item.split(":")
                out.append((int(r), int(c)))
            else:
                out.append(int(item))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad pixel {item!r}") from None
    return out


def _threads(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("--threads must be at least 1")
    return n


def _add_common(p):
    p.add_argument("--config", type=Path, help="INI file with a [splidar] section of flag defaults")
    p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    p.add_argument("--threads", type=_threads, default=os.cpu_count() or 1,
                   help="worker thread cap (default: available cores)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_irf(p, multiband=False):
    g = p.add_argument_group("IRF")
    g.add_argument("--irf-file", type=Path,
                   help="IRF CSV (one column%s); overrides the synthetic IRF" % (" per band" if multiband else ""))
    g.add_argument("--irf", choices=["gaussian", "emg"], default="gaussian", help="synthetic IRF shape")
    g.add_argument("--fwhm", type=float, default=None, help="synthetic IRF FWHM in bins")
    g.add_argument("--irf-peak", type=int, default=None, help="bin of the synthetic IRF peak")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splidar", description="Online 3D reconstruction from single-photon lidar data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a synthetic scene video (SPLF) and its ground truth")
    _add_common(p)
    p.add_argument("--scenario", choices=SCENARIOS, default="static", help="scene type (default static)")
    p.add_argument("--frames", type=int, default=10, help="number of frames (default 10)")
    p.add_argument("--rows", type=int, default=32, help="array rows (default 32)")
    p.add_argument("--cols", type=int, default=32, help="array columns (default 32)")
    p.add_argument("--n-bins", type=int, default=153, help="histogram bins N_T (default 153)")
    p.add_argument("--msc", type=float, default=55.0, help="mean signal count per surface pixel (default 55)")
    p.add_argument("--sbr", type=float, default=1.0, help="signal-to-background ratio (default 1)")
    p.add_argument("--depth", type=float, default=None, help="base depth in bins (scenario default if unset)")
    p.add_argument("--slope", type=float, default=1.0, help="ramp slope in bins per column (default 1)")
    _add_irf(p)
    p.add_argument("--out", type=Path, required=True, help="output SPLF path")
    p.add_argument("--truth", type=Path, help="truth CSV path (default: <out>.truth.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="run the online reconstruction on an SPLF video")
    _add_common(p)
    p.add_argument("input", type=Path, nargs="?", help="input SPLF file")
    p.add_argument("--out-dir", type=Path, required=True, help="directory for CSVs and the point cloud")
    p.add_argument("--beta", type=float, default=0.5, help="beta-divergence parameter (default 0.5)")
    p.add_argument("--sigma-rw", type=float, default=math.sqrt(3.0), help="random-walk std in bins (default sqrt 3)")
    p.add_argument("--M", type=int, default=5, choices=[1, 5, 9], help="neighbourhood size (default 5)")
    p.add_argument("--nu0", type=float, default=0.5, help="centre-pixel mixture weight (default 0.5)")
    p.add_argument("--d-min", type=int, default=None, help="smallest admissible depth bin")
    p.add_argument("--d-max", type=int, default=None, help="largest admissible depth bin")
    p.add_argument("--reflectivity-mean", type=float, default=55.0, help="gamma prior mean of r (default 55)")
    p.add_argument("--reflectivity-shape", type=float, default=2.0, help="gamma prior shape of r (default 2)")
    p.add_argument("--bin-width", type=float, default=250e-12, help="bin width in seconds (default 250 ps)")
    p.add_argument("--faulty", type=_pixel_list, default=[], help="faulty pixels: flat indices or row:col pairs")
    _add_irf(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("benchmark", help="Monte Carlo p_d sweep over (SBR, MSC) cells")
    _add_common(p)
    p.add_argument("--sbr", type=_float_list, default=None, help="SBR values (default 13 log-spaced in 1e-4..1e2)")
    p.add_argument("--msc", type=_float_list, default=None, help="MSC values (default 10..1000)")
    p.add_argument("--n-mc", type=int, default=200, help="trials per cell (default 200)")
    p.add_argument("--eta", type=float, default=28.0, help="depth error tolerance in bins (default 28)")
    p.add_argument("--estimators", type=_str_list, default=None,
                   help="comma list of oracle, bf, hsm, pb:<beta> (single-band only)")
    p.add_argument("--n-bins", type=int, default=1500, help="histogram bins (default 1500)")
    p.add_argument("--prior-mean", type=float, default=600.0, help="depth prior mean (default 600)")
    p.add_argument("--prior-var", type=float, default=2500.0, help="depth prior variance (default 2500)")
    p.add_argument("--msl", action="store_true", help="multi-band MLE benchmark instead")
    p.add_argument("--bands", type=int, default=4, help="number of bands with --msl (default 4)")
    p.add_argument("--betas", type=_float_list, default=None, help="PB betas with --msl (default 0.1..1)")
    _add_irf(p, multiband=True)
    p.add_argument("--out", type=Path, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("irf-info", help="print IRF statistics and the admissible depth grid")
    _add_common(p)
    p.add_argument("--n-bins", type=int, default=1500, help="bins of the synthetic IRF (default 1500)")
    p.add_argument("--bin-width", type=float, default=1.0, help="bin width in seconds for the file IRF")
    _add_irf(p, multiband=True)
    p.set_defaults(func=cmd_irf_info)
    return parser


# --- configuration -------------------------------------------------------------


def _config_defaults(sub: argparse.ArgumentParser, path: Path) -> dict:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    extra = [s for s in cp.sections() if s != "splidar"]
    if extra:
        raise UsageError(f"{path}: unknown section(s) {extra}; use [splidar]")
    if not cp.has_section("splidar"):
        return {}
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    out = {}
    for key, raw in cp.items("splidar"):
        dest = key.replace("-", "_")
        if dest == "m":
            dest = "M"
        act = actions.get(dest)
        if act is None or not act.option_strings:
            raise UsageError(f"{path}: unknown key {key!r}")
        try:
            if isinstance(act, argparse._StoreTrueAction):
                value = cp.getboolean("splidar", key)
            elif act.type is not None:
                value = act.type(raw)
            else:
                value = raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}: bad value for {key!r}: {exc}") from None
        if act.choices is not None and value not in act.choices:
            raise UsageError(f"{path}: {key} must be one of {list(act.choices)}")
        out[dest] = value
    return out


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        parser.exit(EXIT_USAGE)
    if args.config is not None:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**_config_defaults(sub, args.config))
        args = parser.parse_args(argv)
    return args


def _load_irf(args, n_bins: int | None) -> Irf:
    if args.irf_file is not None:
        irf = read_irf_csv(args.irf_file, bin_width=getattr(args, "bin_width", 1.0))
        if n_bins is not None and irf.n_bins != n_bins:
            raise FormatError(f"{args.irf_file}: IRF has {irf.n_bins} bins, data has {n_bins}")
        return irf
    n = n_bins or 1500
    fwhm = args.fwhm if args.fwhm is not None else (28.0 if n >= 1000 else 4.0)
    peak = args.irf_peak if args.irf_peak is not None else (600 if n >= 1000 else min(20, n // 2))
    return make_irf(args.irf, fwhm, peak, n)


def _manifest(path: Path, args, extra: dict) -> None:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
           if k not in ("func", "verbose", "threads", "config")}
    doc = {"splidar_version": __version__, "splf_version": SPLF_VERSION, "config": cfg, **extra}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


# --- commands ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.frames < 0:
        raise UsageError("--frames must be non-negative")
    if not (args.msc >= 0 and args.sbr > 0):
        raise UsageError("--msc must be non-negative and --sbr positive")
    cfg = SceneConfig(rows=args.rows, cols=args.cols, n_bins=args.n_bins, n_frames=args.frames)
    irf = _load_irf(args, args.n_bins)
    grid = cfg.grid(irf)
    b = args.msc / (args.sbr * args.n_bins)
    rng = cell_rng(args.seed)
    truth_path = args.truth or args.out.with_name(args.out.name + ".truth.csv")
    video = make_scene_video(args.scenario, args.rows, args.cols, args.frames, irf, grid,
                             args.msc, b, rng, args.depth, args.slope)
    with SplfWriter(args.out, args.rows, args.cols, args.n_bins) as w, open(truth_path, "w", newline="") as fh:
        tw = csv.writer(fh, lineterminator="\n")
        tw.writerow(["frame", "row", "col", "depth", "r", "b"])
        for n, (frame, truth) in enumerate(video):
            w.write(frame)
            tw.writerows(truth_rows(n, truth))
    _manifest(args.out.with_name(args.out.name + ".manifest.json"), args,
              {"background_per_bin": b, "grid": [grid.d_min, grid.d_max]})
    print(f"wrote {args.frames} frames to {args.out}")
    return EXIT_OK


def _faulty_indices(items, rows, cols) -> tuple[int, ...]:
    out = []
    for it in items:
        if isinstance(it, tuple):
            r, c = it
            if not (0 <= r < rows and 0 <= c < cols):
                raise UsageError(f"faulty pixel {r}:{c} outside {rows}x{cols}")
            out.append(r * cols + c)
        else:
            out.append(it)
    return tuple(sorted(set(out)))


def cmd_reconstruct(args) -> int:
    if args.input is None:
        raise UsageError("reconstruct needs an input SPLF file")
    reader = SplfReader(args.input)
    h = reader.header
    try:
        cfg = SceneConfig(rows=h.rows, cols=h.cols, n_frames=h.n_frames, n_bins=h.n_bins,
                          bin_width=args.bin_width, beta=args.beta, sigma_rw=args.sigma_rw, M=args.M,
                          nu0=args.nu0, d_min=args.d_min, d_max=args.d_max,
                          reflectivity_mean=args.reflectivity_mean,
                          reflectivity_shape=args.reflectivity_shape,
                          faulty_pixels=_faulty_indices(args.faulty, h.rows, h.cols))
        irf = _load_irf(args, h.n_bins)
        rec = Reconstructor(cfg, irf, threads=args.threads)
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise UsageError(str(exc)) from None
    sink = CsvSink(args.out_dir, h.rows, h.cols, cfg.bin_width)
    summary = run_sequence(reader, rec, sink)
    doc = summary.as_dict()
    (args.out_dir / "summary.json").write_text(json.dumps(doc, indent=2) + "\n")
    _manifest(args.out_dir / "manifest.json", args, {"grid": [rec.grid.d_min, rec.grid.d_max]})
    print(f"frames {summary.frames}  mean latency {summary.mean_latency:.4f} s  "
          f"detection rate {summary.detection_rate:.4f}" + ("  (input truncated)" if summary.truncated else ""))
    if summary.truncated:
        print(f"warning: {args.input} is truncated; processed {summary.frames} complete frames",
              file=sys.stderr)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    kw = dict(n_mc=args.n_mc, eta=args.eta, n_bins=args.n_bins, prior_mean=args.prior_mean,
              prior_var=args.prior_var, seed=args.seed, irf=args.irf)
    if args.sbr is not None:
        kw["sbr_values"] = args.sbr
    if args.msc is not None:
        kw["msc_values"] = args.msc
    if args.fwhm is not None:
        kw["fwhm_bins"] = args.fwhm
    if args.irf_peak is not None:
        kw["irf_peak"] = args.irf_peak
    if args.estimators is not None:
        if args.msl:
            raise UsageError("--estimators does not apply to --msl; use --betas")
        kw["estimators"] = args.estimators
    try:
        spec = SweepSpec(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.msl:
        if args.bands < 1:
            raise UsageError("--bands must be at least 1")
        irfs = None
        if args.irf_file is not None:
            irfs = read_multiband_irf_csv(args.irf_file)
            if irfs[0].n_bins != args.n_bins:
                raise FormatError(f"{args.irf_file}: IRFs have {irfs[0].n_bins} bins, expected {args.n_bins}")
        mspec = MslSweepSpec(base=spec, n_bands=args.bands)
        if args.betas is not None:
            if any(not b > 0 for b in args.betas):
                raise UsageError("--betas must be positive")
            mspec.betas = args.betas
        rows = msl_sweep(mspec, irfs, threads=args.threads)
    else:
        if args.irf_file is not None:
            raise UsageError("--irf-file with benchmark needs --msl (single-band sweeps use synthetic IRFs)")
        rows = sweep(spec, threads=args.threads)
    text = rows_to_csv(rows)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
        _manifest(args.out.with_name(args.out.name + ".manifest.json"), args, {})
    return EXIT_OK


def cmd_irf_info(args) -> int:
    from .core import DepthGrid

    if args.irf_file is not None:
        irfs = read_multiband_irf_csv(args.irf_file, bin_width=args.bin_width)
    else:
        irfs = [_load_irf(args, args.n_bins)]
    for i, irf in enumerate(irfs):
        grid = DepthGrid.for_irf(irf)
        lo, hi = irf.support
        print(f"band {i}: n_bins {irf.n_bins}  peak {irf.peak_bin}  fwhm {irf.fwhm_bins:.4f} bins  "
              f"support [{lo}, {hi}]  guards {irf.guards}  grid [{grid.d_min}, {grid.d_max}]  "
              f"peak value {irf.samples[irf.peak_bin]:.6g}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"splidar: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"splidar: error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(over="ignore", under="ignore"):
            return args.func(args)
    except UsageError as exc:
        print(f"splidar: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FormatError) as exc:
        print(f"splidar: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"splidar: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"splidar: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
