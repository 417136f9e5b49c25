"""Command-line interface.

Every run prints the resolved configuration and seed first.  Failures print a
single ``error: code=<name> message=<text>`` line on stderr and exit non-zero.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from . import crb
from .estimate import EstimationError
from .experiments import (
    ExperimentSpec,
    estimate_depth,
    rangewalk_rmse,
    run,
    synthetic_face_cube,
)
from .fixedpoint import FixedPointConfig, FixedPointSketch, OpCounter, accumulate_fixed_point, auto_config
from .io import (
    HistogramCube,
    SketchFile,
    format_config,
    load_config,
    load_cube,
    parse_config,
    read_lut,
    read_sketches,
    write_cube,
    write_lut,
    write_map,
    write_pgm,
    write_sketches,
)
from .model import GaussianIrf, PhotonStream, exgaussian_irf
from .rangewalk import MonotonicityWarning, build_lut, correct, local_moments, noise_correct
from .sketch import sketch_stream

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _irf_from(args):
    if args.irf == "gaussian":
        return GaussianIrf(args.sigma)
    return exgaussian_irf()


def _args(args):
    return {k: v for k, v in vars(args).items() if k != "func"}


def _report(config: dict, seed=None, data_on_stdout=False):
    """Echo the resolved configuration (to stderr when stdout carries data)."""
    out = sys.stderr if data_on_stdout else sys.stdout
    print("config: " + json.dumps(config, sort_keys=True, default=str), file=out)
    print(f"seed: {seed if seed is not None else 'none'}", file=out)


def _add_irf(p):
    p.add_argument("--irf", choices=("gaussian", "exgaussian"), default="exgaussian")
    p.add_argument("--sigma", type=float, default=16.0, help="Gaussian IRF width in bins")


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args):
    irf = _irf_from(args)
    _report(_args(args), args.seed)
    if args.scene == "face":
        cube, depth = synthetic_face_cube(irf, args.H, args.W, args.T, args.photons, args.sbr,
                                          args.seed)
    else:
        depth = np.full((args.H, args.W), args.depth)
        cube, _ = _flat_cube(irf, args)
    write_cube(args.out, cube)
    if args.truth:
        write_map(args.truth, depth)
    print(f"wrote {args.out}: {cube.H}x{cube.W}x{cube.T}, {cube.total()} detections")


def _flat_cube(irf, args):
    from .experiments import rng_for
    from .model import PixelModel, sample_photons

    counts = np.zeros((args.H, args.W, args.T), dtype=np.uint16)
    model = PixelModel.single(args.T, args.depth, args.sbr, irf)
    for i in range(args.H):
        for j in range(args.W):
            rng = rng_for(args.seed, i * args.W + j)
            s = sample_photons(model, rng.poisson(args.photons), rng)
            counts[i, j] = np.bincount(np.rint(s.timestamps).astype(np.int64) % args.T,
                                       minlength=args.T)
    return HistogramCube(counts), None


def cmd_sketch(args):
    _report(_args(args))
    cube = load_cube(args.cube)
    T = cube.T
    kind = "fourier" if args.fourier else args.p
    if kind is None:
        raise CliError("usage", "choose a spline degree with --p or pass --fourier")
    if args.fixed_point:
        if kind == "fourier":
            raise CliError("usage", "fixed-point accumulation is only defined for splines")
        if args.bits == "auto":
            cfg = auto_config(args.M, T, args.width)
        else:
            cfg = FixedPointConfig(args.M, int(args.bits), args.width)
        print(f"fixed point: M={cfg.M} b={cfg.b} ticks={cfg.ticks} width={cfg.width}")
    records, ops = [], OpCounter()
    for h in cube.counts.reshape(-1, T):
        stream = PhotonStream.from_histogram(h)
        if args.fixed_point:
            fp = accumulate_fixed_point(stream, kind, cfg)
            ops = ops + fp.ops
            records.append(fp)
        else:
            records.append(sketch_stream(stream, kind, args.M, T))
    write_sketches(args.out, SketchFile(cube.H, cube.W, records))
    if args.fixed_point:
        add, mult = ops.per_detection()
        print(f"ops: detections={ops.detections} add_sub={ops.add_sub} mult={ops.mult}")
        print(f"ops per detection: add_sub={add:g} mult={mult:g}")
    print(f"wrote {args.out}: {len(records)} records")


def _as_vector(rec):
    return rec.dequantize() if isinstance(rec, FixedPointSketch) else rec


def cmd_estimate(args):
    _report(_args(args))
    sf = read_sketches(args.sketches)
    irf = _irf_from(args)
    method = {"coarse-argmax": "coarse"}.get(args.method, args.method)
    first = next((_as_vector(r) for r in sf.records), None)
    if first is not None:
        if method == "lme" and (first.kind != "spline" or first.p != 1):
            raise CliError("validation", "lme requires a p=1 spline sketch file")
        if method == "lme" and args.K > 1:
            raise CliError("validation", "lme recovers one surface; use --method mp for K > 1")
        if method == "coarse" and (first.kind != "spline" or first.p != 0):
            raise CliError("validation", "coarse-argmax requires a p=0 spline sketch file")
    depth = np.full(sf.H * sf.W, np.nan)
    inten = np.zeros(sf.H * sf.W)
    for i, rec in enumerate(sf.records):
        z = _as_vector(rec)
        if z.empty:
            continue
        try:
            depth[i], a = estimate_depth(method, z, irf, args.K)
        except EstimationError:
            continue
        inten[i] = a * z.n
    depth, inten = depth.reshape(sf.H, sf.W), inten.reshape(sf.H, sf.W)
    valid = np.isfinite(depth)
    write_map(args.depth_out, depth)
    if args.intensity_out:
        write_map(args.intensity_out, inten)
    if args.pgm:
        write_pgm(args.pgm, depth, valid)
    print(f"estimated {int(valid.sum())} of {valid.size} pixels ({int((~valid).sum())} no-estimate)")


def _kinds(text):
    out = []
    for k in text.split(","):
        k = k.strip()
        out.append(k if k in ("full", "fourier") else int(k.lstrip("p")))
    return tuple(out)


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_crb(args):
    _report(_args(args), data_on_stdout=not args.out)
    sigma = args.sigma_cm / crb.CM_PER_BIN
    defaults = {"sbr": "0.1,0.2,0.5,1,2,5,10", "sigma": "0.5,1,2,4,8,16,25",
                "depth": ",".join(str(x) for x in np.linspace(0, 75, 16))}
    values = _floats(args.values or defaults[args.sweep])
    rows = crb.sweep(args.sweep, values, _kinds(args.kinds), args.M, args.T, args.n, args.sbr,
                     sigma, args.n_depths)
    if args.out:
        crb.write_sweep_csv(args.out, args.sweep, rows)
        print(f"wrote {args.out}: {len(rows)} rows")
    else:
        crb.write_sweep_csv(sys.stdout, args.sweep, rows)


def cmd_build_lut(args):
    _report(_args(args))
    irf = _irf_from(args)
    betas = np.logspace(np.log10(args.beta_min), 0, args.betas)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MonotonicityWarning)
        lut = build_lut(args.kind, irf, betas, args.sbr, mu=args.mu, M=args.M, T=args.T,
                        N=args.N, flux=args.flux)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_lut(args.out, lut)
    print(f"wrote {args.out}: {len(lut)} entries")


def cmd_correct(args):
    _report(_args(args))
    lut = read_lut(args.lut)
    sf = read_sketches(args.sketches)
    out = np.full(sf.H * sf.W, np.nan)
    for i, rec in enumerate(sf.records):
        z = _as_vector(rec)
        if z.empty:
            continue
        if z.kind != "spline" or z.p != 2:
            raise CliError("validation", "range-walk correction needs p=2 sketches")
        try:
            t, var = local_moments(noise_correct(z, None, 2, "causal"))
        except EstimationError:
            continue
        obs = z.n / args.N if lut.kind == "intensity" else np.sqrt(var)
        out[i] = correct(t, obs, lut)
    write_map(args.out, out.reshape(sf.H, sf.W))
    print(f"wrote {args.out}")


def cmd_rw_sweep(args):
    _report(_args(args), args.seed, data_on_stdout=not args.out)
    irf = _irf_from(args)
    betas = np.logspace(-4, 0, args.betas)
    lines = ["sbr,beta,kind,M,rmse_bins,stderr"]
    for sbr in _floats(args.sbr):
        res = rangewalk_rmse(irf, sbr, betas, args.M, args.T, args.N, args.trials, args.seed,
                             args.mu, args.flux)
        for b, beta in enumerate(betas):
            for k in ("intensity", "shape", "uncorrected"):
                lines.append(f"{sbr!r},{beta!r},{k},{args.M},{res[k][0][b]!r},{res[k][1][b]!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)


def _load_spec(args):
    spec = load_config(args.config, ExperimentSpec)
    changes = {}
    for item in args.set or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise CliError("usage", f"--set expects key=value, got {item!r}")
        changes[key.strip().replace("-", "_")] = raw.strip()
    if args.out:
        changes["output"] = args.out
    if not changes:
        return spec
    merged = {}
    for line in (format_config(spec) + "".join(f"{k} = {v}\n" for k, v in changes.items())).splitlines():
        k, _, v = line.partition("=")
        merged[k.strip()] = v.strip()
    return parse_config("".join(f"{k} = {v}\n" for k, v in merged.items()), ExperimentSpec)


def cmd_experiment(args):
    try:
        spec = _load_spec(args)
    except ValueError as exc:
        raise CliError("validation", str(exc)) from exc
    _report(json.loads(spec.to_json()), spec.seed, data_on_stdout=not spec.output)
    table = run(spec)
    if spec.output:
        print(f"wrote {spec.output}: {len(table.rows)} rows")
    else:
        sys.stdout.write(table.to_csv())


# -- parser ------------------------------------------------------------------------

def build_parser():
    ap = _Parser(prog="splinesketch", description="Spline sketches for single-photon lidar.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a synthetic histogram cube")
    p.add_argument("--scene", choices=("face", "flat"), default="face")
    p.add_argument("--H", type=int, default=141)
    p.add_argument("--W", type=int, default=141)
    p.add_argument("--T", type=int, default=4613)
    p.add_argument("--depth", type=float, default=2000.0, help="flat scene depth (bins)")
    p.add_argument("--photons", type=float, default=337.0)
    p.add_argument("--sbr", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", help="also write the true depth map")
    p.add_argument("--out", required=True)
    _add_irf(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sketch", help="sketch every pixel of a cube")
    p.add_argument("--cube", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--p", type=int, choices=(0, 1, 2))
    g.add_argument("--fourier", action="store_true")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--fixed-point", action="store_true")
    p.add_argument("--bits", default="auto", help="sub-knot bits or 'auto'")
    p.add_argument("--width", type=int, default=48, help="accumulator width in bits")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sketch)

    p = sub.add_parser("estimate", help="depth and intensity maps from a sketch file")
    p.add_argument("--sketches", required=True)
    p.add_argument("--method", choices=("lme", "mp", "coarse-argmax"), default="mp")
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--depth-out", required=True)
    p.add_argument("--intensity-out")
    p.add_argument("--pgm", help="16-bit PGM preview of the depth map")
    _add_irf(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("crb", help="Cramér-Rao bound sweeps as CSV")
    p.add_argument("--sweep", choices=("sbr", "sigma", "depth"), required=True)
    p.add_argument("--values", help="comma-separated grid (sigma and depth in bins)")
    p.add_argument("--sigma-cm", type=float, default=64.0)
    p.add_argument("--sbr", type=float, default=1.0)
    p.add_argument("--M", type=int, default=8)
    p.add_argument("--T", type=int, default=600)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--n-depths", type=int, default=1000)
    p.add_argument("--kinds", default="full,p0,p1,p2,fourier")
    p.add_argument("--out")
    p.set_defaults(func=cmd_crb)

    rw = sub.add_parser("rangewalk", help="range-walk tables and sweeps")
    rsub = rw.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name, fn in (("build-lut", cmd_build_lut), ("correct", cmd_correct),
                     ("sweep", cmd_rw_sweep)):
        q = rsub.add_parser(name)
        q.set_defaults(func=fn)
        if name != "correct":
            _add_irf(q)
            q.add_argument("--M", type=int, default=50)
            q.add_argument("--T", type=int, default=4613)
            q.add_argument("--mu", type=float, default=0.01)
            q.add_argument("--flux", type=float, default=5000.0)
            q.add_argument("--N", type=int, default=1000000)
            q.add_argument("--betas", type=int, default=50)
        q.add_argument("--out", required=name != "sweep")
    q = rsub.choices["build-lut"]
    q.add_argument("--kind", choices=("intensity", "shape"), required=True)
    q.add_argument("--sbr", type=float, default=100.0)
    q.add_argument("--beta-min", type=float, default=1e-4)
    q = rsub.choices["correct"]
    q.add_argument("--lut", required=True)
    q.add_argument("--sketches", required=True)
    q.add_argument("--N", type=int, default=1000000, help="pulses per pixel")
    q = rsub.choices["sweep"]
    q.add_argument("--sbr", default="100,10,1,0.1")
    q.add_argument("--trials", type=int, default=250)
    q.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("experiment", help="run an experiment config file")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", help="override a key: --set trials=10")
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except CliError as exc:
        print(f"error: code={exc.code} message={exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, EstimationError) as exc:
        print(f"error: code={type(exc).__name__} message={exc}", file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
