"""Monte Carlo and bound sweeps, range-walk studies and image reconstruction.

Randomness is derived per work unit: unit ``(i, j)`` (grid point or pixel,
trial) draws from ``SeedSequence(seed, spawn_key=(i, j))``, so results do not
depend on how the work is split or ordered.
"""
from __future__ import annotations

import csv
import dataclasses
import io as _io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import crb
from .estimate import (
    EstimationError,
    circular_error,
    coarse_argmax,
    cross_correlation,
    estimate_background,
    lme_closed_form,
    matching_pursuit,
)
from .io import HistogramCube, encode_sketch
from .model import (
    GaussianIrf,
    PhotonStream,
    PileupConfig,
    PixelModel,
    exgaussian_irf,
    sample_photons,
    sample_pileup_histogram,
)
from .rangewalk import MonotonicityWarning, build_lut, correct, local_moments, noise_correct
from .sketch import accumulate, sketch_stream

__all__ = [
    "ExperimentSpec",
    "ResultTable",
    "run",
    "rng_for",
    "parse_estimator",
    "estimate_depth",
    "reconstruct_image",
    "ImageResult",
    "synthetic_face_cube",
    "rangewalk_rmse",
    "compression_ratio",
    "KINDS",
]

KINDS = ("sbr-sweep", "pulse-width-sweep", "depth-sweep", "mc-vs-crb", "rangewalk-sweep",
         "image-recon")


def rng_for(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def _default_betas():
    return tuple(np.logspace(-4, 0, 50).tolist())


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment.  Depths and pulse widths are in bins."""

    kind: str
    seed: int = 0
    sbr: tuple[float, ...] = (1.0,)
    sigma: tuple[float, ...] = (16.0,)
    depths: tuple[float, ...] = ()
    beta: tuple[float, ...] = ()
    T: int = 600
    M: tuple[int, ...] = (8,)
    n: int = 1000
    N: int = 1000000
    trials: int = 100
    n_depths: int = 1000
    estimators: tuple[str, ...] = ("mp-p1", "mp-p2", "lme-p1")
    kinds: tuple[str, ...] = ("full", "p0", "p1", "p2", "fourier")
    irf: str = "gaussian"
    mu: float = 0.01
    flux: float = 5000.0
    cube: str = ""
    reference: str = ""
    height: int = 141
    width: int = 141
    photons: float = 337.0
    output: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.M:
            raise ValueError("M grid is empty")
        grid = {"sbr-sweep": self.sbr, "pulse-width-sweep": self.sigma,
                "mc-vs-crb": self.sbr, "rangewalk-sweep": self.sbr}.get(self.kind)
        if grid is not None and len(grid) == 0:
            raise ValueError(f"{self.kind} needs a non-empty grid")
        if self.kind == "depth-sweep" and not self.depths:
            raise ValueError("depth-sweep needs depths")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    def make_irf(self):
        if self.irf == "gaussian":
            return GaussianIrf(self.sigma[0])
        if self.irf == "exgaussian":
            return exgaussian_irf()
        raise ValueError(f"unknown IRF {self.irf!r}")


@dataclass
class ResultTable:
    spec: ExperimentSpec
    rows: list = field(default_factory=list)

    COLUMNS = ("config", "estimator", "metric", "value", "trials", "stderr")

    def add(self, config, estimator, metric, value, trials=0, stderr=0.0):
        self.rows.append((config, estimator, metric, float(value), int(trials), float(stderr)))

    def to_csv(self) -> str:
        buf = _io.StringIO()
        buf.write(f"# spec: {self.spec.to_json()}\n# seed: {self.spec.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r[0], r[1], r[2], repr(r[3]), r[4], repr(r[5])])
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def lookup(self, config, estimator, metric):
        for r in self.rows:
            if r[:3] == (config, estimator, metric):
                return r
        raise KeyError((config, estimator, metric))


# -- estimators --------------------------------------------------------------

def parse_estimator(name: str):
    """``"mp-p1"`` -> ``("mp", 1)``; ``"mp-fourier"`` -> ``("mp", "fourier")``."""
    method, _, kind = name.partition("-")
    if method == "xcorr":
        return method, None
    if method not in ("mp", "lme", "coarse"):
        raise ValueError(f"unknown estimator {name!r}")
    if kind == "fourier":
        return method, "fourier"
    if not (kind.startswith("p") and kind[1:] in ("0", "1", "2")):
        raise ValueError(f"bad sketch kind in estimator {name!r}")
    return method, int(kind[1:])


def estimate_depth(method, z, irf, K=1):
    """Depth (surface position, bins) and signal weight of the strongest return."""
    if method == "mp":
        est = max(matching_pursuit(z, K, irf), key=lambda e: e.intensity)
        return est.depth, est.intensity
    if method == "lme":
        if z.kind != "spline" or z.p != 1:
            raise EstimationError("the closed-form estimator needs a p=1 spline sketch")
        a = estimate_background(z)
        est = lme_closed_form(z, a, irf)
        return est.depth, est.intensity
    if method == "coarse":
        if z.kind != "spline" or z.p != 0:
            raise EstimationError("coarse argmax runs on p=0 sketches")
        est = coarse_argmax(z, irf.mean_offset)
        return est.depth, est.intensity
    raise EstimationError(f"estimator {method!r} does not run on sketches")


def _rmse_stats(err):
    err = np.asarray(err, dtype=float)
    mse = np.mean(err**2)
    rmse = np.sqrt(mse)
    se_mse = np.std(err**2, ddof=1) / np.sqrt(err.size) if err.size > 1 else 0.0
    se = se_mse / (2 * rmse) if rmse > 0 else 0.0
    return rmse, se, float(np.mean(err)), float(np.std(err, ddof=1) / np.sqrt(err.size)) if err.size > 1 else 0.0


# -- Monte Carlo versus bounds ------------------------------------------------

def _mc_point(spec, point, sbr, sigma, M, estimators, trials):
    irf = GaussianIrf(sigma) if spec.irf == "gaussian" else spec.make_irf()
    T = spec.T
    errs = {e: [] for e in estimators}
    fails = {e: 0 for e in estimators}
    for j in trials:
        rng = rng_for(spec.seed, point, j)
        depth = rng.uniform(0.0, T)
        stream = sample_photons(PixelModel.single(T, depth, sbr, irf), spec.n, rng)
        for name in estimators:
            method, kind = parse_estimator(name)
            try:
                if method == "xcorr":
                    hist = np.bincount(np.rint(stream.timestamps).astype(int) % T, minlength=T)
                    d = cross_correlation(hist, irf)
                else:
                    d, _ = estimate_depth(method, sketch_stream(stream, kind, M, T), irf)
            except EstimationError:
                fails[name] += 1
                continue
            errs[name].append(float(circular_error(d, depth, T)))
    return errs, fails


def _mean_crb(kind, T, sigma, sbr, M, n, n_depths):
    depths = np.arange(n_depths) * (T / n_depths)
    irf = GaussianIrf(sigma)
    b = []
    for t in depths:
        m = PixelModel.single(T, t, sbr, irf)
        try:
            b.append(crb.crb_rmse_full(m, n, "depth") if kind is None
                     else crb.crb_rmse_sketch(m, kind, M, n, "depth"))
        except crb.SingularFisherError:
            b.append(np.inf)
    # root mean square, to compare with an RMSE over uniform depths
    return float(np.sqrt(np.mean(np.square(b))))


def _run_mc(spec, table, shards):
    sigma = spec.sigma[0]
    point = 0
    for M in spec.M:
        for sbr in spec.sbr:
            config = f"sbr={sbr!r};sigma={sigma!r};M={M}"
            errs = {e: [] for e in spec.estimators}
            fails = dict.fromkeys(spec.estimators, 0)
            for chunk in np.array_split(np.arange(spec.trials), shards):
                e, f = _mc_point(spec, point, sbr, sigma, M, spec.estimators, chunk.tolist())
                for k in errs:
                    errs[k].extend(e[k])
                    fails[k] += f[k]
            for name in spec.estimators:
                method, kind = parse_estimator(name)
                if errs[name]:
                    rmse, se, bias, bias_se = _rmse_stats(errs[name])
                    table.add(config, name, "rmse_bins", rmse, len(errs[name]), se)
                    table.add(config, name, "bias_bins", bias, len(errs[name]), bias_se)
                table.add(config, name, "failures", fails[name], spec.trials)
                if spec.irf == "gaussian":
                    b = _mean_crb(kind, spec.T, sigma, sbr, M, spec.n, spec.n_depths)
                    table.add(config, name, "crb_bins", b)
            point += 1


# -- bound sweeps --------------------------------------------------------------

def _kind_value(k):
    if k in ("full", "fourier"):
        return k
    return int(k.lstrip("p"))


def _run_crb(spec, table):
    kinds = tuple(_kind_value(k) for k in spec.kinds)
    for M in spec.M:
        if spec.kind == "sbr-sweep":
            rows = crb.sweep("sbr", spec.sbr, kinds, M, spec.T, spec.n, sigma=spec.sigma[0],
                             n_depths=spec.n_depths)
            var = "sbr"
        elif spec.kind == "pulse-width-sweep":
            rows = crb.sweep("sigma", spec.sigma, kinds, M, spec.T, spec.n, sbr=spec.sbr[0],
                             n_depths=spec.n_depths)
            var = "sigma"
        else:
            rows = crb.sweep("depth", spec.depths, kinds, M, spec.T, spec.n, sbr=spec.sbr[0],
                             sigma=spec.sigma[0])
            var = "depth"
        for v, kind, M_, b in rows:
            table.add(f"{var}={v!r};M={M_}", kind, "crb_cm", b)


# -- range walk ----------------------------------------------------------------

def rangewalk_rmse(irf, sbr, betas, M=50, T=4613, N=100000, trials=250, seed=0, mu=0.01,
                   flux=5000.0, point=0, lo=0.1, hi=0.9):
    """Corrected depth errors per reflectivity for intensity and shape tables.

    Depths are drawn uniformly in ``[lo T, hi T)``.  Returns a dict mapping
    ``"intensity"``, ``"shape"`` and ``"uncorrected"`` to ``(rmse, stderr)``
    arrays over ``betas`` plus ``"failures"`` counts.
    """
    betas = np.asarray(betas, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MonotonicityWarning)
        luts = {k: build_lut(k, irf, betas, sbr, mu=mu, M=M, T=T, N=N, flux=flux)
                for k in ("intensity", "shape")}
    out = {k: (np.zeros(betas.size), np.zeros(betas.size))
           for k in ("intensity", "shape", "uncorrected")}
    fails = np.zeros(betas.size, dtype=int)
    for b, beta in enumerate(betas):
        errs = {k: [] for k in out}
        cfg = PileupConfig.from_sbr(beta, sbr, T, mu=mu, N=N, flux=flux)
        for j in range(trials):
            rng = rng_for(seed, point, b, j)
            depth = rng.uniform(lo * T, hi * T)
            hist = sample_pileup_histogram(cfg, irf, depth, T, rng)
            n = int(hist.sum())
            truth = depth + irf.mean_offset
            try:
                z = accumulate(PhotonStream.from_histogram(hist), 2, M)
                t_hat, var = local_moments(noise_correct(z, None, 2, "causal"))
            except EstimationError:
                fails[b] += 1
                continue
            errs["uncorrected"].append(circular_error(t_hat, truth, T))
            errs["intensity"].append(circular_error(correct(t_hat, n / N, luts["intensity"]), truth, T))
            errs["shape"].append(circular_error(correct(t_hat, np.sqrt(var), luts["shape"]), truth, T))
        for k in out:
            if errs[k]:
                rmse, se, _, _ = _rmse_stats(errs[k])
            else:
                rmse, se = np.nan, np.nan
            out[k][0][b], out[k][1][b] = rmse, se
    out["failures"] = fails
    out["luts"] = luts
    return out


def _run_rangewalk(spec, table):
    irf = spec.make_irf() if spec.irf != "gaussian" else exgaussian_irf()
    betas = spec.beta or _default_betas()
    point = 0
    for M in spec.M:
        for sbr in spec.sbr:
            res = rangewalk_rmse(irf, sbr, betas, M, spec.T, spec.N, spec.trials, spec.seed,
                                 spec.mu, spec.flux, point)
            for b, beta in enumerate(betas):
                config = f"sbr={sbr!r};M={M};beta={beta!r}"
                ok = spec.trials - int(res["failures"][b])
                for k in ("intensity", "shape", "uncorrected"):
                    table.add(config, k, "rmse_bins", res[k][0][b], ok, res[k][1][b])
                table.add(config, "all", "failures", res["failures"][b], spec.trials)
            point += 1


# -- images ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ImageResult:
    depth: np.ndarray
    intensity: np.ndarray
    valid: np.ndarray
    rmse: float | None = None
    rmse_unmasked: float | None = None

    @property
    def no_estimate(self) -> int:
        return int((~self.valid).sum())


def _image_rmse(depth, valid, reference, T):
    if reference is None:
        return None, None
    err = circular_error(np.where(valid, depth, 0.0), reference, T)
    masked = float(np.sqrt(np.mean(err[valid] ** 2))) if valid.any() else np.nan
    return masked, float(np.sqrt(np.mean(err**2)))


def reconstruct_image(cube: HistogramCube, method: str, irf, M=20, p=1, K=1, reference=None,
                      chunk=512) -> ImageResult:
    """Per-pixel depth and intensity maps.

    ``method`` is ``mp``, ``lme``, ``coarse`` or ``xcorr`` (full histograms).
    Intensity is the estimated number of signal photons.  Pixels without
    detections (or where estimation fails) are flagged invalid; RMSE against
    ``reference`` is reported over valid pixels and, with invalid pixels set
    to depth 0, over all pixels.
    """
    H, W, T = cube.shape
    counts = cube.counts.reshape(H * W, T)
    depth = np.zeros(H * W)
    inten = np.zeros(H * W)
    valid = np.zeros(H * W, dtype=bool)
    n = counts.sum(axis=1, dtype=np.int64)
    if method == "xcorr":
        for s in range(0, H * W, chunk):
            d = cross_correlation(counts[s:s + chunk], irf, T)
            depth[s:s + chunk] = np.nan_to_num(d)
            valid[s:s + chunk] = np.isfinite(d)
        inten[:] = n
    else:
        for i in range(H * W):
            if n[i] == 0:
                continue
            z = sketch_stream(PhotonStream.from_histogram(counts[i]), p, M, T)
            try:
                depth[i], a = estimate_depth(method, z, irf, K)
            except EstimationError:
                continue
            inten[i] = a * n[i]
            valid[i] = True
    depth, inten, valid = depth.reshape(H, W), inten.reshape(H, W), valid.reshape(H, W)
    rmse, rmse_all = _image_rmse(depth, valid, reference, T)
    return ImageResult(depth, inten, valid, rmse, rmse_all)


def face_depth_map(H=141, W=141, T=4613):
    """Head-and-shoulders depth (bins) and relative reflectivity maps."""
    y, x = np.mgrid[0:H, 0:W].astype(float)
    cy, cx = 0.45 * H, 0.5 * W
    wall = 0.6 * T
    depth = np.full((H, W), wall)
    refl = np.full((H, W), 0.4)
    r2 = ((y - cy) / (0.36 * H)) ** 2 + ((x - cx) / (0.27 * W)) ** 2
    head = r2 < 1
    depth[head] = wall - 250.0 * np.sqrt(1 - r2[head]) - 150.0
    refl[head] = 0.6 + 0.4 * np.sqrt(1 - r2[head])
    nose = np.exp(-(((y - 0.5 * H) / (0.05 * H)) ** 2 + ((x - cx) / (0.03 * W)) ** 2))
    depth -= 60.0 * nose * head
    shoulders = (y > 0.8 * H) & (np.abs(x - cx) < 0.45 * W)
    depth[shoulders & ~head] = wall - 120.0
    refl[shoulders & ~head] = 0.7
    return depth, refl


def synthetic_face_cube(irf=None, H=141, W=141, T=4613, photons=337.0, sbr=2.0, seed=0):
    """Synthetic face-like scene: ``(cube, true_depth)``.

    Per-pixel detections are Poisson with mean proportional to reflectivity
    (scene mean ``photons``); every pixel has signal-to-background ratio
    ``sbr``.
    """
    irf = exgaussian_irf() if irf is None else irf
    depth, refl = face_depth_map(H, W, T)
    lam = photons * refl / refl.mean()
    counts = np.zeros((H, W, T), dtype=np.uint16)
    for i in range(H):
        for j in range(W):
            rng = rng_for(seed, i * W + j)
            n = rng.poisson(lam[i, j])
            s = sample_photons(PixelModel.single(T, depth[i, j], sbr, irf), n, rng)
            counts[i, j] = np.bincount(np.rint(s.timestamps).astype(np.int64) % T, minlength=T)
    return HistogramCube(counts), depth


def compression_ratio(sketch, n_photons, timestamp_bytes=8) -> float:
    """Serialized sketch record bytes over raw timestamp bytes."""
    return len(encode_sketch(sketch)) / (n_photons * timestamp_bytes)


def _run_image(spec, table):
    from .io import load_cube, read_map

    irf = spec.make_irf() if spec.irf != "gaussian" else exgaussian_irf()
    if spec.cube:
        cube = load_cube(spec.cube)
        reference = read_map(spec.reference) if spec.reference else None
    else:
        cube, reference = synthetic_face_cube(irf, spec.height, spec.width, spec.T,
                                              spec.photons, spec.sbr[0], spec.seed)
    ests = list(spec.estimators)
    for M in spec.M:
        for name in ests:
            method, kind = parse_estimator(name)
            config = f"M={M}"
            try:
                res = reconstruct_image(cube, method, irf, M, kind, reference=reference)
            except EstimationError:
                table.add(config, name, "failed", np.nan)
                continue
            if res.rmse is not None:
                table.add(config, name, "rmse_bins", res.rmse, int(res.valid.sum()))
                table.add(config, name, "rmse_bins_unmasked", res.rmse_unmasked, res.valid.size)
            table.add(config, name, "no_estimate", res.no_estimate, res.valid.size)


def run(spec: ExperimentSpec, shards: int = 1) -> ResultTable:
    """Execute ``spec``; ``shards`` splits Monte Carlo trials into independent chunks."""
    table = ResultTable(spec)
    if spec.kind in ("sbr-sweep", "pulse-width-sweep", "depth-sweep"):
        _run_crb(spec, table)
    elif spec.kind == "mc-vs-crb":
        _run_mc(spec, table, max(1, shards))
    elif spec.kind == "rangewalk-sweep":
        _run_rangewalk(spec, table)
    else:
        _run_image(spec, table)
    if spec.output:
        table.write(spec.output)
    return table
