"""Range-walk characterisation and correction with quadratic spline sketches.

Around the largest component ``l`` of a p=2 sketch, the background-corrected
values ``zt[l+k]`` (k = -w..w) give the local mean and variance of the detected
pulse in closed form::

    t   = (l + 3/2) Delta + sum_k k Delta zt[l+k]
    var = sum_k (k^2 - 1/4) Delta^2 zt[l+k] - (sum_k k Delta zt[l+k])^2

``3/2 Delta`` is the centre of a quadratic B-spline's support and ``1/4`` its
variance (in knot units), so both are exact for any pulse inside the window.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from .estimate import (
    EstimationError,
    _background,
    argmax_component,
    circular_error,
    estimate_background,
)
from .model import PileupConfig, pileup_detection_pmf
from .sketch import SketchVector, grid_features

__all__ = [
    "NoiseCorrectedWindow",
    "RangeWalkLut",
    "noise_correct",
    "local_moments",
    "build_lut",
    "correct",
    "lut_observables",
    "MonotonicityWarning",
]


class MonotonicityWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class NoiseCorrectedWindow:
    l: int
    values: np.ndarray
    alpha: float
    delta: float
    M: int
    T: float

    @property
    def half_width(self) -> int:
        return (self.values.size - 1) // 2


def noise_correct(z: SketchVector, alpha: float | None = None, half_width: int = 2,
                  background: str = "uniform", refs: int | None = None) -> NoiseCorrectedWindow:
    """Strip the background from the ``2w+1`` components around the peak.

    ``background="uniform"`` subtracts ``(1 - alpha) b`` (a flat background of
    weight ``1 - alpha``).  ``background="causal"`` instead fits the background
    level separately before and after the pulse from the nearest ``refs``
    clean components on each side (all of them by default), as first-photon
    detection depletes the
    background behind a bright return; ``alpha`` is then the signal mass left
    in the window.
    """
    if z.kind != "spline" or z.p != 2:
        raise EstimationError("noise correction needs a p=2 spline sketch")
    l = argmax_component(z)
    idx = (l + np.arange(-half_width, half_width + 1)) % z.M
    if background == "causal":
        bg = _causal_background(z, l, half_width, refs)
        if bg is not None:
            signal = z.values[idx] - bg
            mass = float(signal.sum())
            if not mass > 0:
                raise EstimationError("no signal left after background removal")
            return NoiseCorrectedWindow(l, signal / mass, mass, z.delta, z.M, z.T)
        # window touches the wrap-around: fall back to a flat background
    elif background != "uniform":
        raise ValueError(f"unknown background model {background!r}")
    if alpha is None:
        alpha = estimate_background(z)
    if not alpha > 0:
        raise EstimationError(f"signal weight must be positive, got {alpha}")
    zt = (z.values[idx] - (1.0 - alpha) * _background(z)[idx]) / alpha
    return NoiseCorrectedWindow(l, zt, alpha, z.delta, z.M, z.T)


def _fit_level(z, b, idx, delta, trend):
    """Relative background level against position.

    Detected background decays exponentially ahead of the first detection,
    so positive levels get a log-linear fit (weights follow Poisson counts);
    otherwise a straight line, or a constant when ``trend`` is false.
    """
    lev = z.values[idx] / b[idx]
    x = (idx + 1.5) * delta
    if not trend or idx.size == 1:
        c = float(lev.mean())
        return lambda t: np.full(np.shape(t), c)
    if np.all(lev > 0):
        coef = np.polyfit(x, np.log(lev), 1, w=np.sqrt(lev))
        return lambda t: np.exp(np.polyval(coef, t))
    coef = np.polyfit(x, lev, 1)
    return lambda t: np.polyval(coef, t)


def _causal_background(z, l, w, refs, trend=True):
    M, p, T = z.M, z.p, z.T
    if int(T) != T or l - w < 0 or l + w > M - 1 - p:
        return None
    T = int(T)
    F = grid_features(p, M, T)
    b = F.mean(axis=0)
    refs = M if refs is None else refs
    left = np.arange(max(0, l - w - refs), l - w)
    right = np.arange(l + w + 1, min(M - p, l + w + 1 + refs))
    if left.size == 0 and right.size == 0:
        return None
    fl = _fit_level(z, b, left if left.size else right, z.delta, trend)
    fr = _fit_level(z, b, right if right.size else left, z.delta, trend)
    # first pass: locate the step from a flat correction using the near levels
    lo, hi = int(np.floor((l - w) * z.delta)), int(np.ceil((l + w + p + 1) * z.delta))
    x = np.arange(max(lo, 0), min(hi, T))
    idx = np.arange(l - w, l + w + 1)
    Fx = F[x][:, idx]
    flat = 0.5 * (fl(x) + fr(x)) / T
    s = z.values[idx] - flat @ Fx
    k = np.arange(-w, w + 1)
    centre = (l + 1.5) * z.delta + z.delta * float(k @ s) / max(float(s.sum()), 1e-300)
    level = np.where(x < centre, fl(x), fr(x))
    return (np.clip(level, 0.0, None) / T) @ Fx


def local_moments(w: NoiseCorrectedWindow):
    """Closed-form local mean (bins) and variance (bins^2)."""
    k = np.arange(-w.half_width, w.half_width + 1)
    c1 = k * w.delta
    c2 = (k**2 - 0.25) * w.delta**2
    m1 = float(c1 @ w.values)
    var = float(c2 @ w.values) - m1**2
    if var < -1e-6 * w.delta**2:
        raise EstimationError(
            f"negative variance {var:.3g}: the pulse is not contained in the window")
    t = ((w.l + 1.5) * w.delta + m1) % w.T
    return t, max(var, 0.0)


@dataclass(frozen=True, eq=False)
class RangeWalkLut:
    """Observable -> depth-error table.

    ``kind`` is ``"intensity"`` (key: detection probability per pulse) or
    ``"shape"`` (key: local standard deviation in bins).
    """

    kind: str
    keys: np.ndarray
    corrections: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("intensity", "shape"):
            raise ValueError(f"unknown LUT kind {self.kind!r}")
        keys = np.asarray(self.keys, dtype=float)
        corr = np.asarray(self.corrections, dtype=float)
        if keys.shape != corr.shape or keys.ndim != 1:
            raise ValueError("keys and corrections must be 1-D and equally long")
        if keys.size > 1 and np.any(np.diff(keys) <= 0):
            raise ValueError("LUT keys must be strictly increasing")
        if not np.all(np.isfinite(corr)):
            raise ValueError("LUT corrections must be finite")
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "corrections", corr)

    def __len__(self):
        return self.keys.size

    def lookup(self, observable):
        if self.keys.size == 0:
            raise ValueError("empty look-up table")
        return np.interp(observable, self.keys, self.corrections)


def correct(estimate, observable, lut: RangeWalkLut):
    """Depth minus the interpolated range-walk error (endpoint-clamped)."""
    out = np.asarray(estimate, dtype=float) - lut.lookup(observable)
    if lut.meta.get("T"):
        out = out % lut.meta["T"]
    return out


def lut_observables(irf, beta_grid, sbr, mu, M, T, depth=None, flux=5000.0, half_width=2,
                    background="causal"):
    """Exact (noise-free) observables and range-walk errors over a reflectivity grid.

    Returns ``(p_detect, sigma, error)`` arrays.  The error is measured against
    the low-flux local mean, ``depth + irf.mean_offset``.
    """
    depth = T / 2.0 if depth is None else depth
    F = grid_features(2, M, T)
    pd_, sig, err = [], [], []
    truth = depth + irf.mean_offset
    for beta in beta_grid:
        cfg = PileupConfig.from_sbr(beta, sbr, T, mu=mu, flux=flux)
        pmf, p_detect = pileup_detection_pmf(cfg, irf, depth, T)
        z = SketchVector("spline", 2, M, T, pmf @ F, np.inf)
        t_hat, var = local_moments(noise_correct(z, None, half_width, background))
        pd_.append(p_detect)
        sig.append(np.sqrt(var))
        err.append(float(circular_error(t_hat, truth, T)))
    return np.array(pd_), np.array(sig), np.array(err)


def build_lut(kind, irf, beta_grid, sbr, mu=0.01, M=50, T=4613, N=None, depth=None,
              flux=5000.0, half_width=2, sat_tol=1e-6, mono_tol=1e-9) -> RangeWalkLut:
    """Range-walk look-up table from exact pile-up densities.

    Intensity tables stop at the first reflectivity whose detection
    probability is within ``sat_tol`` of one; beyond it intensity carries no
    information.  Shape keys are made monotone by isotonic regression
    (violations above ``mono_tol`` are reported).
    """
    beta_grid = np.asarray(beta_grid, dtype=float)
    if beta_grid.size == 0 or np.any(np.diff(beta_grid) <= 0):
        raise ValueError("beta grid must be non-empty and strictly increasing")
    depth = T / 2.0 if depth is None else depth
    p_detect, sigma, error = lut_observables(irf, beta_grid, sbr, mu, M, T, depth, flux, half_width)
    meta = dict(M=M, T=T, mu=mu, sbr=sbr, N=N, flux=flux, depth=depth,
                beta=beta_grid.tolist(), half_width=half_width)
    if kind == "intensity":
        sat = np.flatnonzero(1.0 - p_detect < sat_tol)
        stop = sat[0] + 1 if sat.size else p_detect.size
        keys, corr = [], []
        for key, e in zip(p_detect[:stop], error[:stop]):
            if not keys or key > keys[-1]:
                keys.append(key)
                corr.append(e)
        meta["beta_saturation"] = float(beta_grid[sat[0]]) if sat.size else None
        return RangeWalkLut("intensity", np.array(keys), np.array(corr), meta)
    if kind != "shape":
        raise ValueError(f"unknown LUT kind {kind!r}")
    fit = isotonic_regression(sigma, increasing=False)
    violations = int(np.sum(np.abs(fit.x - sigma) > mono_tol))
    meta["violations"] = violations
    if violations:
        warnings.warn(f"shape observable non-monotone at {violations} grid points",
                      MonotonicityWarning, stacklevel=2)
    keys, corr = [], []
    for lo, hi in zip(fit.blocks[:-1], fit.blocks[1:]):
        keys.append(fit.x[lo])
        corr.append(error[lo:hi].mean())
    order = np.argsort(keys)
    keys = np.asarray(keys)[order]
    corr = np.asarray(corr)[order]
    # pooled blocks can still tie numerically
    keep = np.concatenate(([True], np.diff(keys) > 0))
    return RangeWalkLut("shape", keys[keep], corr[keep], meta)
