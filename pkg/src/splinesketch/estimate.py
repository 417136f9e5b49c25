"""Depth and intensity estimation from sketches.

Index convention: spline component ``i`` is supported on
``[i*Delta, (i+p+1)*Delta]`` and centred on ``(i + (p+1)/2) * Delta``.  The
closed-form local-mean estimators are written around the peak of component
``l`` of the linear sketch, ``(l + 1) * Delta``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import EmpiricalIrf, PixelModel
from .sketch import (
    SketchVector,
    background_sketch,
    expected_sketch,
    grid_features,
)

__all__ = [
    "EstimationError",
    "SurfaceEstimate",
    "argmax_component",
    "default_exclusion",
    "estimate_background",
    "lme_closed_form",
    "sketch_loss",
    "matching_pursuit",
    "coarse_argmax",
    "TemplateBank",
    "circular_error",
    "cross_correlation",
]

POINT_MASS = EmpiricalIrf(np.array([1.0]))


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class SurfaceEstimate:
    depth: float
    intensity: float
    background: float
    scenario: str
    loss: float
    local_mean: float | None = None


def circular_error(est, truth, T):
    """Signed depth error on the periodic window, in ``[-T/2, T/2)``."""
    return (np.asarray(est) - np.asarray(truth) + T / 2.0) % T - T / 2.0


def argmax_component(z: SketchVector) -> int:
    if z.empty:
        raise EstimationError("empty sketch")
    return int(np.argmax(z.values))


def default_exclusion(l: int, p: int, M: int) -> set[int]:
    """Components within distance p + 1 of ``l`` (periodic)."""
    return {(l + d) % M for d in range(-(p + 1), p + 2)}


def _background(z: SketchVector):
    if int(z.T) != z.T:
        return np.full(z.M, 1.0 / z.M)
    return background_sketch(z.p, z.M, int(z.T))


def estimate_background(z: SketchVector, exclusion=None) -> float:
    """Signal weight from components that only see background photons.

    Each clean component gives ``1 - z_i / b_i`` (``b_i = 1/M`` for integer
    knot spacing); the estimates are averaged and clamped to ``[0, 1]``.
    """
    if z.kind != "spline":
        raise EstimationError("background estimate needs a spline sketch")
    if exclusion is None:
        exclusion = default_exclusion(argmax_component(z), z.p, z.M)
    keep = np.setdiff1d(np.arange(z.M), np.fromiter(exclusion, dtype=int, count=len(exclusion)))
    if keep.size == 0:
        raise EstimationError("exclusion set covers every component")
    b = _background(z)
    alpha = 1.0 - np.mean(z.values[keep] / b[keep])
    return float(np.clip(alpha, 0.0, 1.0))


def sketch_loss(z: SketchVector, model: PixelModel) -> float:
    """Euclidean distance between a sketch and the model's expected sketch."""
    if model.T != z.T:
        raise EstimationError(f"window mismatch: sketch T={z.T}, model T={model.T}")
    ez = expected_sketch(model, z.degree, z.M)
    if ez.values.shape != z.values.shape:
        raise EstimationError("sketch shape mismatch")
    return float(np.linalg.norm(z.values - ez.values))


def _single_model(T, depth, alpha, irf):
    return PixelModel(T, ((depth % T),), (alpha,), 1.0 - alpha, irf)


def lme_closed_form(z: SketchVector, alpha: float, irf=None, mean_offset=None) -> SurfaceEstimate:
    """Closed-form local-means estimator for linear spline sketches.

    Three candidate local means are formed around the largest component (IRF
    left of, right of, or straddling its peak); the one whose model sketch is
    closest to ``z`` wins.  ``irf`` shapes the candidate models (point mass by
    default) and ``mean_offset`` (default: the IRF's own) converts the local
    mean into a surface depth.
    """
    if z.kind != "spline" or z.p != 1:
        raise EstimationError("the closed-form estimator needs a p=1 spline sketch")
    if not alpha > 0:
        raise EstimationError(f"signal weight must be positive, got {alpha}")
    irf = POINT_MASS if irf is None else irf
    offset = irf.mean_offset if mean_offset is None else mean_offset
    M, T, D = z.M, z.T, z.delta
    l = argmax_component(z)
    s = (z.values - (1.0 - alpha) * _background(z)) / alpha
    sm, s0, sp = s[(l - 1) % M], s[l], s[(l + 1) % M]
    peak = (l + 1) * D
    candidates = {
        "1": peak - D / 2 + D * (s0 - sm) / 2,
        "2": peak + D / 2 + D * (sp - s0) / 2,
        "3": peak + D * (sp - sm),
    }
    best = None
    for tag, mean in candidates.items():
        mean = mean % T
        loss = sketch_loss(z, _single_model(int(T), mean - offset, min(alpha, 1.0), irf))
        if best is None or loss < best.loss:
            best = SurfaceEstimate((mean - offset) % T, alpha, 1.0 - alpha, tag, loss, mean)
    return best


def coarse_argmax(z: SketchVector, mean_offset: float = 0.0) -> SurfaceEstimate:
    """Centre of the largest spline component."""
    if z.kind != "spline":
        raise EstimationError("coarse argmax needs a spline sketch")
    l = argmax_component(z)
    centre = ((l + (z.p + 1) / 2.0) * z.delta) % z.T
    alpha = estimate_background(z)
    return SurfaceEstimate((centre - mean_offset) % z.T, alpha, 1.0 - alpha, "argmax", np.nan, centre)


class TemplateBank:
    """Signal-only expected sketches for every integer depth.

    Rows are circular cross-correlations of the IRF density with each feature
    column, so construction costs ``O(M T log T)``.
    """

    def __init__(self, irf, p, M: int, T: int):
        self.irf, self.p, self.M, self.T = irf, p, M, T
        F = grid_features(p, M, T)
        g = irf.pmf(0.0, T)
        G = np.conj(np.fft.rfft(g))
        table = np.fft.irfft(G[:, None] * np.fft.rfft(F, axis=0), n=T, axis=0)
        self.table = table
        self.norms = np.linalg.norm(table, axis=1)
        if not np.any(self.norms > 0):
            raise EstimationError("degenerate IRF: all templates vanish")
        self.features = F
        self.step = T / M

    def template(self, depth: float) -> np.ndarray:
        if float(depth).is_integer():
            return self.table[int(depth) % self.T]
        return self.irf.pmf(depth % self.T, self.T) @ self.features


@lru_cache(maxsize=32)
def _bank(irf, p, M, T):
    return TemplateBank(irf, p, M, T)


def _best_depth(bank: TemplateBank, r):
    """Two-stage grid search of the normalised correlation, then a parabolic
    sub-bin polish."""
    T = bank.T
    with np.errstate(invalid="ignore", divide="ignore"):
        def score(idx):
            idx = np.asarray(idx) % T
            c = (bank.table[idx] @ r) / bank.norms[idx]
            return np.where(bank.norms[idx] > 0, c, -np.inf)

        stride = max(1.0, bank.step / 4.0)
        coarse = np.unique(np.round(np.arange(0.0, T, stride)).astype(np.int64) % T)
        t0 = int(coarse[np.argmax(score(coarse))])
        half = int(np.ceil(stride))
        local = np.arange(t0 - half, t0 + half + 1)
        sc = score(local)
        t1 = int(local[np.argmax(sc)])
        cm, c0, cp = score([t1 - 1, t1, t1 + 1])
    denom = cm - 2 * c0 + cp
    frac = 0.0
    if np.isfinite(denom) and denom < 0:
        frac = float(np.clip(0.5 * (cm - cp) / denom, -0.5, 0.5))
    return (t1 + frac) % T


def matching_pursuit(z: SketchVector, K: int, irf, alpha: float | None = None,
                     exclusion=None) -> list[SurfaceEstimate]:
    """Greedy recovery of K surfaces from a spline or Fourier sketch.

    Each iteration picks the depth whose signal template is most correlated
    with the residual, weights it by least-squares projection and subtracts it.
    For spline sketches the background level (``1 - alpha``) is removed first
    and the signal weights are finally rescaled to sum to ``alpha``.
    """
    if K < 1:
        raise EstimationError("need at least one surface")
    if z.empty:
        raise EstimationError("empty sketch")
    if int(z.T) != z.T:
        raise EstimationError("matching pursuit needs an integer window length")
    bank = _bank(irf, z.degree, z.M, int(z.T))
    spline = z.kind == "spline"
    if spline:
        if alpha is None:
            if K > 1 and exclusion is None:
                # locate every surface on the raw sketch, then estimate the
                # background away from all of them
                excl = set()
                for depth, _, _ in _mp_iterations(z.values.copy(), K, bank):
                    excl |= default_exclusion(int(np.argmax(bank.template(depth))), z.p, z.M)
                exclusion = excl if len(excl) < z.M else None
            alpha = estimate_background(z, exclusion)
        found = _mp_iterations(z.values - (1.0 - alpha) * _background(z), K, bank)
        weights = np.array([max(w, 0.0) for _, w, _ in found])
        total = weights.sum()
        weights = weights * (alpha / total) if total > 0 else np.zeros_like(weights)
        alpha0 = 1.0 - weights.sum()
    else:
        found = _mp_iterations(z.values.copy(), K, bank)
        weights = np.clip([w for _, w, _ in found], 0.0, 1.0)
        if weights.sum() > 1.0:
            weights = weights / weights.sum()
        alpha0 = 1.0 - weights.sum()
    return [
        SurfaceEstimate(depth, float(w), float(alpha0), "mp", res)
        for (depth, _, res), w in zip(found, weights)
    ]


def _mp_iterations(r, K, bank):
    found = []
    for _ in range(K):
        depth = _best_depth(bank, r)
        tpl = bank.template(depth)
        nrm2 = float(tpl @ tpl)
        w = float(tpl @ r) / nrm2 if nrm2 > 0 else 0.0
        r = r - w * tpl
        found.append((depth, w, float(np.linalg.norm(r))))
    return found


def cross_correlation(counts, irf, T=None):
    """Matched-filter depth from full histograms (last axis is time).

    Circular correlation with the IRF via FFT, then a parabolic sub-bin
    refinement around the peak.  Rows with no counts give NaN.
    """
    h = np.atleast_2d(np.asarray(counts, dtype=float))
    T = h.shape[-1] if T is None else T
    g = np.conj(np.fft.rfft(irf.pmf(0.0, T)))
    c = np.fft.irfft(np.fft.rfft(h, axis=-1) * g, n=T, axis=-1)
    k = np.argmax(c, axis=-1)
    rows = np.arange(h.shape[0])
    cm, c0, cp = c[rows, (k - 1) % T], c[rows, k], c[rows, (k + 1) % T]
    denom = cm - 2 * c0 + cp
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(denom < 0, np.clip(0.5 * (cm - cp) / denom, -0.5, 0.5), 0.0)
    out = (k + frac) % T
    out[h.sum(axis=-1) <= 0] = np.nan
    return out if np.ndim(counts) > 1 else float(out[0])
