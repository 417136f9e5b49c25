"""Observation model for single-photon lidar pixels.

Time is measured in bins on a periodic window ``[0, T)``.  Discrete densities
live on the integer grid ``0 .. T-1`` (the bin centres); photon timestamps are
continuous.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GaussianIrf",
    "EmpiricalIrf",
    "Irf",
    "PixelModel",
    "PhotonStream",
    "PileupConfig",
    "ModelError",
    "mixture_pmf",
    "sample_photons",
    "pileup_detection_pmf",
    "sample_pileup_stream",
    "sample_pileup_histogram",
    "wrap_offset",
    "exgaussian_irf",
]

_WEIGHT_TOL = 1e-9


class ModelError(ValueError):
    """Raised for parameter sets that violate the model invariants."""


def wrap_offset(d, T):
    """Map offsets onto ``[-T/2, T/2)``."""
    d = np.asarray(d, dtype=float)
    return (d + T / 2.0) % T - T / 2.0


@dataclass(frozen=True)
class GaussianIrf:
    """Gaussian pulse of width ``sigma`` bins, wrapped on the window and
    truncated at ``truncation * sigma``."""

    sigma: float
    truncation: float = 6.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelError(f"Gaussian IRF needs sigma > 0, got {self.sigma}")

    @property
    def mean_offset(self) -> float:
        return 0.0

    @property
    def support(self) -> tuple[float, float]:
        w = self.truncation * self.sigma
        return -w, w

    def _images(self, d, T):
        # periodic images of the offset that fall inside the truncation radius
        d = wrap_offset(d, T)
        reach = self.truncation * self.sigma
        nimg = int(math.ceil(reach / T))
        return [d + j * T for j in range(-nimg, nimg + 1)], reach

    def response(self, d, T):
        """Unnormalised response h(d) for offsets ``d`` (periodic)."""
        images, reach = self._images(d, T)
        out = np.zeros(np.shape(images[0]))
        for e in images:
            out += np.where(np.abs(e) <= reach, np.exp(-0.5 * (e / self.sigma) ** 2), 0.0)
        return out

    def _dresponse_dt(self, d, T):
        # d/dt of h(i - t) = -h'(d) = d/sigma^2 h(d)
        images, reach = self._images(d, T)
        out = np.zeros(np.shape(images[0]))
        s2 = self.sigma**2
        for e in images:
            out += np.where(np.abs(e) <= reach, e / s2 * np.exp(-0.5 * e**2 / s2), 0.0)
        return out

    def pmf(self, t, T):
        """Signal density pi_s(i | t) on the integer grid (rows follow ``t``)."""
        t = np.asarray(t, dtype=float)
        grid = np.arange(T)
        g = self.response(grid - t[..., None], T)
        return g / g.sum(axis=-1, keepdims=True)

    def pmf_derivative(self, t, T):
        """Analytic d pi_s / dt, normaliser included."""
        t = np.asarray(t, dtype=float)
        grid = np.arange(T)
        d = grid - t[..., None]
        g = self.response(d, T)
        q = self._dresponse_dt(d, T)
        H = g.sum(axis=-1, keepdims=True)
        dH = q.sum(axis=-1, keepdims=True)
        return q / H - g * dH / H**2

    def sample_offsets(self, rng, n):
        return rng.normal(0.0, self.sigma, size=n)


@dataclass(frozen=True, eq=False)
class EmpiricalIrf:
    """Tabulated impulse response.

    ``table[j]`` is the response at offset ``j - origin``; the origin defaults to
    the peak.  Off-grid shifts use periodic linear interpolation.
    """

    table: np.ndarray
    origin: int | None = None
    fd_step: float = 1e-3

    def __post_init__(self):
        tab = np.array(self.table, dtype=float).ravel()
        if tab.size == 0 or np.any(tab < 0) or not np.all(np.isfinite(tab)):
            raise ModelError("empirical IRF table must be finite and non-negative")
        if not np.any(tab > 0):
            raise ModelError("empirical IRF table needs a strictly positive entry")
        tab.setflags(write=False)
        object.__setattr__(self, "table", tab)
        if self.origin is None:
            object.__setattr__(self, "origin", int(np.argmax(tab)))

    @property
    def H(self) -> float:
        return float(self.table.sum())

    @property
    def mean_offset(self) -> float:
        j = np.arange(self.table.size)
        return float((j * self.table).sum() / self.H - self.origin)

    @property
    def support(self) -> tuple[float, float]:
        nz = np.flatnonzero(self.table)
        return float(nz[0] - self.origin), float(nz[-1] - self.origin)

    def _padded(self, T):
        if self.table.size > T:
            raise ModelError(f"IRF table of length {self.table.size} exceeds window T={T}")
        pad = np.zeros(T)
        pad[: self.table.size] = self.table
        return pad

    def response(self, d, T):
        pad = self._padded(T)
        q = (np.asarray(d, dtype=float) + self.origin) % T
        j = np.floor(q).astype(np.int64)
        f = q - j
        j %= T
        return (1.0 - f) * pad[j] + f * pad[(j + 1) % T]

    def pmf(self, t, T):
        t = np.asarray(t, dtype=float)
        return self.response(np.arange(T) - t[..., None], T) / self.H

    def pmf_derivative(self, t, T):
        """Central differences, Richardson-combined over steps h and h/2."""
        h = self.fd_step
        d1 = (self.pmf(np.asarray(t) + h, T) - self.pmf(np.asarray(t) - h, T)) / (2 * h)
        d2 = (self.pmf(np.asarray(t) + h / 2, T) - self.pmf(np.asarray(t) - h / 2, T)) / h
        return (4.0 * d2 - d1) / 3.0

    def sample_offsets(self, rng, n):
        idx = rng.choice(self.table.size, size=n, p=self.table / self.H)
        return idx - self.origin + rng.uniform(-0.5, 0.5, size=n)


Irf = GaussianIrf | EmpiricalIrf


def exgaussian_irf(sigma=6.0, tau=20.0, left=5.0, right=7.0, step=1.0):
    """Asymmetric pulse (Gaussian rise, exponential tail) as an empirical IRF.

    Used as a stand-in for a measured single-photon IRF; the origin sits on the
    peak.  ``left``/``right`` give the table extent in units of sigma / tau.
    """
    from scipy.special import erfc

    lo = -int(math.ceil(left * sigma))
    hi = int(math.ceil(right * tau))
    d = np.arange(lo, hi + 1, step, dtype=float)
    lam = 1.0 / tau
    arg = (sigma**2 * lam - d) / (math.sqrt(2.0) * sigma)
    h = 0.5 * lam * np.exp(0.5 * lam * (sigma**2 * lam - 2 * d)) * erfc(arg)
    h /= h.max()
    h[h < 1e-12] = 0.0
    return EmpiricalIrf(h)


@dataclass(frozen=True)
class PixelModel:
    """Mixture of K shifted IRFs and a uniform background."""

    T: int
    depths: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    background: float = 1.0
    irf: Irf = field(default_factory=lambda: GaussianIrf(1.0))

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(float(t) for t in np.atleast_1d(self.depths)))
        object.__setattr__(self, "weights", tuple(float(a) for a in np.atleast_1d(self.weights)))
        if int(self.T) != self.T or self.T < 1:
            raise ModelError(f"window length must be a positive integer, got {self.T}")
        if len(self.depths) != len(self.weights):
            raise ModelError("depths and weights differ in length")
        for t in self.depths:
            if not 0.0 <= t < self.T:
                raise ModelError(f"depth {t} outside [0, {self.T})")
        for a in self.weights + (self.background,):
            if not 0.0 <= a <= 1.0:
                raise ModelError(f"weight {a} outside [0, 1]")
        total = self.background + sum(self.weights)
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ModelError(f"weights sum to {total}, not 1")

    @property
    def K(self) -> int:
        return len(self.depths)

    @classmethod
    def single(cls, T, depth, sbr, irf):
        """One surface with signal-to-background ratio ``sbr = alpha_1 / alpha_0``."""
        if np.isinf(sbr):
            a = 1.0
        else:
            a = sbr / (1.0 + sbr)
        return cls(T=T, depths=(depth % T,), weights=(a,), background=1.0 - a, irf=irf)

    def with_depths(self, depths):
        return PixelModel(self.T, tuple(np.asarray(depths) % self.T), self.weights,
                          self.background, self.irf)


def mixture_pmf(model: PixelModel) -> np.ndarray:
    """Discrete mixture density on the T integer bins."""
    p = np.full(model.T, model.background / model.T)
    for a, t in zip(model.weights, model.depths):
        if a:
            p += a * model.irf.pmf(t, model.T)
    return p


@dataclass(frozen=True, eq=False)
class PhotonStream:
    """Detection timestamps in ``[0, T)``, optionally weighted (histogram counts)."""

    timestamps: np.ndarray
    T: float
    weights: np.ndarray | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float).ravel()
        if ts.size and (ts.min() < 0 or ts.max() >= self.T):
            raise ModelError("timestamps must lie in [0, T)")
        object.__setattr__(self, "timestamps", ts)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape != ts.shape or np.any(w < 0):
                raise ModelError("weights must be non-negative and match timestamps")
            object.__setattr__(self, "weights", w)

    @property
    def n(self):
        if self.weights is None:
            return self.timestamps.size
        return float(self.weights.sum())

    def __len__(self):
        return self.timestamps.size

    @classmethod
    def from_histogram(cls, counts):
        """Weighted stream placing each bin's count at the bin centre."""
        counts = np.asarray(counts)
        nz = np.flatnonzero(counts)
        return cls(nz.astype(float), counts.size, counts[nz].astype(float))

    def shifted(self, shift):
        ts = (self.timestamps + shift) % self.T
        ts[ts >= self.T] = 0.0
        return PhotonStream(ts, self.T, self.weights)


def _wrap_into(ts, T):
    ts = np.mod(ts, T)
    # float rounding can land exactly on T
    ts[ts >= T] = 0.0
    return ts


def sample_photons(model: PixelModel, n: int, seed=None) -> PhotonStream:
    """Draw ``n`` i.i.d. timestamps from the mixture."""
    if n < 0:
        raise ModelError("photon count must be non-negative")
    rng = np.random.default_rng(seed)
    probs = np.array((model.background,) + model.weights)
    comp = rng.choice(probs.size, size=n, p=probs / probs.sum())
    ts = np.empty(n)
    bg = comp == 0
    ts[bg] = rng.uniform(0.0, model.T, size=int(bg.sum()))
    for k, t in enumerate(model.depths, start=1):
        sel = comp == k
        ts[sel] = t + model.irf.sample_offsets(rng, int(sel.sum()))
    return PhotonStream(_wrap_into(ts, model.T), model.T)


@dataclass(frozen=True)
class PileupConfig:
    """First-photon SPAD model.

    ``mu`` is the detection efficiency, ``beta`` the reflectivity, ``s`` the
    incident background photons per bin per pulse, ``N`` the pulse count and
    ``flux`` the incident signal photons per pulse at ``beta = 1``.
    """

    mu: float = 0.01
    beta: float = 1.0
    s: float = 0.0
    N: int = 1
    flux: float = 5000.0

    def __post_init__(self):
        if not 0.0 < self.mu <= 1.0:
            raise ModelError(f"mu must be in (0, 1], got {self.mu}")
        if not 0.0 <= self.beta <= 1.0:
            raise ModelError(f"beta must be in [0, 1], got {self.beta}")
        if self.s < 0 or self.flux < 0:
            raise ModelError("negative photon rates")
        if self.N < 0:
            raise ModelError("pulse count must be non-negative")

    @classmethod
    def from_sbr(cls, beta, sbr, T, mu=0.01, N=1, flux=5000.0):
        """Background scaled so that incident signal/background photons = ``sbr``."""
        s = 0.0 if np.isinf(sbr) else beta * flux / (sbr * T)
        return cls(mu=mu, beta=beta, s=s, N=N, flux=flux)


def pileup_rates(cfg: PileupConfig, irf, t, T):
    """Per-bin detection rates lambda_i (one pulse)."""
    lam = cfg.mu * (cfg.beta * cfg.flux * irf.pmf(t, T) + cfg.s)
    if np.any(lam < 0):
        raise ModelError("negative detection rate")
    return lam


def pileup_detection_pmf(cfg: PileupConfig, irf, t, T):
    """First-detection law scanned causally from bin 0.

    Returns the density conditioned on a detection and the probability that a
    pulse produces one.
    """
    lam = pileup_rates(cfg, irf, t, T)
    before = np.concatenate(([0.0], np.cumsum(lam)[:-1]))
    prob = -np.expm1(-lam) * np.exp(-before)
    p_detect = -math.expm1(-float(lam.sum()))
    if p_detect <= 0:
        return np.full(T, 1.0 / T), 0.0
    return prob / prob.sum(), p_detect


def sample_pileup_histogram(cfg: PileupConfig, irf, t, T, seed=None):
    """Per-bin detection counts over ``cfg.N`` pulses."""
    rng = np.random.default_rng(seed)
    pmf, p_detect = pileup_detection_pmf(cfg, irf, t, T)
    n = rng.binomial(cfg.N, p_detect) if p_detect < 1.0 else cfg.N
    return rng.multinomial(n, pmf)


def sample_pileup_stream(cfg: PileupConfig, irf, t, T, seed=None) -> PhotonStream:
    rng = np.random.default_rng(seed)
    pmf, p_detect = pileup_detection_pmf(cfg, irf, t, T)
    n = rng.binomial(cfg.N, p_detect) if p_detect < 1.0 else cfg.N
    bins = rng.choice(T, size=n, p=pmf)
    ts = bins + rng.uniform(-0.5, 0.5, size=n)
    return PhotonStream(_wrap_into(ts, T), T)
