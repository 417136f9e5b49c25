"""Spline and Fourier sketches of photon streams.

A degree-p spline sketch of size M averages the features
``phi_p(x / Delta - i)`` (i = 0..M-1, indices periodic) over the detections,
with ``Delta = T / M``.  Only p + 1 features are non-zero for any timestamp.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import bernoulli, comb, eval_hermitenorm, factorial, ndtr

from .model import GaussianIrf, PhotonStream, PixelModel, mixture_pmf

__all__ = [
    "SketchVector",
    "SketchError",
    "spline_value",
    "local_spline_values",
    "feature_vector",
    "feature_matrix",
    "accumulate",
    "accumulate_fourier",
    "merge",
    "expected_sketch",
    "expected_sketch_analytic",
    "background_sketch",
    "template_table",
    "grid_features",
]

DEGREES = (0, 1, 2)


class SketchError(ValueError):
    pass


def _check_degree(p):
    if p not in DEGREES:
        raise SketchError(f"spline degree must be one of {DEGREES}, got {p!r}")


def spline_value(p: int, x):
    """Cardinal B-spline of degree ``p`` (support ``[0, p+1)``)."""
    _check_degree(p)
    x = np.asarray(x, dtype=float)
    if p == 0:
        out = np.where((x >= 0) & (x < 1), 1.0, 0.0)
    elif p == 1:
        out = np.select([(x >= 0) & (x < 1), (x >= 1) & (x < 2)], [x, 2.0 - x], 0.0)
    else:
        y1, y2 = x - 1.0, x - 2.0
        out = np.select(
            [(x >= 0) & (x < 1), (x >= 1) & (x < 2), (x >= 2) & (x < 3)],
            [0.5 * x**2, 0.5 + y1 - y1**2, 0.5 - y2 + 0.5 * y2**2],
            0.0,
        )
    return out[()] if out.ndim == 0 else out


def local_spline_values(p: int, r):
    """Values ``phi_p(r + q)`` for q = 0..p, i.e. the weights given to
    components ``i, i-1, .., i-p`` by a photon at relative position ``r``
    inside knot interval ``i``."""
    r = np.asarray(r, dtype=float)
    if p == 0:
        return np.ones(r.shape + (1,))
    if p == 1:
        return np.stack([r, 1.0 - r], axis=-1)
    return np.stack([0.5 * r**2, 0.5 + r - r**2, 0.5 * (1.0 - r) ** 2], axis=-1)


def _locate(x, M, T):
    u = np.asarray(x, dtype=float) * M / T
    i = np.floor(u)
    r = u - i
    return i.astype(np.int64) % M, r


def feature_vector(p: int, M: int, T, x: float) -> np.ndarray:
    """Dense length-M spline feature of a single timestamp."""
    _check_degree(p)
    if not 0 <= x < T:
        raise SketchError(f"timestamp {x} outside [0, {T})")
    i, r = _locate(x, M, T)
    out = np.zeros(M)
    vals = local_spline_values(p, r)
    for q in range(p + 1):
        out[(i - q) % M] += vals[q]
    return out


def feature_matrix(p: int, M: int, T, x) -> np.ndarray:
    """Dense ``(len(x), M)`` spline features; ``p='fourier'`` gives Fourier ones."""
    x = np.asarray(x, dtype=float)
    if p == "fourier":
        return _fourier_features(M, T, x)
    _check_degree(p)
    i, r = _locate(x, M, T)
    vals = local_spline_values(p, r)
    out = np.zeros((x.size, M))
    rows = np.arange(x.size)
    for q in range(p + 1):
        np.add.at(out, (rows, (i - q) % M), vals[:, q])
    return out


def _fourier_features(m, T, x):
    if m % 2:
        raise SketchError(f"Fourier sketch size must be even, got {m}")
    ell = np.arange(1, m // 2 + 1)
    ang = 2 * np.pi * np.outer(x, ell) / T
    out = np.empty((x.size, m))
    out[:, 0::2] = np.cos(ang)
    out[:, 1::2] = np.sin(ang)
    return out


@dataclass(frozen=True, eq=False)
class SketchVector:
    """Normalised empirical (or expected) sketch.

    ``kind`` is ``"spline"`` or ``"fourier"``; for Fourier sketches ``values``
    holds interleaved ``(cos, sin)`` pairs for harmonics 1..M/2.
    """

    kind: str
    p: int | None
    M: int
    T: float
    values: np.ndarray
    n: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.kind not in ("spline", "fourier"):
            raise SketchError(f"unknown sketch kind {self.kind!r}")
        if v.shape != (self.M,):
            raise SketchError(f"expected {self.M} values, got shape {v.shape}")

    @property
    def degree(self):
        """Degree for spline sketches, ``'fourier'`` otherwise."""
        return "fourier" if self.kind == "fourier" else self.p

    @property
    def empty(self) -> bool:
        return self.n == 0

    @property
    def delta(self) -> float:
        return self.T / self.M

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def with_values(self, values, n=None):
        return SketchVector(self.kind, self.p, self.M, self.T, values, self.n if n is None else n)


def accumulate(stream: PhotonStream, p: int, M: int, T=None) -> SketchVector:
    """Streaming spline sketch: each detection touches p + 1 components."""
    _check_degree(p)
    T = stream.T if T is None else T
    n = stream.n
    if len(stream) == 0 or n == 0:
        return SketchVector("spline", p, M, T, np.zeros(M), 0)
    i, r = _locate(stream.timestamps, M, T)
    vals = local_spline_values(p, r)
    if stream.weights is not None:
        vals = vals * stream.weights[:, None]
    z = np.zeros(M)
    for q in range(p + 1):
        z += np.bincount((i - q) % M, weights=vals[:, q], minlength=M)
    return SketchVector("spline", p, M, T, z / n, n)


def accumulate_fourier(stream: PhotonStream, m: int, T=None) -> SketchVector:
    """Fourier sketch with ``m / 2`` harmonics of the window (m real values)."""
    T = stream.T if T is None else T
    n = stream.n
    if len(stream) == 0 or n == 0:
        return SketchVector("fourier", None, m, T, np.zeros(m), 0)
    feats = _fourier_features(m, T, stream.timestamps)
    if stream.weights is not None:
        z = stream.weights @ feats
    else:
        z = feats.sum(axis=0)
    return SketchVector("fourier", None, m, T, z / n, n)


def sketch_stream(stream, p, M, T=None) -> SketchVector:
    if p == "fourier":
        return accumulate_fourier(stream, M, T)
    return accumulate(stream, p, M, T)


def merge(a: SketchVector, b: SketchVector) -> SketchVector:
    """Combine sketches of disjoint streams (count-weighted average)."""
    if (a.kind, a.p, a.M, a.T) != (b.kind, b.p, b.M, b.T):
        raise SketchError("cannot merge sketches with different layouts")
    n = a.n + b.n
    if n == 0:
        return a
    return a.with_values((a.n * a.values + b.n * b.values) / n, n)


@lru_cache(maxsize=64)
def grid_features(p, M: int, T: int) -> np.ndarray:
    """Features evaluated at the integer bins 0..T-1, shape ``(T, M)``."""
    F = feature_matrix(p, M, T, np.arange(T, dtype=float))
    F.setflags(write=False)
    return F


def _kind(p):
    return ("fourier", None) if p == "fourier" else ("spline", p)


def background_sketch(p, M: int, T: int) -> np.ndarray:
    """Expected sketch of a uniform background (``1/M`` whenever T/M is an integer)."""
    return grid_features(p, M, T).mean(axis=0)


def expected_sketch(model: PixelModel, p, M: int, T=None) -> SketchVector:
    """Grid-sum expectation of the features under the mixture density."""
    T = model.T if T is None else T
    kind, deg = _kind(p)
    z = mixture_pmf(model) @ grid_features(p, M, T)
    return SketchVector(kind, deg, M, T, z, np.inf)


def template_table(irf, p, M: int, T: int, depths) -> np.ndarray:
    """Signal-only expected sketches for each candidate depth, shape ``(len, M)``."""
    depths = np.atleast_1d(np.asarray(depths, dtype=float))
    return irf.pmf(depths, T) @ grid_features(p, M, T)


# -- closed-form Gaussian expectations ---------------------------------------

def _piece_polys(p):
    """Polynomial coefficients (ascending powers of u) of phi_p on [j, j+1)."""
    if p == 0:
        return [np.array([1.0])]
    if p == 1:
        return [np.array([0.0, 1.0]), np.array([2.0, -1.0])]
    return [
        np.array([0.0, 0.0, 0.5]),
        np.array([-1.5, 3.0, -1.0]),
        np.array([4.5, -3.0, 0.5]),
    ]


def _truncated_moments(a, b, kmax):
    """int_a^b z^k phi(z) dz for k = 0..kmax (standard normal density)."""
    pdf = lambda z: np.exp(-0.5 * z**2) / np.sqrt(2 * np.pi)
    pa, pb = pdf(a), pdf(b)
    m = [ndtr(b) - ndtr(a), pa - pb]
    for k in range(2, kmax + 1):
        m.append((k - 1) * m[k - 2] + a ** (k - 1) * pa - b ** (k - 1) * pb)
    return m[: kmax + 1]


def _gaussian_spline_expectation(p, M, T, t, sigma, images=2):
    """E phi_p(x/Delta - i) for x ~ N(t, sigma^2) wrapped onto [0, T)."""
    delta = T / M
    mu_u = t / delta
    s_u = sigma / delta
    nimg = max(images, int(np.ceil(6 * sigma / T)) + 1)
    z = np.zeros(M)
    for i in range(M):
        for j, coef in enumerate(_piece_polys(p)):
            for img in range(-nimg, nimg + 1):
                lo = i + j + img * M
                # u = mu + s z; expand poly(u) around the Gaussian
                a = (lo - mu_u) / s_u
                b = (lo + 1 - mu_u) / s_u
                mom = _truncated_moments(a, b, len(coef) - 1)
                # piece-local variable u - i - img*M written in terms of z
                shifted = np.polynomial.Polynomial(coef)(np.polynomial.Polynomial([mu_u - i - img * M, s_u]))
                sc = shifted.coef
                z[i] += sum(sc[k] * mom[k] for k in range(len(sc)))
    return z


def _grid_sum_correction(p, M, T, t, sigma, orders=12):
    """Integer-grid sum minus integral of the Gaussian times each feature.

    Euler-Maclaurin around the knots: the p-th derivative of a feature jumps
    there, so sum_n f(n) - int f = sum_c sum_k (-1)^k J_k(c) B_{k+1}({c}) / (k+1)!
    with J_k the jump of the k-th derivative of f at knot c.  A jump sitting on
    an integer counts as just below it (features are right-continuous).
    """
    delta = T / M
    nimg = max(2, int(np.ceil(6 * sigma / T)) + 1)
    kmax = p + orders
    B = bernoulli(kmax + 1)
    z = np.zeros(M)
    for knot in range(M):
        c = knot * delta
        theta = c - np.floor(c)
        theta = 1.0 if theta == 0 else theta
        # P_k(theta) = B_k(theta) / k!
        P = [sum(comb(k, j) * B[j] * theta ** (k - j) for j in range(k + 1)) / factorial(k)
             for k in range(kmax + 2)]
        # derivatives of the wrapped Gaussian at c
        u = (c - t + T * np.arange(-nimg, nimg + 1)) / sigma
        pdf = np.exp(-0.5 * u**2) / (np.sqrt(2 * np.pi) * sigma)
        g = [float(np.sum((-1) ** m * eval_hermitenorm(m, u) * pdf)) / sigma**m
             for m in range(kmax - p + 1)]
        corr = sum((-1) ** k * comb(k, p) * g[k - p] * P[k + 1] for k in range(p, kmax + 1))
        # the p-th derivative of component i jumps by (-1)^j C(p+1, j) / delta^p at (i + j) delta
        for j in range(p + 2):
            z[(knot - j) % M] += (-1) ** j * comb(p + 1, j) / delta**p * corr
    return z


def expected_sketch_analytic(model: PixelModel, p: int, M: int) -> SketchVector:
    """Closed-form expected spline sketch for Gaussian IRFs.

    Integrates each polynomial piece against the (untruncated, wrapped)
    Gaussian with error-function primitives, then adds the knot-jump
    correction that turns the integral into the integer-bin sum used by
    :func:`expected_sketch`.  Background uses the grid sum.
    """
    if not isinstance(model.irf, GaussianIrf):
        raise SketchError("analytic expectation needs a Gaussian IRF")
    _check_degree(p)
    T = model.T
    z = model.background * background_sketch(p, M, T)
    for a, t in zip(model.weights, model.depths):
        z = z + a * (_gaussian_spline_expectation(p, M, T, t, model.irf.sigma)
                     + _grid_sum_correction(p, M, T, t, model.irf.sigma))
    return SketchVector("spline", p, M, T, z, np.inf)
