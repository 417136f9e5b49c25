"""Cramér-Rao bounds for full histograms and for sketches.

Parameters are ordered ``(t_1..t_K, alpha_1..alpha_K)`` with the background
weight ``alpha_0 = 1 - sum(alpha_k)`` eliminated.  All expectations are sums
over the T integer bins.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import GaussianIrf, PixelModel, mixture_pmf
from .sketch import grid_features

__all__ = [
    "FisherMatrix",
    "SingularFisherError",
    "fisher_full",
    "fisher_sketch",
    "crb_rmse_full",
    "crb_rmse_sketch",
    "sketch_covariance",
    "density_jacobian",
    "sweep",
    "write_sweep_csv",
    "CM_PER_BIN",
    "SKETCH_KINDS",
]

CM_PER_BIN = 4.0
SKETCH_KINDS = (0, 1, 2, "fourier")


class SingularFisherError(np.linalg.LinAlgError):
    def __init__(self, msg, cond):
        super().__init__(msg)
        self.cond = cond


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    matrix: np.ndarray
    params: tuple[str, ...]
    n: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", 0.5 * (m + m.T))

    @property
    def cond(self) -> float:
        """Condition number after scaling to unit diagonal (units differ per parameter)."""
        d = np.diag(self.matrix)
        if np.any(d <= 0):
            return np.inf
        s = 1.0 / np.sqrt(d)
        w = np.linalg.eigvalsh(self.matrix * np.outer(s, s))
        return float(w[-1] / w[0]) if w[0] > 0 else np.inf

    def inverse(self, max_cond=1e12) -> np.ndarray:
        c = self.cond
        if not c < max_cond:
            raise SingularFisherError(
                f"Fisher matrix is singular (condition number {c:.3g}, params {self.params})", c)
        s = 1.0 / np.sqrt(np.diag(self.matrix))
        return np.linalg.inv(self.matrix * np.outer(s, s)) * np.outer(s, s)

    def rmse(self, which="all") -> float:
        """Square root of the summed inverse diagonal (``which``: all or depth)."""
        d = np.diag(self.inverse())
        if which == "depth":
            d = d[[i for i, p in enumerate(self.params) if p.startswith("t")]]
        elif which != "all":
            raise ValueError(f"unknown parameter subset {which!r}")
        return float(np.sqrt(d.sum()))


def _fd_derivative(irf, t, T, h=1e-3):
    """Central difference of pi_s with a Richardson step (error O(h^4))."""
    d1 = (irf.pmf(t + h, T) - irf.pmf(t - h, T)) / (2 * h)
    d2 = (irf.pmf(t + h / 2, T) - irf.pmf(t - h / 2, T)) / h
    return (4 * d2 - d1) / 3


def density_jacobian(model: PixelModel, weights=None, method="auto"):
    """``(T, P)`` derivatives of the mixture density and the parameter names.

    Weight parameters are included when the model has background (otherwise
    the weights sit on the simplex boundary); ``method`` is ``analytic``,
    ``fd`` or ``auto`` (analytic for Gaussian IRFs).
    """
    T = model.T
    if weights is None:
        weights = model.background > 0
    if method == "auto":
        method = "analytic" if isinstance(model.irf, GaussianIrf) else "fd"
    cols, names = [], []
    for k, (a, t) in enumerate(zip(model.weights, model.depths), start=1):
        if method == "analytic":
            dg = model.irf.pmf_derivative(t, T)
        elif method == "fd":
            dg = _fd_derivative(model.irf, t, T)
        else:
            raise ValueError(f"unknown derivative method {method!r}")
        cols.append(a * dg)
        names.append(f"t{k}")
    if weights:
        for k, t in enumerate(model.depths, start=1):
            cols.append(model.irf.pmf(t, T) - 1.0 / T)
            names.append(f"alpha{k}")
    return np.stack(cols, axis=1), tuple(names)


def fisher_full(model: PixelModel, n, weights=None, method="auto") -> FisherMatrix:
    """Fisher information of n i.i.d. binned detections."""
    J, names = density_jacobian(model, weights, method)
    pi = mixture_pmf(model)
    zero = pi <= 0
    if np.any(np.abs(J[zero]) > 0):
        raise ValueError("degenerate model: zero-density bin with non-zero derivative")
    Jn = J[~zero]
    I = n * (Jn.T / pi[~zero]) @ Jn
    return FisherMatrix(I, names, n)


def crb_rmse_full(model, n, which="all", **kw) -> float:
    return fisher_full(model, n, **kw).rmse(which)


def sketch_covariance(model: PixelModel, kind, M: int, T=None) -> np.ndarray:
    """Per-photon covariance of the features, ``E[F F^T] - z z^T``."""
    T = model.T if T is None else T
    F = grid_features(kind, M, T)
    pi = mixture_pmf(model)
    z = pi @ F
    S = (F.T * pi) @ F - np.outer(z, z)
    return 0.5 * (S + S.T)


def _pinv_psd(S, rel=1e-12):
    w, V = np.linalg.eigh(S)
    if w[-1] <= 0:
        raise ValueError("sketch covariance has no non-null direction")
    keep = w > rel * w[-1]
    return (V[:, keep] / w[keep]) @ V[:, keep].T


def fisher_sketch(model: PixelModel, kind, M: int, n, T=None, weights=None,
                  method="auto") -> FisherMatrix:
    """``n J^T S^+ J`` with ``J = dz/dtheta`` and S the feature covariance."""
    T = model.T if T is None else T
    Jpi, names = density_jacobian(model, weights, method)
    J = grid_features(kind, M, T).T @ Jpi
    Sp = _pinv_psd(sketch_covariance(model, kind, M, T))
    return FisherMatrix(n * J.T @ Sp @ J, names, n)


def crb_rmse_sketch(model, kind, M, n, which="all", **kw) -> float:
    return fisher_sketch(model, kind, M, n, **kw).rmse(which)


# -- sweeps ------------------------------------------------------------------

def _depth_average(kind, T, sigma, sbr, M, n, depths):
    irf = GaussianIrf(sigma)
    vals = []
    for t in depths:
        model = PixelModel.single(T, t, sbr, irf)
        try:
            if kind == "full":
                vals.append(crb_rmse_full(model, n, "depth"))
            else:
                vals.append(crb_rmse_sketch(model, kind, M, n, "depth"))
        except SingularFisherError:
            # no depth information at all (e.g. pulse inside one coarse bin)
            vals.append(np.inf)
    return np.asarray(vals)


def sweep(var, values, kinds=("full",) + SKETCH_KINDS, M=8, T=600, n=1000, sbr=1.0,
          sigma=16.0, n_depths=1000, cm_per_bin=CM_PER_BIN):
    """Depth-bound sweeps over ``sbr``, ``sigma`` (bins) or ``depth``.

    For ``sbr`` and ``sigma`` sweeps the bound is averaged over ``n_depths``
    uniformly spaced depths.  Depths without any depth information count as
    an infinite bound.  Returns rows ``(value, kind, M, bound_cm)``.
    """
    rows = []
    uniform = np.arange(n_depths) * (T / n_depths)
    for v in values:
        for kind in kinds:
            if var == "sbr":
                b = _depth_average(kind, T, sigma, v, M, n, uniform).mean()
            elif var == "sigma":
                b = _depth_average(kind, T, v, sbr, M, n, uniform).mean()
            elif var == "depth":
                b = _depth_average(kind, T, sigma, sbr, M, n, [v])[0]
            else:
                raise ValueError(f"unknown sweep variable {var!r}")
            rows.append((float(v), _kind_name(kind), M, float(b * cm_per_bin)))
    return rows


def _kind_name(kind):
    return kind if isinstance(kind, str) else f"p{kind}"


def write_sweep_csv(path_or_file, var, rows):
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([var, "sketch_kind", "M", "bound_cm"])
        for v, kind, M, b in rows:
            w.writerow([repr(v), kind, M, repr(b)])
    finally:
        if own:
            fh.close()
