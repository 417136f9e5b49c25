"""Spline sketches for single-photon lidar time-of-flight data.

Typical use::

    from splinesketch import PixelModel, GaussianIrf, sample_photons, accumulate
    from splinesketch import matching_pursuit

    model = PixelModel.single(T=600, depth=250.0, sbr=1.0, irf=GaussianIrf(16.0))
    z = accumulate(sample_photons(model, 1000, seed=1), p=1, M=8)
    surface = matching_pursuit(z, K=1, irf=model.irf)[0]
"""
from .crb import (
    FisherMatrix,
    SingularFisherError,
    crb_rmse_full,
    crb_rmse_sketch,
    fisher_full,
    fisher_sketch,
    sketch_covariance,
)
from .estimate import (
    EstimationError,
    SurfaceEstimate,
    argmax_component,
    coarse_argmax,
    cross_correlation,
    estimate_background,
    lme_closed_form,
    matching_pursuit,
    sketch_loss,
)
from .fixedpoint import (
    AccumulatorOverflow,
    FixedPointConfig,
    OpCounter,
    accumulate_fixed_point,
    auto_config,
)
from .model import (
    EmpiricalIrf,
    GaussianIrf,
    ModelError,
    PhotonStream,
    PileupConfig,
    PixelModel,
    exgaussian_irf,
    mixture_pmf,
    pileup_detection_pmf,
    sample_photons,
    sample_pileup_histogram,
    sample_pileup_stream,
)
from .rangewalk import RangeWalkLut, build_lut, correct, local_moments, noise_correct
from .sketch import (
    SketchError,
    SketchVector,
    accumulate,
    accumulate_fourier,
    expected_sketch,
    expected_sketch_analytic,
    feature_vector,
    merge,
    spline_value,
)

__all__ = [
    "accumulate",
    "accumulate_fixed_point",
    "accumulate_fourier",
    "AccumulatorOverflow",
    "argmax_component",
    "auto_config",
    "build_lut",
    "coarse_argmax",
    "correct",
    "crb_rmse_full",
    "crb_rmse_sketch",
    "cross_correlation",
    "EmpiricalIrf",
    "estimate_background",
    "EstimationError",
    "exgaussian_irf",
    "expected_sketch",
    "expected_sketch_analytic",
    "feature_vector",
    "fisher_full",
    "fisher_sketch",
    "FisherMatrix",
    "FixedPointConfig",
    "GaussianIrf",
    "lme_closed_form",
    "local_moments",
    "matching_pursuit",
    "merge",
    "mixture_pmf",
    "ModelError",
    "noise_correct",
    "OpCounter",
    "PhotonStream",
    "pileup_detection_pmf",
    "PileupConfig",
    "PixelModel",
    "RangeWalkLut",
    "sample_photons",
    "sample_pileup_histogram",
    "sample_pileup_stream",
    "SingularFisherError",
    "sketch_covariance",
    "sketch_loss",
    "SketchError",
    "SketchVector",
    "spline_value",
    "SurfaceEstimate",
]

__version__ = "0.1.0"
