"""Bit-exact emulation of on-chip spline sketch accumulation.

Timestamps are quantised to ``M * 2**b`` ticks over the window.  The knot index
is ``tick >> b`` and the relative position ``r = tick & (2**b - 1)``.  Active
feature values are integers:

* p = 0: ``1``
* p = 1: ``r`` and ``2**b - r``                       (sum ``2**b``)
* p = 2: ``r**2``, ``2**(2b+1) - r**2 - c`` and
  ``c = 2**(2b) - 2**(b+1) r + r**2``                 (sum ``2**(2b+1)``)

Shifts by powers of two are free; everything else is tallied in an
:class:`OpCounter`.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .model import PhotonStream
from .sketch import SketchVector

__all__ = [
    "FixedPointConfig",
    "OpCounter",
    "FixedPointAccumulator",
    "FixedPointSketch",
    "AccumulatorOverflow",
    "accumulate_fixed_point",
    "auto_config",
    "quantize",
]


class AccumulatorOverflow(OverflowError):
    pass


@dataclass(frozen=True)
class FixedPointConfig:
    """Knot count ``M`` and ``b`` sub-knot bits; the window has ``M * 2**b`` ticks.

    With ``M = 2**log2_M`` this is the usual ``log2_T``-bit timestamp whose
    leading ``log2_M`` bits select the knot interval.
    """

    M: int
    b: int
    width: int = 48

    def __post_init__(self):
        if self.M < 1 or self.b < 0:
            raise ValueError("need M >= 1 and b >= 0")
        if not 1 <= self.width <= 64:
            raise ValueError("accumulator width must be 1..64 bits")

    @classmethod
    def from_log2(cls, log2_T: int, log2_M: int, width: int = 48):
        if log2_M > log2_T:
            raise ValueError("log2_M must not exceed log2_T")
        return cls(M=1 << log2_M, b=log2_T - log2_M, width=width)

    @property
    def ticks(self) -> int:
        return self.M << self.b

    def scale(self, p: int) -> int:
        """Sum of the p + 1 active integer values."""
        return 1 << (p * self.b + (1 if p == 2 else 0))

    def required_width(self, p: int, n_max: int) -> int:
        return max(1, (self.scale(p) * max(n_max, 1)).bit_length())


def auto_config(M: int, T: float, width: int = 48) -> FixedPointConfig:
    """Smallest ``b`` whose ticks are at least as fine as the bins."""
    b = max(0, math.ceil(math.log2(T / M))) if T > M else 0
    return FixedPointConfig(M=M, b=b, width=width)


@dataclass
class OpCounter:
    add_sub: int = 0
    mult: int = 0
    detections: int = 0

    def per_detection(self):
        if self.detections == 0:
            return 0.0, 0.0
        return self.add_sub / self.detections, self.mult / self.detections

    def __add__(self, other):
        return OpCounter(self.add_sub + other.add_sub, self.mult + other.mult,
                         self.detections + other.detections)


# per-detection arithmetic: (add/sub, mult)
OPS = {0: (1, 0), 1: (3, 0), 2: (7, 1)}


def quantize(stream: PhotonStream, cfg: FixedPointConfig) -> np.ndarray:
    """Floor timestamps onto the tick grid."""
    ticks = np.floor(stream.timestamps * (cfg.ticks / stream.T)).astype(np.int64)
    return np.clip(ticks, 0, cfg.ticks - 1)


def _active_values(p, r, b):
    """Integer values for components (i, i-1, .., i-p); plain Python ints."""
    if p == 0:
        return (1,)
    if p == 1:
        return (r, (1 << b) - r)
    a = r * r
    c = (1 << (2 * b)) - (r << (b + 1)) + a
    return (a, (1 << (2 * b + 1)) - a - c, c)


@dataclass
class FixedPointAccumulator:
    """Streaming accumulator following the online processing loop."""

    p: int
    cfg: FixedPointConfig
    acc: list = field(init=False)
    ops: OpCounter = field(default_factory=OpCounter)

    def __post_init__(self):
        if self.p not in OPS:
            raise ValueError(f"unsupported degree {self.p}")
        self.acc = [0] * self.cfg.M
        self._limit = (1 << self.cfg.width) - 1

    def push(self, tick: int, count: int = 1):
        """Register ``count`` detections at integer ``tick``."""
        tick = int(tick)
        if not 0 <= tick < self.cfg.ticks:
            raise ValueError(f"tick {tick} outside [0, {self.cfg.ticks})")
        b, M = self.cfg.b, self.cfg.M
        i = tick >> b
        r = tick & ((1 << b) - 1)
        vals = _active_values(self.p, r, b)
        for q, v in enumerate(vals):
            k = (i - q) % M
            new = self.acc[k] + v * count
            if new > self._limit:
                raise AccumulatorOverflow(
                    f"component {k} would reach {new} > {self._limit} ({self.cfg.width}-bit)")
            self.acc[k] = new
        add, mult = OPS[self.p]
        self.ops.add_sub += add * count
        self.ops.mult += mult * count
        self.ops.detections += count

    def result(self) -> "FixedPointSketch":
        return FixedPointSketch(self.p, self.cfg, np.array(self.acc, dtype=np.uint64),
                                self.ops.detections, OpCounter(**vars(self.ops)))


@dataclass(frozen=True, eq=False)
class FixedPointSketch:
    p: int
    cfg: FixedPointConfig
    acc: np.ndarray
    n: int
    ops: OpCounter
    T: float | None = None  # window of the source stream (defaults to the tick count)

    def dequantize(self, T=None) -> SketchVector:
        if T is None:
            T = self.cfg.ticks if self.T is None else self.T
        if self.n == 0:
            return SketchVector("spline", self.p, self.cfg.M, T, np.zeros(self.cfg.M), 0)
        denom = float(self.n) * self.cfg.scale(self.p)
        vals = np.array([int(a) / denom for a in self.acc])
        return SketchVector("spline", self.p, self.cfg.M, T, vals, self.n)


def accumulate_fixed_point(stream: PhotonStream, p: int, cfg: FixedPointConfig,
                           counts=None) -> FixedPointSketch:
    """Vectorised fixed-point sketch of a stream.

    Timestamps are floor-quantised to ticks; integer weights (histogram counts)
    are honoured as repeated detections.  Raises :class:`AccumulatorOverflow`
    instead of wrapping.
    """
    if p not in OPS:
        raise ValueError(f"unsupported degree {p}")
    ticks = quantize(stream, cfg)
    if counts is None:
        counts = stream.weights
    if counts is None:
        counts = np.ones(ticks.size, dtype=np.int64)
    else:
        counts = np.asarray(counts)
        if np.any(counts != np.round(counts)) or np.any(counts < 0):
            raise ValueError("detection counts must be non-negative integers")
        counts = counts.astype(np.int64)
    n = int(counts.sum())
    need = cfg.required_width(p, n)
    if need > 63:
        # beyond int64 headroom: exact but slow path
        accu = FixedPointAccumulator(p, cfg)
        for t, c in zip(ticks.tolist(), counts.tolist()):
            if c:
                accu.push(t, c)
        return dataclasses.replace(accu.result(), T=stream.T)
    b = cfg.b
    i = ticks >> b
    r = ticks & ((1 << b) - 1)
    if p == 0:
        vals = [np.ones_like(r)]
    elif p == 1:
        vals = [r, (1 << b) - r]
    else:
        a = r * r
        c = (1 << (2 * b)) - (r << (b + 1)) + a
        vals = [a, (1 << (2 * b + 1)) - a - c, c]
    acc = np.zeros(cfg.M, dtype=np.int64)
    for q, v in enumerate(vals):
        np.add.at(acc, (i - q) % cfg.M, v * counts)
    limit = (1 << cfg.width) - 1
    if acc.max(initial=0) > limit:
        k = int(np.argmax(acc))
        raise AccumulatorOverflow(
            f"component {k} reached {int(acc[k])} > {limit} ({cfg.width}-bit)")
    add, mult = OPS[p]
    ops = OpCounter(add * n, mult * n, n)
    return FixedPointSketch(p, cfg, acc.astype(np.uint64), n, ops, stream.T)
