"""Binary file formats and flat key=value configuration files.

All multi-byte fields are little-endian.

Histogram cube::

    "SPC1" | u8 dtype (1=u16, 2=u32) | 3 pad | u32 H | u32 W | u32 T | counts[H, W, T]

Sketch file: ``"SKF1" | u32 H | u32 W`` followed by H*W pixel records::

    u8 tag (0 spline, 1 fourier, 2 fixed-point) | u8 p-or-m | u16 M | u32 T | u32 n
    | f64 values[...] | (fixed point only) u8 b | u64 acc[M]

For Fourier records ``M`` counts harmonics and ``2M`` values follow.

Maps: ``"SPM1" | u32 H | u32 W | f64[H, W]``.
"""
from __future__ import annotations

import dataclasses
import json
import struct
import typing
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fixedpoint import FixedPointConfig, FixedPointSketch, OpCounter, OPS
from .rangewalk import RangeWalkLut
from .sketch import SketchVector

__all__ = [
    "FormatError",
    "HistogramCube",
    "load_cube",
    "write_cube",
    "cube_bytes",
    "SketchFile",
    "write_sketches",
    "read_sketches",
    "encode_sketch",
    "decode_sketch",
    "write_lut",
    "read_lut",
    "write_map",
    "read_map",
    "write_pgm",
    "parse_config",
    "load_config",
    "format_config",
]

CUBE_MAGIC = b"SPC1"
SKETCH_MAGIC = b"SKF1"
MAP_MAGIC = b"SPM1"
LUT_MAGIC = b"SSLUT1\n"
_DTYPES = {1: np.dtype("<u2"), 2: np.dtype("<u4")}
_CODES = {np.dtype("uint16"): 1, np.dtype("uint32"): 2}


class FormatError(ValueError):
    """Malformed file; ``offset`` is the byte position of the problem."""

    def __init__(self, msg, offset=None):
        super().__init__(msg if offset is None else f"{msg} (at byte {offset})")
        self.offset = offset


class BadMagic(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class DtypeMismatch(FormatError):
    pass


# -- cubes -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HistogramCube:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 3:
            raise ValueError(f"cube must be H x W x T, got shape {c.shape}")
        if c.dtype not in (np.uint16, np.uint32):
            raise ValueError(f"cube dtype must be uint16 or uint32, got {c.dtype}")
        object.__setattr__(self, "counts", c)

    @property
    def shape(self):
        return self.counts.shape

    @property
    def H(self):
        return self.counts.shape[0]

    @property
    def W(self):
        return self.counts.shape[1]

    @property
    def T(self):
        return self.counts.shape[2]

    def total(self) -> int:
        return int(self.counts.sum(dtype=np.uint64))


def cube_bytes(cube: HistogramCube) -> bytes:
    code = _CODES[cube.counts.dtype]
    head = CUBE_MAGIC + struct.pack("<B3xIII", code, cube.H, cube.W, cube.T)
    return head + cube.counts.astype(_DTYPES[code], copy=False).tobytes()


def write_cube(path, cube: HistogramCube):
    code = _CODES[cube.counts.dtype]
    with open(path, "wb") as fh:
        fh.write(CUBE_MAGIC + struct.pack("<B3xIII", code, cube.H, cube.W, cube.T))
        cube.counts.astype(_DTYPES[code], copy=False).tofile(fh)


def load_cube(path, mmap=False) -> HistogramCube:
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        head = fh.read(20)
    if len(head) < 4 or head[:4] != CUBE_MAGIC:
        raise BadMagic(f"not a cube file: magic {head[:4]!r}", 0)
    if len(head) < 20:
        raise TruncatedPayload(f"header needs 20 bytes, file has {len(head)}", len(head))
    code, H, W, T = struct.unpack("<B3xIII", head[4:])
    if code not in _DTYPES:
        raise DtypeMismatch(f"unknown dtype code {code}", 4)
    dt = _DTYPES[code]
    expected = H * W * T * dt.itemsize
    if size - 20 != expected:
        raise TruncatedPayload(
            f"payload is {size - 20} bytes, expected {expected} for {H}x{W}x{T} {dt.name}", size)
    if mmap:
        counts = np.memmap(path, dtype=dt, mode="r", offset=20, shape=(H, W, T))
    else:
        counts = np.fromfile(path, dtype=dt, offset=20).reshape(H, W, T)
    return HistogramCube(counts.astype(dt.newbyteorder("="), copy=False))


# -- sketches ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SketchFile:
    H: int
    W: int
    records: list  # SketchVector or FixedPointSketch, row-major

    def __post_init__(self):
        if len(self.records) != self.H * self.W:
            raise ValueError(f"need {self.H * self.W} records, got {len(self.records)}")


_REC = struct.Struct("<BBHII")


def _as_u32(v, what):
    if not float(v).is_integer() or not 0 <= v < 2**32:
        raise ValueError(f"{what} must be an integer in [0, 2**32) to serialise, got {v}")
    return int(v)


def encode_sketch(s) -> bytes:
    if isinstance(s, FixedPointSketch):
        T = s.cfg.ticks if s.T is None else s.T
        head = _REC.pack(2, s.p, s.cfg.M, _as_u32(T, "T"), _as_u32(s.n, "n"))
        vals = s.dequantize(T).values.astype("<f8").tobytes()
        return head + vals + struct.pack("<B", s.cfg.b) + np.asarray(s.acc, dtype="<u8").tobytes()
    if s.kind == "spline":
        head = _REC.pack(0, s.p, s.M, _as_u32(s.T, "T"), _as_u32(s.n, "n"))
    else:
        h = s.M // 2
        head = _REC.pack(1, s.M if s.M < 256 else 0, h, _as_u32(s.T, "T"), _as_u32(s.n, "n"))
    return head + s.values.astype("<f8").tobytes()


def decode_sketch(buf, offset=0):
    """Returns ``(sketch, next_offset)``."""
    if len(buf) - offset < _REC.size:
        raise TruncatedPayload("truncated sketch record header", offset)
    tag, pm, M, T, n = _REC.unpack_from(buf, offset)
    pos = offset + _REC.size
    nvals = 2 * M if tag == 1 else M
    end = pos + 8 * nvals
    if len(buf) < end:
        raise TruncatedPayload(f"record needs {nvals} values", pos)
    vals = np.frombuffer(buf, dtype="<f8", count=nvals, offset=pos).astype(float)
    if tag == 0:
        if pm not in (0, 1, 2):
            raise FormatError(f"bad spline degree {pm}", offset + 1)
        return SketchVector("spline", pm, M, T, vals, n), end
    if tag == 1:
        if pm not in (0, 2 * M):
            raise FormatError(f"Fourier size byte {pm} disagrees with {M} harmonics", offset + 1)
        return SketchVector("fourier", None, 2 * M, T, vals, n), end
    if tag == 2:
        if pm not in OPS:
            raise FormatError(f"bad spline degree {pm}", offset + 1)
        if len(buf) < end + 1 + 8 * M:
            raise TruncatedPayload("truncated fixed-point accumulators", end)
        b = buf[end]
        acc = np.frombuffer(buf, dtype="<u8", count=M, offset=end + 1).astype(np.uint64)
        cfg = FixedPointConfig(M=M, b=b, width=64)
        add, mult = OPS[pm]
        fp = FixedPointSketch(pm, cfg, acc, n, OpCounter(add * n, mult * n, n), T)
        return fp, end + 1 + 8 * M
    raise FormatError(f"unknown sketch tag {tag}", offset)


def write_sketches(path, sf: SketchFile):
    with open(path, "wb") as fh:
        fh.write(SKETCH_MAGIC + struct.pack("<II", sf.H, sf.W))
        for s in sf.records:
            fh.write(encode_sketch(s))


def read_sketches(path) -> SketchFile:
    buf = Path(path).read_bytes()
    if buf[:4] != SKETCH_MAGIC:
        raise BadMagic(f"not a sketch file: magic {buf[:4]!r}", 0)
    if len(buf) < 12:
        raise TruncatedPayload("truncated sketch file header", len(buf))
    H, W = struct.unpack_from("<II", buf, 4)
    pos, recs = 12, []
    for _ in range(H * W):
        s, pos = decode_sketch(buf, pos)
        recs.append(s)
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes", pos)
    return SketchFile(H, W, recs)


# -- look-up tables ----------------------------------------------------------

def write_lut(path, lut: RangeWalkLut):
    meta = {"kind": lut.kind, "size": len(lut), **lut.meta}
    head = json.dumps(meta, sort_keys=True, default=_json_default).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(LUT_MAGIC + head)
        fh.write(lut.keys.astype("<f8").tobytes())
        fh.write(lut.corrections.astype("<f8").tobytes())


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def read_lut(path) -> RangeWalkLut:
    buf = Path(path).read_bytes()
    if not buf.startswith(LUT_MAGIC):
        raise BadMagic("not a look-up table file", 0)
    nl = buf.find(b"\n", len(LUT_MAGIC))
    if nl < 0:
        raise TruncatedPayload("missing LUT header line", len(buf))
    meta = json.loads(buf[len(LUT_MAGIC):nl])
    kind, size = meta.pop("kind"), meta.pop("size")
    start = nl + 1
    if len(buf) - start != 16 * size:
        raise TruncatedPayload(f"LUT payload is {len(buf) - start} bytes, expected {16 * size}",
                               start)
    keys = np.frombuffer(buf, "<f8", size, start).astype(float)
    corr = np.frombuffer(buf, "<f8", size, start + 8 * size).astype(float)
    return RangeWalkLut(kind, keys, corr, meta)


# -- maps --------------------------------------------------------------------

def write_map(path, arr):
    arr = np.asarray(arr, dtype="<f8")
    if arr.ndim != 2:
        raise ValueError("maps are 2-D")
    with open(path, "wb") as fh:
        fh.write(MAP_MAGIC + struct.pack("<II", *arr.shape))
        fh.write(arr.tobytes())


def read_map(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:4] != MAP_MAGIC:
        raise BadMagic(f"not a map file: magic {buf[:4]!r}", 0)
    H, W = struct.unpack_from("<II", buf, 4)
    if len(buf) != 12 + 8 * H * W:
        raise TruncatedPayload(f"map payload is {len(buf) - 12} bytes, expected {8 * H * W}", 12)
    return np.frombuffer(buf, "<f8", H * W, 12).reshape(H, W).astype(float)


def write_pgm(path, arr, valid=None):
    """16-bit binary PGM, linearly scaled over the valid pixels."""
    arr = np.asarray(arr, dtype=float)
    valid = np.isfinite(arr) if valid is None else (np.asarray(valid, bool) & np.isfinite(arr))
    out = np.zeros(arr.shape, dtype=">u2")
    if valid.any():
        lo, hi = arr[valid].min(), arr[valid].max()
        span = hi - lo if hi > lo else 1.0
        out[valid] = np.round(1 + (arr[valid] - lo) / span * 65534).astype(np.uint16)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n65535\n".encode())
        fh.write(out.tobytes())


# -- configuration -----------------------------------------------------------

def _convert(raw: str, tp, key):
    origin = typing.get_origin(tp)
    try:
        if origin is tuple:
            (elem, *_rest) = typing.get_args(tp)
            items = [x.strip() for x in raw.split(",") if x.strip()]
            return tuple(_convert(x, elem, key) for x in items)
        if tp is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: cannot parse {raw!r}") from exc


def parse_config(text: str, cls):
    """Parse flat ``key = value`` lines into dataclass ``cls``.

    ``#`` starts a comment; list-valued fields take comma-separated values.
    Unknown or repeated keys are errors.
    """
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in names:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate config key {key!r}")
        values[key] = _convert(raw, hints[key], key)
    return cls(**values)


def load_config(path, cls):
    return parse_config(Path(path).read_text(), cls)


def format_config(obj) -> str:
    """Inverse of :func:`parse_config` (all fields, declaration order)."""
    lines = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
