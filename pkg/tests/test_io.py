import time

import numpy as np
import pytest

from splinesketch.experiments import ExperimentSpec, face_depth_map
from splinesketch.fixedpoint import FixedPointConfig, accumulate_fixed_point
from splinesketch.io import (
    BadMagic,
    DtypeMismatch,
    FormatError,
    HistogramCube,
    SketchFile,
    TruncatedPayload,
    cube_bytes,
    decode_sketch,
    encode_sketch,
    format_config,
    load_cube,
    parse_config,
    read_lut,
    read_map,
    read_sketches,
    write_cube,
    write_lut,
    write_map,
    write_pgm,
    write_sketches,
)
from splinesketch.model import PhotonStream
from splinesketch.rangewalk import RangeWalkLut
from splinesketch.sketch import accumulate, accumulate_fourier


def test_small_cube_round_trip(tmp):
    counts = np.arange(16, dtype=np.uint16).reshape(2, 2, 4)
    path = tmp / "c.spc"
    write_cube(path, HistogramCube(counts))
    back = load_cube(path)
    assert back.counts.dtype == np.uint16
    np.testing.assert_array_equal(back.counts, counts)
    write_cube(tmp / "d.spc", back)
    assert (tmp / "d.spc").read_bytes() == path.read_bytes() == cube_bytes(back)
    assert load_cube(path, mmap=True).total() == counts.sum()


def test_cube_errors_carry_offsets(tmp):
    counts = np.ones((2, 3, 5), dtype=np.uint32)
    raw = cube_bytes(HistogramCube(counts))
    (tmp / "short").write_bytes(raw[:-4])
    with pytest.raises(TruncatedPayload) as e:
        load_cube(tmp / "short")
    assert "116 bytes, expected 120" in str(e.value) and e.value.offset is not None
    (tmp / "magic").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(BadMagic) as e:
        load_cube(tmp / "magic")
    assert e.value.offset == 0
    (tmp / "dtype").write_bytes(raw[:4] + b"\x07" + raw[5:])
    with pytest.raises(DtypeMismatch) as e:
        load_cube(tmp / "dtype")
    assert e.value.offset == 4
    (tmp / "head").write_bytes(raw[:10])
    with pytest.raises(TruncatedPayload):
        load_cube(tmp / "head")
    with pytest.raises(ValueError):
        HistogramCube(np.ones((2, 2, 2), dtype=np.int64))


def test_large_face_cube_loads_quickly(tmp):
    H = W = 141
    T = 4613
    depth, _ = face_depth_map(H, W, T)
    counts = np.zeros((H, W, T), dtype=np.uint16)
    rng = np.random.default_rng(0)
    idx = np.clip(np.rint(depth).astype(int), 0, T - 1)
    counts[np.arange(H)[:, None], np.arange(W)[None, :], idx] = rng.integers(1, 400, (H, W))
    counts[..., ::97] += 1
    write_cube(tmp / "face.spc", HistogramCube(counts))
    t0 = time.perf_counter()
    cube = load_cube(tmp / "face.spc")
    total = cube.total()
    assert time.perf_counter() - t0 < 2
    assert total == int(counts.sum(dtype=np.int64))


def _records():
    rng = np.random.default_rng(1)
    s = PhotonStream(rng.uniform(0, 600, 300), 600)
    empty = PhotonStream(np.array([]), 600)
    return [
        accumulate(s, 0, 8),
        accumulate(s, 2, 20),
        accumulate(empty, 1, 20),
        accumulate_fourier(s, 10),
        accumulate_fourier(s, 600),
        accumulate_fixed_point(s, 2, FixedPointConfig(8, 7)),
    ]


def test_sketch_records_round_trip(tmp):
    recs = _records()
    path = tmp / "s.skf"
    write_sketches(path, SketchFile(2, 3, recs))
    back = read_sketches(path)
    assert (back.H, back.W) == (2, 3)
    for a, b in zip(recs, back.records):
        assert encode_sketch(a) == encode_sketch(b)
    assert back.records[4].M == 600
    np.testing.assert_array_equal(back.records[5].acc, recs[5].acc)
    write_sketches(tmp / "t.skf", back)
    assert (tmp / "t.skf").read_bytes() == path.read_bytes()


def test_sketch_errors(tmp):
    rec = encode_sketch(_records()[1])
    with pytest.raises(TruncatedPayload) as e:
        decode_sketch(rec[:-3])
    assert e.value.offset == 12
    bad = bytearray(rec)
    bad[1] = 5
    with pytest.raises(FormatError) as e:
        decode_sketch(bytes(bad))
    assert e.value.offset == 1
    path = tmp / "x.skf"
    write_sketches(path, SketchFile(1, 1, [_records()[0]]))
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(FormatError):
        read_sketches(path)
    path.write_bytes(b"NOPE" + path.read_bytes()[4:])
    with pytest.raises(BadMagic):
        read_sketches(path)
    with pytest.raises(ValueError):
        encode_sketch(accumulate(PhotonStream(np.array([1.0]), 10.5), 1, 4))


def test_lut_round_trip(tmp):
    lut = RangeWalkLut("shape", [1.0, 2.5, 3.0], [-3.0, -1.0, 0.0],
                       {"M": 50, "T": 4613, "beta": np.array([0.1, 1.0]), "sbr": np.float64(100)})
    write_lut(tmp / "a.lut", lut)
    back = read_lut(tmp / "a.lut")
    np.testing.assert_array_equal(back.keys, lut.keys)
    np.testing.assert_array_equal(back.corrections, lut.corrections)
    assert back.meta["beta"] == [0.1, 1.0] and back.kind == "shape"
    write_lut(tmp / "b.lut", back)
    assert (tmp / "a.lut").read_bytes() == (tmp / "b.lut").read_bytes()
    (tmp / "c.lut").write_bytes((tmp / "a.lut").read_bytes()[:-8])
    with pytest.raises(TruncatedPayload):
        read_lut(tmp / "c.lut")


def test_maps_and_pgm(tmp):
    m = np.arange(12.0).reshape(3, 4)
    m[1, 1] = np.nan
    write_map(tmp / "m.spm", m)
    np.testing.assert_array_equal(read_map(tmp / "m.spm"), m)
    write_pgm(tmp / "m.pgm", m)
    data = (tmp / "m.pgm").read_bytes()
    assert data.startswith(b"P5\n4 3\n65535\n")
    px = np.frombuffer(data[len(b"P5\n4 3\n65535\n"):], ">u2").reshape(3, 4)
    assert px[1, 1] == 0 and px[0, 0] == 1 and px.max() == 65535


def test_config_round_trip():
    spec = ExperimentSpec("mc-vs-crb", seed=3, sbr=(1.0, 10.0), trials=7)
    assert parse_config(format_config(spec), ExperimentSpec) == spec
    text = "# comment\nkind = sbr-sweep\nsbr = 0.5, 1, 2\nn-depths = 10\n"
    spec = parse_config(text, ExperimentSpec)
    assert spec.sbr == (0.5, 1.0, 2.0) and spec.n_depths == 10
    for bad in ("kind = sbr-sweep\ncolour = red\n", "kind = sbr-sweep\nkind = depth-sweep\n",
                "kind = sbr-sweep\ntrials = many\n", "kind = nonsense\n", "just words\n"):
        with pytest.raises(ValueError):
            parse_config(bad, ExperimentSpec)
