import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sarreflect.data import (
    DatasetIndex,
    MalformedHeader,
    PointScatterer,
    SarSample,
    SubsetReport,
    SyntheticTargetModel,
    TruncatedData,
    UnknownClass,
    default_targets,
    footprint_rect_pixels,
    load_dataset,
    load_mstar_class,
    read_mstar_chip,
    render_synthetic_sample,
    sample_subset,
    save_dataset,
    write_mstar_chip,
)
from sarreflect.geometry import AspectAngles
from sarreflect.imaging import SarSystemSpec

SPEC = SarSystemSpec()


def dense_index(step=1.0, incidences=(75.0,), classes=("a", "b")):
    chip = np.zeros((4, 4))
    return DatasetIndex(SarSample(chip, inc, k * step, c, f"{c}_{inc:g}_{k}")
                        for c in classes for inc in incidences
                        for k in range(int(round(360 / step))))


def test_subset_dense_gives_36_per_incidence():
    idx = dense_index(incidences=(75.0, 73.0))
    rep = SubsetReport()
    sub = sample_subset(idx, "a", 10.0, 2.0, seed=0, report=rep)
    assert len(sub) == 72 and rep.skipped == 0
    for inc in (73.0, 75.0):
        assert sum(s.incidence == inc for s in sub) == 36
    assert [s.source_id for s in sub] == [s.source_id for s in
                                          sample_subset(idx, "a", 10.0, 2.0, seed=0)]
    assert sub != sample_subset(idx, "a", 10.0, 2.0, seed=1)


def test_subset_spacing_concentrated():
    idx = dense_index()
    az = np.sort([s.azimuth for s in sample_subset(idx, "a", 10.0, 2.0, seed=3)])
    gaps = np.diff(np.concatenate([az, [az[0] + 360.0]]))
    assert np.all(np.abs(gaps - 10.0) <= 4.0)
    assert np.mean(np.abs(gaps - 10.0) <= 2.0) >= 0.6


def test_subset_single_step_and_errors():
    idx = dense_index()
    assert len(sample_subset(idx, "b", 360.0, 2.0, seed=0)) == 1
    with pytest.raises(UnknownClass):
        sample_subset(idx, "zzz", 10.0, 2.0, seed=0)
    with pytest.raises(ValueError):
        sample_subset(idx, "a", 0.0, 2.0, seed=0)


def test_subset_skips_gaps():
    chip = np.zeros((2, 2))
    idx = DatasetIndex(SarSample(chip, 75.0, float(a), "a", str(a)) for a in range(0, 90))
    rep = SubsetReport()
    sub = sample_subset(idx, "a", 10.0, 1.0, seed=0, report=rep)
    assert rep.steps == 36 and rep.skipped == 36 - len(sub) > 0


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 90.0), st.floats(0.0, 5.0), st.integers(0, 2**31),
       st.sampled_from([0.5, 1.0, 3.0]))
def test_subset_properties(spacing, tol, seed, step):
    idx = dense_index(step=step, classes=("a",))
    sub = sample_subset(idx, "a", spacing, tol, seed)
    assert len(sub) <= math.ceil(360.0 / spacing)
    ids = [s.source_id for s in sub]
    assert len(ids) == len(set(ids))


def test_index_grouping_partitions_and_sorts():
    rng = np.random.default_rng(0)
    chip = np.zeros((2, 2))
    samples = [SarSample(chip, float(rng.choice([73.0, 75.0])), float(rng.uniform(0, 360)),
                         str(rng.choice(["a", "b"])), f"s{i}") for i in range(50)]
    samples.append(SarSample(chip, 75.0, samples[0].azimuth, samples[0].class_label, "s00"))
    idx = DatasetIndex(samples)
    assert sum(len(g) for g in idx.groups.values()) == len(samples)
    for g in idx.groups.values():
        keys = [(s.azimuth, s.source_id) for s in g]
        assert keys == sorted(keys)


def test_sample_validation():
    with pytest.raises(ValueError):
        SarSample(-np.ones((2, 2)), 75.0, 0.0, "a", "")
    with pytest.raises(ValueError):
        SarSample(np.ones((2, 2)), 95.0, 0.0, "a", "")


def test_mstar_round_trip_and_metadata():
    rng = np.random.default_rng(0)
    s = SarSample(rng.random((128, 128)).astype(np.float32).astype(float), 75.0, 200.2, "T62",
                  "hb1.015")
    blob = write_mstar_chip(s)
    back = read_mstar_chip(blob)
    assert (back.incidence, back.azimuth, back.class_label, back.source_id) == \
        (75.0, 200.2, "T62", "hb1.015")
    np.testing.assert_array_equal(back.chip, s.chip)
    again = read_mstar_chip(write_mstar_chip(back))
    np.testing.assert_array_equal(again.chip, back.chip)


def test_mstar_crop_and_depression():
    head = (b"[PhoenixHeaderVer01.04]\nNumberOfColumns= 130\nNumberOfRows= 132\n"
            b"TargetAz= 10.5\nDesiredDepression= 17\nTargetType= bmp2\n[EndofPhoenixHeader]\n")
    mag = np.arange(132 * 130, dtype=">f4").reshape(132, 130)
    s = read_mstar_chip(head + mag.tobytes() + bytes(mag.nbytes), "x")
    assert s.chip.shape == (128, 128)
    assert s.incidence == 73.0
    assert s.chip[0, 0] == mag[2, 1]


def test_mstar_errors():
    with pytest.raises(MalformedHeader):
        read_mstar_chip(b"garbage")
    with pytest.raises(MalformedHeader):
        read_mstar_chip(b"[PhoenixHeaderVer01.04]\nNumberOfColumns= 2\n")
    s = SarSample(np.ones((8, 8)), 75.0, 0.0, "a", "")
    blob = write_mstar_chip(s)
    with pytest.raises(TruncatedData, match="bytes"):
        read_mstar_chip(blob[:-10])


def test_load_mstar_class(tmp_path):
    for i, (lab, az) in enumerate([("BTR_60", 1.0), ("btr60", 2.0), ("T72", 3.0)]):
        (tmp_path / "sub").mkdir(exist_ok=True)
        (tmp_path / "sub" / f"f{i}").write_bytes(
            write_mstar_chip(SarSample(np.ones((8, 8)), 75.0, az, lab, f"f{i}")))
    (tmp_path / "readme.txt").write_text("not a chip")
    got = load_mstar_class("BTR-60", tmp_path)
    assert sorted(s.azimuth for s in got) == [1.0, 2.0]
    with pytest.raises(FileNotFoundError):
        load_mstar_class("T72", tmp_path / "missing")


def test_synthetic_single_point_focuses():
    t = SyntheticTargetModel("p", (PointScatterer(0.0, 0.0),), 0.0)
    s = render_synthetic_sample(t, AspectAngles.from_degrees(75, 40), SPEC, 0)
    assert np.unravel_index(s.chip.argmax(), s.chip.shape) == (64, 64)
    # best-case range phase gives 1, the scene centre sits slightly off it
    assert 0.9 <= s.chip.max() <= 1.0 + 1e-9
    clutter = SyntheticTargetModel("p", (PointScatterer(0.0, 0.0),), 0.05)
    a = render_synthetic_sample(clutter, AspectAngles.from_degrees(75, 40), SPEC, 7)
    b = render_synthetic_sample(clutter, AspectAngles.from_degrees(75, 40), SPEC, 7)
    np.testing.assert_array_equal(a.chip, b.chip)
    assert not np.array_equal(a.chip, s.chip)


@pytest.mark.parametrize("az", [0.0, 30.0, 135.0, 250.0])
def test_synthetic_rotation_follows_aspect(az):
    t = SyntheticTargetModel("p", (PointScatterer(6.0, 0.0),), 0.0)
    s = render_synthetic_sample(t, AspectAngles.from_degrees(75, az), SPEC, 0)
    row, col = np.unravel_index(s.chip.argmax(), s.chip.shape)
    cx, cy, *_, rot = footprint_rect_pixels(t, az)
    r = 6.0 / 0.3
    assert abs(col - (cx + r * math.cos(rot))) <= 1.0
    assert abs(row - (cy + r * math.sin(rot))) <= 1.0


def test_default_targets_shape():
    ts = default_targets()
    assert [t.name for t in ts] == ["alpha", "bravo", "charlie", "delta"]
    assert all(3 <= len(t.scatterers) <= 6 for t in ts)
    with pytest.raises(ValueError):
        SyntheticTargetModel("x", (), 0.0)


def test_dataset_persistence(tmp_path):
    rng = np.random.default_rng(0)
    idx = DatasetIndex(SarSample(rng.random((16, 16)), 75.0, float(a), c, f"{c}{a}")
                       for c in "ab" for a in (0, 90))
    save_dataset(idx, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    assert [s.source_id for s in back.samples] == [s.source_id for s in idx.samples]
    for x, y in zip(idx.samples, back.samples):
        np.testing.assert_array_equal(x.chip, y.chip)
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nothing")
