import struct

import numpy as np
import pytest

from kdopt import data_io, objectives, oracle
from kdopt.errors import DataFormatError


def _write_idx_pair(tmp_path, pixels, labels):
    n, rows, cols = pixels.shape
    images_path = tmp_path / "images.idx"
    labels_path = tmp_path / "labels.idx"
    with open(images_path, "wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, n, rows, cols))
        f.write(pixels.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, len(labels)))
        f.write(bytes(labels))
    return images_path, labels_path


def test_idx_fixture_round_trip(tmp_path):
    pixels = np.array([[[0, 128], [255, 64]],
                       [[1, 2], [3, 4]]], dtype=np.uint8)
    images, labels = _write_idx_pair(tmp_path, pixels, [7, 1])
    ds = data_io.load_idx(images, labels, normalization="none")
    assert ds.n_samples == 2
    assert ds.input_dim == 4
    assert np.array_equal(ds.inputs[0], [0.0, 128.0, 255.0, 64.0])
    assert np.array_equal(ds.targets, [7, 1])
    ds_scaled = data_io.load_idx(images, labels)  # scale_0_1 default
    assert ds_scaled.inputs[0][2] == pytest.approx(1.0, abs=1e-15)


def test_idx_bad_magic(tmp_path):
    p = tmp_path / "bad.idx"
    with open(p, "wb") as f:
        f.write(struct.pack(">iiii", 0xDEAD, 1, 1, 1))
        f.write(b"\x00")
    lp = tmp_path / "labels.idx"
    with open(lp, "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, 1) + b"\x00")
    with pytest.raises(DataFormatError):
        data_io.load_idx(p, lp)


def test_idx_truncated(tmp_path):
    p = tmp_path / "trunc.idx"
    with open(p, "wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, 2, 2, 2))
        f.write(b"\x00" * 3)  # needs 8 bytes
    lp = tmp_path / "labels.idx"
    with open(lp, "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, 2) + b"\x00\x01")
    with pytest.raises(DataFormatError) as exc:
        data_io.load_idx(p, lp)
    assert exc.value.offset is not None


def test_idx_zero_images(tmp_path):
    pixels = np.zeros((0, 2, 2), dtype=np.uint8)
    images, labels = _write_idx_pair(tmp_path, pixels, [])
    with pytest.raises(DataFormatError):
        data_io.load_idx(images, labels)


def test_idx_count_mismatch(tmp_path):
    pixels = np.zeros((2, 1, 1), dtype=np.uint8)
    images, _ = _write_idx_pair(tmp_path, pixels, [0, 1])
    lp = tmp_path / "short_labels.idx"
    with open(lp, "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, 1) + b"\x00")
    with pytest.raises(DataFormatError):
        data_io.load_idx(images, lp)


def test_csv_fixture(tmp_path):
    p = tmp_path / "data.csv"
    p.write_text("1.0,2.0,0.5\n3.0,4.0,-1.5\n5.0,6.0,2.5\n")
    ds = data_io.load_csv(p)
    assert ds.inputs.shape == (3, 2)
    assert np.array_equal(ds.targets, [0.5, -1.5, 2.5])


def test_csv_header_handling(tmp_path):
    p = tmp_path / "data.csv"
    p.write_text("a,b,label\n1.0,2.0,0.0\n")
    with pytest.raises(DataFormatError) as exc:
        data_io.load_csv(p)
    assert exc.value.row == 0
    ds = data_io.load_csv(p, has_header=True)
    assert ds.n_samples == 1


def test_csv_ragged_row(tmp_path):
    p = tmp_path / "ragged.csv"
    p.write_text("1.0,2.0,0.0\n1.0,2.0\n")
    with pytest.raises(DataFormatError) as exc:
        data_io.load_csv(p)
    assert exc.value.row == 1


def test_csv_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(DataFormatError):
        data_io.load_csv(p)


def test_csv_integer_labels(tmp_path):
    p = tmp_path / "cls.csv"
    p.write_text("0.1,0.2,2\n0.3,0.4,0\n")
    ds = data_io.load_csv(p, integer_labels=True)
    assert ds.targets.dtype.kind == "i"
    assert ds.n_classes == 3


def test_write_csv_round_trip(tmp_path):
    ds, _ = data_io.synth("linear_gaussian", 10, 3, 1.0, 1)
    p = tmp_path / "rt.csv"
    data_io.write_csv(ds, p)
    back = data_io.load_csv(p)
    assert np.array_equal(back.inputs, ds.inputs)
    assert np.array_equal(back.targets, ds.targets)


def test_synth_determinism():
    a, wa = data_io.synth("linear_gaussian", 20, 4, 1.0, 9)
    b, wb = data_io.synth("linear_gaussian", 20, 4, 1.0, 9)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets, b.targets)
    assert np.array_equal(wa, wb)


def test_synth_noiseless_interpolates():
    ds, _ = data_io.synth("linear_gaussian", 30, 5, 0.0, 2)
    c = oracle.solve_linear_regression(objectives.LinearRegression(ds))
    assert c.sigma_star_sq <= 1e-10


def test_synth_noisy_has_noise_at_optimum():
    ds, _ = data_io.synth("linear_gaussian", 200, 5, 1.0, 3)
    c = oracle.solve_linear_regression(objectives.LinearRegression(ds))
    assert c.sigma_star_sq > 0.0


def test_synth_invalid_args():
    with pytest.raises(ValueError):
        data_io.synth("linear_gaussian", 0, 3, 1.0, 0)
    with pytest.raises(ValueError):
        data_io.synth("linear_gaussian", 3, 3, -1.0, 0)
    with pytest.raises(ValueError):
        data_io.synth("nope", 3, 3, 1.0, 0)


def test_synth_logistic_kinds():
    sep = data_io.synth("logistic_separable", 20, 3, 0.0, 4)
    assert set(np.unique(sep.targets)) <= {0.0, 1.0}
    noisy = data_io.synth("logistic_noisy", 20, 3, 1.0, 5)
    assert set(np.unique(noisy.targets)) <= {0.0, 1.0}


def test_synth_blobs():
    ds = data_io.synth_blobs(30, 4, 3, 1.0, 6)
    assert ds.n_classes == 3
    assert ds.inputs.shape == (30, 4)


def test_subset():
    ds, _ = data_io.synth("linear_gaussian", 20, 3, 1.0, 7)
    sub = data_io.subset(ds, 5, 0)
    assert sub.n_samples == 5
    with pytest.raises(ValueError):
        data_io.subset(ds, 21, 0)
