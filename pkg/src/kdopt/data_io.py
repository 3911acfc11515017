"""Dataset ingestion: IDX image/label pairs, numeric CSV matrices, and seeded
synthetic generators used as noise-controllable testbeds."""

import csv
import struct

import numpy as np
from scipy.special import expit

from . import core
from .errors import DataFormatError
from .objectives import Dataset

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_exact(f, count, offset, what):
    data = f.read(count)
    if len(data) != count:
        raise DataFormatError(f"truncated IDX file while reading {what}", offset=offset)
    return data


def load_idx(images_path, labels_path, normalization="scale_0_1"):
    """Load an IDX image/label pair (big-endian magic, dims, raw bytes).

    Images are flattened row-major to length rows*cols vectors; labels are
    class indices. scale_0_1 divides pixels by 255.
    """
    with open(images_path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, 0, "image header"))
        if magic != IDX_IMAGES_MAGIC:
            raise DataFormatError(f"bad image magic 0x{magic:08x}", offset=0)
        if n == 0:
            raise DataFormatError("empty dataset: zero images", offset=4)
        raw = _read_exact(f, n * rows * cols, 16, "pixel data")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols).astype(np.float64)
    with open(labels_path, "rb") as f:
        magic, n_labels = struct.unpack(">ii", _read_exact(f, 8, 0, "label header"))
        if magic != IDX_LABELS_MAGIC:
            raise DataFormatError(f"bad label magic 0x{magic:08x}", offset=0)
        labels = np.frombuffer(_read_exact(f, n_labels, 8, "label data"), dtype=np.uint8)
    if n != n_labels:
        raise DataFormatError(f"image/label count mismatch: {n} vs {n_labels}", offset=4)
    if normalization == "scale_0_1":
        images = images / 255.0
    elif normalization == "standardize":
        images = (images - images.mean(axis=0)) / np.maximum(images.std(axis=0), 1e-12)
    elif normalization != "none":
        raise ValueError(f"unknown normalization {normalization!r}")
    return Dataset(inputs=images, targets=labels.astype(np.int64), n_classes=int(labels.max()) + 1)


def load_csv(path, label_column=-1, has_header=False, integer_labels=False):
    """Rectangular numeric CSV with one label column (default: last)."""
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        for i, row in enumerate(reader):
            if i == 0 and has_header:
                continue
            if not row:
                continue
            parsed = []
            for j, cell in enumerate(row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataFormatError(f"non-numeric cell {cell!r}", row=i, column=j) from None
            if rows and len(parsed) != len(rows[0]):
                raise DataFormatError(f"ragged row with {len(parsed)} cells", row=i)
            rows.append(parsed)
    if not rows:
        raise DataFormatError("empty dataset: no data rows", row=0)
    mat = np.asarray(rows, dtype=np.float64)
    label_column = label_column % mat.shape[1]
    labels = mat[:, label_column]
    inputs = np.delete(mat, label_column, axis=1)
    if integer_labels:
        targets = labels.astype(np.int64)
        return Dataset(inputs=inputs, targets=targets, n_classes=int(targets.max()) + 1)
    return Dataset(inputs=inputs, targets=labels)


def write_csv(dataset, path):
    """Write inputs plus a trailing label column; round-trips bit-exactly."""
    integer_labels = dataset.targets.dtype.kind in "iu"
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for a, b in zip(dataset.inputs, dataset.targets):
            row = [f"{v:.17g}" for v in a]
            row.append(str(int(b)) if integer_labels else f"{b:.17g}")
            writer.writerow(row)


def synth(kind, n, d, noise, seed):
    """Seeded synthetic datasets.

    linear_gaussian: standard-normal inputs, targets w . [a 1] + noise * eps;
    returns (dataset, planted lifted parameter vector). noise=0 gives an
    interpolating problem with zero noise at the optimum.
    logistic_separable / logistic_noisy: binary labels from a planted linear
    separator, noiseless or with sigmoid label sampling.
    """
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    if noise < 0.0:
        raise ValueError("noise must be nonnegative")
    rng = core.make_rng(seed)
    a = rng.standard_normal((n, d))
    abar = np.hstack([a, np.ones((n, 1))])
    if kind == "linear_gaussian":
        w = rng.standard_normal(d + 1)
        b = abar @ w + noise * rng.standard_normal(n)
        return Dataset(inputs=a, targets=b), w
    if kind == "logistic_separable":
        w = rng.standard_normal(d + 1)
        b = (abar @ w > 0.0).astype(np.float64)
        return Dataset(inputs=a, targets=b)
    if kind == "logistic_noisy":
        w = rng.standard_normal(d + 1)
        p = expit(abar @ w / max(noise, 1e-12))
        b = (rng.random(n) < p).astype(np.float64)
        return Dataset(inputs=a, targets=b)
    raise ValueError(f"unknown synthetic kind {kind!r}")


def synth_blobs(n, d, k, spread, seed):
    """Gaussian class blobs for multi-class objectives (softmax / MLP)."""
    rng = core.make_rng(seed)
    centers = rng.standard_normal((k, d)) * spread
    labels = rng.integers(0, k, size=n)
    inputs = centers[labels] + rng.standard_normal((n, d))
    return Dataset(inputs=inputs, targets=labels, n_classes=k)


def subset(dataset, count, seed):
    """Seeded uniform subset without replacement."""
    if count > dataset.n_samples:
        raise ValueError("subset larger than dataset")
    idx = core.make_rng(seed).choice(dataset.n_samples, size=count, replace=False)
    return Dataset(inputs=dataset.inputs[idx], targets=dataset.targets[idx],
                   n_classes=dataset.n_classes)
