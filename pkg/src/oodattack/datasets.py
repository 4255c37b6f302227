"""In-domain labeled data and out-domain unlabeled data.

Synthetic generators produce the desk-scale benchmark (Gaussian class
blobs inside, an annulus or shifted clusters outside, separated by an
enforced margin). File loaders ingest IDX image/label files and labeled
CSV so the same pipeline can run on small real datasets.
"""

import csv
import itertools
import struct
from dataclasses import dataclass, field

import numpy as np

from .diffcore import rng

IN_DOMAIN = "in"
OUT_DOMAIN = "out"

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DatasetFormatError(ValueError):
    """Malformed dataset file (bad magic, truncation, ragged rows, ...)."""


@dataclass
class LabeledDataset:
    """In-domain samples: feature rows, integer labels, a declared range."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray    # (n,) int64
    num_classes: int
    data_range: tuple[float, float]
    domain_tag: str = IN_DOMAIN

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (len(self.features),):
            raise ValueError(
                f"features {self.features.shape} do not pair with labels "
                f"{self.labels.shape}")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if len(self.labels) and (self.labels.min() < 0
                                 or self.labels.max() >= self.num_classes):
            raise ValueError(
                f"labels outside [0, {self.num_classes})")
        _check_range(self.features, self.data_range)

    def __len__(self):
        return len(self.features)

    @property
    def dimension(self) -> int:
        return self.features.shape[1]


@dataclass
class UnlabeledDataset:
    """Out-domain samples: feature rows only."""

    features: np.ndarray
    data_range: tuple[float, float]
    domain_tag: str = OUT_DOMAIN

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got {self.features.shape}")
        _check_range(self.features, self.data_range)

    def __len__(self):
        return len(self.features)

    @property
    def dimension(self) -> int:
        return self.features.shape[1]


def _check_range(features, data_range):
    lo, hi = data_range
    if not lo < hi:
        raise ValueError(f"invalid data range [{lo}, {hi}]")
    if not np.all(np.isfinite(features)):
        raise ValueError("features contain non-finite values")
    if len(features) and (features.min() < lo or features.max() > hi):
        raise ValueError(
            f"features fall outside declared range [{lo}, {hi}]: "
            f"observed [{features.min()}, {features.max()}]")


# ---- synthetic benchmark ---------------------------------------------------


@dataclass(frozen=True)
class Annulus:
    """Out-domain support: a spherical shell around the origin."""

    r_min: float
    r_max: float


@dataclass(frozen=True)
class ShiftedClusters:
    """Out-domain support: Gaussian clusters displaced from the in-domain ones."""

    offsets: tuple  # tuple of d-dim points


@dataclass
class SyntheticSpec:
    """Recipe for one paired in-domain / out-domain benchmark.

    Defaults give the desk benchmark: four sigma=0.3 blobs at (+-2, +-2)
    in the [-4, 4] square, with out-domain samples drawn on the annulus of
    radius [3.2, 3.8] and kept at least ``margin_sigmas`` cluster standard
    deviations away from every in-domain mean.
    """

    dimension: int = 2
    num_classes: int = 4
    cluster_means: tuple | None = None
    cluster_sigma: float = 0.3
    data_range: tuple[float, float] = (-4.0, 4.0)
    out_geometry: Annulus | ShiftedClusters = field(
        default_factory=lambda: Annulus(3.2, 3.8))
    margin_sigmas: float = 3.0
    train_per_class: int = 200
    test_per_class: int = 50
    out_samples: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.cluster_sigma <= 0:
            raise ValueError("cluster_sigma must be > 0")
        if self.margin_sigmas < 3.0:
            raise ValueError("margin_sigmas must be >= 3 to keep domains disjoint")
        lo, hi = self.data_range
        if not lo < hi:
            raise ValueError(f"invalid data range [{lo}, {hi}]")
        if self.cluster_means is None:
            self.cluster_means = _corner_means(self.dimension, self.num_classes)
        means = np.asarray(self.cluster_means, dtype=np.float64)
        if means.shape != (self.num_classes, self.dimension):
            raise ValueError(
                f"cluster_means shape {means.shape} != "
                f"({self.num_classes}, {self.dimension})")
        if means.min() < lo or means.max() > hi:
            raise ValueError("cluster means outside data range")
        if min(self.train_per_class, self.test_per_class, self.out_samples) < 1:
            raise ValueError("sample counts must be >= 1")
        if isinstance(self.out_geometry, Annulus):
            g = self.out_geometry
            if not 0 < g.r_min < g.r_max:
                raise ValueError(f"invalid annulus radii [{g.r_min}, {g.r_max}]")
            if g.r_max > min(abs(lo), abs(hi)):
                raise ValueError("annulus extends beyond the data range")
        elif isinstance(self.out_geometry, ShiftedClusters):
            offs = np.asarray(self.out_geometry.offsets, dtype=np.float64)
            if offs.ndim != 2 or offs.shape[1] != self.dimension:
                raise ValueError("shifted-cluster offsets must be d-dimensional points")
            dists = np.linalg.norm(offs[:, None, :] - means[None, :, :], axis=2)
            if dists.min() < self.margin:
                raise ValueError(
                    "shifted-cluster geometry violates the margin: an offset lies "
                    f"{dists.min():.3f} from an in-domain mean (< {self.margin:.3f})")
        else:
            raise ValueError(f"unknown out-domain geometry {self.out_geometry!r}")

    @property
    def margin(self) -> float:
        return self.margin_sigmas * self.cluster_sigma

    @property
    def means(self) -> np.ndarray:
        return np.asarray(self.cluster_means, dtype=np.float64)


def _corner_means(dimension, num_classes):
    corners = list(itertools.product((2.0, -2.0), repeat=dimension))
    if num_classes > len(corners):
        raise ValueError(
            f"no default placement for {num_classes} classes in {dimension}-D; "
            "pass cluster_means explicitly")
    return tuple(corners[:num_classes])


def gen_in_domain(spec: SyntheticSpec, split: str = "train") -> LabeledDataset:
    """Sample the labeled in-domain set: one isotropic blob per class.

    Deterministic in (spec.seed, split); values are clamped to the data
    range. ``split`` selects the train or held-out test draw.
    """
    if split not in ("train", "test"):
        raise ValueError(f"unknown split {split!r}")
    per_class = spec.train_per_class if split == "train" else spec.test_per_class
    gen = rng.stream(spec.seed, f"in-domain-{split}")
    lo, hi = spec.data_range
    blocks, labels = [], []
    for c, mean in enumerate(spec.means):
        pts = mean + spec.cluster_sigma * gen.standard_normal((per_class, spec.dimension))
        blocks.append(np.clip(pts, lo, hi))
        labels.append(np.full(per_class, c, dtype=np.int64))
    return LabeledDataset(
        features=np.concatenate(blocks),
        labels=np.concatenate(labels),
        num_classes=spec.num_classes,
        data_range=spec.data_range,
    )


def gen_out_domain(spec: SyntheticSpec) -> UnlabeledDataset:
    """Sample the unlabeled out-domain set from the declared geometry.

    Every sample is rejected until it sits at least ``spec.margin`` from
    each in-domain cluster mean, keeping the two supports disjoint even
    where the raw geometry would graze a cluster.
    """
    gen = rng.stream(spec.seed, "out-domain")
    means = spec.means
    accepted = []
    need = spec.out_samples
    attempts = 0
    max_attempts = 2000 * need
    while need > 0:
        chunk = _draw_out_chunk(spec, gen, max(need, 64))
        attempts += len(chunk)
        dists = np.linalg.norm(chunk[:, None, :] - means[None, :, :], axis=2)
        keep = chunk[dists.min(axis=1) >= spec.margin]
        if len(keep):
            accepted.append(keep[:need])
            need -= len(keep[:need])
        if attempts > max_attempts:
            raise ValueError(
                "out-domain geometry violates the margin: fewer than "
                f"{spec.out_samples} of {attempts} draws cleared "
                f"{spec.margin:.3f} from every in-domain mean")
    return UnlabeledDataset(
        features=np.concatenate(accepted),
        data_range=spec.data_range,
    )


def _draw_out_chunk(spec, gen, count):
    lo, hi = spec.data_range
    if isinstance(spec.out_geometry, Annulus):
        g = spec.out_geometry
        direction = gen.standard_normal((count, spec.dimension))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = gen.uniform(g.r_min, g.r_max, size=count)
        return direction * radius[:, None]
    offsets = np.asarray(spec.out_geometry.offsets, dtype=np.float64)
    which = gen.integers(0, len(offsets), size=count)
    pts = offsets[which] + spec.cluster_sigma * gen.standard_normal(
        (count, spec.dimension))
    return np.clip(pts, lo, hi)


# ---- IDX ingestion ----------------------------------------------------------


def load_idx(images_path, labels_path=None, num_classes=None):
    """Parse IDX ubyte files into a dataset, rescaling pixels to [0, 1].

    With only an images file the result is an UnlabeledDataset; pairing a
    labels file yields a LabeledDataset. Image payloads are flattened to
    one feature row per image.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, min_dims=2)
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    if labels_path is None:
        return UnlabeledDataset(features=features, data_range=(0.0, 1.0))
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, min_dims=1)
    if labels.ndim != 1:
        raise DatasetFormatError(f"{labels_path}: label file must be 1-D")
    if len(labels) != len(features):
        raise DatasetFormatError(
            f"image/label count mismatch at byte 4: {len(features)} images in "
            f"{images_path} vs {len(labels)} labels in {labels_path}")
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return LabeledDataset(
        features=features,
        labels=labels.astype(np.int64),
        num_classes=num_classes,
        data_range=(0.0, 1.0),
    )


def _read_idx(path, expected_magic, min_dims):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise DatasetFormatError(
            f"{path}: truncated header at byte 0 (need 4 bytes, have {len(blob)})")
    (magic,) = struct.unpack_from(">I", blob, 0)
    if magic != expected_magic:
        raise DatasetFormatError(
            f"{path}: bad magic 0x{magic:08x} at byte 0 "
            f"(expected 0x{expected_magic:08x})")
    ndims = magic & 0xFF
    header_len = 4 + 4 * ndims
    if len(blob) < header_len:
        raise DatasetFormatError(
            f"{path}: truncated dimension header at byte {len(blob)} "
            f"(need {header_len} bytes)")
    dims = struct.unpack_from(f">{ndims}I", blob, 4)
    if ndims < min_dims or any(d == 0 for d in dims):
        raise DatasetFormatError(f"{path}: invalid dimensions {dims} at byte 4")
    expected_payload = int(np.prod(dims))
    actual_payload = len(blob) - header_len
    if actual_payload != expected_payload:
        raise DatasetFormatError(
            f"{path}: payload length mismatch at byte {header_len}: expected "
            f"{expected_payload} bytes, file has {actual_payload}")
    data = np.frombuffer(blob, dtype=np.uint8, offset=header_len)
    return data.reshape(dims)


# ---- CSV ingestion ----------------------------------------------------------


def load_csv(path, num_classes, data_range=None) -> LabeledDataset:
    """Read a labeled CSV: header row, numeric feature columns, integer
    label in the last column."""
    rows = _read_csv_rows(path)
    features, labels = [], []
    for lineno, row in rows:
        *feats, label = row
        if label != int(label):
            raise DatasetFormatError(
                f"{path}:{lineno}: label {label} is not an integer")
        if not 0 <= label < num_classes:
            raise DatasetFormatError(
                f"{path}:{lineno}: label {int(label)} outside [0, {num_classes})")
        features.append(feats)
        labels.append(int(label))
    features = np.asarray(features, dtype=np.float64)
    if data_range is None:
        data_range = (float(features.min()), float(features.max()))
    return LabeledDataset(
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
        num_classes=num_classes,
        data_range=data_range,
    )


def load_csv_unlabeled(path, data_range=None) -> UnlabeledDataset:
    """Read an unlabeled CSV: header row, every column a feature."""
    rows = _read_csv_rows(path)
    features = np.asarray([row for _, row in rows], dtype=np.float64)
    if data_range is None:
        data_range = (float(features.min()), float(features.max()))
    return UnlabeledDataset(features=features, data_range=data_range)


def _read_csv_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            next(reader)  # header
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file, header row required")
        width = None
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if width is None:
                width = len(raw)
            elif len(raw) != width:
                raise DatasetFormatError(
                    f"{path}:{lineno}: ragged row has {len(raw)} cells, "
                    f"expected {width}")
            try:
                values = [float(cell) for cell in raw]
            except ValueError:
                raise DatasetFormatError(
                    f"{path}:{lineno}: non-numeric cell in {raw!r}")
            if not all(np.isfinite(values)):
                raise DatasetFormatError(f"{path}:{lineno}: non-finite value")
            rows.append((lineno, values))
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    return rows


def save_csv(dataset, path) -> None:
    """Write a dataset as CSV (features then label column, if labeled)."""
    labeled = isinstance(dataset, LabeledDataset)
    d = dataset.dimension
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = [f"x{i}" for i in range(d)]
        if labeled:
            header.append("label")
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [repr(v) for v in dataset.features[i]]
            if labeled:
                row.append(str(int(dataset.labels[i])))
            writer.writerow(row)
