"""Datasets: IDX ingestion, synthetic corpora, random labeling, splitting.

A Dataset is immutable once built (sample and label arrays are marked
read-only); every transformation returns a new Dataset.  Each one carries
its labeling provenance -- true labels, random(seed), or
reshuffled(seed, round) -- which ends up in run fingerprints, checkpoints
and plot legends.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagicError, CountMismatchError, TruncatedError
from .prng import Prng, splitmix64

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Labeling:
    """Provenance of a dataset's labels."""

    kind: str  # "true" | "random" | "reshuffled"
    seed: int | None = None
    round: int | None = None

    @staticmethod
    def true() -> "Labeling":
        return Labeling("true")

    def describe(self) -> str:
        if self.kind == "true":
            return "true_labels"
        if self.kind == "random":
            return f"random(seed={self.seed})"
        return f"reshuffled(seed={self.seed}, round={self.round})"


@dataclass
class Dataset:
    samples: np.ndarray
    labels: np.ndarray
    num_classes: int
    labeling: Labeling = field(default_factory=Labeling.true)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim < 2:
            raise ValueError("samples must be (n, ...feature dims)")
        n = self.samples.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.labels.shape != (n,):
            raise ValueError(
                f"{n} samples but {self.labels.shape[0] if self.labels.ndim == 1 else '?'} labels"
            )
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(
                f"labels must lie in [0, {self.num_classes})"
            )
        self.samples.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def feature_shape(self) -> tuple[int, ...]:
        return self.samples.shape[1:]

    def take(self, n: int) -> "Dataset":
        """First n samples (deterministic subsetting of a big corpus)."""
        if not 1 <= n <= self.n:
            raise ValueError(f"cannot take {n} of {self.n} samples")
        return Dataset(self.samples[:n].copy(), self.labels[:n].copy(),
                       self.num_classes, self.labeling)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )


def _read_exact(data: bytes, offset: int, count: int, what: str) -> bytes:
    if offset + count > len(data):
        raise TruncatedError(f"{what}: expected {count} bytes at offset {offset}, "
                             f"file has {len(data)}")
    return data[offset:offset + count]


def _load_idx_array(path, magic_want: int, ndim: int, what: str) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    header = _read_exact(raw, 0, 4 * (1 + ndim), f"{what} header")
    magic = struct.unpack(">I", header[:4])[0]
    if magic != magic_want:
        raise BadMagicError(
            f"{what}: magic 0x{magic:08x}, expected 0x{magic_want:08x}"
        )
    dims = struct.unpack(f">{ndim}I", header[4:])
    total = int(np.prod(dims, dtype=np.int64))
    payload = _read_exact(raw, 4 * (1 + ndim), total, f"{what} payload")
    if len(raw) > 4 * (1 + ndim) + total:
        raise TruncatedError(
            f"{what}: {len(raw) - 4 * (1 + ndim) - total} trailing bytes"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an image/label IDX pair (big-endian headers, uint8 payloads).

    Pixels come back scaled to [0, 1]; the class count is max(label) + 1.
    """
    images = _load_idx_array(images_path, IDX_IMAGE_MAGIC, 3, "images")
    labels = _load_idx_array(labels_path, IDX_LABEL_MAGIC, 1, "labels")
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    return Dataset(images.astype(np.float64) / 255.0,
                   labels.astype(np.int64),
                   int(labels.max()) + 1)


def write_idx(d: Dataset, images_path, labels_path) -> None:
    """Write a dataset of (n, H, W) images in [0, 1] as an IDX pair."""
    if len(d.feature_shape) != 2:
        raise ValueError(f"IDX images must be (n, H, W), got {d.samples.shape}")
    pixels = np.clip(np.rint(d.samples * 255.0), 0, 255).astype(np.uint8)
    n, h, w = pixels.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, h, w))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(d.labels.astype(np.uint8).tobytes())


def synth_blobs(n: int, num_classes: int, dim: int, spread: float,
                seed: int) -> Dataset:
    """Gaussian blobs around seeded class centers; labels are the true class."""
    if spread <= 0:
        raise ValueError(f"spread must be positive, got {spread}")
    if num_classes < 1:
        raise ValueError("num_classes must be positive")
    if n < num_classes:
        raise ValueError(f"need n >= num_classes, got n={n}, classes={num_classes}")
    rng = Prng(seed)
    centers = rng.fill_gaussian(num_classes * dim).reshape(num_classes, dim)
    labels = rng.fill_below(n, num_classes)
    noise = rng.fill_gaussian(n * dim).reshape(n, dim)
    return Dataset(centers[labels] + spread * noise, labels, num_classes)


def synth_images(n: int, num_classes: int, seed: int, size: int = 28,
                 jitter: float = 0.35, noise: float = 0.08,
                 clutter: float = 0.5, bumps: int = 2) -> Dataset:
    """Procedural (n, size, size) image corpus with class-dependent structure.

    Each image is a bright Gaussian bump on a ring whose angle encodes the
    class (with angular jitter), plus ``bumps`` distractor bumps of
    brightness ~``clutter`` and pixel noise, quantized to 256 gray levels.
    Stands in for a small labeled image corpus where none can be
    downloaded; deterministic in the seed.  Raising clutter past ~1 buries
    the class bump among equally bright distractors, which makes the task
    hard for a fresh network and rewards pre-learned bump detectors.
    """
    if num_classes < 1:
        raise ValueError("num_classes must be positive")
    if n < 1:
        raise ValueError("n must be positive")
    if bumps < 0:
        raise ValueError("bumps must be >= 0")
    rng = Prng(seed)
    labels = rng.fill_below(n, num_classes)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    center = (size - 1) / 2.0
    radius = 0.32 * size
    img = np.zeros((n, size, size))

    def add_bumps(cy, cx, amp, sigma):
        nonlocal img
        d2 = (yy[None] - cy[:, None, None]) ** 2 + (xx[None] - cx[:, None, None]) ** 2
        img += amp[:, None, None] * np.exp(-d2 / (2.0 * sigma[:, None, None] ** 2))

    # class bump: angle set by the label, jittered within its sector
    angle = 2.0 * np.pi * (labels + jitter * (rng.fill_float(n) - 0.5)) / num_classes
    add_bumps(center + radius * np.sin(angle),
              center + radius * np.cos(angle),
              0.7 + 0.3 * rng.fill_float(n),
              size * (0.08 + 0.03 * rng.fill_float(n)))
    # distractor bumps anywhere; at clutter=0.5 amplitude is 0.25..0.5
    for _ in range(bumps):
        add_bumps(rng.fill_float(n) * (size - 1),
                  rng.fill_float(n) * (size - 1),
                  clutter * (0.5 + 0.5 * rng.fill_float(n)),
                  size * (0.05 + 0.04 * rng.fill_float(n)))
    img += noise * rng.fill_gaussian(n * size * size).reshape(n, size, size)

    pixels = np.clip(np.rint(np.clip(img, 0.0, 1.0) * 255.0), 0, 255)
    return Dataset(pixels / 255.0, labels, num_classes)


def assign_random_labels(d: Dataset, seed: int,
                         num_classes: int | None = None) -> Dataset:
    """Replace every label with an i.i.d. uniform class drawn from ``seed``.

    Labels are fixed from here on -- the same sample keeps the same random
    label for the whole run.  Samples are shared untouched.
    """
    k = d.num_classes if num_classes is None else int(num_classes)
    labels = Prng(seed).fill_below(d.n, k)
    return Dataset(d.samples, labels, k, Labeling("random", seed=int(seed)))


def reshuffle_labels(d: Dataset, base_seed: int, round: int) -> Dataset:
    """Fresh independent random labeling for round ``round`` (1-based).

    The label stream is seeded with splitmix64(base_seed XOR round), so
    successive rounds are statistically independent and none coincides
    with assign_random_labels(d, base_seed).
    """
    if round < 1:
        raise ValueError(f"round must be >= 1, got {round}")
    derived = splitmix64((int(base_seed) ^ int(round)) & ((1 << 64) - 1))
    relabeled = assign_random_labels(d, derived)
    return Dataset(relabeled.samples, relabeled.labels, relabeled.num_classes,
                   Labeling("reshuffled", seed=int(base_seed), round=int(round)))


def split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded permutation partition into (train, val); provenance inherited."""
    n_train = int(d.n * spec.train_fraction)
    if n_train < 1 or n_train >= d.n:
        raise ValueError(
            f"train_fraction {spec.train_fraction} leaves an empty side "
            f"for n={d.n}"
        )
    order = Prng(spec.seed).permutation(d.n)
    tr, va = order[:n_train], order[n_train:]
    return (Dataset(d.samples[tr], d.labels[tr], d.num_classes, d.labeling),
            Dataset(d.samples[va], d.labels[va], d.num_classes, d.labeling))
