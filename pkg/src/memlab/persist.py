"""Bit-exact serialization: checkpoints, metrics CSV, run config files.

The checkpoint container is a small binary format (magic "MEMT"); metrics
go to CSV with a fixed 9-significant-digit rendering so identical runs
produce identical bytes; run configuration is plain `key = value` text
with hard errors on unknown keys.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .data import Dataset, load_idx, synth_blobs, synth_images
from .errors import (
    BadMagicError,
    ConfigError,
    NonFiniteError,
    ShapeError,
    TruncatedError,
    VersionError,
)
from .nn import TrainConfig
from .protocol import Checkpoint, EpochRecord, MetricsLog

CHECKPOINT_MAGIC = b"MEMT"
CHECKPOINT_VERSION = 1
_MAX_ELEMENTS = 1 << 40  # refuse absurd dims before allocating

CSV_HEADER = "round,epoch,split,loss,accuracy,lr"


def format_real(v: float) -> str:
    """9 significant digits, '.' separator, trailing zeros kept."""
    if not np.isfinite(v):
        raise NonFiniteError(f"refusing to serialize non-finite value {v!r}")
    return format(float(v), "#.9g")


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.raw):
            raise TruncatedError(
                f"{what}: need {count} bytes at offset {self.pos}, "
                f"file has {len(self.raw)}"
            )
        out = self.raw[self.pos:self.pos + count]
        self.pos += count
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def text(self, what: str) -> str:
        n = self.u32(f"{what} length")
        return self.take(n, what).decode("utf-8")


def save_checkpoint(c: Checkpoint, path) -> None:
    """Binary layout: magic, version u16, descriptor, tensor count u32,
    per tensor (rank u8, dims u32 each, float64 payload), provenance.
    All integers and payloads little-endian; strings length-prefixed UTF-8.
    """
    parts = [CHECKPOINT_MAGIC, struct.pack("<H", CHECKPOINT_VERSION)]
    desc = c.descriptor.encode("utf-8")
    parts.append(struct.pack("<I", len(desc)))
    parts.append(desc)
    parts.append(struct.pack("<I", len(c.tensors)))
    for i, t in enumerate(c.tensors):
        arr = np.asarray(t, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"tensor {i} contains NaN or Inf")
        if arr.ndim > 255:
            raise ShapeError(f"tensor {i} rank {arr.ndim} exceeds format limit")
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f8").tobytes())
    prov = c.provenance.encode("utf-8")
    parts.append(struct.pack("<I", len(prov)))
    parts.append(prov)
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        r = _Reader(f.read())
    magic = r.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise BadMagicError(
            f"magic {magic!r}, expected {CHECKPOINT_MAGIC!r}"
        )
    version = r.u16("version")
    if version != CHECKPOINT_VERSION:
        raise VersionError(
            f"format version {version}, this reader handles {CHECKPOINT_VERSION}"
        )
    descriptor = r.text("descriptor")
    count = r.u32("tensor count")
    tensors = []
    for i in range(count):
        rank = r.u8(f"tensor {i} rank")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"tensor {i} dims"))
        total = 1
        for d in dims:
            total *= d
        if total > _MAX_ELEMENTS:
            raise ShapeError(f"tensor {i} dims {dims} overflow the element limit")
        payload = r.take(8 * total, f"tensor {i} payload")
        tensors.append(np.frombuffer(payload, dtype="<f8").reshape(dims).copy())
    provenance = r.text("provenance")
    if r.pos != len(r.raw):
        raise TruncatedError(
            f"{len(r.raw) - r.pos} trailing bytes after provenance"
        )
    return Checkpoint(descriptor, tensors, provenance)


def write_metrics_csv(log: MetricsLog, path) -> None:
    """Header plus one row per record, ordered (round, epoch, split),
    reals at 9 significant digits, LF endings.  Byte-deterministic.
    """
    lines = [CSV_HEADER]
    for rec in sorted(log.records, key=lambda r: (r.round, r.epoch, r.split)):
        lines.append(",".join([
            str(rec.round), str(rec.epoch), rec.split,
            format_real(rec.loss), format_real(rec.accuracy),
            format_real(rec.lr),
        ]))
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("utf-8"))


def read_metrics_csv(path) -> MetricsLog:
    """Inverse of write_metrics_csv; revalidates every record on append.

    Labeling provenance is not part of the CSV, so logs read back carry
    records only.
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigError(f"bad metrics header, expected {CSV_HEADER!r}", line=1)
    log = MetricsLog()
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 6:
            raise ConfigError(f"expected 6 fields, got {len(parts)}", line=lineno)
        try:
            rec = EpochRecord(int(parts[0]), int(parts[1]), parts[2],
                              float(parts[3]), float(parts[4]), float(parts[5]))
            log.append(rec)
        except ValueError as e:
            raise ConfigError(str(e), line=lineno) from None
    return log


# ---------------------------------------------------------------------------
# run configuration files


@dataclass
class DatasetSpec:
    """One dataset selection; kind decides which other fields apply."""

    kind: str = ""
    n: int = 1000
    classes: int = 10
    seed: int = 0
    size: int = 28  # synth_images
    dim: int = 16  # synth_blobs
    spread: float = 0.5  # synth_blobs
    images: str = ""  # idx
    labels: str = ""  # idx
    take: int = 0  # optional subset after load; 0 = all

    def build(self) -> Dataset:
        if self.kind == "synth_images":
            d = synth_images(self.n, self.classes, self.seed, size=self.size)
        elif self.kind == "synth_blobs":
            d = synth_blobs(self.n, self.classes, self.dim, self.spread, self.seed)
        elif self.kind == "idx":
            if not self.images or not self.labels:
                raise ConfigError("idx dataset needs images and labels paths")
            d = load_idx(self.images, self.labels)
        else:
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        return d.take(self.take) if self.take else d


@dataclass
class RunSpec:
    """Everything a command needs, resolved: re-parsable via render_config."""

    data: DatasetSpec
    arch: str
    train: TrainConfig
    target: DatasetSpec | None = None
    rounds: int = 4
    epochs_per_round: int = 0  # 0 = train.epochs
    label_seed: int = 0
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    train_fraction: float = 0.8
    pre_epochs: int = 0  # 0 = train.epochs
    ft_epochs: int = 0  # 0 = train.epochs
    checkpoint: str = ""


_DATASET_KEYS = {f.name for f in fields(DatasetSpec)}
_INT_KEYS = {"epochs", "patience", "batch_size", "seed", "rounds",
             "epochs_per_round", "label_seed", "pre_epochs", "ft_epochs"}
_REAL_KEYS = {"lr", "momentum", "decay", "min_lr", "train_fraction"}
_TEXT_KEYS = {"arch", "monitor", "checkpoint"}
_LIST_KEYS = {"seeds"}

# TrainConfig field name -> config key, for blaming the right line on
# range errors raised by TrainConfig itself
_CFG_KEY_OF = {"epochs": "epochs", "initial_lr": "lr", "momentum": "momentum",
               "patience": "patience", "decay_factor": "decay",
               "min_lr": "min_lr", "batch_size": "batch_size", "seed": "seed",
               "monitor": "monitor"}


def _known_key(key: str) -> bool:
    if key in _INT_KEYS or key in _REAL_KEYS or key in _TEXT_KEYS \
            or key in _LIST_KEYS:
        return True
    prefix, _, rest = key.partition(".")
    return prefix in ("data", "target") and rest in _DATASET_KEYS


def _parse_value(key: str, raw: str, lineno: int):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _REAL_KEYS:
            return float(raw)
        if key in _LIST_KEYS:
            return [int(p) for p in raw.split(",") if p.strip() != ""]
    except ValueError:
        raise ConfigError(f"cannot parse {key} value {raw!r}", line=lineno) from None
    return raw


def _dataset_value(key: str, raw: str, lineno: int):
    try:
        if key in ("n", "classes", "seed", "size", "dim", "take"):
            return int(raw)
        if key == "spread":
            return float(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {key} value {raw!r}", line=lineno) from None
    return raw


def parse_config(path) -> RunSpec:
    """Parse and fully resolve a run config.

    Grammar: one `key = value` per line, `#` starts a comment, blank lines
    ignored.  Unknown keys, duplicate keys and unparsable values are hard
    errors naming the line.  Defaults follow the standard training recipe
    (epochs 200, lr 0.1, momentum 0.9, patience 10).
    """
    with open(path, "r", encoding="utf-8") as f:
        raw_lines = f.read().splitlines()

    values: dict[str, object] = {}
    where: dict[str, int] = {}
    for lineno, raw in enumerate(raw_lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = (p.strip() for p in line.partition("="))
        if not eq or not key:
            raise ConfigError("expected 'key = value'", line=lineno)
        if not _known_key(key):
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        prefix, _, rest = key.partition(".")
        if prefix in ("data", "target") and rest:
            values[key] = _dataset_value(rest, value, lineno)
        else:
            values[key] = _parse_value(key, value, lineno)
        where[key] = lineno

    def dataset_spec(prefix: str) -> DatasetSpec | None:
        picked = {k.split(".", 1)[1]: v for k, v in values.items()
                  if k.startswith(prefix + ".")}
        if not picked:
            return None
        try:
            return DatasetSpec(**picked)
        except TypeError:
            raise ConfigError(f"bad {prefix} dataset keys") from None

    data = dataset_spec("data")
    if data is None or not data.kind:
        raise ConfigError("missing required key 'data.kind'")
    if "arch" not in values:
        raise ConfigError("missing required key 'arch'")

    cfg_kwargs = {}
    for field_name, key in _CFG_KEY_OF.items():
        if key in values:
            cfg_kwargs[field_name] = values[key]
    try:
        cfg = TrainConfig(**cfg_kwargs)
    except ValueError as e:
        for field_name, key in _CFG_KEY_OF.items():
            if f"{field_name} " in str(e) and key in where:
                raise ConfigError(str(e), line=where[key]) from None
        raise ConfigError(str(e)) from None

    spec = RunSpec(
        data=data,
        arch=str(values["arch"]),
        train=cfg,
        target=dataset_spec("target"),
        rounds=int(values.get("rounds", 4)),
        epochs_per_round=int(values.get("epochs_per_round", 0)),
        label_seed=int(values.get("label_seed", cfg.seed)),
        seeds=list(values.get("seeds", [0, 1, 2, 3, 4])),
        train_fraction=float(values.get("train_fraction", 0.8)),
        pre_epochs=int(values.get("pre_epochs", 0)),
        ft_epochs=int(values.get("ft_epochs", 0)),
        checkpoint=str(values.get("checkpoint", "")),
    )
    if spec.rounds < 1:
        raise ConfigError("rounds must be >= 1",
                          line=where.get("rounds"))
    if not 0.0 < spec.train_fraction < 1.0:
        raise ConfigError("train_fraction must be in (0, 1)",
                          line=where.get("train_fraction"))
    if not spec.seeds:
        raise ConfigError("seeds must name at least one seed",
                          line=where.get("seeds"))
    return spec


def _dataset_lines(prefix: str, d: DatasetSpec) -> list[str]:
    lines = [f"{prefix}.kind = {d.kind}"]
    if d.kind == "idx":
        lines += [f"{prefix}.images = {d.images}", f"{prefix}.labels = {d.labels}"]
    else:
        lines += [f"{prefix}.n = {d.n}", f"{prefix}.classes = {d.classes}",
                  f"{prefix}.seed = {d.seed}"]
        if d.kind == "synth_images":
            lines.append(f"{prefix}.size = {d.size}")
        else:
            lines += [f"{prefix}.dim = {d.dim}", f"{prefix}.spread = {d.spread}"]
    if d.take:
        lines.append(f"{prefix}.take = {d.take}")
    return lines


def render_config(spec: RunSpec) -> str:
    """Resolved-config echo: every value spelled out, reparses to ``spec``."""
    cfg = spec.train
    lines = _dataset_lines("data", spec.data)
    if spec.target is not None:
        lines += _dataset_lines("target", spec.target)
    lines += [
        f"arch = {spec.arch}",
        f"epochs = {cfg.epochs}",
        f"lr = {cfg.initial_lr!r}",
        f"momentum = {cfg.momentum!r}",
        f"patience = {cfg.patience}",
        f"decay = {cfg.decay_factor!r}",
        f"min_lr = {cfg.min_lr!r}",
        f"batch_size = {cfg.batch_size}",
        f"seed = {cfg.seed}",
        f"monitor = {cfg.monitor}",
        f"rounds = {spec.rounds}",
        f"epochs_per_round = {spec.epochs_per_round}",
        f"label_seed = {spec.label_seed}",
        f"seeds = {','.join(str(s) for s in spec.seeds)}",
        f"train_fraction = {spec.train_fraction!r}",
        f"pre_epochs = {spec.pre_epochs}",
        f"ft_epochs = {spec.ft_epochs}",
    ]
    if spec.checkpoint:
        lines.append(f"checkpoint = {spec.checkpoint}")
    return "\n".join(lines) + "\n"


def resolved_epochs(spec: RunSpec, which: str) -> int:
    """Effective epoch budget for a phase; 0-valued keys fall back to epochs."""
    value = {"round": spec.epochs_per_round, "pre": spec.pre_epochs,
             "ft": spec.ft_epochs}[which]
    return value if value else spec.train.epochs


def phase_config(spec: RunSpec, which: str) -> TrainConfig:
    return replace(spec.train, epochs=resolved_epochs(spec, which))
