"""Experimental procedures: train, random-label pretrain, fine-tune, reshuffle.

The central objects are MetricsLog (per-epoch records plus run provenance)
and Checkpoint (parameters plus how they were produced).  All procedures
are deterministic functions of (config, seeds, data): minibatch order is
drawn from a counter-based stream keyed on (seed, round, epoch), never
from global state.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, SplitSpec, assign_random_labels, reshuffle_labels, split
from .errors import ConfigError, ShapeError, TrainingDivergedError
from .nn import (
    Network,
    PlateauScheduler,
    SgdMomentum,
    TrainConfig,
    build_network,
    network_from_descriptor,
    predictions,
    softmax_cross_entropy,
)
from .prng import Prng, derive_seed, splitmix64

SPLITS = ("train", "val")

# stream tags, arbitrary but frozen: epoch shuffles and per-seed label draws
_ORDER_TAG = 0x53485546_464C4531
_LABEL_TAG = 0x4C41424C_53454544

_EVAL_BATCH = 256


@dataclass(frozen=True)
class EpochRecord:
    round: int
    epoch: int
    split: str
    loss: float
    accuracy: float
    lr: float


class MetricsLog:
    """Ordered per-epoch records with run provenance on the side.

    Records are append-only and validated: within each (round, split) the
    epochs must arrive contiguously starting at 1.  Alongside the rows the
    log keeps the labeling description and the start-of-round accuracy per
    round, and a fingerprint of the exact sample order the training loop
    consumed (used to certify that paired runs saw identical data).
    """

    def __init__(self, config_fingerprint: str = ""):
        self.records: list[EpochRecord] = []
        self.config_fingerprint = config_fingerprint
        self.round_labelings: dict[int, str] = {}
        self.round_start_accuracy: dict[int, float] = {}
        self._next_epoch: dict[tuple[int, str], int] = {}
        self._order_hash = hashlib.blake2b(digest_size=8)

    def append(self, rec: EpochRecord) -> None:
        if rec.split not in SPLITS:
            raise ValueError(f"split must be train or val, got {rec.split!r}")
        if rec.round < 1:
            raise ValueError(f"round must be >= 1, got {rec.round}")
        if not np.isfinite(rec.loss) or rec.loss < 0:
            raise ValueError(f"loss must be finite and >= 0, got {rec.loss}")
        if not 0.0 <= rec.accuracy <= 1.0:
            raise ValueError(f"accuracy must be in [0, 1], got {rec.accuracy}")
        if not np.isfinite(rec.lr) or rec.lr <= 0:
            raise ValueError(f"lr must be finite and positive, got {rec.lr}")
        key = (rec.round, rec.split)
        want = self._next_epoch.get(key, 1)
        if rec.epoch != want:
            raise ValueError(
                f"round {rec.round} {rec.split} epoch {rec.epoch} breaks "
                f"contiguity (expected {want})"
            )
        self._next_epoch[key] = want + 1
        self.records.append(rec)

    def absorb_order(self, indices: np.ndarray) -> None:
        self._order_hash.update(indices.astype(np.int64).tobytes())

    @property
    def data_order_fingerprint(self) -> str:
        return self._order_hash.copy().hexdigest()

    def rounds(self) -> list[int]:
        return sorted({r.round for r in self.records})

    def rows(self, round: int | None = None, split: str | None = None) -> list[EpochRecord]:
        return [r for r in self.records
                if (round is None or r.round == round)
                and (split is None or r.split == split)]

    def final(self, split: str = "val") -> EpochRecord:
        rows = self.rows(split=split)
        if not rows:
            raise ValueError(f"log has no {split} records")
        return rows[-1]


@dataclass
class Checkpoint:
    """Network parameters plus the provenance that produced them.

    ``provenance`` is newline-joined key=value lines (labeling, config
    fingerprint, epochs trained).
    """

    descriptor: str
    tensors: list[np.ndarray]
    provenance: str

    def build(self, num_classes: int | None = None) -> Network:
        """Instantiate the architecture; parameters are NOT loaded."""
        return network_from_descriptor(self.descriptor, num_classes=num_classes)

    def same_tensors(self, other: "Checkpoint") -> bool:
        return (len(self.tensors) == len(other.tensors)
                and all(a.shape == b.shape and np.array_equal(a, b)
                        for a, b in zip(self.tensors, other.tensors)))


def run_fingerprint(cfg: TrainConfig, d: Dataset) -> str:
    h = hashlib.blake2b(digest_size=8)
    for k, v in cfg.fingerprint_items():
        h.update(f"{k}={v};".encode())
    h.update(f"labeling={d.labeling.describe()};".encode())
    h.update(f"shape={d.samples.shape};classes={d.num_classes};".encode())
    return h.hexdigest()


def _checkpoint_of(net: Network, d: Dataset, cfg: TrainConfig,
                   epochs_done: int) -> Checkpoint:
    provenance = "\n".join([
        f"labeling={d.labeling.describe()}",
        f"config={run_fingerprint(cfg, d)}",
        f"epochs={epochs_done}",
    ])
    return Checkpoint(net.descriptor, net.state_tensors(), provenance)


def evaluate(net: Network, d: Dataset) -> tuple[float, float]:
    """Full-dataset mean loss and argmax accuracy.  Pure read of the net."""
    if net.num_classes != d.num_classes:
        raise ShapeError(
            f"head width {net.num_classes} != dataset classes {d.num_classes}"
        )
    loss_sum = 0.0
    hits = 0
    for lo in range(0, d.n, _EVAL_BATCH):
        xb = d.samples[lo:lo + _EVAL_BATCH]
        yb = d.labels[lo:lo + _EVAL_BATCH]
        logits = net.forward(xb)
        loss, _ = softmax_cross_entropy(logits, yb)
        loss_sum += loss * xb.shape[0]
        hits += int((predictions(logits) == yb).sum())
    return loss_sum / d.n, hits / d.n


def shuffle_seed(seed: int, round: int, epoch: int) -> int:
    """Seed for one epoch's minibatch order; distinct per (seed, round, epoch)."""
    base = derive_seed(int(seed), _ORDER_TAG)
    return splitmix64((base ^ ((round << 32) + epoch)) & ((1 << 64) - 1))


def _monitor_value(monitor: str, train_loss: float, val_metrics) -> float:
    if monitor == "train_loss":
        return train_loss
    if val_metrics is None:
        raise ConfigError(f"monitor {monitor!r} requires a validation set")
    return val_metrics[1]


def _run_round(net: Network, train_d: Dataset, val_d: Dataset | None,
               cfg: TrainConfig, log: MetricsLog, round: int) -> None:
    """Run cfg.epochs epochs of minibatch SGD, appending records for ``round``."""
    if net.num_classes != train_d.num_classes:
        raise ShapeError(
            f"head width {net.num_classes} != dataset classes {train_d.num_classes}"
        )
    if cfg.monitor != "train_loss" and val_d is None:
        raise ConfigError(f"monitor {cfg.monitor!r} requires a validation set")
    log.round_labelings[round] = train_d.labeling.describe()
    opt = SgdMomentum(net.parameters(), cfg.initial_lr, cfg.momentum)
    mode = "minimize" if cfg.monitor.endswith("loss") else "maximize"
    sched = PlateauScheduler(cfg.initial_lr, cfg.patience, cfg.decay_factor,
                             cfg.min_lr, mode)
    n = train_d.n
    for epoch in range(1, cfg.epochs + 1):
        order = Prng(shuffle_seed(cfg.seed, round, epoch)).permutation(n)
        log.absorb_order(order)
        lr_used = opt.lr
        loss_sum = 0.0
        hits = 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            logits = net.forward(train_d.samples[idx])
            loss, dlogits = softmax_cross_entropy(logits, train_d.labels[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at round {round} epoch {epoch}"
                )
            loss_sum += loss * idx.size
            hits += int((predictions(logits) == train_d.labels[idx]).sum())
            net.backward(dlogits)
            opt.step()
        train_loss = loss_sum / n
        log.append(EpochRecord(round, epoch, "train", train_loss, hits / n, lr_used))
        val_metrics = evaluate(net, val_d) if val_d is not None else None
        if val_metrics is not None:
            log.append(EpochRecord(round, epoch, "val",
                                   val_metrics[0], val_metrics[1], lr_used))
        opt.lr = sched.step(_monitor_value(cfg.monitor, train_loss, val_metrics))


def train(net: Network, train_d: Dataset, val_d: Dataset | None,
          cfg: TrainConfig) -> tuple[Checkpoint, MetricsLog]:
    """Minibatch SGD for exactly cfg.epochs epochs (no early stopping).

    Per epoch: seeded shuffle, SGD-with-momentum steps, train metrics as
    the running mean over that epoch's minibatches, one full validation
    pass when val_d is given, then a plateau-scheduler step on
    cfg.monitor.  The recorded lr is the one the epoch's steps used.
    """
    log = MetricsLog(run_fingerprint(cfg, train_d))
    _run_round(net, train_d, val_d, cfg, log, round=1)
    return _checkpoint_of(net, train_d, cfg, cfg.epochs), log


def pretrain_random(d: Dataset, arch: str, cfg: TrainConfig,
                    label_seed: int) -> tuple[Checkpoint, MetricsLog]:
    """Memorization phase: relabel ``d`` uniformly at random, then train.

    The scheduler monitors train_loss regardless of cfg.monitor, since
    validation against random labels is meaningless.
    """
    labeled = assign_random_labels(d, label_seed)
    cfg = replace(cfg, monitor="train_loss")
    net = build_network(arch, labeled.feature_shape, labeled.num_classes)
    net.initialize(cfg.seed)
    return train(net, labeled, None, cfg)


def finetune(ckpt: Checkpoint, target_d: Dataset, cfg: TrainConfig,
             val_d: Dataset | None = None) -> tuple[Checkpoint, MetricsLog]:
    """Fine-tune a pretrained feature extractor on a labeled target task.

    The classifier head is reinitialized (seeded by cfg.seed) at
    target_d.num_classes; every other layer starts from the checkpoint.
    All layers train; nothing is frozen.  The head draw matches what a
    from-scratch net with the same seed would get, so a 0-epoch
    pretraining checkpoint reproduces the baseline exactly.
    """
    net = network_from_descriptor(ckpt.descriptor, num_classes=target_d.num_classes)
    net.initialize(cfg.seed)
    net.load_state(ckpt.tensors, skip_head=True)
    cfg = replace(cfg, monitor="val_accuracy" if val_d is not None else "train_loss")
    return train(net, target_d, val_d, cfg)


def reshuffle_experiment(d: Dataset, arch: str, cfg: TrainConfig, rounds: int,
                         epochs_per_round: int,
                         base_seed: int) -> tuple[Checkpoint, MetricsLog]:
    """Sequential memorization of freshly reshuffled random labels.

    Round 1 trains from scratch on reshuffle_labels(d, base_seed, 1); each
    later round keeps the current weights but gets a fresh optimizer,
    scheduler and initial lr, and a fresh independent labeling.  The log
    stores, per round, the labeling description and the accuracy measured
    on the new labels before any step of that round (chance level if the
    network has no head start).
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if epochs_per_round < 1:
        raise ValueError(f"epochs_per_round must be >= 1, got {epochs_per_round}")
    cfg = replace(cfg, epochs=epochs_per_round, monitor="train_loss")
    net = build_network(arch, d.feature_shape, d.num_classes)
    net.initialize(cfg.seed)
    log = MetricsLog(run_fingerprint(cfg, d))
    labeled = d
    for r in range(1, rounds + 1):
        labeled = reshuffle_labels(d, base_seed, r)
        _, start_acc = evaluate(net, labeled)
        log.round_start_accuracy[r] = start_acc
        _run_round(net, labeled, None, cfg, log, round=r)
    return _checkpoint_of(net, labeled, cfg, rounds * epochs_per_round), log


def epochs_to_threshold(log: MetricsLog, round: int, threshold: float) -> int | None:
    """First epoch of ``round`` whose train accuracy reaches ``threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    rows = log.rows(round=round, split="train")
    if not rows:
        raise ValueError(f"log has no round {round}")
    for rec in rows:
        if rec.accuracy >= threshold:
            return rec.epoch
    return None


@dataclass
class TransferReport:
    """Paired baseline-vs-pretrained outcomes, one pair per seed."""

    seeds: list[int]
    baseline: list[float]  # final val accuracy, fresh initialization
    pretrained: list[float]  # final val accuracy, random-label pretraining
    order_fingerprints: list[tuple[str, str]] = field(default_factory=list)

    @property
    def differences(self) -> list[float]:
        return [p - b for b, p in zip(self.baseline, self.pretrained)]

    @property
    def mean_difference(self) -> float:
        return float(np.mean(self.differences))

    @property
    def std_difference(self) -> float:
        d = self.differences
        return float(np.std(d, ddof=1)) if len(d) > 1 else 0.0

    @property
    def wins(self) -> int:
        return sum(1 for x in self.differences if x > 0)


def _transfer_pair(source_d: Dataset, t_train: Dataset, t_val: Dataset,
                   arch: str, pre_cfg: TrainConfig, ft_cfg: TrainConfig,
                   seed: int) -> tuple[float, float, str, str]:
    pre = replace(pre_cfg, seed=seed)
    ft = replace(ft_cfg, seed=seed, monitor="val_accuracy")
    label_seed = derive_seed(seed, _LABEL_TAG)

    base_net = build_network(arch, t_train.feature_shape, t_train.num_classes)
    base_net.initialize(ft.seed)
    _, base_log = train(base_net, t_train, t_val, ft)
    _, base_acc = evaluate(base_net, t_val)

    ckpt, _ = pretrain_random(source_d, arch, pre, label_seed)
    ft_ckpt, ft_log = finetune(ckpt, t_train, ft, val_d=t_val)
    ft_net = ft_ckpt.build()
    ft_net.load_state(ft_ckpt.tensors)
    _, ft_acc = evaluate(ft_net, t_val)
    return base_acc, ft_acc, base_log.data_order_fingerprint, ft_log.data_order_fingerprint


def thread_budget() -> int:
    """Worker cap for compare_transfer, from MEMLAB_THREADS (default 1)."""
    raw = os.environ.get("MEMLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MEMLAB_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def compare_transfer(source_d: Dataset, target_d: Dataset, arch: str,
                     pre_cfg: TrainConfig, ft_cfg: TrainConfig,
                     seeds: list[int],
                     train_fraction: float = 0.8) -> TransferReport:
    """Per seed: baseline (fresh init) vs pretrain-on-random-labels-then-
    fine-tune, on one shared target train/val split.

    Within a pair everything except initialization is shared: same seed,
    config, data and minibatch order (certified by equal data-order
    fingerprints).  Pairs run independently, so they may execute on up to
    MEMLAB_THREADS workers; results aggregate in seed order either way.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    t_train, t_val = split(target_d, SplitSpec(train_fraction, ft_cfg.seed))

    def job(seed):
        return _transfer_pair(source_d, t_train, t_val, arch,
                              pre_cfg, ft_cfg, seed)

    workers = min(thread_budget(), len(seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, seeds))
    else:
        outcomes = [job(s) for s in seeds]

    report = TransferReport(list(seeds), [], [])
    for base_acc, ft_acc, base_fp, ft_fp in outcomes:
        if base_fp != ft_fp:
            raise RuntimeError(
                "paired runs consumed different data orders; pairing is broken"
            )
        report.baseline.append(base_acc)
        report.pretrained.append(ft_acc)
        report.order_fingerprints.append((base_fp, ft_fp))
    return report
