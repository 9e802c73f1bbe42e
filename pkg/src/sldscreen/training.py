"""Dataset splitting, the mini-batch epoch loop, best-checkpoint selection,
and the on-disk embedding cache."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, SplitError
from .backbone import EMBEDDING_DIM
from .head import (DropoutSpec, HeadParams, OptimizerState, apply_update,
                   backward_batch, bce_loss, forward_batch, init_params,
                   make_optimizer)

CACHE_MAGIC = b"SGEMB1"


@dataclass
class LabeledExample:
    """One embedded handwriting sample; label 1 means a recorded diagnosis."""

    embedding: np.ndarray
    label: int
    source_id: str = ""

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class SplitSpec:
    train_count: int
    val_count: int
    seed: int = 0
    stratified: bool = True


@dataclass
class TrainConfig:
    epochs: int = 25
    batch_size: int = 32
    dropout_rate: float = 0.5
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    augment_multiplier: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochRecord:
    train_loss: float
    train_accuracy: float
    val_accuracy: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None

    @property
    def val_accuracies(self) -> list[float]:
        return [r.val_accuracy for r in self.records]


def split_dataset(examples, spec: SplitSpec):
    """Deterministic disjoint (train, validation) partition of exact sizes.

    Stratified mode keeps per-class proportions equal on both sides within
    one example; infeasible stratification (a class that cannot appear on
    both sides) raises SplitError.
    """
    n = len(examples)
    if n != spec.train_count + spec.val_count:
        raise SplitError(
            f"dataset size {n} != {spec.train_count} + {spec.val_count}")
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        order = rng.permutation(n)
        train_idx = order[:spec.train_count]
        val_idx = order[spec.train_count:]
    else:
        by_class = {0: [], 1: []}
        for i, ex in enumerate(examples):
            by_class[ex.label].append(i)
        classes = [c for c in (0, 1) if by_class[c]]
        # Ideal validation share per class; floors first, then remaining
        # slots to the largest fractional parts.
        ideal = {c: len(by_class[c]) * spec.val_count / n for c in classes}
        val_per_class = {c: int(np.floor(ideal[c])) for c in classes}
        leftover = spec.val_count - sum(val_per_class.values())
        for c in sorted(classes, key=lambda c: (ideal[c] - np.floor(ideal[c])),
                        reverse=True)[:leftover]:
            val_per_class[c] += 1
        train_idx, val_idx = [], []
        for c in classes:
            take = val_per_class[c]
            if take == 0 or take == len(by_class[c]):
                raise SplitError(
                    f"stratification infeasible: class {c} cannot appear "
                    "on both sides of the split")
            idx = np.array(by_class[c])
            rng.shuffle(idx)
            val_idx.extend(idx[:take])
            train_idx.extend(idx[take:])
        train_idx = np.array(train_idx)
        val_idx = np.array(val_idx)
        rng.shuffle(train_idx)
        rng.shuffle(val_idx)
    return ([examples[i] for i in train_idx], [examples[i] for i in val_idx])


def _accuracy(probs: np.ndarray, labels: np.ndarray,
              threshold: float = 0.5) -> float:
    pred = probs >= threshold
    return float(np.mean(pred == (labels == 1)))


def train_epoch(p: HeadParams, s: OptimizerState, train, cfg: TrainConfig,
                epoch_seed: int):
    """One seeded pass over the training set in mini-batches.

    Every example is visited exactly once; the batch gradient is the mean of
    per-example gradients.  Returns (params, state, mean loss, accuracy).
    """
    if len(train) == 0:
        raise SplitError("empty training set")
    rng = np.random.default_rng(epoch_seed)
    order = rng.permutation(len(train))
    x = np.stack([train[i].embedding for i in order])
    y = np.array([train[i].label for i in order], dtype=np.float64)

    total_loss = 0.0
    total_correct = 0.0
    dropout = DropoutSpec(rate=cfg.dropout_rate, mode="train")
    for start in range(0, len(train), cfg.batch_size):
        xb = x[start:start + cfg.batch_size]
        yb = y[start:start + cfg.batch_size]
        batch_seed = rng.integers(2 ** 63)
        probs, trace = forward_batch(p, xb, dropout, batch_seed)
        g = backward_batch(p, trace, yb)
        p, s = apply_update(p, g, s)
        total_loss += sum(bce_loss(pr, int(yl)) for pr, yl in zip(probs, yb))
        total_correct += np.sum((probs >= 0.5) == (yb == 1))
    n = len(train)
    return p, s, total_loss / n, total_correct / n


def fit(dataset, spec: SplitSpec, cfg: TrainConfig,
        group_by_source: bool = False):
    """Split, train for cfg.epochs epochs, and return the parameters from
    the epoch with the best validation accuracy (earliest on ties) together
    with the full history.

    Validation accuracy is measured after each epoch in inference mode at
    threshold 0.5.  With group_by_source, examples sharing a source_id stay
    on one side of the split and the spec counts refer to sources.
    """
    if group_by_source:
        train, val = _split_grouped(dataset, spec)
    else:
        train, val = split_dataset(dataset, spec)
    val_x = np.stack([ex.embedding for ex in val])
    val_y = np.array([ex.label for ex in val], dtype=np.float64)

    p = init_params(cfg.seed)
    s = make_optimizer(cfg.optimizer, cfg.learning_rate)
    history = TrainHistory()
    best_p = p.copy()
    best_acc = -1.0
    seeds = np.random.SeedSequence(cfg.seed).spawn(max(cfg.epochs, 1))
    for epoch in range(cfg.epochs):
        epoch_seed = seeds[epoch].generate_state(1)[0]
        p, s, loss, train_acc = train_epoch(p, s, train, cfg, int(epoch_seed))
        probs, _ = forward_batch(p, val_x, DropoutSpec(mode="inference"))
        val_acc = _accuracy(probs, val_y)
        history.records.append(EpochRecord(loss, train_acc, val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            best_p = p.copy()
            history.best_epoch = epoch
    return best_p, history


def _split_grouped(dataset, spec: SplitSpec):
    """Split by unique source_id so no source straddles the partition.

    Each source gets the label of its first example for stratification;
    spec.train_count/val_count count sources, not examples.
    """
    sources: dict[str, list[LabeledExample]] = {}
    for ex in dataset:
        sources.setdefault(ex.source_id, []).append(ex)
    reps = [LabeledExample(np.zeros(1), group[0].label, sid)
            for sid, group in sources.items()]
    train_reps, val_reps = split_dataset(reps, spec)
    train = [ex for rep in train_reps for ex in sources[rep.source_id]]
    val = [ex for rep in val_reps for ex in sources[rep.source_id]]
    return train, val


# --- embedding cache --------------------------------------------------------
#
# Binary layout: magic "SGEMB1", uint64 LE record count, then per record a
# 32-byte source digest, one label byte, and 1280 little-endian float64s.

_RECORD_HEADER = struct.Struct("<32sB")


def write_cache(path: str, examples) -> None:
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<Q", len(examples)))
        for ex in examples:
            digest = bytes.fromhex(ex.source_id)
            if len(digest) != 32:
                raise FormatError(
                    f"source_id must be a 32-byte hex digest, got {ex.source_id!r}")
            fh.write(_RECORD_HEADER.pack(digest, ex.label))
            emb = np.asarray(ex.embedding, dtype="<f8")
            if emb.shape != (EMBEDDING_DIM,):
                raise FormatError(f"embedding shape {emb.shape} != ({EMBEDDING_DIM},)")
            fh.write(emb.tobytes())


def read_cache(path: str) -> list[LabeledExample]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(CACHE_MAGIC)] != CACHE_MAGIC:
        raise FormatError(f"bad cache magic at byte 0 in {path}")
    pos = len(CACHE_MAGIC)
    if len(data) < pos + 8:
        raise FormatError(f"cache truncated at byte {len(data)}")
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    record_size = _RECORD_HEADER.size + EMBEDDING_DIM * 8
    examples = []
    for _ in range(count):
        if len(data) < pos + record_size:
            raise FormatError(f"cache truncated at byte {len(data)}")
        digest, label = _RECORD_HEADER.unpack_from(data, pos)
        pos += _RECORD_HEADER.size
        emb = np.frombuffer(data, dtype="<f8", count=EMBEDDING_DIM,
                            offset=pos).astype(np.float64)
        pos += EMBEDDING_DIM * 8
        examples.append(LabeledExample(emb, int(label), digest.hex()))
    return examples
