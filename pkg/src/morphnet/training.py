"""Mini-batch training: Adam, plateau learning-rate schedule, early stopping.

The loop is deterministic end to end. Every random decision (validation
carve, shuffles, dropout, optional augmentation) draws from a seed tree
rooted at ``TrainConfig.seed``, so one seed reproduces histories and
checkpoints bit-exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .checkpoint import Checkpoint, save_checkpoint
from .scaling import Network
from .tensor import Tensor, backward, cross_entropy

__all__ = [
    "NonFiniteGradient",
    "AdamState",
    "collect_grads",
    "adam_step",
    "PlateauSchedule",
    "plateau_step",
    "EarlyStop",
    "early_stop_step",
    "TrainConfig",
    "default_batch_size",
    "ArrayDataSource",
    "EpochRecord",
    "history_to_text",
    "FitResult",
    "evaluate",
    "predict_probs",
    "one_hot",
    "fit",
    "snapshot",
]


class NonFiniteGradient(RuntimeError):
    """A gradient or loss value went NaN/inf; the epoch cannot continue."""


@dataclass
class AdamState:
    """First/second moment estimates plus the step counter and learning rate."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    lr: float = 1.5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict, lr: float = 1.5e-4) -> "AdamState":
        return cls(
            m={k: np.zeros(p.data.shape, dtype=np.float64) for k, p in params.items()},
            v={k: np.zeros(p.data.shape, dtype=np.float64) for k, p in params.items()},
            lr=lr,
        )


def collect_grads(params: dict) -> dict[str, np.ndarray]:
    return {name: p.grad for name, p in params.items()}


def adam_step(params: dict, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected update, in place on the parameter arrays.

    Moment math runs in float64; parameters keep their own dtype.
    Raises NonFiniteGradient before touching any state if a gradient
    contains NaN or inf, so the parameters stay at their last good
    values.
    """
    for name in params:
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    bias1 = 1.0 - state.beta1 ** state.t
    bias2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        p.data[...] = (p.data.astype(np.float64) - update).astype(p.data.dtype)


@dataclass
class PlateauSchedule:
    """Cut the learning rate by ``factor`` after ``patience`` flat epochs."""

    factor: float = 0.2
    patience: int = 4
    min_delta: float = 1e-5
    min_lr: float = 1e-7
    best: float = math.inf
    counter: int = 0


def plateau_step(s: PlateauSchedule, val_loss: float, lr: float) -> float:
    """Feed one epoch's validation loss; returns the (possibly reduced) lr."""
    if val_loss < s.best - s.min_delta:
        s.best = val_loss
        s.counter = 0
        return lr
    s.counter += 1
    if s.counter > s.patience:
        s.counter = 0
        return max(lr * s.factor, s.min_lr)
    return lr


@dataclass
class EarlyStop:
    """Stop after ``patience`` consecutive epochs without improvement."""

    patience: int = 9
    min_delta: float = 1e-5
    best: float = math.inf
    counter: int = 0


def early_stop_step(s: EarlyStop, val_loss: float) -> bool:
    """True when training should stop."""
    if val_loss < s.best - s.min_delta:
        s.best = val_loss
        s.counter = 0
        return False
    s.counter += 1
    return s.counter >= s.patience


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    lr: float = 1.5e-4
    seed: int = 0
    variant: str = "b0"
    val_fraction: float = 0.1
    use_plateau: bool = True
    use_early_stop: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr < 0:
            raise ValueError(f"lr must be nonnegative, got {self.lr}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")


def default_batch_size(variant: str) -> int:
    """Largest batch per variant: 256 down to 64 over the family, 32 for toy."""
    ladder = {"b0": 256, "b1": 256, "b2": 128, "b3": 128, "toy": 32}
    return ladder.get(variant, 64)


@dataclass
class ArrayDataSource:
    """In-memory dataset: (N, H, W, C) float32 images plus targets.

    Targets are integer class ids (classification) or (N, 37) float
    vectors (regression).
    """

    images: np.ndarray
    targets: np.ndarray
    ids: Optional[list[str]] = None

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError(f"images must be (N, H, W, C), got shape {self.images.shape}")
        if len(self.images) != len(self.targets):
            raise ValueError(
                f"{len(self.images)} images but {len(self.targets)} targets"
            )
        if len(self.images) == 0:
            raise ValueError("dataset is empty")

    @property
    def is_classification(self) -> bool:
        return self.targets.ndim == 1


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_metric: float


def history_to_text(history: list[EpochRecord]) -> str:
    lines = [
        f"epoch={r.epoch} lr={r.lr!r} train_loss={r.train_loss!r} "
        f"val_loss={r.val_loss!r} val_metric={r.val_metric!r}"
        for r in history
    ]
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class FitResult:
    history: list[EpochRecord]
    best: Optional[Checkpoint]
    best_epoch: int = 0
    stopped_early: bool = False
    aborted: Optional[str] = None


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must be in 0..{k - 1}")
    return np.eye(k, dtype=np.float32)[labels]


def _carve_validation(
    data: ArrayDataSource, fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (classification) or plain (regression) holdout indices."""
    n = len(data.images)
    if data.is_classification:
        train_idx: list[int] = []
        val_idx: list[int] = []
        labels = np.asarray(data.targets)
        for label in np.unique(labels):
            members = np.flatnonzero(labels == label)
            if len(members) < 2:
                warnings.warn(f"class {label} has {len(members)} sample(s); kept in train only")
                train_idx.extend(members)
                continue
            take = max(1, int(len(members) * fraction))
            order = rng.permutation(len(members))
            val_idx.extend(members[order[:take]])
            train_idx.extend(members[order[take:]])
        return (
            np.sort(np.asarray(train_idx, dtype=np.int64)),
            np.sort(np.asarray(val_idx, dtype=np.int64)),
        )
    order = rng.permutation(n)
    take = max(1, int(n * fraction))
    return np.sort(order[take:]), np.sort(order[:take])


def _batch_loss(network: Network, x: np.ndarray, target: np.ndarray, loss_kind: str,
                training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    out = network.forward(Tensor(x), training=training, rng=rng)
    if loss_kind == "cross_entropy":
        return cross_entropy(out, one_hot(target, network.head.outputs))
    diff = out - Tensor(np.asarray(target, dtype=np.float32))
    return (diff * diff).mean()


def predict_probs(network: Network, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Eval-mode forward pass over all images, batched."""
    outs = []
    for start in range(0, len(images), batch_size):
        out = network.forward(Tensor(images[start : start + batch_size]), training=False)
        outs.append(out.data)
    return np.concatenate(outs, axis=0)


def evaluate(
    network: Network,
    images: np.ndarray,
    targets: np.ndarray,
    loss_kind: str = "cross_entropy",
    batch_size: int = 64,
) -> tuple[float, float]:
    """Sample-weighted loss plus the headline metric (accuracy or rmse)."""
    probs = predict_probs(network, images, batch_size)
    if loss_kind == "cross_entropy":
        y = one_hot(targets, network.head.outputs)
        p = np.clip(probs.astype(np.float64), 1e-7, 1.0 - 1e-7)
        loss = float(-(y * np.log(p)).sum() / len(images))
        metric = float(np.mean(np.argmax(probs, axis=1) == np.asarray(targets)))
    else:
        t = np.asarray(targets, dtype=np.float64)
        sq = (probs.astype(np.float64) - t) ** 2
        loss = float(sq.mean())
        metric = float(math.sqrt(sq.mean()))
    return loss, metric


def snapshot(network: Network, state: AdamState, epoch: int, best_val_loss: float) -> Checkpoint:
    optimizer = {}
    for name in state.m:
        optimizer[f"m.{name}"] = state.m[name].astype(np.float32)
        optimizer[f"v.{name}"] = state.v[name].astype(np.float32)
    return Checkpoint(
        descriptor=network.descriptor(),
        params={k: p.data.copy() for k, p in network.params.items()},
        optimizer=optimizer,
        step=state.t,
        epoch=epoch,
        best_val_loss=best_val_loss,
        lr=state.lr,
    )


def fit(
    network: Network,
    data: ArrayDataSource,
    cfg: TrainConfig,
    loss_kind: str = "cross_entropy",
    checkpoint_path: Optional[str] = None,
    augment_fn: Optional[Callable[[np.ndarray, np.random.Generator], np.ndarray]] = None,
    on_epoch_end: Optional[Callable[[EpochRecord, Network], bool]] = None,
) -> FitResult:
    """Train with Adam; track the best validation loss and snapshot it.

    ``augment_fn`` (if given) maps a training batch plus a seeded
    generator to a transformed batch; validation always sees the raw
    images. ``on_epoch_end`` may return True to request a stop (used
    for target-reached cutoffs and progress printing).
    """
    if loss_kind not in ("cross_entropy", "rmse"):
        raise ValueError(f"loss_kind must be cross_entropy or rmse, got {loss_kind!r}")
    if loss_kind == "cross_entropy" and not data.is_classification:
        raise ValueError("cross_entropy needs integer class targets")
    if loss_kind == "rmse" and data.is_classification:
        raise ValueError("rmse training needs float vector targets")
    if data.is_classification:
        counts = np.bincount(np.asarray(data.targets), minlength=network.head.outputs)
        for label in np.flatnonzero(counts == 0):
            warnings.warn(f"class {label} has no training samples")

    root = np.random.SeedSequence(cfg.seed)
    carve_ss, epochs_ss = root.spawn(2)
    train_idx, val_idx = _carve_validation(
        data, cfg.val_fraction, np.random.default_rng(carve_ss)
    )
    if len(val_idx) == 0:
        warnings.warn("validation split is empty; scoring epochs on the training split")
        val_idx = train_idx
    train_images = data.images[train_idx]
    train_targets = np.asarray(data.targets)[train_idx]
    val_images = data.images[val_idx]
    val_targets = np.asarray(data.targets)[val_idx]

    state = AdamState.for_params(network.params, lr=cfg.lr)
    plateau = PlateauSchedule()
    stopper = EarlyStop()
    history: list[EpochRecord] = []
    best_loss = math.inf
    best_ckpt: Optional[Checkpoint] = None
    best_epoch = 0
    stopped = False
    aborted = None

    epoch_seeds = epochs_ss.spawn(cfg.epochs)
    for epoch in range(1, cfg.epochs + 1):
        shuffle_ss, dropout_ss, augment_ss = epoch_seeds[epoch - 1].spawn(3)
        shuffle_rng = np.random.default_rng(shuffle_ss)
        dropout_rng = np.random.default_rng(dropout_ss)
        augment_rng = np.random.default_rng(augment_ss)
        lr_used = state.lr
        perm = shuffle_rng.permutation(len(train_images))
        batch_losses: list[float] = []
        try:
            for start in range(0, len(perm), cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                x = train_images[idx]
                if augment_fn is not None:
                    x = augment_fn(x, augment_rng)
                loss = _batch_loss(
                    network, x, train_targets[idx], loss_kind,
                    training=True, rng=dropout_rng,
                )
                value = float(loss.data)
                if not math.isfinite(value):
                    raise NonFiniteGradient(f"non-finite loss {value} in epoch {epoch}")
                network.zero_grad()
                backward(loss)
                adam_step(network.params, collect_grads(network.params), state)
                batch_losses.append(value)
        except NonFiniteGradient as exc:
            aborted = str(exc)
            warnings.warn(f"training aborted: {aborted}; best checkpoint retained")
            break

        train_loss = float(np.mean(batch_losses))
        val_loss, val_metric = evaluate(
            network, val_images, val_targets, loss_kind, cfg.batch_size
        )
        record = EpochRecord(epoch, lr_used, train_loss, val_loss, val_metric)
        history.append(record)

        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_ckpt = snapshot(network, state, epoch, best_loss)
            if checkpoint_path is not None:
                save_checkpoint(best_ckpt, checkpoint_path)
        if cfg.use_plateau:
            state.lr = plateau_step(plateau, val_loss, state.lr)
        if cfg.use_early_stop and early_stop_step(stopper, val_loss):
            stopped = True
            break
        if on_epoch_end is not None and on_epoch_end(record, network):
            stopped = True
            break

    return FitResult(history, best_ckpt, best_epoch, stopped, aborted)
