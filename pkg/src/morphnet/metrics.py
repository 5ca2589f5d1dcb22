"""Evaluation utilities: confusion matrix, classification report, rmse,
ensemble averaging, submission files, and feature-map rasters."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .gz2 import ANSWER_COLUMNS
from .scaling import Network
from .tensor import Tensor

__all__ = [
    "confusion",
    "ClassificationReport",
    "report",
    "format_report",
    "RegressionReport",
    "rmse",
    "ensemble_average",
    "SUBMISSION_HEADER",
    "write_submission",
    "feature_map_export",
]


def confusion(preds, labels, k: int = 7) -> np.ndarray:
    """Count matrix with entry (x, y) = samples of true class x predicted as y."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.ndim != 1 or preds.shape != labels.shape:
        raise ValueError(
            f"preds and labels must be equal-length 1-d, got {preds.shape} and {labels.shape}"
        )
    for name, arr in (("preds", preds), ("labels", labels)):
        if len(arr) and (arr.min() < 0 or arr.max() >= k):
            raise ValueError(f"{name} contain class ids outside 0..{k - 1}")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


@dataclass
class ClassificationReport:
    """Per-class precision/recall/F1 plus accuracy and unweighted macro means.

    ``degenerate`` flags classes whose precision or recall had a zero
    denominator (no predictions, or no support); such entries score 0.
    """

    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    degenerate: np.ndarray


def report(cm: np.ndarray) -> ClassificationReport:
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got shape {cm.shape}")
    if (cm < 0).any():
        raise ValueError("confusion matrix counts must be nonnegative")
    total = int(cm.sum())
    if total == 0:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(cm).astype(np.float64)
    row = cm.sum(axis=1).astype(np.float64)  # support per true class
    col = cm.sum(axis=0).astype(np.float64)  # predictions per class
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros_like(diag), where=pr > 0)
    return ClassificationReport(
        precision=precision,
        recall=recall,
        f1=f1,
        support=cm.sum(axis=1),
        accuracy=float(cm.trace()) / total,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        degenerate=(row == 0) | (col == 0),
    )


def format_report(r: ClassificationReport, class_names: Optional[Sequence[str]] = None) -> str:
    k = len(r.precision)
    names = list(class_names) if class_names else [str(i) for i in range(k)]
    lines = [f"{'class':>12}  {'precision':>9}  {'recall':>9}  {'f1':>9}  {'support':>8}"]
    for i in range(k):
        flag = " *" if r.degenerate[i] else ""
        lines.append(
            f"{names[i]:>12}  {r.precision[i]:>9.4f}  {r.recall[i]:>9.4f}  "
            f"{r.f1[i]:>9.4f}  {int(r.support[i]):>8}{flag}"
        )
    lines.append(
        f"{'macro':>12}  {r.macro_precision:>9.4f}  {r.macro_recall:>9.4f}  {r.macro_f1:>9.4f}"
    )
    lines.append(f"accuracy {r.accuracy:.4f} over {int(r.support.sum())} samples")
    if r.degenerate.any():
        lines.append("* zero-denominator class, scored 0")
    return "\n".join(lines)


@dataclass
class RegressionReport:
    """Pooled rmse over every entry plus a per-output-column breakdown."""

    rmse: float
    per_question: np.ndarray


def rmse(pred: np.ndarray, target: np.ndarray) -> RegressionReport:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2:
        raise ValueError(
            f"pred and target must be equal-shape 2-d, got {pred.shape} and {target.shape}"
        )
    sq = (pred - target) ** 2
    return RegressionReport(
        rmse=float(np.sqrt(sq.mean())),
        per_question=np.sqrt(sq.mean(axis=0)),
    )


def ensemble_average(predictions: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise mean of the member prediction matrices."""
    if len(predictions) == 0:
        raise ValueError("ensemble needs at least one member")
    first = np.asarray(predictions[0])
    for i, p in enumerate(predictions[1:], start=1):
        if np.asarray(p).shape != first.shape:
            raise ValueError(
                f"member {i} has shape {np.asarray(p).shape}, expected {first.shape}"
            )
    members = [np.asarray(p) for p in predictions]
    # identical members average to themselves bit-exactly; the general
    # sum-then-divide path would round (e.g. (0.1 + 0.1 + 0.1) / 3 != 0.1)
    if all(np.array_equal(m, first) for m in members[1:]):
        return first.copy()
    return np.mean(np.stack(members), axis=0)


SUBMISSION_HEADER = "GalaxyID," + ",".join(ANSWER_COLUMNS)


def write_submission(ids: Sequence[str], preds: np.ndarray) -> str:
    """Comma-separated prediction table, one row per id, clamped to [0, 1].

    Values are written with repr, the shortest decimal form that parses
    back to the same float, so a round trip is lossless.
    """
    preds = np.asarray(preds, dtype=np.float64)
    if preds.ndim != 2 or preds.shape[1] != len(ANSWER_COLUMNS):
        raise ValueError(f"preds must be (N, {len(ANSWER_COLUMNS)}), got {preds.shape}")
    if len(ids) != len(preds):
        raise ValueError(f"{len(ids)} ids but {len(preds)} prediction rows")
    clamped = np.clip(preds, 0.0, 1.0)
    lines = [SUBMISSION_HEADER]
    for gid, row in zip(ids, clamped):
        lines.append(str(gid) + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def feature_map_export(
    network: Network,
    image: np.ndarray,
    layers: Sequence[str],
    channels: int = 8,
    cols: int = 4,
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Per-layer grayscale grids of randomly sampled activation channels.

    Each sampled channel is min-max normalized on its own; a constant
    channel renders as mid gray (0.5). Channels are drawn without
    replacement by a generator seeded per layer, and tiled row-major
    into a grid ``cols`` wide.
    """
    if channels < 1 or cols < 1:
        raise ValueError("channels and cols must be positive")
    record: dict[str, np.ndarray] = {}
    x = image[None, ...] if image.ndim == 3 else image
    network.forward(Tensor(np.asarray(x, dtype=np.float32)), training=False, record=record)
    available = network.layer_names()
    grids: dict[str, np.ndarray] = {}
    for li, name in enumerate(layers):
        if name not in record:
            raise ValueError(
                f"unknown layer {name!r}; available layers: {', '.join(available)}"
            )
        act = record[name]
        if act.ndim != 4:
            raise ValueError(f"layer {name!r} has no spatial activation to render")
        act = act[0]  # single-image batch
        h, w, c = act.shape
        take = min(channels, c)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(li,)))
        picked = rng.choice(c, size=take, replace=False)
        rows = math.ceil(take / cols)
        grid = np.zeros((rows * h, cols * w), dtype=np.float32)
        for slot, channel in enumerate(picked):
            tile = act[:, :, channel].astype(np.float64)
            lo, hi = tile.min(), tile.max()
            if hi > lo:
                tile = (tile - lo) / (hi - lo)
            else:
                tile = np.full_like(tile, 0.5)
            r, col_idx = divmod(slot, cols)
            grid[r * h : (r + 1) * h, col_idx * w : (col_idx + 1) * w] = tile
        grids[name] = grid
    return grids
