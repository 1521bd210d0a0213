"""Linear probing: one affine layer on frame outputs, logits averaged over valid frames."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .core_math import AdamState, adam_step, batch_cross_entropy
from .data import (FrameEmbeddings, UtteranceRecord, index_archive, label_space,
                   load_tensors, mean_pool, save_tensors)
from .errors import VoxEvalError
from .rng import stream


class ProbeError(VoxEvalError, ValueError):
    pass


@dataclass
class ProbeHead:
    W: np.ndarray  # dim x n_classes
    b: np.ndarray  # n_classes
    task: str = "sid"
    classes: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise ProbeError(f"inconsistent head shapes {self.W.shape} / {self.b.shape}")
        if self.classes and len(self.classes) != self.W.shape[1]:
            raise ProbeError("class list length does not match head width")

    @classmethod
    def zeros(cls, dim: int, classes: Sequence[str], task: str) -> "ProbeHead":
        return cls(np.zeros((dim, len(classes))), np.zeros(len(classes)), task, list(classes))

    @property
    def n_classes(self) -> int:
        return self.W.shape[1]

    def save(self, path) -> None:
        save_tensors(path, "probe", {"W": self.W, "b": self.b},
                     {"task": self.task, "classes": self.classes})

    @classmethod
    def load(cls, path) -> "ProbeHead":
        _, t, meta = load_tensors(path, expected_tag="probe")
        return cls(t["W"], t["b"], meta["task"], meta["classes"])


def probe_forward(fe: FrameEmbeddings, head: ProbeHead) -> np.ndarray:
    """Frame logits averaged over valid frames."""
    if fe.dim != head.W.shape[0]:
        raise ProbeError(f"{fe.utt_id}: dim {fe.dim} does not match head input {head.W.shape[0]}")
    frames = fe.frames[fe.valid_mask].astype(np.float64)
    if frames.shape[0] == 0:
        raise ProbeError(f"{fe.utt_id}: no valid frames")
    return (frames @ head.W + head.b).mean(axis=0)


def probe_loss(pooled: np.ndarray, labels: np.ndarray, W: np.ndarray, b: np.ndarray):
    """Mean CE of pooled @ W + b; returns (loss, dW, db).

    Uses the linearity identity: averaged frame logits = pooled embedding
    through the same affine map.
    """
    loss, g = batch_cross_entropy(pooled @ W + b, labels)
    return loss, pooled.T @ g, g.sum(axis=0)


def _labeled(records, manifest: Sequence[UtteranceRecord], task: str):
    by_id = index_archive(records)
    pairs = [(by_id[m.utt_id], m.label(task)) for m in manifest
             if m.label(task) is not None and m.utt_id in by_id]
    return pairs


@dataclass
class ProbeResult:
    head: ProbeHead
    loss_trace: List[float]


def probe_train(records: Sequence[FrameEmbeddings], manifest: Sequence[UtteranceRecord],
                task: str, epochs: int = 50, lr: float = 1e-2, batch_size: int = 32,
                seed: int = 0, classes: Optional[Sequence[str]] = None) -> ProbeResult:
    pairs = _labeled(records, manifest, task)
    if not pairs:
        raise ProbeError(f"no utterances labeled for task {task!r}")
    classes = list(classes) if classes is not None else label_space(task, manifest)
    cls_index = {c: i for i, c in enumerate(classes)}
    X = np.stack([mean_pool(fe) for fe, _ in pairs])
    y = np.array([cls_index[lab] for _, lab in pairs])
    head = ProbeHead.zeros(X.shape[1], classes, task)
    params = {"W": head.W, "b": head.b}
    state = AdamState()
    gen = stream(seed, 10)
    trace = []
    for _ in range(epochs):
        order = gen.permutation(len(y))
        total, count = 0.0, 0
        for start in range(0, len(y), batch_size):
            idx = order[start:start + batch_size]
            loss, dW, db = probe_loss(X[idx], y[idx], params["W"], params["b"])
            params = adam_step(params, {"W": dW, "b": db}, state, lr)
            total += loss * len(idx)
            count += len(idx)
        trace.append(total / count)
    return ProbeResult(ProbeHead(params["W"], params["b"], task, classes), trace)


def predict(records: Sequence[FrameEmbeddings], head: ProbeHead) -> np.ndarray:
    return np.array([int(np.argmax(probe_forward(fe, head))) for fe in records])


def probe_eval(records: Sequence[FrameEmbeddings], manifest: Sequence[UtteranceRecord],
               head: ProbeHead) -> float:
    """Accuracy in percent; labels outside the head's class list count as errors."""
    pairs = _labeled(records, manifest, head.task)
    if not pairs:
        raise ProbeError(f"no labeled utterances for task {head.task!r}")
    cls_index = {c: i for i, c in enumerate(head.classes)}
    correct = sum(int(np.argmax(probe_forward(fe, head))) == cls_index.get(lab, -1)
                  for fe, lab in pairs)
    return 100.0 * correct / len(pairs)
