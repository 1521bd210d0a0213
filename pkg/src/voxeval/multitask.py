"""Toy encoder training: balanced multi-task CE, margin softmax, GE2E, pseudo labels,
and the LLM adaptor (frame stacking by 4, then linear-ReLU-linear)."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core_math import AdamState, adam_step, batch_cross_entropy, log_softmax, softmax
from .data import (TASKS, FrameEmbeddings, UtteranceRecord, index_archive, label_space,
                   load_tensors, save_tensors)
from .errors import VoxEvalError
from .probe import ProbeHead
from .rng import stream

log = logging.getLogger(__name__)


class MultitaskError(VoxEvalError, ValueError):
    pass


class TrainingDivergedError(MultitaskError):
    pass


# encoder

@dataclass
class ToyEncoder:
    W1: np.ndarray  # feat_dim x hidden
    b1: np.ndarray
    W2: np.ndarray  # hidden x out_dim
    b2: np.ndarray
    downsample: int = 1

    @classmethod
    def init(cls, feat_dim: int, hidden: int, out_dim: int, downsample: int = 1, seed: int = 0):
        gen = stream(seed, 40)
        W1 = gen.normal((feat_dim, hidden)) * math.sqrt(2.0 / feat_dim)
        W2 = gen.normal((hidden, out_dim)) * math.sqrt(1.0 / hidden)
        return cls(W1, np.zeros(hidden), W2, np.zeros(out_dim), downsample)

    @classmethod
    def identity(cls, dim: int) -> "ToyEncoder":
        return cls(np.eye(dim), np.zeros(dim), np.eye(dim), np.zeros(dim), 1)

    @property
    def feat_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[1]

    def params(self) -> Dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


def group_frames(X: np.ndarray, mask: np.ndarray, k: int):
    """Average every k consecutive valid frames. X is (B, T, F), mask (B, T).

    Returns (grouped (B, G, F), group counts (B, G)); a group with no valid
    frames has count 0 and zero features.
    """
    B, T, F = X.shape
    G = -(-T // k)
    pad = G * k - T
    if pad:
        X = np.concatenate([X, np.zeros((B, pad, F))], axis=1)
        mask = np.concatenate([mask, np.zeros((B, pad), dtype=bool)], axis=1)
    m = mask.astype(np.float64)
    sums = (X * m[..., None]).reshape(B, G, k, F).sum(axis=2)
    counts = m.reshape(B, G, k).sum(axis=2)
    grouped = sums / np.maximum(counts, 1.0)[..., None]
    return grouped, counts


def _encode_batch(X, mask, enc: ToyEncoder):
    Xg, counts = group_frames(X, mask, enc.downsample)
    Z1 = Xg @ enc.W1 + enc.b1
    H = np.maximum(Z1, 0.0)
    Y = H @ enc.W2 + enc.b2
    return Xg, counts, Z1, H, Y


def encoder_forward(features, enc: ToyEncoder) -> FrameEmbeddings:
    """Group-average by the downsample factor, then layer1 -> ReLU -> layer2 per frame."""
    if isinstance(features, FrameEmbeddings):
        fe = features
    else:
        fe = FrameEmbeddings("features", np.asarray(features))
    if fe.n_frames < 1:
        raise MultitaskError("encoder input needs at least one frame")
    if fe.dim != enc.feat_dim:
        raise MultitaskError(f"feature dim {fe.dim} does not match encoder input {enc.feat_dim}")
    X = fe.frames.astype(np.float64)[None]
    _, counts, _, _, Y = _encode_batch(X, fe.valid_mask[None], enc)
    return FrameEmbeddings(fe.utt_id, Y[0], counts[0] > 0, fe.frame_rate_hz / enc.downsample)


def encode_records(records: Sequence[FrameEmbeddings], enc: ToyEncoder) -> List[FrameEmbeddings]:
    return [encoder_forward(r, enc) for r in records]


def encoded_pool(X, mask, enc: ToyEncoder):
    """Forward a padded batch to pooled embeddings, keeping the tape for backprop."""
    Xg, counts, Z1, H, Y = _encode_batch(X, mask, enc)
    gmask = (counts > 0).astype(np.float64)
    n_valid = gmask.sum(axis=1, keepdims=True)
    pooled = (Y * gmask[..., None]).sum(axis=1) / n_valid
    return pooled, (Xg, Z1, H, gmask, n_valid)


def encoded_pool_backward(d_pooled, tape, enc: ToyEncoder) -> Dict[str, np.ndarray]:
    Xg, Z1, H, gmask, n_valid = tape
    dY = gmask[..., None] * (d_pooled / n_valid)[:, None, :]
    dW2 = np.einsum("bgh,bgo->ho", H, dY)
    db2 = dY.sum(axis=(0, 1))
    dZ1 = (dY @ enc.W2.T) * (Z1 > 0)
    dW1 = np.einsum("bgf,bgh->fh", Xg, dZ1)
    db1 = dZ1.sum(axis=(0, 1))
    return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


# losses

def _check_unit(x, what: str, tol: float = 1e-4) -> None:
    norms = np.linalg.norm(np.atleast_2d(x), axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise MultitaskError(f"{what} must be L2-normalized")


def margin_softmax_batch(E, Wc, labels, margin: float = 0.2, scale: float = 30.0):
    """Additive angular margin CE, mean over the batch.

    E: (B, d) unit embeddings; Wc: (C, d) unit class vectors. Returns
    (loss, dE, dWc, logits).
    """
    if not 0.0 <= margin < math.pi / 2:
        raise MultitaskError("margin must lie in [0, pi/2)")
    if scale <= 0:
        raise MultitaskError("scale must be positive")
    E = np.asarray(E, dtype=np.float64)
    Wc = np.asarray(Wc, dtype=np.float64)
    _check_unit(E, "embedding")
    _check_unit(Wc, "class weight rows")
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(len(labels))
    cos = E @ Wc.T
    raw_true = cos[rows, labels]
    c_true = np.clip(raw_true, -1.0 + 1e-7, 1.0 - 1e-7)
    theta = np.arccos(c_true)
    logits = scale * cos
    logits[rows, labels] = scale * np.cos(theta + margin)
    loss, dlogits = batch_cross_entropy(logits, labels)
    dcos = scale * dlogits
    # the clipped target logit is flat, so no gradient flows where the clip is active
    dcos[rows, labels] *= np.where(c_true == raw_true, np.sin(theta + margin) / np.sin(theta), 0.0)
    return loss, dcos @ Wc, dcos.T @ E, logits


def margin_softmax_ce(embedding, class_weights, label: int, margin: float = 0.2,
                      scale: float = 30.0):
    """Single-example margin softmax. class_weights rows are the class vectors."""
    loss, dE, dW, _ = margin_softmax_batch(np.atleast_2d(embedding), class_weights,
                                           [label], margin, scale)
    return loss, {"embedding": dE[0], "class_weights": dW}


def ge2e_loss(groups: Sequence[np.ndarray], w: float = 10.0, b: float = -5.0):
    """Softmax GE2E with self-exclusive centroids.

    groups[k] is an (M_k, d) array of speaker k's embeddings. Returns
    (loss, grads) with grads["embeddings"] a list shaped like groups.
    """
    if len(groups) < 2:
        raise MultitaskError("GE2E needs at least two speakers")
    if any(len(g) < 2 for g in groups):
        raise MultitaskError("GE2E needs at least two utterances per speaker")
    w_eff = max(float(w), 1e-6)
    E = np.concatenate([np.asarray(g, dtype=np.float64) for g in groups])
    spk = np.concatenate([np.full(len(g), k) for k, g in enumerate(groups)])
    M = np.array([len(g) for g in groups], dtype=np.float64)
    N, K = len(E), len(groups)
    rows = np.arange(N)
    sums = np.stack([E[spk == k].sum(axis=0) for k in range(K)])
    cent = np.broadcast_to(sums / M[:, None], (N, K, E.shape[1])).copy()
    cent[rows, spk] = (sums[spk] - E) / (M[spk] - 1)[:, None]

    e_norm = np.linalg.norm(E, axis=1)
    c_norm = np.linalg.norm(cent, axis=2)
    Eu = E / e_norm[:, None]
    Cu = cent / c_norm[..., None]
    cos = (Eu[:, None, :] * Cu).sum(axis=2)
    S = w_eff * cos + b
    loss = float(-(log_softmax(S, axis=1)[rows, spk]).mean())

    dS = softmax(S, axis=1)
    dS[rows, spk] -= 1.0
    dS /= N
    dw = float((dS * cos).sum()) if w > 1e-6 else 0.0
    db = float(dS.sum())
    dcos = w_eff * dS
    dE = ((dcos[..., None] * (Cu - cos[..., None] * Eu[:, None, :])).sum(axis=1)
          / e_norm[:, None])
    dcent = dcos[..., None] * (Eu[:, None, :] - cos[..., None] * Cu) / c_norm[..., None]
    # route centroid grads back to member embeddings
    denom = np.broadcast_to(M[None, :], (N, K)).copy()
    denom[rows, spk] = M[spk] - 1
    dsum = (dcent / denom[..., None]).sum(axis=0)  # (K, d)
    dE += dsum[spk]
    dE -= dcent[rows, spk] / (M[spk] - 1)[:, None]
    out, start = [], 0
    for g in groups:
        out.append(dE[start:start + len(g)])
        start += len(g)
    return loss, {"embeddings": out, "w": dw, "b": db}


# heads and pseudo labels

@dataclass
class TaskHeadSet:
    heads: Dict[str, ProbeHead]
    weights: Dict[str, float]

    def __post_init__(self):
        if not any(w > 0 for w in self.weights.values()):
            raise MultitaskError("at least one task weight must be positive")
        if any(w < 0 for w in self.weights.values()):
            raise MultitaskError("task weights must be non-negative")

    @property
    def active(self) -> List[str]:
        return [t for t in TASKS if self.weights.get(t, 0.0) > 0 and t in self.heads]


@dataclass
class PseudoLabelPolicy:
    confidence_threshold: float = 0.9
    refresh_every: int = 0  # steps; 0 = at the start of every epoch

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise MultitaskError("confidence_threshold must lie in [0, 1]")


def pseudo_label(fe: FrameEmbeddings, head: ProbeHead, policy: PseudoLabelPolicy) -> Optional[int]:
    from .probe import probe_forward

    p = softmax(probe_forward(fe, head))
    best = int(np.argmax(p))
    return best if p[best] >= policy.confidence_threshold else None


def _pseudo_from_logits(logits: np.ndarray, threshold: float) -> np.ndarray:
    p = softmax(logits, axis=1)
    best = np.argmax(p, axis=1)
    return np.where(p[np.arange(len(best)), best] >= threshold, best, -1)


@dataclass
class Batch:
    X: np.ndarray  # (B, T, F)
    mask: np.ndarray  # (B, T)
    labels: Dict[str, np.ndarray]  # task -> (B,) class index, -1 when missing
    speakers: Optional[np.ndarray] = None


def multitask_loss(batch: Batch, enc: ToyEncoder, heads: TaskHeadSet, allow_unlabeled: bool = False,
                   sid_loss: str = "ce", margin: float = 0.2, scale: float = 30.0,
                   ge2e_params: Optional[Dict[str, float]] = None):
    """Weighted sum of per-task mean CE on pooled encoder outputs.

    Returns (loss, grads, per_task_losses). grads keys: "enc.<name>",
    "head.<task>.W", "head.<task>.b", and "ge2e.w"/"ge2e.b" for GE2E.
    """
    pooled, tape = encoded_pool(batch.X, batch.mask, enc)
    d_pooled = np.zeros_like(pooled)
    grads: Dict[str, np.ndarray] = {}
    per_task: Dict[str, float] = {}
    total = 0.0
    for task in heads.active:
        lam = heads.weights[task]
        head = heads.heads[task]
        if task == "sid" and sid_loss == "ge2e":
            loss, dP, gw, gb = _ge2e_term(pooled, batch.speakers, ge2e_params or {})
            grads["ge2e.w"] = np.array([lam * gw])
            grads["ge2e.b"] = np.array([lam * gb])
            d_pooled += lam * dP
            per_task[task] = loss
            total += lam * loss
            continue
        y = batch.labels.get(task)
        if y is None or np.any(y < 0):
            if not allow_unlabeled:
                raise MultitaskError(f"unlabeled utterance for active task {task!r}")
        sel = np.flatnonzero(y >= 0) if y is not None else np.array([], dtype=np.int64)
        dW = np.zeros_like(head.W)
        db = np.zeros_like(head.b)
        if len(sel):
            P = pooled[sel]
            if task == "sid" and sid_loss == "margin":
                loss, dP, dW, db = _margin_term(P, head, y[sel], margin, scale)
            else:
                loss, g = batch_cross_entropy(P @ head.W + head.b, y[sel])
                dP = g @ head.W.T
                dW, db = P.T @ g, g.sum(axis=0)
            np.add.at(d_pooled, sel, lam * dP)
            per_task[task] = loss
            total += lam * loss
        grads[f"head.{task}.W"] = lam * dW
        grads[f"head.{task}.b"] = lam * db
    for name, g in encoded_pool_backward(d_pooled, tape, enc).items():
        grads[f"enc.{name}"] = g
    return total, grads, per_task


def _margin_term(P, head: ProbeHead, y, margin, scale):
    pn = np.linalg.norm(P, axis=1, keepdims=True)
    Pu = P / pn
    Wc = head.W.T
    wn = np.linalg.norm(Wc, axis=1, keepdims=True)
    Wu = Wc / wn
    loss, dPu, dWu, _ = margin_softmax_batch(Pu, Wu, y, margin, scale)
    dP = (dPu - Pu * (Pu * dPu).sum(1, keepdims=True)) / pn
    dWc = (dWu - Wu * (Wu * dWu).sum(1, keepdims=True)) / wn
    return loss, dP, dWc.T, np.zeros_like(head.b)


def _ge2e_term(pooled, speakers, params):
    if speakers is None:
        raise MultitaskError("GE2E needs speaker ids in the batch")
    groups_idx = [np.flatnonzero(speakers == s) for s in np.unique(speakers)]
    groups_idx = [g for g in groups_idx if len(g) >= 2]
    if len(groups_idx) < 2:
        return 0.0, np.zeros_like(pooled), 0.0, 0.0
    loss, g = ge2e_loss([pooled[i] for i in groups_idx], params.get("w", 10.0), params.get("b", -5.0))
    dP = np.zeros_like(pooled)
    for idx, de in zip(groups_idx, g["embeddings"]):
        dP[idx] += de
    return loss, dP, g["w"], g["b"]


# training

@dataclass
class MultitaskConfig:
    epochs: int = 40
    lr: float = 3e-3
    batch_size: int = 32
    hidden: int = 64
    out_dim: Optional[int] = None
    downsample: int = 1
    weights: Dict[str, float] = field(default_factory=lambda: {t: 1.0 for t in TASKS})
    sid_loss: str = "ce"
    margin: float = 0.2
    scale: float = 30.0
    ge2e_speakers: int = 8
    ge2e_utts: int = 4
    pseudo_labels: bool = False
    confidence_threshold: float = 0.9
    refresh_every: int = 0
    seed: int = 0

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["weights"] = dict(sorted(self.weights.items()))
        return out


@dataclass
class MultitaskResult:
    encoder: ToyEncoder
    heads: TaskHeadSet
    trace: List[Dict[str, float]]
    ge2e: Dict[str, float] = field(default_factory=dict)

    def save(self, path) -> None:
        tensors = {f"enc.{k}": v for k, v in self.encoder.params().items()}
        meta = {"downsample": self.encoder.downsample, "weights": self.heads.weights,
                "classes": {}, "ge2e": self.ge2e}
        for task, head in self.heads.heads.items():
            tensors[f"head.{task}.W"] = head.W
            tensors[f"head.{task}.b"] = head.b
            meta["classes"][task] = head.classes
        save_tensors(path, "multitask", tensors, meta)

    @classmethod
    def load(cls, path) -> "MultitaskResult":
        _, t, meta = load_tensors(path, expected_tag="multitask")
        enc = ToyEncoder(t["enc.W1"], t["enc.b1"], t["enc.W2"], t["enc.b2"], meta["downsample"])
        heads = {task: ProbeHead(t[f"head.{task}.W"], t[f"head.{task}.b"], task, classes)
                 for task, classes in meta["classes"].items()}
        return cls(enc, TaskHeadSet(heads, meta["weights"]), [], meta.get("ge2e", {}))


def load_encoder(path) -> ToyEncoder:
    return MultitaskResult.load(path).encoder


def _pad(records: Sequence[FrameEmbeddings]):
    T = max(r.n_frames for r in records)
    F = records[0].dim
    X = np.zeros((len(records), T, F))
    mask = np.zeros((len(records), T), dtype=bool)
    for i, r in enumerate(records):
        X[i, :r.n_frames] = r.frames
        mask[i, :r.n_frames] = r.valid_mask
    return X, mask


def _ge2e_batches(speakers: np.ndarray, n_spk: int, n_utt: int, gen) -> List[np.ndarray]:
    """Speaker-grouped batches: shuffled speakers, n_utt shuffled utterances each."""
    by_spk = {s: gen.permutation(len(idx)) for s, idx in
              ((s, np.flatnonzero(speakers == s)) for s in np.unique(speakers))}
    pools = {s: list(np.flatnonzero(speakers == s)[perm]) for s, perm in by_spk.items()}
    batches = []
    while True:
        ready = [s for s in sorted(pools) if len(pools[s]) >= n_utt]
        if len(ready) < 2:
            break
        order = gen.permutation(len(ready))
        chosen = [ready[i] for i in order[:n_spk]]
        batch = []
        for s in chosen:
            batch.extend(pools[s][:n_utt])
            pools[s] = pools[s][n_utt:]
        batches.append(np.array(batch))
    return batches


def multitask_train(records: Sequence[FrameEmbeddings], manifest: Sequence[UtteranceRecord],
                    cfg: MultitaskConfig) -> MultitaskResult:
    """Joint Adam over multitask_loss; optional pseudo-label refresh; seeded throughout."""
    by_id = index_archive(records)
    manifest = [m for m in manifest if m.utt_id in by_id]
    if not manifest:
        raise MultitaskError("no manifest entries match the archive")
    recs = [by_id[m.utt_id] for m in manifest]
    X, mask = _pad(recs)
    out_dim = cfg.out_dim or X.shape[2]
    enc = ToyEncoder.init(X.shape[2], cfg.hidden, out_dim, cfg.downsample, cfg.seed)

    weights = {t: float(cfg.weights.get(t, 0.0)) for t in TASKS}
    labels, heads = {}, {}
    init_gen = stream(cfg.seed, 41)
    for task in TASKS:
        if weights[task] <= 0:
            continue
        classes = label_space(task, manifest)
        idx = {c: i for i, c in enumerate(classes)}
        y = np.array([idx.get(m.label(task), -1) if m.label(task) is not None else -1
                      for m in manifest])
        if np.all(y < 0):
            log.warning("task %s has no labels; dropping it", task)
            weights[task] = 0.0
            continue
        labels[task] = y
        if task == "sid" and cfg.sid_loss == "margin":
            W = init_gen.normal((out_dim, len(classes))) / math.sqrt(out_dim)
            heads[task] = ProbeHead(W, np.zeros(len(classes)), task, classes)
        else:
            heads[task] = ProbeHead.zeros(out_dim, classes, task)
    head_set = TaskHeadSet(heads, weights)
    speakers = None
    if cfg.sid_loss == "ge2e":
        spk_names = sorted({m.speaker_id for m in manifest if m.speaker_id})
        spk_idx = {s: i for i, s in enumerate(spk_names)}
        speakers = np.array([spk_idx.get(m.speaker_id, -1) for m in manifest])

    params = {f"enc.{k}": v for k, v in enc.params().items()}
    for task in head_set.active:
        params[f"head.{task}.W"] = heads[task].W
        params[f"head.{task}.b"] = heads[task].b
    ge2e = {"w": 10.0, "b": -5.0}
    if cfg.sid_loss == "ge2e" and "sid" in head_set.active:
        params["ge2e.w"] = np.array([ge2e["w"]])
        params["ge2e.b"] = np.array([ge2e["b"]])

    current = {t: y.copy() for t, y in labels.items()}
    policy = PseudoLabelPolicy(cfg.confidence_threshold, cfg.refresh_every)
    state = AdamState()
    gen = stream(cfg.seed, 42)
    trace: List[Dict[str, float]] = []
    step = 0

    def unpack():
        e = ToyEncoder(params["enc.W1"], params["enc.b1"], params["enc.W2"], params["enc.b2"],
                       cfg.downsample)
        hs = {t: ProbeHead(params[f"head.{t}.W"], params[f"head.{t}.b"], t, heads[t].classes)
              if f"head.{t}.W" in params else heads[t] for t in heads}
        return e, TaskHeadSet(hs, weights)

    def refresh():
        e, hs = unpack()
        pooled, _ = encoded_pool(X, mask, e)
        for task, y in labels.items():
            missing = y < 0
            if not missing.any() or (task == "sid" and cfg.sid_loss == "ge2e"):
                continue
            h = hs.heads[task]
            guess = _pseudo_from_logits(pooled[missing] @ h.W + h.b, policy.confidence_threshold)
            current[task] = y.copy()
            current[task][missing] = guess

    for epoch in range(cfg.epochs):
        if cfg.pseudo_labels and step > 0 and policy.refresh_every <= 0:
            refresh()
        if cfg.sid_loss == "ge2e":
            batches = _ge2e_batches(speakers, cfg.ge2e_speakers, cfg.ge2e_utts, gen)
        else:
            order = gen.permutation(len(recs))
            batches = [order[s:s + cfg.batch_size] for s in range(0, len(recs), cfg.batch_size)]
        for idx in batches:
            e, hs = unpack()
            batch = Batch(X[idx], mask[idx], {t: y[idx] for t, y in current.items()},
                          speakers[idx] if speakers is not None else None)
            gp = {"w": float(params["ge2e.w"][0]), "b": float(params["ge2e.b"][0])} \
                if "ge2e.w" in params else None
            loss, grads, per_task = multitask_loss(
                batch, e, hs, allow_unlabeled=cfg.pseudo_labels, sid_loss=cfg.sid_loss,
                margin=cfg.margin, scale=cfg.scale, ge2e_params=gp)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} step {step}: per-task {per_task}")
            grads = {k: grads.get(k, np.zeros_like(v)) for k, v in params.items()}
            params = adam_step(params, grads, state, cfg.lr)
            if "ge2e.w" in params:
                params["ge2e.w"] = np.maximum(params["ge2e.w"], 1e-6)
            step += 1
            row = {"step": step, "loss": loss}
            row.update({t: per_task.get(t, float("nan")) for t in head_set.active})
            trace.append(row)
            if cfg.pseudo_labels and policy.refresh_every > 0 and step % policy.refresh_every == 0:
                refresh()

    e, hs = unpack()
    if "ge2e.w" in params:
        ge2e = {"w": float(params["ge2e.w"][0]), "b": float(params["ge2e.b"][0])}
    return MultitaskResult(e, hs, trace, ge2e if cfg.sid_loss == "ge2e" else {})


def write_trace_csv(trace: Sequence[Dict[str, float]], path) -> None:
    tasks = [t for t in TASKS if trace and t in trace[0]]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss"] + tasks)
        for row in trace:
            w.writerow([row["step"], repr(float(row["loss"]))] + [repr(float(row[t])) for t in tasks])


def training_accuracy(result: MultitaskResult, records, manifest) -> Dict[str, float]:
    """Accuracy (percent) of the trained task heads on their own training data."""
    by_id = index_archive(records)
    rows = [m for m in manifest if m.utt_id in by_id]
    X, mask = _pad([by_id[m.utt_id] for m in rows])
    pooled, _ = encoded_pool(X, mask, result.encoder)
    out = {}
    for task in result.heads.active:
        if task == "sid" and result.ge2e:
            continue  # GE2E leaves the sid head untrained
        head = result.heads.heads[task]
        idx = {c: i for i, c in enumerate(head.classes)}
        y = np.array([idx.get(m.label(task), -1) if m.label(task) else -1 for m in rows])
        keep = y >= 0
        pred = np.argmax(pooled[keep] @ head.W + head.b, axis=1)
        out[task] = 100.0 * float(np.mean(pred == y[keep]))
    return out


# adaptor

@dataclass
class Adaptor:
    W1: np.ndarray  # (factor * d) x hidden
    b1: np.ndarray
    W2: np.ndarray  # hidden x llm_dim
    b2: np.ndarray
    factor: int = 4
    mode: str = "stack"

    @classmethod
    def init(cls, dim: int, hidden: int, llm_dim: int, factor: int = 4, mode: str = "stack",
             seed: int = 0) -> "Adaptor":
        gen = stream(seed, 50)
        in_dim = dim * factor if mode == "stack" else dim
        # rounded to storage precision so a saved copy reproduces the outputs bit for bit
        f32 = lambda a: a.astype(np.float32).astype(np.float64)  # noqa: E731
        return cls(f32(gen.normal((in_dim, hidden)) * math.sqrt(2.0 / in_dim)), np.zeros(hidden),
                   f32(gen.normal((hidden, llm_dim)) * math.sqrt(1.0 / hidden)), np.zeros(llm_dim),
                   factor, mode)

    def save(self, path) -> None:
        save_tensors(path, "adaptor", {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2},
                     {"factor": self.factor, "mode": self.mode})

    @classmethod
    def load(cls, path) -> "Adaptor":
        _, t, meta = load_tensors(path, expected_tag="adaptor")
        return cls(t["W1"], t["b1"], t["W2"], t["b2"], meta["factor"], meta["mode"])


def stack_frames(H: np.ndarray, factor: int, mode: str = "stack") -> np.ndarray:
    """Group consecutive frames by `factor`; the last group is zero-padded."""
    T, d = H.shape
    G = -(-T // factor)
    padded = np.zeros((G * factor, d))
    padded[:T] = H
    if mode == "stack":
        return padded.reshape(G, factor * d)
    if mode == "average":
        counts = np.minimum(factor, T - np.arange(G) * factor)
        return padded.reshape(G, factor, d).sum(axis=1) / counts[:, None]
    raise MultitaskError(f"unknown downsample mode {mode!r}")


def adaptor_forward(fe, adaptor: Adaptor, return_tape: bool = False):
    H = fe.frames.astype(np.float64) if isinstance(fe, FrameEmbeddings) else np.asarray(fe, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] < 1:
        raise MultitaskError("adaptor input needs at least one frame")
    G = stack_frames(H, adaptor.factor, adaptor.mode)
    if G.shape[1] != adaptor.W1.shape[0]:
        raise MultitaskError(f"adaptor expects input width {adaptor.W1.shape[0]}, got {G.shape[1]}")
    Z = G @ adaptor.W1 + adaptor.b1
    out = np.maximum(Z, 0.0) @ adaptor.W2 + adaptor.b2
    return (out, (G, Z)) if return_tape else out


def adaptor_backward(d_out: np.ndarray, tape, adaptor: Adaptor) -> Dict[str, np.ndarray]:
    G, Z = tape
    A = np.maximum(Z, 0.0)
    dZ = (d_out @ adaptor.W2.T) * (Z > 0)
    return {"W1": G.T @ dZ, "b1": dZ.sum(axis=0), "W2": A.T @ d_out, "b2": d_out.sum(axis=0)}
