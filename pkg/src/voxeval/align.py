"""Contrastive voice-text alignment, retrieval and zero-shot classification.

Voice vectors enter already pooled (frozen voice encoder). The text side is a
toy encoder: a learnable vocabulary of token vectors, mean over tokens, then
an affine projection. Both sides are L2-normalized before the cosine matrix.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core_math import (AdamState, adam_step, l2_normalize, l2_normalize_backward,
                        log_softmax, pairwise_cosine, softmax)
from .data import load_tensors, save_tensors
from .errors import VoxEvalError
from .rng import stream

log = logging.getLogger(__name__)

LOG_TAU_MIN = math.log(1e-3)
LOG_TAU_MAX = math.log(100.0)
DEFAULT_LOG_TAU = math.log(0.07)

DEFAULT_TEMPLATES = (
    ("the", "speaker", "is", "a", "{}", "voice"),
    ("a", "{}", "voice"),
    ("the", "speaker", "sounding", "{}"),
    ("{}",),
    ("the", "{}", "speaker"),
    ("a", "voice", "sounding", "{}"),
    ("the", "voice", "is", "{}"),
    ("a", "speaker", "is", "{}"),
    ("the", "speaker", "voice", "{}"),
    ("{}", "voice", "sounding"),
)


class AlignError(VoxEvalError, ValueError):
    pass


@dataclass
class ProjectionHead:
    W: np.ndarray  # in_dim x proj_dim
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],) or self.W.shape[1] < 1:
            raise AlignError(f"bad projection shapes {self.W.shape} / {self.b.shape}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.W + self.b


@dataclass
class ToyTextEncoder:
    vocab: List[str]
    token_vectors: np.ndarray  # len(vocab) x embed_dim
    projection: ProjectionHead
    _index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.token_vectors = np.asarray(self.token_vectors, dtype=np.float64)
        if self.token_vectors.shape[0] != len(self.vocab):
            raise AlignError("vocabulary and token table disagree")
        if self.token_vectors.shape[1] != self.projection.W.shape[0]:
            raise AlignError("token dim does not match projection input")
        self._index = {t: i for i, t in enumerate(self.vocab)}

    def token_ids(self, tokens: Sequence[str]) -> np.ndarray:
        if len(tokens) == 0:
            raise AlignError("empty token list")
        try:
            return np.array([self._index[t] for t in tokens])
        except KeyError as exc:
            raise AlignError(f"unknown token {exc.args[0]!r}") from None

    def features(self, tokens: Sequence[str]) -> np.ndarray:
        """Unprojected text vector: the mean token vector."""
        return self.token_vectors[self.token_ids(tokens)].mean(axis=0)


def toy_text_encode(encoder: ToyTextEncoder, tokens: Sequence[str]) -> np.ndarray:
    return l2_normalize(encoder.projection(encoder.features(tokens)))


@dataclass
class ClapModel:
    voice_head: ProjectionHead
    text_encoder: ToyTextEncoder
    log_tau: float = DEFAULT_LOG_TAU

    @property
    def tau(self) -> float:
        return math.exp(min(max(self.log_tau, LOG_TAU_MIN), LOG_TAU_MAX))

    def embed_voice(self, voice: np.ndarray) -> np.ndarray:
        return l2_normalize(self.voice_head(voice))

    def embed_text(self, token_lists: Sequence[Sequence[str]]) -> np.ndarray:
        return np.stack([toy_text_encode(self.text_encoder, t) for t in token_lists])

    def save(self, path) -> None:
        enc = self.text_encoder
        save_tensors(path, "clap", {
            "voice_W": self.voice_head.W, "voice_b": self.voice_head.b,
            "text_W": enc.projection.W, "text_b": enc.projection.b,
            "tokens": enc.token_vectors, "log_tau": np.array([self.log_tau])},
            {"vocab": enc.vocab})

    @classmethod
    def load(cls, path) -> "ClapModel":
        _, t, meta = load_tensors(path, expected_tag="clap")
        enc = ToyTextEncoder(meta["vocab"], t["tokens"], ProjectionHead(t["text_W"], t["text_b"]))
        return cls(ProjectionHead(t["voice_W"], t["voice_b"]), enc, float(t["log_tau"][0]))


# loss

def _ce_rows(S: np.ndarray) -> np.ndarray:
    n = S.shape[0]
    return -log_softmax(S, axis=1)[np.arange(n), np.arange(n)]


def clap_loss(voice, text, voice_head: ProjectionHead, text_head: ProjectionHead,
              log_tau: float):
    """Symmetric InfoNCE over a paired batch (voice i <-> text i).

    Returns (loss, grads) with grads for voice_W, voice_b, text_W, text_b,
    log_tau and the two inputs.
    """
    voice = np.asarray(voice, dtype=np.float64)
    text = np.asarray(text, dtype=np.float64)
    n = voice.shape[0]
    if n < 1 or text.shape[0] != n:
        raise AlignError("paired batch needs N >= 1 voice/text rows of equal count")
    A = voice_head(voice)
    C = text_head(text)
    if np.any(np.linalg.norm(A, axis=1) == 0) or np.any(np.linalg.norm(C, axis=1) == 0):
        raise AlignError("zero-norm projected embedding")
    clamped = min(max(log_tau, LOG_TAU_MIN), LOG_TAU_MAX)
    tau = math.exp(clamped)
    cos = pairwise_cosine(A, C)
    S = cos / tau
    S_t = np.ascontiguousarray(S.T)
    row_ce = _ce_rows(S)
    col_ce = _ce_rows(S_t)
    loss = 0.5 * (row_ce.mean() + col_ce.mean())

    eye = np.eye(n)
    dS = 0.5 * ((softmax(S, axis=1) - eye) / n + ((softmax(S_t, axis=1) - eye) / n).T)
    dcos = dS / tau
    dlog_tau = float(-(dS * S).sum()) if clamped == log_tau else 0.0
    Au, Cu = l2_normalize(A), l2_normalize(C)
    dA = l2_normalize_backward(A, dcos @ Cu)
    dC = l2_normalize_backward(C, dcos.T @ Au)
    grads = {
        "voice_W": voice.T @ dA, "voice_b": dA.sum(axis=0),
        "text_W": text.T @ dC, "text_b": dC.sum(axis=0),
        "log_tau": dlog_tau,
        "voice": dA @ voice_head.W.T, "text": dC @ text_head.W.T,
    }
    return float(loss), grads


# training

@dataclass
class ClapConfig:
    epochs: int = 100
    lr: float = 1e-2
    batch_size: int = 64
    seed: int = 0
    proj_dim: int = 16
    embed_dim: int = 16
    init_std: float = 0.02
    log_tau: float = DEFAULT_LOG_TAU
    learn_tau: bool = True


def init_clap_model(voice_dim: int, vocab: Sequence[str], cfg: ClapConfig) -> ClapModel:
    """Small random projections around a shared anchor bias.

    Every projected embedding starts near the same unit direction, so the
    first similarity matrix is close to uniform and the loss starts near ln N.
    """
    gen = stream(cfg.seed, 20)
    anchor = np.zeros(cfg.proj_dim)
    anchor[0] = 1.0
    voice_head = ProjectionHead(gen.normal((voice_dim, cfg.proj_dim)) * cfg.init_std, anchor.copy())
    tokens = gen.normal((len(vocab), cfg.embed_dim))
    text_head = ProjectionHead(gen.normal((cfg.embed_dim, cfg.proj_dim)) * cfg.init_std, anchor.copy())
    return ClapModel(voice_head, ToyTextEncoder(list(vocab), tokens, text_head), cfg.log_tau)


def build_vocab(token_lists, extra: Sequence[str] = ()) -> List[str]:
    vocab = set(extra)
    for toks in token_lists:
        vocab.update(toks)
    return sorted(vocab)


def clap_train(voice, token_lists: Sequence[Sequence[str]], cfg: ClapConfig,
               model: Optional[ClapModel] = None, extra_tokens: Sequence[str] = (),
               callback: Optional[Callable[[int, ClapModel], None]] = None):
    """Adam over clap_loss with seeded shuffling; the last partial batch is kept.

    Returns (model, per-epoch mean loss trace).
    """
    voice = np.asarray(voice, dtype=np.float64)
    n = voice.shape[0]
    if n < 2 or len(token_lists) != n:
        raise AlignError("clap_train needs at least 2 aligned voice/text pairs")
    if model is None:
        model = init_clap_model(voice.shape[1], build_vocab(token_lists, extra_tokens), cfg)
    enc = model.text_encoder
    ids = [enc.token_ids(t) for t in token_lists]
    params = {"voice_W": model.voice_head.W, "voice_b": model.voice_head.b,
              "text_W": enc.projection.W, "text_b": enc.projection.b,
              "tokens": enc.token_vectors, "log_tau": np.array([model.log_tau])}
    state = AdamState()
    gen = stream(cfg.seed, 21)
    trace = []
    step = 0
    for _ in range(cfg.epochs):
        order = gen.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch_ids = [ids[i] for i in idx]
            text = np.stack([params["tokens"][t].mean(axis=0) for t in batch_ids])
            loss, g = clap_loss(voice[idx], text, ProjectionHead(params["voice_W"], params["voice_b"]),
                                ProjectionHead(params["text_W"], params["text_b"]),
                                float(params["log_tau"][0]))
            if not np.isfinite(loss):
                raise AlignError(f"non-finite CLAP loss at step {step}")
            d_tokens = np.zeros_like(params["tokens"])
            for row, t in enumerate(batch_ids):
                np.add.at(d_tokens, t, g["text"][row] / len(t))
            grads = {k: g[k] for k in ("voice_W", "voice_b", "text_W", "text_b")}
            grads["tokens"] = d_tokens
            grads["log_tau"] = np.array([g["log_tau"] if cfg.learn_tau else 0.0])
            params = adam_step(params, grads, state, cfg.lr)
            params["log_tau"] = np.clip(params["log_tau"], LOG_TAU_MIN, LOG_TAU_MAX)
            total += loss * len(idx)
            step += 1
            if callback is not None:
                callback(step, _assemble(params, enc.vocab))
        trace.append(total / n)
    return _assemble(params, enc.vocab), trace


def _assemble(params, vocab) -> ClapModel:
    enc = ToyTextEncoder(list(vocab), params["tokens"],
                         ProjectionHead(params["text_W"], params["text_b"]))
    return ClapModel(ProjectionHead(params["voice_W"], params["voice_b"]), enc,
                     float(params["log_tau"][0]))


# retrieval

def recall_at_k(sim: np.ndarray, ks=(1, 5, 10)) -> Tuple[Dict[int, float], Dict[int, float]]:
    """Recall@k (percent) with the true match on the diagonal.

    Rank of the true item = number of strictly better candidates plus equal
    candidates at a lower index.
    """
    sim = np.asarray(sim, dtype=np.float64)
    n = sim.shape[0]
    if n == 0 or sim.shape != (n, n):
        raise AlignError("similarity matrix must be square and non-empty")
    diag = np.diag(sim)
    lower = np.tril(np.ones((n, n), dtype=bool), -1)
    # rows: speech -> text; columns: text -> speech
    rank_rows = (sim > diag[:, None]).sum(1) + ((sim == diag[:, None]) & lower).sum(1)
    rank_cols = (sim > diag[None, :]).sum(0) + ((sim == diag[None, :]) & lower.T).sum(0)
    s2t = {k: 100.0 * float(np.mean(rank_rows < k)) for k in ks}
    t2s = {k: 100.0 * float(np.mean(rank_cols < k)) for k in ks}
    return s2t, t2s


def retrieval_eval(voice_emb, text_emb, pairing=None, ks=(1, 5, 10), subset_size: int = 568,
                   n_subsets: int = 5, seed: int = 0) -> Dict[str, Dict[int, float]]:
    """Mean recall@k over seeded random subsets, both directions."""
    voice_emb = np.asarray(voice_emb, dtype=np.float64)
    text_emb = np.asarray(text_emb, dtype=np.float64)
    n = voice_emb.shape[0]
    if n == 0 or text_emb.shape[0] == 0:
        raise AlignError("empty retrieval set")
    pairing = np.arange(n) if pairing is None else np.asarray(pairing)
    if subset_size > n:
        log.warning("subset_size %d exceeds population %d; clamping", subset_size, n)
        subset_size = n
    s2t_all, t2s_all = [], []
    for i in range(n_subsets):
        idx = np.sort(stream(seed, 30 + i).choice(n, subset_size))
        sim = pairwise_cosine(voice_emb[idx], text_emb[pairing[idx]])
        s2t, t2s = recall_at_k(sim, ks)
        s2t_all.append(s2t)
        t2s_all.append(t2s)
    return {"speech_to_text": {k: float(np.mean([r[k] for r in s2t_all])) for k in ks},
            "text_to_speech": {k: float(np.mean([r[k] for r in t2s_all])) for k in ks}}


# zero-shot classification

def expand_templates(classes: Sequence[str], patterns=DEFAULT_TEMPLATES) -> Dict[str, List[List[str]]]:
    return {c: [[c if tok == "{}" else tok for tok in p] for p in patterns] for c in classes}


def prompt_ensemble(encoder: ToyTextEncoder, templates: Dict[str, Sequence[Sequence[str]]]):
    """Per-class mean of normalized template encodings. Returns (classes, matrix)."""
    if not templates:
        raise AlignError("no classes in template set")
    counts = {len(v) for v in templates.values()}
    if 0 in counts:
        raise AlignError("every class needs at least one template")
    if len(counts) != 1:
        raise AlignError("classes must have the same number of templates")
    classes = list(templates)
    mat = np.stack([np.mean([toy_text_encode(encoder, t) for t in templates[c]], axis=0)
                    for c in classes])
    return classes, mat


def zsc_classify(v, class_embeddings) -> int:
    v = np.asarray(v, dtype=np.float64)
    if np.linalg.norm(v) == 0:
        raise AlignError("zero voice embedding")
    Z = np.asarray(class_embeddings, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise AlignError("need at least one class embedding")
    return int(np.argmax(pairwise_cosine(v[None, :], Z)[0]))


def zsc_predict(V, class_embeddings) -> np.ndarray:
    return np.argmax(pairwise_cosine(np.asarray(V, dtype=np.float64),
                                     np.asarray(class_embeddings, dtype=np.float64)), axis=1)
