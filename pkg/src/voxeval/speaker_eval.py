"""Zero-shot speaker tasks: verification EER, diarization, DER and counting."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core_math import cosine, pairwise_cosine
from .data import FrameEmbeddings, mean_pool
from .errors import VoxEvalError

log = logging.getLogger(__name__)


class EvalError(VoxEvalError, ValueError):
    pass


@dataclass(frozen=True)
class Trial:
    enroll_utt: str
    test_utt: str
    is_target: bool


@dataclass(frozen=True)
class DiarSegment:
    session_id: str
    start_s: float
    end_s: float
    speaker: str

    def __post_init__(self):
        if self.start_s < 0 or self.end_s <= self.start_s:
            raise EvalError(f"bad segment [{self.start_s}, {self.end_s}) in {self.session_id}")


@dataclass
class ClusteringParams:
    stop_threshold: float = 0.3
    min_cluster_size: int = 3
    linkage: str = "average"
    distance: str = "cosine"

    def __post_init__(self):
        if not 0.0 < self.stop_threshold < 2.0:
            raise EvalError("stop_threshold must lie in (0, 2)")
        if self.linkage != "average" or self.distance != "cosine":
            raise EvalError("only average linkage on cosine distance is supported")
        if self.min_cluster_size < 1:
            raise EvalError("min_cluster_size must be >= 1")


# verification

def score_trials(records: Mapping[str, FrameEmbeddings], trials: Sequence[Trial],
                 threads: int = 1) -> List[Tuple[Trial, float]]:
    pooled: Dict[str, np.ndarray] = {}

    def emb(uid: str) -> np.ndarray:
        if uid not in pooled:
            if uid not in records:
                raise EvalError(f"utterance {uid!r} not found in archive")
            pooled[uid] = mean_pool(records[uid])
        return pooled[uid]

    for t in trials:  # resolve up front so workers only read
        emb(t.enroll_utt)
        emb(t.test_utt)

    def one(t: Trial) -> float:
        return cosine(pooled[t.enroll_utt], pooled[t.test_utt])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            scores = list(ex.map(one, trials))
    else:
        scores = [one(t) for t in trials]
    return list(zip(trials, scores))


def operating_points(scores, labels):
    """FAR/FRR counts at every distinct threshold, plus the reject-all point.

    Threshold t accepts scores >= t. Returns (thresholds, false_accepts,
    false_rejects, n_nontarget, n_target); the last threshold is +inf.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    tar = np.sort(scores[labels])
    non = np.sort(scores[~labels])
    thresholds = np.append(np.unique(scores), np.inf)
    fa = len(non) - np.searchsorted(non, thresholds, side="left")
    fr = np.searchsorted(tar, thresholds, side="left")
    return thresholds, fa, fr, len(non), len(tar)


def eer_from_counts(fa, fr, n_non: int, n_tar: int) -> Tuple[Fraction, int, Fraction]:
    """Locate the FAR/FRR crossing on a monotone sweep.

    Returns (eer, k, alpha): the crossing lies at fraction alpha of the way
    from operating point k-1 to k (alpha = 1 means exactly at k).
    """
    far = [Fraction(int(a), n_non) for a in fa]
    frr = [Fraction(int(r), n_tar) for r in fr]
    for k in range(len(far)):
        d1 = frr[k] - far[k]
        if d1 >= 0:
            if d1 == 0 or k == 0:
                return far[k] if d1 == 0 else (far[k] + frr[k]) / 2, k, Fraction(1)
            d0 = frr[k - 1] - far[k - 1]
            alpha = -d0 / (d1 - d0)
            return far[k - 1] + alpha * (far[k] - far[k - 1]), k, alpha
    raise EvalError("FAR/FRR never cross")  # unreachable: reject-all has FRR=1, FAR=0


def compute_eer(scores, labels) -> Tuple[float, float]:
    """Equal error rate (percent) and its threshold, interpolated at the crossing."""
    labels = np.asarray(labels, dtype=bool)
    if labels.all() or not labels.any():
        raise EvalError("EER needs at least one target and one non-target score")
    thresholds, fa, fr, n_non, n_tar = operating_points(scores, labels)
    eer, k, alpha = eer_from_counts(fa, fr, n_non, n_tar)
    t1 = thresholds[k]
    if k == 0 or alpha == 1:
        threshold = t1 if np.isfinite(t1) else thresholds[k - 1]
    else:
        t0 = thresholds[k - 1]
        threshold = t0 + float(alpha) * (t1 - t0) if np.isfinite(t1) else t0
    return float(eer * 100), float(threshold)


# clustering

def cluster_embeddings(embeddings, params: ClusteringParams) -> np.ndarray:
    """Average-linkage agglomerative clustering on cosine distance.

    Merges the closest cluster pair while its distance <= stop_threshold;
    ties go to the lowest (i, j) pair of cluster ids, where a cluster's id is
    its smallest member index. Labels are numbered by first member.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EvalError("need at least one embedding")
    n = x.shape[0]
    dist = 1.0 - pairwise_cosine(x, x)
    np.fill_diagonal(dist, np.inf)
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    members = {i: [i] for i in range(n)}
    while active.sum() > 1:
        sub = np.where(active[:, None] & active[None, :], dist, np.inf)
        flat = int(np.argmin(np.triu(sub, 1) + np.tril(np.full((n, n), np.inf))))
        i, j = divmod(flat, n)
        if not sub[i, j] <= params.stop_threshold:
            break
        merged = (size[i] * dist[i] + size[j] * dist[j]) / (size[i] + size[j])
        dist[i, :] = merged
        dist[:, i] = merged
        dist[i, i] = np.inf
        size[i] += size[j]
        active[j] = False
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        members[i].extend(members.pop(j))

    if params.min_cluster_size > 1:
        big = [c for c in members if len(members[c]) >= params.min_cluster_size]
        if big:
            for c in [c for c in members if len(members[c]) < params.min_cluster_size]:
                target = min(big, key=lambda b: (dist[c, b], b))
                members[target].extend(members.pop(c))

    labels = np.empty(n, dtype=np.int64)
    for new, c in enumerate(sorted(members, key=lambda c: min(members[c]))):
        labels[members[c]] = new
    return labels


def window_bounds(n_frames: int, win: int, hop: int) -> List[Tuple[int, int]]:
    if n_frames <= win:
        return [(0, n_frames)]
    starts = list(range(0, n_frames - win + 1, hop))
    if starts[-1] + win < n_frames:
        starts.append(n_frames - win)
    return [(s, s + win) for s in starts]


def diarize(session: FrameEmbeddings, window_s: float, hop_s: float,
            params: ClusteringParams) -> List[DiarSegment]:
    """Sliding-window pooling, clustering, and per-frame relabeling.

    Each frame takes the label of the window whose center is nearest to the
    frame center (lowest window on ties); runs of equal labels become segments.
    """
    fr = session.frame_rate_hz
    T = session.n_frames
    if T == 0:
        raise EvalError(f"{session.utt_id}: empty session")
    win = int(round(window_s * fr))
    hop = int(round(hop_s * fr))
    if win < 1 or hop < 1:
        raise EvalError("window and hop must span at least one frame")
    bounds = window_bounds(T, win, hop)
    embs = np.stack([
        mean_pool(FrameEmbeddings(session.utt_id, session.frames[a:b], frame_rate_hz=fr))
        for a, b in bounds])
    labels = cluster_embeddings(embs, params)
    centers = np.array([(a + b) / 2.0 for a, b in bounds])
    frame_centers = np.arange(T) + 0.5
    nearest = np.argmin(np.abs(frame_centers[:, None] - centers[None, :]), axis=1)
    frame_labels = labels[nearest]
    segs = []
    start = 0
    for t in range(1, T + 1):
        if t == T or frame_labels[t] != frame_labels[start]:
            segs.append(DiarSegment(session.utt_id, start / fr, t / fr,
                                    f"spk{int(frame_labels[start])}"))
            start = t
    return segs


# DER

def _activity(segs: Sequence[DiarSegment], mids: np.ndarray, speakers: List[str]) -> np.ndarray:
    act = np.zeros((len(speakers), len(mids)), dtype=bool)
    index = {s: i for i, s in enumerate(speakers)}
    for seg in segs:
        act[index[seg.speaker]] |= (mids > seg.start_s) & (mids < seg.end_s)
    return act


def compute_der(ref: Sequence[DiarSegment], hyp: Sequence[DiarSegment],
                collar_s: float = 0.0) -> Dict[str, float]:
    """DER with an optimal one-to-one speaker mapping.

    Time is cut at every segment edge (and collar edge); regions within
    +/- collar_s of a reference boundary are not scored. Returns percentages
    of scored reference speech time: der, miss, fa, confusion.
    """
    if not ref:
        raise EvalError("empty reference")
    if len({s.session_id for s in ref} | {s.session_id for s in hyp}) > 1:
        raise EvalError("compute_der scores one session at a time")
    edges = {0.0}
    ref_edges = set()
    for s in ref:
        ref_edges.update((s.start_s, s.end_s))
    for s in list(ref) + list(hyp):
        edges.update((s.start_s, s.end_s))
    if collar_s > 0:
        for e in ref_edges:
            edges.update((max(0.0, e - collar_s), e + collar_s))
    cuts = np.array(sorted(edges))
    mids = (cuts[:-1] + cuts[1:]) / 2.0
    durs = np.diff(cuts)
    scored = np.ones(len(mids), dtype=bool)
    if collar_s > 0:
        for e in ref_edges:
            scored &= ~((mids > e - collar_s) & (mids < e + collar_s))
    mids, durs = mids[scored], durs[scored]

    ref_spk = sorted({s.speaker for s in ref})
    hyp_spk = sorted({s.speaker for s in hyp})
    R = _activity(ref, mids, ref_spk)
    H = _activity(hyp, mids, hyp_spk)
    n_ref = R.sum(axis=0)
    n_hyp = H.sum(axis=0)
    total = float(np.dot(n_ref, durs))
    if total <= 0:
        raise EvalError("no scored reference speech")

    overlap = (R[:, None, :] & H[None, :, :]).astype(np.float64) @ durs
    n_correct = np.zeros(len(mids), dtype=np.int64)
    if ref_spk and hyp_spk:
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        n_correct = (R[rows] & H[cols]).sum(axis=0)
    # integer per-interval counts keep DER(ref, ref) exactly zero
    miss = float(np.dot(np.maximum(n_ref - n_hyp, 0), durs))
    fa = float(np.dot(np.maximum(n_hyp - n_ref, 0), durs))
    conf = float(np.dot(np.minimum(n_ref, n_hyp) - n_correct, durs))
    pct = lambda x: 100.0 * x / total  # noqa: E731
    return {"der": pct(miss + fa + conf), "miss": pct(miss), "fa": pct(fa),
            "confusion": pct(conf), "scored_time": total}


def counting_mae(ref_counts: Mapping[str, int], hyp_counts: Mapping[str, int]) -> float:
    if set(ref_counts) != set(hyp_counts):
        missing = sorted(set(ref_counts) ^ set(hyp_counts))
        raise EvalError(f"session sets differ: {missing}")
    if not ref_counts:
        raise EvalError("no sessions")
    return float(np.mean([abs(ref_counts[k] - hyp_counts[k]) for k in sorted(ref_counts)]))


def speaker_counts(segments: Sequence[DiarSegment]) -> Dict[str, int]:
    out: Dict[str, set] = {}
    for s in segments:
        out.setdefault(s.session_id, set()).add(s.speaker)
    return {k: len(v) for k, v in out.items()}


def group_by_session(segments: Sequence[DiarSegment]) -> Dict[str, List[DiarSegment]]:
    out: Dict[str, List[DiarSegment]] = {}
    for s in segments:
        out.setdefault(s.session_id, []).append(s)
    return out


# file formats

def write_trials(trials: Sequence[Trial], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in trials:
            fh.write(f"{int(t.is_target)} {t.enroll_utt} {t.test_utt}\n")


def read_trials(path) -> List[Trial]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3 or parts[0] not in ("0", "1"):
                raise EvalError(f"{path}: line {lineno}: expected '<0|1> <enroll> <test>'")
            out.append(Trial(parts[1], parts[2], parts[0] == "1"))
    return out


def write_scores(scored: Sequence[Tuple[Trial, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t, s in scored:
            fh.write(f"{s:.6f} {int(t.is_target)} {t.enroll_utt} {t.test_utt}\n")


def read_scores(path) -> Tuple[np.ndarray, np.ndarray]:
    scores, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2 or parts[1] not in ("0", "1"):
                raise EvalError(f"{path}: line {lineno}: expected '<score> <0|1> ...'")
            scores.append(float(parts[0]))
            labels.append(parts[1] == "1")
    return np.array(scores), np.array(labels, dtype=bool)


def write_rttm(segments: Sequence[DiarSegment], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in segments:
            fh.write(f"SPEAKER {s.session_id} 1 {s.start_s:.3f} {s.end_s - s.start_s:.3f} "
                     f"<NA> <NA> {s.speaker} <NA> <NA>\n")


def read_rttm(path) -> List[DiarSegment]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0] != "SPEAKER":
                continue
            if len(parts) < 8:
                raise EvalError(f"{path}: line {lineno}: short RTTM line")
            start, dur = float(parts[3]), float(parts[4])
            out.append(DiarSegment(parts[1], start, round(start + dur, 3), parts[7]))
    return out
