"""Seeded Gaussian-cluster corpora with known speaker and attribute structure.

Each utterance of speaker s is drawn frame-wise as

    centroid[s] * speaker_scale + offset[age] + offset[gender] + offset[emotion] + noise

where centroids are unit vectors and noise is i.i.d. N(0, noise_sigma^2).
Random streams (see ``rng.stream``): 0 = speaker centroids, 1 = attribute
offsets, 2 = utterance noise, 3 = trial pairing, 4 = diarization sessions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .data import (AGE_BINS, EMOTION_SETS, GENDERS, FrameEmbeddings, UtteranceRecord,
                   write_archive, write_manifest)
from .errors import VoxEvalError
from .rng import stream


class SynthConfigError(VoxEvalError, ValueError):
    pass


@dataclass
class SynthConfig:
    n_speakers: int = 20
    utts_per_speaker: int = 50
    dim: int = 16
    frames_per_utt: int = 20
    speaker_scale: float = 3.0
    attribute_scale: float = 1.0
    noise_sigma: float = 0.5
    seed: int = 0
    frame_rate_hz: float = 25.0
    emotion_set: str = "crema6"
    caption_speaker: bool = True
    # attribute -> class -> offset vector; generated from the seed when None
    attribute_offsets: Optional[Dict[str, Dict[str, np.ndarray]]] = None

    def validate(self) -> None:
        if self.n_speakers < 1 or self.utts_per_speaker < 1:
            raise SynthConfigError("need at least one speaker and one utterance per speaker")
        if self.dim < 1 or self.frames_per_utt < 1:
            raise SynthConfigError("dim and frames_per_utt must be positive")
        if self.noise_sigma < 0:
            raise SynthConfigError("noise_sigma must be >= 0")
        if self.emotion_set not in EMOTION_SETS:
            raise SynthConfigError(f"unknown emotion set {self.emotion_set!r}")
        if self.attribute_offsets is not None:
            for attr, table in self.attribute_offsets.items():
                for cls, vec in table.items():
                    if np.shape(vec) != (self.dim,):
                        raise SynthConfigError(f"offset {attr}/{cls} has wrong dim")

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "n_speakers", "utts_per_speaker", "dim", "frames_per_utt", "speaker_scale",
            "attribute_scale", "noise_sigma", "seed", "frame_rate_hz", "emotion_set",
            "caption_speaker")}
        out["custom_offsets"] = self.attribute_offsets is not None
        return out


@dataclass
class SpeakerModel:
    centroids: np.ndarray
    offsets: Dict[str, Dict[str, np.ndarray]]
    speaker_ids: List[str]
    ages: List[str]
    genders: List[str]

    def speaker_base(self, s: int, scale: float) -> np.ndarray:
        return (self.centroids[s] * scale + self.offsets["age"][self.ages[s]]
                + self.offsets["gender"][self.genders[s]])


@dataclass
class SynthCorpus:
    config: SynthConfig
    records: List[FrameEmbeddings]
    manifest: List[UtteranceRecord]
    trials: List["Trial"]
    captions: List[dict]
    model: SpeakerModel = field(repr=False)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def speaker_model(cfg: SynthConfig) -> SpeakerModel:
    cfg.validate()
    centroids = _unit_rows(stream(cfg.seed, 0).normal((cfg.n_speakers, cfg.dim)))
    if cfg.attribute_offsets is not None:
        offsets = {a: {c: np.asarray(v, dtype=np.float64) for c, v in t.items()}
                   for a, t in cfg.attribute_offsets.items()}
    else:
        gen = stream(cfg.seed, 1)
        offsets = {}
        for attr, classes in (("age", AGE_BINS), ("gender", GENDERS),
                              ("emotion", EMOTION_SETS[cfg.emotion_set])):
            vecs = _unit_rows(gen.normal((len(classes), cfg.dim))) * cfg.attribute_scale
            offsets[attr] = dict(zip(classes, vecs))
    for attr in ("age", "gender", "emotion"):
        offsets.setdefault(attr, {})
    speaker_ids = [f"spk{s:03d}" for s in range(cfg.n_speakers)]
    # round-robin per speaker; gender cycles on s // 4 so it is not tied to age
    ages = [AGE_BINS[s % len(AGE_BINS)] for s in range(cfg.n_speakers)]
    genders = [GENDERS[(s // len(AGE_BINS)) % len(GENDERS)] for s in range(cfg.n_speakers)]
    return SpeakerModel(centroids, offsets, speaker_ids, ages, genders)


def caption_tokens(speaker_id: Optional[str], age: str, gender: str, emotion: str) -> List[str]:
    """Deterministic caption naming the attribute classes (and the speaker, if given)."""
    who = ["the", "speaker", speaker_id] if speaker_id else ["the", "speaker"]
    return who + ["is", "a", age, gender, "voice", "sounding", emotion]


def generate_corpus(cfg: SynthConfig) -> SynthCorpus:
    from .speaker_eval import Trial

    model = speaker_model(cfg)
    emotions = EMOTION_SETS[cfg.emotion_set]
    zero = np.zeros(cfg.dim)
    noise_gen = stream(cfg.seed, 2)
    records, manifest, captions = [], [], []
    for s in range(cfg.n_speakers):
        base = model.speaker_base(s, cfg.speaker_scale)
        for u in range(cfg.utts_per_speaker):
            emotion = emotions[(s + u) % len(emotions)]
            mean = base + model.offsets["emotion"].get(emotion, zero)
            noise = noise_gen.normal((cfg.frames_per_utt, cfg.dim)) * cfg.noise_sigma
            utt_id = f"{model.speaker_ids[s]}-utt{u:03d}"
            cap_id = f"cap-{utt_id}"
            records.append(FrameEmbeddings(utt_id, mean[None, :] + noise,
                                           frame_rate_hz=cfg.frame_rate_hz))
            manifest.append(UtteranceRecord(utt_id, model.speaker_ids[s], model.ages[s],
                                            model.genders[s], emotion, cfg.emotion_set, cap_id))
            captions.append({"caption_id": cap_id, "utt_id": utt_id,
                             "tokens": caption_tokens(model.speaker_ids[s] if cfg.caption_speaker else None,
                                                      model.ages[s],
                                                      model.genders[s], emotion)})

    # one target and one non-target trial per utterance
    pair_gen = stream(cfg.seed, 3)
    trials = []
    U = cfg.utts_per_speaker
    for s in range(cfg.n_speakers):
        for u in range(U):
            enroll = f"{model.speaker_ids[s]}-utt{u:03d}"
            trials.append(Trial(enroll, f"{model.speaker_ids[s]}-utt{(u + 1) % U:03d}", True))
            if cfg.n_speakers > 1:
                other = int(pair_gen.integers(cfg.n_speakers - 1, 1)[0])
                other += other >= s
                ou = int(pair_gen.integers(U, 1)[0])
                trials.append(Trial(enroll, f"{model.speaker_ids[other]}-utt{ou:03d}", False))
    return SynthCorpus(cfg, records, manifest, trials, captions, model)


def generate_diar_sessions(cfg: SynthConfig, n_sessions: int, speakers_per_session: int,
                           seg_len_range: Tuple[float, float], segments_per_session: int = 4):
    """Alternating-speaker sessions with exact reference segments.

    Segment durations are drawn uniformly from seg_len_range and rounded to
    whole frames. Frames carry the speaker's centroid plus age/gender offsets
    (no emotion) plus noise. Returns (sessions, reference segments).
    """
    from .speaker_eval import DiarSegment

    if speakers_per_session < 1 or speakers_per_session > cfg.n_speakers:
        raise SynthConfigError("speakers_per_session must be in 1..n_speakers")
    lo, hi = seg_len_range
    if hi < lo:
        raise SynthConfigError("seg_len_range must be (low, high) with low <= high")
    if lo * cfg.frame_rate_hz < 1.0:
        raise SynthConfigError("segment length shorter than one frame")
    model = speaker_model(cfg)
    gen = stream(cfg.seed, 4)
    sessions, refs = [], []
    fr = cfg.frame_rate_hz
    for n in range(n_sessions):
        sid = f"sess{n:03d}"
        chosen = sorted(int(i) for i in gen.choice(cfg.n_speakers, speakers_per_session))
        lengths = lo + (hi - lo) * gen.uniform(segments_per_session)
        blocks, start = [], 0
        for i, sec in enumerate(lengths):
            n_frames = max(1, int(math.floor(sec * fr + 0.5)))
            spk = chosen[i % speakers_per_session]
            base = model.speaker_base(spk, cfg.speaker_scale)
            blocks.append(base[None, :] + gen.normal((n_frames, cfg.dim)) * cfg.noise_sigma)
            seg = DiarSegment(sid, start / fr, (start + n_frames) / fr, model.speaker_ids[spk])
            if refs and refs[-1].session_id == sid and refs[-1].speaker == seg.speaker:
                refs[-1] = DiarSegment(sid, refs[-1].start_s, seg.end_s, seg.speaker)
            else:
                refs.append(seg)
            start += n_frames
        sessions.append(FrameEmbeddings(sid, np.concatenate(blocks), frame_rate_hz=fr))
    return sessions, refs


def write_corpus(corpus: SynthCorpus, out_dir) -> Dict[str, Path]:
    from .speaker_eval import write_trials

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"archive": out / "archive.audv", "manifest": out / "manifest.jsonl",
             "trials": out / "trials.txt", "captions": out / "captions.jsonl",
             "config": out / "synth_config.json"}
    write_archive(corpus.records, paths["archive"])
    write_manifest(corpus.manifest, paths["manifest"])
    write_trials(corpus.trials, paths["trials"])
    write_captions(corpus.captions, paths["captions"])
    paths["config"].write_text(json.dumps(corpus.config.to_json(), sort_keys=True, indent=2) + "\n")
    return paths


def write_captions(captions, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in captions:
            fh.write(json.dumps({"caption_id": c["caption_id"], "utt_id": c["utt_id"],
                                 "tokens": list(c["tokens"])}, sort_keys=True) + "\n")


def read_captions(path) -> List[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if not {"caption_id", "utt_id", "tokens"} <= set(obj):
                raise VoxEvalError(f"{path}: line {lineno}: caption needs caption_id, utt_id, tokens")
            out.append(obj)
    return out
