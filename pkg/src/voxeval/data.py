"""Frame-embedding records, pooling, and the on-disk formats.

Embedding archive (``.audv``), all integers little-endian::

    b"AUDV" | version u32 (=1) | dim u32 | frame_rate f32 | count u64
    per entry:
        id_len u16 | utt_id utf-8 | n_frames u32
        mask: ceil(n_frames / 8) bytes, bit i of the stream = frame i (LSB first)
        frames: n_frames * dim f32, row-major

Tensor container (``.audh``) for heads, encoders and adaptors::

    b"AUDH" | version u32 (=1) | tag_len u16 | tag utf-8
    meta_len u32 | meta (JSON, sorted keys) | n_tensors u32
    per tensor: name_len u16 | name | ndim u32 | dims u32 * ndim | data f32
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import VoxEvalError

ARCHIVE_MAGIC = b"AUDV"
HEAD_MAGIC = b"AUDH"
FORMAT_VERSION = 1

AGE_BINS = ("teenager", "young-adult", "middle-aged-adult", "senior")
GENDERS = ("m", "f")
EMOTION_SETS = {
    "crema6": ("anger", "disgust", "fear", "happy", "neutral", "sad"),
    "ravdess8": ("neutral", "calm", "happy", "sad", "angry", "fearful", "disgust", "surprised"),
}
DEFAULT_EMOTION_SET = "crema6"


class ArchiveError(VoxEvalError):
    pass


class BadMagicError(ArchiveError):
    pass


class VersionMismatchError(ArchiveError):
    pass


class TruncatedArchiveError(ArchiveError):
    pass


class DimMismatchError(ArchiveError):
    pass


class ManifestError(VoxEvalError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class PoolingError(VoxEvalError, ValueError):
    pass


@dataclass
class FrameEmbeddings:
    utt_id: str
    frames: np.ndarray
    valid_mask: Optional[np.ndarray] = None
    frame_rate_hz: float = 25.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2:
            raise ValueError(f"{self.utt_id}: frames must be a T x dim matrix")
        if self.valid_mask is None:
            self.valid_mask = np.ones(self.frames.shape[0], dtype=bool)
        else:
            self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if self.valid_mask.shape != (self.frames.shape[0],):
            raise ValueError(f"{self.utt_id}: mask length does not match frame count")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError(f"{self.utt_id}: non-finite frame values")

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.frame_rate_hz

    def __eq__(self, other):
        if not isinstance(other, FrameEmbeddings):
            return NotImplemented
        return (self.utt_id == other.utt_id
                and self.frame_rate_hz == other.frame_rate_hz
                and self.frames.shape == other.frames.shape
                and np.array_equal(self.valid_mask, other.valid_mask)
                and self.frames.tobytes() == other.frames.tobytes())


@dataclass
class UtteranceRecord:
    utt_id: str
    speaker_id: Optional[str] = None
    age_bin: Optional[str] = None
    gender: Optional[str] = None
    emotion: Optional[str] = None
    emotion_set: Optional[str] = None
    caption_id: Optional[str] = None

    def label(self, task: str) -> Optional[str]:
        return {"sid": self.speaker_id, "age": self.age_bin,
                "gender": self.gender, "emotion": self.emotion}[task]

    def to_json(self) -> dict:
        out = {"utt_id": self.utt_id}
        for key, value in (("speaker", self.speaker_id), ("age", self.age_bin),
                           ("gender", self.gender), ("emotion", self.emotion),
                           ("emotion_set", self.emotion_set), ("caption_id", self.caption_id)):
            if value is not None:
                out[key] = value
        return out


TASKS = ("sid", "age", "gender", "emotion")


def mean_pool(fe: FrameEmbeddings) -> np.ndarray:
    """Mean over valid frames, accumulated in float64."""
    mask = fe.valid_mask
    count = int(mask.sum())
    if count == 0:
        raise PoolingError(f"{fe.utt_id}: no valid frames to pool")
    return fe.frames[mask].astype(np.float64).sum(axis=0) / count


def pool_archive(records: Sequence[FrameEmbeddings]) -> np.ndarray:
    if not records:
        return np.zeros((0, 0))
    return np.stack([mean_pool(r) for r in records])


# archive I/O

def _archive_bytes(records: Sequence[FrameEmbeddings], dim: int, frame_rate: float) -> bytes:
    parts = [ARCHIVE_MAGIC, struct.pack("<IIfQ", FORMAT_VERSION, dim, frame_rate, len(records))]
    for r in records:
        uid = r.utt_id.encode("utf-8")
        parts.append(struct.pack("<H", len(uid)))
        parts.append(uid)
        parts.append(struct.pack("<I", r.n_frames))
        parts.append(np.packbits(r.valid_mask, bitorder="little").tobytes())
        parts.append(np.ascontiguousarray(r.frames, dtype="<f4").tobytes())
    return b"".join(parts)


def write_archive(records: Sequence[FrameEmbeddings], path, dim: Optional[int] = None,
                  frame_rate: Optional[float] = None) -> None:
    records = list(records)
    if records:
        dims = {r.dim for r in records}
        if len(dims) != 1 or (dim is not None and dim not in dims):
            raise DimMismatchError(f"inconsistent dims in archive: {sorted(dims)}")
        dim = records[0].dim
        rates = {r.frame_rate_hz for r in records}
        if len(rates) != 1:
            raise ArchiveError(f"inconsistent frame rates: {sorted(rates)}")
        frame_rate = records[0].frame_rate_hz
    payload = _archive_bytes(records, dim or 0, 25.0 if frame_rate is None else frame_rate)
    Path(path).write_bytes(payload)


class _Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf = buf
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedArchiveError(f"{self.what}: truncated at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_archive(path, expected_dim: Optional[int] = None) -> List[FrameEmbeddings]:
    rd = _Reader(Path(path).read_bytes(), str(path))
    if rd.take(4) != ARCHIVE_MAGIC:
        raise BadMagicError(f"{path}: not an embedding archive")
    version, dim, frame_rate, count = rd.unpack("<IIfQ")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {FORMAT_VERSION}")
    if expected_dim is not None and count and dim != expected_dim:
        raise DimMismatchError(f"{path}: dim {dim}, expected {expected_dim}")
    out = []
    for _ in range(count):
        (n_id,) = rd.unpack("<H")
        utt_id = rd.take(n_id).decode("utf-8")
        (n_frames,) = rd.unpack("<I")
        mask_bits = np.frombuffer(rd.take((n_frames + 7) // 8), dtype=np.uint8)
        mask = np.unpackbits(mask_bits, count=n_frames, bitorder="little").astype(bool)
        frames = np.frombuffer(rd.take(4 * n_frames * dim), dtype="<f4").reshape(n_frames, dim)
        out.append(FrameEmbeddings(utt_id, frames.astype(np.float32), mask, float(frame_rate)))
    if rd.pos != len(rd.buf):
        raise ArchiveError(f"{path}: {len(rd.buf) - rd.pos} trailing bytes")
    return out


def index_archive(records: Sequence[FrameEmbeddings]) -> Dict[str, FrameEmbeddings]:
    return {r.utt_id: r for r in records}


# tensor container

def save_tensors(path, tag: str, tensors: Dict[str, np.ndarray], meta: Optional[dict] = None) -> None:
    tag_b = tag.encode("utf-8")
    meta_b = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [HEAD_MAGIC, struct.pack("<IH", FORMAT_VERSION, len(tag_b)), tag_b,
             struct.pack("<I", len(meta_b)), meta_b, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_tensors(path, expected_tag: Optional[str] = None):
    """Returns (tag, tensors, meta)."""
    rd = _Reader(Path(path).read_bytes(), str(path))
    if rd.take(4) != HEAD_MAGIC:
        raise BadMagicError(f"{path}: not a tensor container")
    version, n_tag = rd.unpack("<IH")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {FORMAT_VERSION}")
    tag = rd.take(n_tag).decode("utf-8")
    if expected_tag is not None and tag != expected_tag:
        raise ArchiveError(f"{path}: holds {tag!r}, expected {expected_tag!r}")
    (n_meta,) = rd.unpack("<I")
    meta = json.loads(rd.take(n_meta).decode("utf-8"))
    (n_tensors,) = rd.unpack("<I")
    tensors = {}
    for _ in range(n_tensors):
        (n_name,) = rd.unpack("<H")
        name = rd.take(n_name).decode("utf-8")
        (ndim,) = rd.unpack("<I")
        shape = rd.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(rd.take(4 * size), dtype="<f4").reshape(shape)
        tensors[name] = data.astype(np.float64)
    return tag, tensors, meta


# manifest

def _check_label(line: int, key: str, value, allowed) -> None:
    if value is not None and value not in allowed:
        raise ManifestError(line, f"unknown {key} label {value!r}")


def parse_manifest_lines(lines) -> List[UtteranceRecord]:
    records, seen = [], {}
    for lineno, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ManifestError(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or not isinstance(obj.get("utt_id"), str):
            raise ManifestError(lineno, "missing utt_id")
        unknown = set(obj) - {"utt_id", "speaker", "age", "gender", "emotion", "emotion_set", "caption_id"}
        if unknown:
            raise ManifestError(lineno, f"unknown keys {sorted(unknown)}")
        uid = obj["utt_id"]
        if uid in seen:
            raise ManifestError(lineno, f"duplicate utt_id {uid!r} (first on line {seen[uid]})")
        seen[uid] = lineno
        _check_label(lineno, "age", obj.get("age"), AGE_BINS)
        _check_label(lineno, "gender", obj.get("gender"), GENDERS)
        emo_set = obj.get("emotion_set")
        if emo_set is not None and emo_set not in EMOTION_SETS:
            raise ManifestError(lineno, f"unknown emotion_set {emo_set!r}")
        if obj.get("emotion") is not None:
            emo_set = emo_set or DEFAULT_EMOTION_SET
            _check_label(lineno, "emotion", obj["emotion"], EMOTION_SETS[emo_set])
        records.append(UtteranceRecord(
            utt_id=uid, speaker_id=obj.get("speaker"), age_bin=obj.get("age"),
            gender=obj.get("gender"), emotion=obj.get("emotion"), emotion_set=emo_set,
            caption_id=obj.get("caption_id")))
    return records


def load_manifest(path) -> List[UtteranceRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest_lines(fh)


def write_manifest(records: Sequence[UtteranceRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def label_space(task: str, records: Sequence[UtteranceRecord]) -> List[str]:
    """Class names for a task: fixed vocabularies, or sorted speakers for SID."""
    if task == "age":
        return list(AGE_BINS)
    if task == "gender":
        return list(GENDERS)
    if task == "emotion":
        sets = {r.emotion_set or DEFAULT_EMOTION_SET for r in records if r.emotion is not None}
        if len(sets) > 1:
            raise VoxEvalError(f"mixed emotion label sets: {sorted(sets)}")
        return list(EMOTION_SETS[sets.pop() if sets else DEFAULT_EMOTION_SET])
    if task == "sid":
        return sorted({r.speaker_id for r in records if r.speaker_id is not None})
    raise VoxEvalError(f"unknown task {task!r}")
