"""Early fusion of per-frame audio features with the video smile series."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .audio import AcousticFeatureVector, MfccMatrix

N_ACOUSTIC = 9  # 4 band ratios + centroid, rolloff, zcr, rms mean, rms std
N_SMILE = 2  # present flag, box count


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    T: int = 200
    alignment: str = "nearest"
    pad_value: float = 0.0
    channels: str = "fused"  # "fused" or "audio" (drops the smile channels)

    def __post_init__(self):
        if self.T < 1:
            raise FusionError("T must be >= 1")
        if self.alignment != "nearest":
            raise FusionError(f"unsupported alignment {self.alignment!r}")
        if self.channels not in ("fused", "audio"):
            raise FusionError(f"unknown channel set {self.channels!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return replace(cls(), **d)


@dataclass(frozen=True, eq=False)
class FusedSequence:
    steps: np.ndarray  # (n_steps, d)
    label: int | None
    clip_id: str

    @property
    def n_steps(self):
        return self.steps.shape[0]

    @property
    def d(self):
        return self.steps.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FusedSequence):
            return NotImplemented
        return (
            self.label == other.label
            and self.clip_id == other.clip_id
            and self.steps.shape == other.steps.shape
            and np.array_equal(self.steps, other.steps)
        )


def fused_dim(n_mfcc, channels="fused"):
    return n_mfcc + N_ACOUSTIC + (N_SMILE if channels == "fused" else 0)


def nearest_frame_index(times_s, frame_rate_hz, n_frames):
    """Video frame index minimizing |i/fps - t| for each t; ties go to the lower index."""
    t = np.asarray(times_s, dtype=np.float64)
    lo = np.clip(np.floor(t * frame_rate_hz).astype(np.int64), 0, n_frames - 1)
    hi = np.minimum(lo + 1, n_frames - 1)
    d_lo = np.abs(lo / frame_rate_hz - t)
    d_hi = np.abs(hi / frame_rate_hz - t)
    return np.where(d_hi < d_lo, hi, lo)


def _smile_table(smiles):
    frames = smiles.frames if hasattr(smiles, "frames") else smiles
    return np.array([[1.0 if f.present else 0.0, float(f.count)] for f in frames]).reshape(-1, N_SMILE)


def align_streams(mfcc: MfccMatrix, smiles, frame_rate_hz):
    """Per-audio-frame ``[present, count]`` taken from the nearest video frame."""
    table = _smile_table(smiles)
    if mfcc.n_frames == 0 or table.shape[0] == 0:
        raise FusionError("both streams must be non-empty")
    idx = nearest_frame_index(mfcc.frame_times_s, frame_rate_hz, table.shape[0])
    return table[idx]


def assemble_fused_sequence(mfcc: MfccMatrix, acoustics: AcousticFeatureVector, aligned, label, clip_id):
    aligned = np.asarray(aligned, dtype=np.float64)
    if aligned.shape != (mfcc.n_frames, N_SMILE):
        raise FusionError(f"aligned smile channels {aligned.shape} do not match {mfcc.n_frames} MFCC rows")
    n = mfcc.n_frames
    broadcast = np.broadcast_to(acoustics.as_array(), (n, N_ACOUSTIC))
    steps = np.concatenate([mfcc.coeffs, broadcast, aligned], axis=1)
    if not np.all(np.isfinite(steps)):
        raise FusionError(f"{clip_id}: non-finite fused features")
    return FusedSequence(steps, label, clip_id)


def fit_length(seq: FusedSequence, T, pad_value=0.0):
    """Center-crop or symmetrically pad (extra step at the end) to ``T`` steps."""
    if T < 1:
        raise FusionError("T must be >= 1")
    n = seq.n_steps
    if n == T:
        return seq
    if n > T:
        start = (n - T) // 2
        return replace(seq, steps=seq.steps[start : start + T].copy())
    left = (T - n) // 2
    out = np.full((T, seq.d), pad_value, dtype=np.float64)
    out[left : left + n] = seq.steps
    return replace(seq, steps=out)


def select_channels(seq: FusedSequence, channels):
    if channels == "fused":
        return seq
    if channels == "audio":
        return replace(seq, steps=seq.steps[:, : seq.d - N_SMILE].copy())
    raise FusionError(f"unknown channel set {channels!r}")


# ---------------------------------------------------------------- JSONL dataset


def to_record(seq: FusedSequence, split=None):
    rec = {"id": seq.clip_id, "label": seq.label}
    if split is not None:
        rec["split"] = split
    rec["steps"] = seq.steps.tolist()
    return rec


def from_record(rec):
    steps = np.asarray(rec["steps"], dtype=np.float64)
    if steps.ndim != 2:
        raise FusionError(f"{rec.get('id')}: steps must be a 2-D array")
    return FusedSequence(steps, rec.get("label"), rec["id"])


def write_fused_jsonl(path, items):
    """``items`` are ``(FusedSequence, split)`` pairs, written in the given order."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq, split in items:
            fh.write(json.dumps(to_record(seq, split), separators=(",", ":")) + "\n")


def read_fused_jsonl(path):
    """Return a list of ``(FusedSequence, split)``; split is None when absent."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            out.append((from_record(rec), rec.get("split")))
    return out
