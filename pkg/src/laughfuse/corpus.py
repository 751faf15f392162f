"""Corpus I/O: PCM WAV audio, grayscale frame directories, manifests, and the
synthetic laughter corpus used in place of licensed recordings."""

from __future__ import annotations

import json
import math
import os
import re
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST_KEYS = ("id", "audio_path", "frames_dir", "frame_rate_hz", "label", "split")
SPLITS = ("train", "test")

_FRAME_RE = re.compile(r"^frame_(\d{6})\.(pgm|png)$")


class CorpusError(Exception):
    pass


class WavError(CorpusError):
    pass


class NotAWavError(WavError):
    pass


class UnsupportedEncodingError(WavError):
    pass


class TruncatedDataError(WavError):
    pass


class FrameSequenceError(CorpusError):
    pass


class MissingFrameError(FrameSequenceError):
    pass


class FrameDimensionError(FrameSequenceError):
    pass


class FrameReadError(FrameSequenceError):
    pass


class ManifestError(CorpusError):
    pass


class DuplicateIdError(ManifestError):
    pass


class UnknownSplitError(ManifestError):
    pass


class LabelError(ManifestError):
    pass


class MissingFieldError(ManifestError):
    pass


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AudioClip:
    sample_rate_hz: int
    samples: np.ndarray

    def __post_init__(self):
        if int(self.sample_rate_hz) < 8000:
            raise ValueError(f"sample rate {self.sample_rate_hz} Hz below 8000")
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size < 1:
            raise ValueError("audio clip needs at least one mono sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("audio samples must be finite")
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))
        object.__setattr__(self, "samples", _readonly(s))

    @property
    def duration_s(self):
        return self.samples.size / self.sample_rate_hz

    def __eq__(self, other):
        if not isinstance(other, AudioClip):
            return NotImplemented
        return self.sample_rate_hz == other.sample_rate_hz and np.array_equal(self.samples, other.samples)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale image stored as an (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("gray image must be a non-empty 2-D array")
        if p.dtype != np.uint8:
            if np.any(p < 0) or np.any(p > 255):
                raise ValueError("gray pixels must lie in [0, 255]")
            p = p.astype(np.uint8)
        object.__setattr__(self, "pixels", _readonly(p))

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class FrameSequence:
    frames: tuple
    frame_rate_hz: float

    def __post_init__(self):
        if not self.frame_rate_hz > 0:
            raise ValueError("frame rate must be positive")
        frames = tuple(self.frames)
        if frames:
            shape = frames[0].pixels.shape
            for i, f in enumerate(frames):
                if f.pixels.shape != shape:
                    raise FrameDimensionError(
                        f"frame {i} is {f.width}x{f.height}, expected {shape[1]}x{shape[0]}"
                    )
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "frame_rate_hz", float(self.frame_rate_hz))

    def __len__(self):
        return len(self.frames)

    def timestamp(self, i):
        return i / self.frame_rate_hz


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    audio_path: str
    frames_dir: str
    frame_rate_hz: float
    label: int
    split: str


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def split(self, name):
        return [e for e in self.entries if e.split == name]


# ---------------------------------------------------------------- WAV


def read_wav(path) -> AudioClip:
    """Read a 16-bit PCM WAV (mono or stereo) as mono floats in [-1, 1)."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotAWavError(f"{path}: missing RIFF/WAVE header")

    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + 16 > len(data):
                raise NotAWavError(f"{path}: short fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", data, body)
        elif cid == b"data":
            if fmt is None:
                raise NotAWavError(f"{path}: data chunk before fmt chunk")
            return _decode_pcm(path, fmt, data, body, size)
        pos = body + size + (size & 1)

    if fmt is None:
        raise NotAWavError(f"{path}: no fmt chunk")
    raise TruncatedDataError(f"{path}: no data chunk")


def _decode_pcm(path, fmt, data, start, size):
    audio_format, channels, rate, _, block_align, bits = fmt
    if audio_format != 1:
        raise UnsupportedEncodingError(f"{path}: format code {audio_format}, only PCM (1) supported")
    if bits != 16:
        raise UnsupportedEncodingError(f"{path}: {bits}-bit samples, only 16-bit supported")
    if channels not in (1, 2):
        raise UnsupportedEncodingError(f"{path}: {channels} channels, only mono/stereo supported")
    if start + size > len(data):
        raise TruncatedDataError(f"{path}: data chunk declares {size} bytes, {len(data) - start} present")
    frame_bytes = 2 * channels
    if size % frame_bytes or size == 0:
        raise TruncatedDataError(f"{path}: data chunk of {size} bytes is not whole {channels}-channel frames")
    pcm = np.frombuffer(data, dtype="<i2", count=size // 2, offset=start).astype(np.int64)
    if channels == 2:
        pcm = pcm.reshape(-1, 2)
        samples = (pcm[:, 0] + pcm[:, 1]) / 65536.0
    else:
        samples = pcm / 32768.0
    return AudioClip(rate, samples)


def write_wav(path, samples, sample_rate_hz):
    """Write mono float samples as 16-bit PCM (scaled by 32768, clipped)."""
    pcm = np.clip(np.floor(np.asarray(samples, dtype=np.float64) * 32768.0 + 0.5), -32768, 32767)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate_hz))
        w.writeframes(pcm.astype("<i2").tobytes())


# ---------------------------------------------------------------- frames


def _pgm_tokens(data, count):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> GrayImage:
    data = Path(path).read_bytes()
    try:
        (magic, w, h, maxval), offset = _pgm_tokens(data, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise FrameReadError(f"{path}: bad PGM header ({exc})") from None
    if magic != b"P5" or maxval != 255:
        raise FrameReadError(f"{path}: only binary P5 PGM with maxval 255 supported")
    raster = data[offset : offset + w * h]
    if len(raster) != w * h:
        raise FrameReadError(f"{path}: PGM raster truncated")
    return GrayImage(np.frombuffer(raster, dtype=np.uint8).reshape(h, w))


def write_pgm(path, img: GrayImage):
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.width, img.height))
        fh.write(np.ascontiguousarray(img.pixels, dtype=np.uint8).tobytes())


def rgb_to_gray(rgb):
    """ITU-R 601 luma, rounded half up, computed in exact integer arithmetic."""
    rgb = np.asarray(rgb, dtype=np.int64)
    return ((299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000).astype(np.uint8)


def read_png(path) -> GrayImage:
    from PIL import Image

    try:
        with Image.open(path) as im:
            if im.mode in ("L", "LA", "1"):
                arr = np.asarray(im.convert("L"))
            else:
                arr = rgb_to_gray(np.asarray(im.convert("RGB")))
    except OSError as exc:
        raise FrameReadError(f"{path}: {exc}") from None
    return GrayImage(arr)


def load_frame_sequence(frames_dir, frame_rate_hz) -> FrameSequence:
    d = Path(frames_dir)
    if not d.is_dir():
        raise FrameReadError(f"{d}: not a directory")
    found = {}
    for p in d.iterdir():
        m = _FRAME_RE.match(p.name)
        if not m:
            continue
        idx = int(m.group(1))
        if idx in found:
            raise FrameReadError(f"{d}: frame index {idx} present in more than one format")
        found[idx] = p
    if not found:
        raise MissingFrameError(f"{d}: no frame_%06d.pgm/png files")
    for i in range(len(found)):
        if i not in found:
            raise MissingFrameError(f"{d}: frame index {i} missing")
    frames = []
    for i in range(len(found)):
        p = found[i]
        frames.append(read_pgm(p) if p.suffix == ".pgm" else read_png(p))
    return FrameSequence(tuple(frames), frame_rate_hz)


# ---------------------------------------------------------------- manifest


def _validate_entry(obj, i, base):
    if not isinstance(obj, dict):
        raise ManifestError(f"entry {i}: expected an object")
    missing = [k for k in MANIFEST_KEYS if k not in obj]
    if missing:
        raise MissingFieldError(f"entry {i}: missing field(s) {', '.join(missing)}")
    extra = sorted(set(obj) - set(MANIFEST_KEYS))
    if extra:
        raise ManifestError(f"entry {i}: unexpected field(s) {', '.join(extra)}")
    label = obj["label"]
    if isinstance(label, bool) or label not in (0, 1):
        raise LabelError(f"entry {i}: label {label!r} not in {{0, 1}}")
    if obj["split"] not in SPLITS:
        raise UnknownSplitError(f"entry {i}: unknown split {obj['split']!r}")
    fps = obj["frame_rate_hz"]
    if isinstance(fps, bool) or not isinstance(fps, (int, float)) or not fps > 0:
        raise ManifestError(f"entry {i}: frame_rate_hz must be a positive number")
    for k in ("id", "audio_path", "frames_dir"):
        if not isinstance(obj[k], str) or not obj[k]:
            raise ManifestError(f"entry {i}: {k} must be a non-empty string")
    return ManifestEntry(
        id=obj["id"],
        audio_path=os.path.normpath(os.path.join(base, obj["audio_path"])),
        frames_dir=os.path.normpath(os.path.join(base, obj["frames_dir"])),
        frame_rate_hz=float(fps),
        label=int(label),
        split=obj["split"],
    )


def manifest_from_json(items, base_dir=".") -> CorpusManifest:
    if not isinstance(items, list):
        raise ManifestError("manifest must be a JSON array")
    base = os.path.abspath(base_dir)
    entries, seen = [], set()
    for i, obj in enumerate(items):
        e = _validate_entry(obj, i, base)
        if e.id in seen:
            raise DuplicateIdError(f"entry {i}: duplicate id {e.id!r}")
        seen.add(e.id)
        entries.append(e)
    return CorpusManifest(tuple(entries))


def parse_manifest(path) -> CorpusManifest:
    path = Path(path)
    try:
        items = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    return manifest_from_json(items, path.parent)


def manifest_to_json(manifest: CorpusManifest, base_dir="."):
    base = os.path.abspath(base_dir)
    out = []
    for e in manifest:
        out.append(
            {
                "id": e.id,
                "audio_path": os.path.relpath(e.audio_path, base),
                "frames_dir": os.path.relpath(e.frames_dir, base),
                "frame_rate_hz": e.frame_rate_hz,
                "label": e.label,
                "split": e.split,
            }
        )
    return out


def write_manifest(manifest: CorpusManifest, path):
    path = Path(path)
    items = manifest_to_json(manifest, path.parent)
    path.write_text(json.dumps(items, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- synthetic corpus

SYNTH_SR = 16000
SYNTH_SECONDS = 2.0
SYNTH_FPS = 25.0
SYNTH_FRAME_W = 64
SYNTH_FRAME_H = 48
PATTERN_SIZE = 24
GATE_HZ = 5.0
_BACKGROUND = 128
_BG_NOISE = 6.0


def mouth_bar_pattern():
    """24x24 pattern mask: -1 outside the stripes, else the stripe intensity.

    Dark rows 4-9, light rows 10-13, dark rows 14-19, columns 4-19.
    """
    p = np.full((PATTERN_SIZE, PATTERN_SIZE), -1, dtype=np.int64)
    p[4:10, 4:20] = 50
    p[10:14, 4:20] = 210
    p[14:20, 4:20] = 50
    return p


def noise_frame(rng, width=SYNTH_FRAME_W, height=SYNTH_FRAME_H):
    f = _BACKGROUND + rng.normal(0.0, _BG_NOISE, size=(height, width))
    return np.clip(np.floor(f + 0.5), 0, 255).astype(np.uint8)


def stamp_pattern(frame, x0, y0, rng):
    """Return a copy of ``frame`` with the mouth-bar pattern at (x0, y0)."""
    out = frame.astype(np.float64)
    pat = mouth_bar_pattern()
    mask = pat >= 0
    region = out[y0 : y0 + PATTERN_SIZE, x0 : x0 + PATTERN_SIZE]
    region[mask] = pat[mask] + rng.normal(0.0, _BG_NOISE, size=int(mask.sum()))
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def _harmonic_tone(t, f0, phases):
    amps = (1.0, 0.5, 0.25)
    tone = sum(a * np.sin(2 * np.pi * (h + 1) * f0 * t + ph) for h, (a, ph) in enumerate(zip(amps, phases)))
    return tone / sum(amps)


def synth_audio(label, rng):
    n = int(SYNTH_SR * SYNTH_SECONDS)
    t = np.arange(n) / SYNTH_SR
    f0 = 220.0 * (1.0 + rng.uniform(-0.03, 0.03))
    phases = rng.uniform(0, 2 * np.pi, size=3)
    if label == 1:
        gate = 0.5 - 0.5 * np.cos(2 * np.pi * GATE_HZ * t)
        x = rng.uniform(0.4, 0.6) * gate * _harmonic_tone(t, f0, phases)
        x += rng.normal(0.0, 0.003, size=n)
    elif rng.random() < 0.5:
        x = rng.uniform(0.2, 0.3) * _harmonic_tone(t, f0, phases)
        x += rng.normal(0.0, 0.003, size=n)
    else:
        x = rng.normal(0.0, 0.08, size=n)
    return np.clip(x, -1.0, 32767 / 32768)


def synth_frames(label, rng):
    n = int(round(SYNTH_FPS * SYNTH_SECONDS))
    frames = [noise_frame(rng) for _ in range(n)]
    if label == 1:
        x0 = int(rng.integers(2, SYNTH_FRAME_W - PATTERN_SIZE - 1))
        y0 = int(rng.integers(2, SYNTH_FRAME_H - PATTERN_SIZE - 1))
        n_on = math.ceil(0.9 * n)
        on = np.sort(rng.choice(n, size=n_on, replace=False))
        for i in on:
            frames[i] = stamp_pattern(frames[i], x0, y0, rng)
    return frames


def _split_counts(k):
    n_train = int(math.floor(0.7 * k + 0.5))
    return min(max(n_train, 1), k - 1)


def generate_synthetic_corpus(out_dir, n_clips, seed) -> CorpusManifest:
    """Write a deterministic paired audio/frame corpus and its manifest.

    Half the clips are laughter-like: a 5 Hz amplitude-gated harmonic tone with
    the mouth-bar pattern stamped into 90% of frames. The rest are a steady
    tone or white noise over plain noise frames. Each class is split 70/30
    into train/test by seeded shuffle.
    """
    if n_clips < 4 or n_clips % 2:
        raise ValueError(f"n_clips must be an even number >= 4, got {n_clips}")
    out = Path(out_dir)
    try:
        (out / "audio").mkdir(parents=True, exist_ok=True)
        (out / "frames").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CorpusError(f"{out}: cannot create corpus directory ({exc})") from None

    rng = np.random.default_rng(seed)
    labels = np.array([1] * (n_clips // 2) + [0] * (n_clips // 2))
    rng.shuffle(labels)
    splits = [""] * n_clips
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        n_train = _split_counts(idx.size)
        for j, i in enumerate(idx):
            splits[i] = "train" if j < n_train else "test"

    entries = []
    for i in range(n_clips):
        cid = f"clip_{i:03d}"
        crng = np.random.default_rng([seed, i])
        label = int(labels[i])
        audio_path = out / "audio" / f"{cid}.wav"
        frames_dir = out / "frames" / cid
        try:
            write_wav(audio_path, synth_audio(label, crng), SYNTH_SR)
            frames_dir.mkdir(exist_ok=True)
            for k, fr in enumerate(synth_frames(label, crng)):
                write_pgm(frames_dir / f"frame_{k:06d}.pgm", GrayImage(fr))
        except OSError as exc:
            raise CorpusError(f"{out}: cannot write clip {cid} ({exc})") from None
        entries.append(
            ManifestEntry(
                id=cid,
                audio_path=os.path.abspath(audio_path),
                frames_dir=os.path.abspath(frames_dir),
                frame_rate_hz=SYNTH_FPS,
                label=label,
                split=splits[i],
            )
        )
    manifest = CorpusManifest(tuple(entries))
    write_manifest(manifest, out / "manifest.json")
    return manifest
