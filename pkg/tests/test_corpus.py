import filecmp
import json
import struct
import wave
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from laughfuse.audio import MfccConfig, envelope_peaks
from laughfuse.corpus import (
    AudioClip,
    DuplicateIdError,
    FrameDimensionError,
    GrayImage,
    LabelError,
    ManifestError,
    MissingFieldError,
    MissingFrameError,
    NotAWavError,
    TruncatedDataError,
    UnknownSplitError,
    UnsupportedEncodingError,
    generate_synthetic_corpus,
    load_frame_sequence,
    manifest_from_json,
    manifest_to_json,
    mouth_bar_pattern,
    noise_frame,
    parse_manifest,
    read_wav,
    rgb_to_gray,
    stamp_pattern,
    write_manifest,
    write_pgm,
    write_wav,
)
from laughfuse.vision.detect import detect_multiscale


def _pcm_wav(path, pcm, channels=1, rate=16000):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(np.asarray(pcm, dtype="<i2").tobytes())


def _raw_wav(path, fmt_code=1, bits=16, channels=1, data=b"\x00\x00", declared=None):
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", fmt_code, channels, 16000, 16000 * block, block, bits)
    size = len(data) if declared is None else declared
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", size) + data
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


# ---------------------------------------------------------------- WAV


def test_read_wav_zero_samples(tmp_path):
    p = tmp_path / "z.wav"
    _pcm_wav(p, np.zeros(100))
    clip = read_wav(p)
    assert clip.sample_rate_hz == 16000
    assert clip == AudioClip(16000, np.zeros(100))


def test_read_wav_half_amplitude(tmp_path):
    p = tmp_path / "h.wav"
    _pcm_wav(p, [16384])
    assert read_wav(p).samples[0] == 0.5


def test_read_wav_stereo_mean(tmp_path):
    p = tmp_path / "s.wav"
    _pcm_wav(p, [1000, 3000], channels=2)
    clip = read_wav(p)
    assert clip.samples.tolist() == [2000 / 32768]


def test_read_wav_skips_unknown_chunks(tmp_path):
    p = tmp_path / "l.wav"
    fmt = struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16)
    body = b"WAVE" + b"LIST" + struct.pack("<I", 3) + b"abc\x00" + b"fmt " + struct.pack("<I", 16) + fmt
    body += b"data" + struct.pack("<I", 4) + struct.pack("<hh", -32768, 32767)
    p.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    clip = read_wav(p)
    assert clip.sample_rate_hz == 8000
    assert clip.samples.tolist() == [-1.0, 32767 / 32768]


def test_read_wav_errors_are_distinct(tmp_path):
    p = tmp_path / "x.wav"
    p.write_bytes(b"not a wav at all")
    with pytest.raises(NotAWavError):
        read_wav(p)
    _raw_wav(p, fmt_code=3, bits=32, data=b"\x00" * 4)
    with pytest.raises(UnsupportedEncodingError):
        read_wav(p)
    _raw_wav(p, bits=24, data=b"\x00" * 3)
    with pytest.raises(UnsupportedEncodingError):
        read_wav(p)
    _raw_wav(p, data=b"\x00" * 4, declared=400)
    with pytest.raises(TruncatedDataError):
        read_wav(p)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-32768, 32767), min_size=1, max_size=64))
def test_read_wav_roundtrip_range(tmp_path_factory, pcm):
    p = tmp_path_factory.mktemp("w") / "r.wav"
    _pcm_wav(p, pcm)
    s = read_wav(p).samples
    assert np.all(s >= -1.0) and np.all(s < 1.0)
    assert np.array_equal(s * 32768, np.array(pcm, dtype=float))
    write_wav(p, s, 16000)
    assert np.array_equal(read_wav(p).samples, s)


# ---------------------------------------------------------------- frames


def test_rgb_to_gray_examples():
    assert rgb_to_gray([255, 255, 255]) == 255
    assert rgb_to_gray([255, 0, 0]) == 76
    assert rgb_to_gray([0, 0, 0]) == 0


@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_rgb_to_gray_matches_rounded_float(r, g, b):
    exact = (299 * r + 587 * g + 114 * b) / 1000
    assert int(rgb_to_gray([r, g, b])) == int(np.floor(exact + 0.5))


def test_load_frame_sequence_pgm(tmp_path):
    for i in range(3):
        write_pgm(tmp_path / f"frame_{i:06d}.pgm", GrayImage(np.full((3, 3), i * 10, dtype=np.uint8)))
    seq = load_frame_sequence(tmp_path, 25.0)
    assert len(seq) == 3
    assert [int(f.pixels[0, 0]) for f in seq.frames] == [0, 10, 20]
    assert seq.timestamp(2) == 2 / 25.0


def test_load_frame_sequence_png_luma(tmp_path):
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 255, 255)
    rgb[0, 1] = (255, 0, 0)
    Image.fromarray(rgb, "RGB").save(tmp_path / "frame_000000.png")
    write_pgm(tmp_path / "frame_000001.pgm", GrayImage(np.zeros((2, 2), dtype=np.uint8)))
    seq = load_frame_sequence(tmp_path, 10.0)
    assert seq.frames[0].pixels.tolist() == [[255, 76], [0, 0]]


def test_load_frame_sequence_errors(tmp_path):
    write_pgm(tmp_path / "frame_000000.pgm", GrayImage(np.zeros((3, 3), dtype=np.uint8)))
    write_pgm(tmp_path / "frame_000002.pgm", GrayImage(np.zeros((3, 3), dtype=np.uint8)))
    with pytest.raises(MissingFrameError):
        load_frame_sequence(tmp_path, 25.0)
    write_pgm(tmp_path / "frame_000001.pgm", GrayImage(np.zeros((4, 3), dtype=np.uint8)))
    with pytest.raises(FrameDimensionError):
        load_frame_sequence(tmp_path, 25.0)


# ---------------------------------------------------------------- manifest


def _entry(i, split="train", label=0):
    return {
        "id": f"c{i}",
        "audio_path": f"audio/c{i}.wav",
        "frames_dir": f"frames/c{i}",
        "frame_rate_hz": 25.0,
        "label": label,
        "split": split,
    }


def test_parse_manifest_two_entries(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps([_entry(0), _entry(1, "test", 1)]))
    m = parse_manifest(p)
    assert len(m) == 2
    assert m.entries[0].audio_path == str(tmp_path / "audio" / "c0.wav")
    assert [e.id for e in m.split("test")] == ["c1"]


@pytest.mark.parametrize(
    "mutate, err",
    [
        (lambda es: es[1].update(split="dev"), UnknownSplitError),
        (lambda es: es[1].update(id="c0"), DuplicateIdError),
        (lambda es: es[1].update(label=2), LabelError),
        (lambda es: es[1].pop("frames_dir"), MissingFieldError),
        (lambda es: es[1].update(extra=1), ManifestError),
    ],
)
def test_manifest_errors(mutate, err):
    es = [_entry(0), _entry(1)]
    mutate(es)
    with pytest.raises(err):
        manifest_from_json(es, "/data")


@settings(max_examples=40)
@given(
    st.lists(
        st.tuples(st.sampled_from(["train", "test"]), st.integers(0, 1), st.floats(1.0, 120.0)),
        min_size=1,
        max_size=8,
    )
)
def test_manifest_roundtrip(rows):
    items = []
    for i, (split, label, fps) in enumerate(rows):
        e = _entry(i, split, label)
        e["frame_rate_hz"] = fps
        items.append(e)
    m = manifest_from_json(items, "/data/corpus")
    assert manifest_from_json(manifest_to_json(m, "/data/corpus"), "/data/corpus") == m


def test_write_manifest_roundtrip(tmp_path):
    m = manifest_from_json([_entry(0), _entry(1, "test", 1)], tmp_path)
    write_manifest(m, tmp_path / "m.json")
    assert parse_manifest(tmp_path / "m.json") == m


# ---------------------------------------------------------------- synthetic corpus


def test_synthetic_corpus_is_deterministic(tmp_path):
    a = generate_synthetic_corpus(tmp_path / "a", 20, 42)
    b = generate_synthetic_corpus(tmp_path / "b", 20, 42)
    assert len(a) == 20
    for ea, eb in zip(a, b):
        assert (ea.id, ea.label, ea.split) == (eb.id, eb.label, eb.split)
        assert filecmp.cmp(ea.audio_path, eb.audio_path, shallow=False)
        for fa in sorted(Path(ea.frames_dir).iterdir()):
            assert filecmp.cmp(fa, f"{eb.frames_dir}/{fa.name}", shallow=False)
    assert filecmp.cmp(tmp_path / "a" / "manifest.json", tmp_path / "b" / "manifest.json", shallow=False)
    c = generate_synthetic_corpus(tmp_path / "c", 20, 43)
    assert not filecmp.cmp(a.entries[0].audio_path, c.entries[0].audio_path, shallow=False)


def test_synthetic_corpus_layout(tmp_path):
    m = generate_synthetic_corpus(tmp_path, 20, 7)
    labels = [e.label for e in m]
    assert labels.count(1) == 10
    for cls in (0, 1):
        splits = [e.split for e in m if e.label == cls]
        assert splits.count("train") == 7 and splits.count("test") == 3
    assert parse_manifest(tmp_path / "manifest.json") == m


def test_synthetic_corpus_rejects_bad_counts(tmp_path):
    for n in (2, 3, 21):
        with pytest.raises(ValueError):
            generate_synthetic_corpus(tmp_path, n, 0)


def test_positive_clips_have_bursty_envelope(tmp_path):
    m = generate_synthetic_corpus(tmp_path, 8, 42)
    cfg = MfccConfig()
    for e in m:
        if e.label != 1:
            continue
        clip = read_wav(e.audio_path)
        L, hop = cfg.frame_len(16000), cfg.hop(16000)
        x = clip.samples
        n = 1 + (x.size - L) // hop
        rms = np.array([np.sqrt(np.mean(x[k * hop : k * hop + L] ** 2)) for k in range(n)])
        assert envelope_peaks(rms, rms.mean() + 0.5 * rms.std()).size >= 8


def test_toy_cascade_finds_stamped_pattern(toy_cascade):
    rng = np.random.default_rng(5)
    frame = stamp_pattern(noise_frame(rng), 20, 12, rng)
    boxes = detect_multiscale(toy_cascade, frame)
    assert len(boxes) >= 1
    b = boxes[0]
    assert abs((b.x + b.w / 2) - 32) <= 2 and abs((b.y + b.h / 2) - 24) <= 2


def test_mouth_bar_pattern_shape():
    p = mouth_bar_pattern()
    assert p.shape == (24, 24)
    assert (p[4:10, 4:20] == 50).all() and (p[10:14, 4:20] == 210).all() and (p[14:20, 4:20] == 50).all()
    assert (p[:, :4] == -1).all() and (p[:4] == -1).all()
