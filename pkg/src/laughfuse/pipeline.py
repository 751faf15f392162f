"""Single-clip composition: audio + frames -> fused, length-fitted sequence."""

from __future__ import annotations

from .audio import compute_laughter_acoustics, compute_mfcc
from .config import RunConfig
from .corpus import load_frame_sequence, read_wav
from .fusion import align_streams, assemble_fused_sequence, fit_length, select_channels
from .vision.detect import smile_presence_series


def extract_clip(audio_path, frames_dir, frame_rate_hz, cfg: RunConfig, cascade, label=None, clip_id="clip"):
    """Return ``(FusedSequence, SmileSeries)`` for one recording."""
    clip = read_wav(audio_path)
    frames = load_frame_sequence(frames_dir, frame_rate_hz)
    mfcc = compute_mfcc(clip, cfg.mfcc)
    acoustics = compute_laughter_acoustics(clip, cfg.mfcc)
    smiles = smile_presence_series(cascade, frames, cfg.detection, roi=cfg.roi)
    aligned = align_streams(mfcc, smiles, frame_rate_hz)
    seq = assemble_fused_sequence(mfcc, acoustics, aligned, label, clip_id)
    seq = fit_length(seq, cfg.fusion.T, cfg.fusion.pad_value)
    return select_channels(seq, cfg.fusion.channels), smiles
