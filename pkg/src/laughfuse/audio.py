"""MFCC extraction and laughter-oriented acoustic summary features."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .corpus import AudioClip

BAND_EDGES_HZ = (0.0, 500.0, 1000.0, 2000.0)


class AudioFeatureError(ValueError):
    pass


class TooShortError(AudioFeatureError):
    pass


def _round_half_up(v):
    return int(np.floor(v + 0.5))


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class MfccConfig:
    pre_emphasis: float = 0.97
    frame_len_ms: float = 25.0
    hop_ms: float = 10.0
    window: str = "hamming"
    n_fft: int | None = None  # None: next power of two >= frame length
    n_mels: int = 26
    n_mfcc: int = 13
    fmin_hz: float = 0.0
    fmax_hz: float | None = None  # None: Nyquist
    log_floor: float = 1e-10

    def __post_init__(self):
        if not 0.0 <= self.pre_emphasis < 1.0:
            raise AudioFeatureError("pre_emphasis must lie in [0, 1)")
        if self.window not in ("hamming", "rectangular"):
            raise AudioFeatureError(f"unknown window {self.window!r}")
        if self.n_mfcc > self.n_mels or self.n_mfcc < 1:
            raise AudioFeatureError("need 1 <= n_mfcc <= n_mels")
        if self.n_fft is not None and not _is_pow2(self.n_fft):
            raise AudioFeatureError(f"n_fft {self.n_fft} is not a power of two")
        if not self.log_floor > 0:
            raise AudioFeatureError("log_floor must be positive")
        if self.frame_len_ms <= 0 or self.hop_ms <= 0:
            raise AudioFeatureError("frame and hop lengths must be positive")

    def frame_len(self, sr):
        return _round_half_up(self.frame_len_ms * sr / 1000.0)

    def hop(self, sr):
        return _round_half_up(self.hop_ms * sr / 1000.0)

    def fft_size(self, sr):
        if self.n_fft is not None:
            if self.n_fft < self.frame_len(sr):
                raise AudioFeatureError(f"n_fft {self.n_fft} shorter than frame length {self.frame_len(sr)}")
            return self.n_fft
        return 1 << (self.frame_len(sr) - 1).bit_length()

    def fmax(self, sr):
        return sr / 2.0 if self.fmax_hz is None else float(self.fmax_hz)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return replace(cls(), **d)


@dataclass(frozen=True, eq=False)
class MfccMatrix:
    coeffs: np.ndarray  # (n_frames, n_mfcc)
    frame_times_s: np.ndarray

    @property
    def n_frames(self):
        return self.coeffs.shape[0]


@dataclass(frozen=True)
class AcousticFeatureVector:
    band_energy_ratio: tuple
    spectral_centroid_hz: float
    rolloff85_hz: float
    zcr_per_s: float
    rms_mean: float
    rms_std: float
    burst_rate_hz: float

    def as_array(self):
        return np.array(
            [
                *self.band_energy_ratio,
                self.spectral_centroid_hz,
                self.rolloff85_hz,
                self.zcr_per_s,
                self.rms_mean,
                self.rms_std,
            ]
        )


def pre_emphasize(x, alpha):
    x = np.asarray(x, dtype=np.float64)
    if not 0.0 <= alpha < 1.0:
        raise AudioFeatureError("alpha must lie in [0, 1)")
    y = x.copy()
    y[1:] = x[1:] - alpha * x[:-1]
    return y


def window_coeffs(kind, length):
    if kind == "rectangular":
        return np.ones(length)
    if length == 1:
        return np.ones(1)
    n = np.arange(length)
    return 0.54 - 0.46 * np.cos(2 * np.pi * n / (length - 1))


def n_frames_for(n_samples, frame_len, hop):
    if n_samples < frame_len:
        return 0
    return 1 + (n_samples - frame_len) // hop


def _frames(x, frame_len, hop):
    n = n_frames_for(len(x), frame_len, hop)
    if n == 0:
        raise TooShortError(f"signal of {len(x)} samples shorter than one {frame_len}-sample frame")
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def frame_and_window(x, cfg: MfccConfig, sr):
    """Split into hop-spaced frames (partial tail dropped) and apply the window."""
    x = np.asarray(x, dtype=np.float64)
    L = cfg.frame_len(sr)
    return _frames(x, L, cfg.hop(sr)) * window_coeffs(cfg.window, L)


def power_spectrum(frame, n_fft):
    """One-sided |DFT|^2 of zero-padded frame(s); last axis is time."""
    if not _is_pow2(n_fft):
        raise AudioFeatureError(f"n_fft {n_fft} is not a power of two")
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] > n_fft:
        raise AudioFeatureError(f"frame length {frame.shape[-1]} exceeds n_fft {n_fft}")
    spec = np.fft.rfft(frame, n=n_fft, axis=-1)
    return spec.real**2 + spec.imag**2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(cfg: MfccConfig, sr):
    """Unit-peak triangular filters on HTK mel points, centers floored to bins."""
    fmax = cfg.fmax(sr)
    if fmax > sr / 2.0:
        raise AudioFeatureError(f"fmax {fmax} Hz above Nyquist {sr / 2.0} Hz")
    if not cfg.fmin_hz < fmax:
        raise AudioFeatureError("fmin must be below fmax")
    n_fft = cfg.fft_size(sr)
    mels = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(fmax), cfg.n_mels + 2)
    bins = np.floor(mel_to_hz(mels) * n_fft / sr).astype(int)
    bins = np.clip(bins, 0, n_fft // 2)
    fb = np.zeros((cfg.n_mels, n_fft // 2 + 1))
    for m in range(cfg.n_mels):
        lo, c, hi = bins[m], bins[m + 1], bins[m + 2]
        for k in range(lo, c):
            fb[m, k] = (k - lo) / (c - lo)
        fb[m, c] = 1.0
        for k in range(c + 1, hi + 1):
            fb[m, k] = (hi - k) / (hi - c)
    return fb


def log_mel(P, FB, log_floor):
    P = np.asarray(P, dtype=np.float64)
    if P.shape[-1] != FB.shape[1]:
        raise AudioFeatureError(f"power bins {P.shape[-1]} do not match filterbank width {FB.shape[1]}")
    return np.log(np.maximum(P @ FB.T, log_floor))


def dct_matrix(n_out, M):
    k = np.arange(n_out)[:, None]
    m = np.arange(M)[None, :]
    D = np.cos(np.pi * k * (2 * m + 1) / (2 * M))
    D[0] *= np.sqrt(1.0 / M)
    D[1:] *= np.sqrt(2.0 / M)
    return D


def dct2(e, n_mfcc):
    """Orthonormal DCT-II over the last axis, first ``n_mfcc`` outputs kept."""
    e = np.asarray(e, dtype=np.float64)
    M = e.shape[-1]
    if n_mfcc > M:
        raise AudioFeatureError(f"n_mfcc {n_mfcc} exceeds input length {M}")
    return e @ dct_matrix(n_mfcc, M).T


def compute_mfcc(clip: AudioClip, cfg: MfccConfig | None = None) -> MfccMatrix:
    cfg = cfg or MfccConfig()
    sr = clip.sample_rate_hz
    frames = frame_and_window(pre_emphasize(clip.samples, cfg.pre_emphasis), cfg, sr)
    P = power_spectrum(frames, cfg.fft_size(sr))
    coeffs = dct2(log_mel(P, build_mel_filterbank(cfg, sr), cfg.log_floor), cfg.n_mfcc)
    L, hop = cfg.frame_len(sr), cfg.hop(sr)
    times = (np.arange(coeffs.shape[0]) * hop + L / 2.0) / sr
    return MfccMatrix(coeffs, times)


def envelope_peaks(env, threshold):
    """Indices of interior local maxima (rise then non-rise) above ``threshold``."""
    env = np.asarray(env, dtype=np.float64)
    if env.size < 3:
        return np.zeros(0, dtype=int)
    mid = env[1:-1]
    is_peak = (mid > env[:-2]) & (mid >= env[2:]) & (mid > threshold)
    return np.flatnonzero(is_peak) + 1


def compute_laughter_acoustics(clip: AudioClip, cfg: MfccConfig | None = None) -> AcousticFeatureVector:
    """Clip-level band energy, spectral shape, zero crossings, and burst rhythm.

    Spectral statistics use the un-emphasized signal so band ratios reflect
    the recorded energy distribution.
    """
    cfg = cfg or MfccConfig()
    sr = clip.sample_rate_hz
    x = clip.samples
    L, hop, n_fft = cfg.frame_len(sr), cfg.hop(sr), cfg.fft_size(sr)
    fmax = cfg.fmax(sr)
    raw = _frames(x, L, hop)

    pbar = power_spectrum(raw * window_coeffs(cfg.window, L), n_fft).mean(axis=0)
    freqs = np.arange(pbar.size) * sr / n_fft
    keep = freqs <= fmax
    pbar, freqs = pbar[keep], freqs[keep]
    total = pbar.sum()
    if total > 0:
        edges = (*BAND_EDGES_HZ, np.inf)
        bands = np.array([pbar[(freqs >= lo) & (freqs < hi)].sum() for lo, hi in zip(edges[:-1], edges[1:])])
        ratios = bands / bands.sum()
        centroid = float((freqs * pbar).sum() / total)
        cum = np.cumsum(pbar)
        rolloff = float(freqs[np.searchsorted(cum, 0.85 * cum[-1])])
    else:
        ratios = np.array([1.0, 0.0, 0.0, 0.0])
        centroid = rolloff = 0.0

    duration = x.size / sr
    zcr = np.count_nonzero(x[1:] * x[:-1] < 0) / duration
    rms = np.sqrt(np.mean(raw**2, axis=1))
    peaks = envelope_peaks(rms, rms.mean() + 0.5 * rms.std())
    return AcousticFeatureVector(
        band_energy_ratio=tuple(float(r) for r in ratios),
        spectral_centroid_hz=centroid,
        rolloff85_hz=rolloff,
        zcr_per_s=float(zcr),
        rms_mean=float(rms.mean()),
        rms_std=float(rms.std()),
        burst_rate_hz=peaks.size / duration,
    )
