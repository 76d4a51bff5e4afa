"""Signal processing: STFT, mel filterbank, log-mel features, WAV i/o.

Frame layout convention: the signal is reflect-padded by (win - hop) / 2 on
both sides before a center=False STFT, so a signal of length L yields
floor((L + win - hop - win) / hop) + 1 = floor(L / hop) frames for L >= hop,
and an inverse STFT trimmed the same way returns exactly n_frames * hop
samples. This matches the framing used by common neural vocoder recipes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.io import wavfile
from scipy.signal.windows import hann

from .config import MelConfig
from .errors import AudioError, CompatibilityError


@dataclass
class MelSpectrogram:
    """Log-amplitude mel matrix, frames along axis 0."""

    values: np.ndarray  # [n_frames, n_mels], float32
    frame_hop: int
    n_mels: int
    sample_rate: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise AudioError("mel matrix must be [n_frames >= 1, n_mels]")
        if self.values.shape[1] != self.n_mels:
            raise CompatibilityError(
                f"mel matrix has {self.values.shape[1]} bins, expected {self.n_mels}"
            )
        if not np.isfinite(self.values).all():
            raise AudioError("mel matrix contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """Triangular filters on the HTK mel scale, 0 Hz to Nyquist.

    Returns [n_mels, n_fft // 2 + 1]; peaks are 1 (no area normalization).
    """
    n_bins = n_fft // 2 + 1
    fft_freqs = np.arange(n_bins) * sample_rate / n_fft
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((n_mels, n_bins), dtype=np.float64)
    for m in range(n_mels):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rising = (fft_freqs - lo) / (center - lo)
        falling = (hi - fft_freqs) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def mel_band_center_hz(cfg: MelConfig, band: int) -> float:
    """Center frequency of one filterbank band."""
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(cfg.sample_rate / 2), cfg.n_mels + 2)
    return float(mel_to_hz(mel_pts[band + 1]))


def _stft_pad(n_fft: int, hop: int) -> int:
    return (n_fft - hop) // 2


def n_frames_for_length(n_samples: int, cfg: MelConfig) -> int:
    """Frame count compute_mel will produce for a signal of this length."""
    padded = n_samples + 2 * _stft_pad(cfg.n_fft, cfg.hop_length)
    return (padded - cfg.n_fft) // cfg.hop_length + 1


def stft(audio: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Complex STFT [n_frames, n_fft // 2 + 1] under the padding convention above."""
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim != 1 or audio.size == 0:
        raise AudioError("audio must be a non-empty 1-D array")
    if audio.size < cfg.win_length:
        raise AudioError(
            f"audio too short: {audio.size} samples < one window ({cfg.win_length})"
        )
    pad = _stft_pad(cfg.n_fft, cfg.hop_length)
    padded = np.pad(audio, (pad, pad), mode="reflect")
    n_frames = (padded.size - cfg.n_fft) // cfg.hop_length + 1
    window = np.zeros(cfg.n_fft)
    window[: cfg.win_length] = hann(cfg.win_length, sym=False)
    idx = np.arange(cfg.n_fft)[None, :] + cfg.hop_length * np.arange(n_frames)[:, None]
    frames = padded[idx] * window[None, :]
    return np.fft.rfft(frames, axis=1)


def istft(spec: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Overlap-add inverse of `stft`; returns exactly n_frames * hop samples."""
    spec = np.asarray(spec)
    n_frames = spec.shape[0]
    window = np.zeros(cfg.n_fft)
    window[: cfg.win_length] = hann(cfg.win_length, sym=False)
    frames = np.fft.irfft(spec, n=cfg.n_fft, axis=1) * window[None, :]
    length = (n_frames - 1) * cfg.hop_length + cfg.n_fft
    out = np.zeros(length)
    norm = np.zeros(length)
    wsq = window**2
    for i in range(n_frames):
        start = i * cfg.hop_length
        out[start : start + cfg.n_fft] += frames[i]
        norm[start : start + cfg.n_fft] += wsq
    out = out / np.maximum(norm, 1e-10)
    pad = _stft_pad(cfg.n_fft, cfg.hop_length)
    return out[pad : pad + n_frames * cfg.hop_length]


def compute_mel(audio: np.ndarray, cfg: MelConfig) -> MelSpectrogram:
    """Log mel-filterbank energies of a mono signal.

    Deterministic: same audio and config give a bit-identical matrix. Energies
    are floored at cfg.log_floor before the (natural) log, so digital silence
    maps to log(log_floor) everywhere.
    """
    spec = stft(audio, cfg)
    power = np.abs(spec) ** 2
    fb = mel_filterbank(cfg.sample_rate, cfg.n_fft, cfg.n_mels)
    mel_energy = power @ fb.T
    values = np.log(np.maximum(mel_energy, cfg.log_floor))
    return MelSpectrogram(
        values=values.astype(np.float32),
        frame_hop=cfg.hop_length,
        n_mels=cfg.n_mels,
        sample_rate=cfg.sample_rate,
    )


def write_wav(path, audio: np.ndarray, sample_rate: int) -> None:
    """16-bit PCM output; input floats are clipped to [-1, 1]."""
    audio = np.clip(np.asarray(audio, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(audio * 32767.0).astype(np.int16)
    wavfile.write(str(path), sample_rate, pcm)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Load a mono WAV as float32 in [-1, 1]."""
    sample_rate, data = wavfile.read(str(path))
    if data.ndim > 1:
        data = data[:, 0]
    if data.dtype == np.int16:
        audio = data.astype(np.float32) / 32767.0
    elif data.dtype == np.int32:
        audio = data.astype(np.float32) / 2147483647.0
    elif data.dtype == np.uint8:
        audio = (data.astype(np.float32) - 128.0) / 127.0
    else:
        audio = data.astype(np.float32)
    return audio, int(sample_rate)
