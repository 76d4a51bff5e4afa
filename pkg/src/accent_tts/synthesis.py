"""Reference-free synthesis: bank lookup -> conditioned decode -> vocode -> denoise.

The built-in vocoder inverts the mel filterbank by pseudo-inverse and runs a
fixed number of phase-reconstruction iterations from a seeded random phase, so
synthesis with sampling disabled is a pure function of (checkpoint, bank,
inputs). An external neural vocoder can be plugged in through a documented
file handoff.
"""

from __future__ import annotations

import subprocess
import struct
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .bank import EmbeddingBank
from .config import InferenceConfig, MelConfig
from .dsp import MelSpectrogram, istft, mel_filterbank, read_wav, stft
from .errors import AccentTtsError, CompatibilityError
from .models import ConditionLabel, LoadedCheckpoint
from .text import tokenize
from .util import derive_seed

MEL_MAGIC = b"ATMEL01\n"


@dataclass
class SynthesisResult:
    mel: MelSpectrogram
    waveform: Optional[np.ndarray]
    sample_rate: int
    truncated: bool
    alignment: np.ndarray
    metadata: dict = field(default_factory=dict)


def synthesize(
    text: str,
    speaker_id: str,
    accent_id: str,
    bank: EmbeddingBank,
    loaded: LoadedCheckpoint,
    inference: InferenceConfig,
    mel_cfg: MelConfig,
    sampling_seed: int = 0,
    vocode_audio: bool = True,
) -> SynthesisResult:
    """Synthesize `text` as `speaker_id` speaking in `accent_id`.

    Conversion is nothing more than picking accent_id different from the
    speaker's native accent; z comes straight from the bank means. The
    label-conditioned variant additionally feeds the source speaker and the
    TARGET accent as one-hot decoder conditions.
    """
    if bank.checkpoint_id != loaded.checkpoint_id:
        raise CompatibilityError(
            f"bank was built from checkpoint {bank.checkpoint_id}, "
            f"got {loaded.checkpoint_id}"
        )
    if bank.d_z != loaded.config.model.d_z or bank.vocab_hash != loaded.vocab_hash():
        raise CompatibilityError("bank does not match the checkpoint's model")
    if speaker_id not in loaded.speakers:
        raise AccentTtsError(f"unknown speaker {speaker_id!r}")
    if accent_id not in loaded.accents:
        raise AccentTtsError(f"unknown accent {accent_id!r}")

    z_s = np.array(bank.speaker(speaker_id), dtype=np.float64)
    z_a = np.array(bank.accent(accent_id), dtype=np.float64)
    if inference.sampling:
        rng = np.random.default_rng(sampling_seed)
        z_s = z_s + inference.sampling_sigma * rng.standard_normal(z_s.shape)
        z_a = z_a + inference.sampling_sigma * rng.standard_normal(z_a.shape)

    tokens = tokenize(text, loaded.symbol_table)
    label = ConditionLabel(
        speaker=loaded.speakers.index(speaker_id),
        accent=loaded.accents.index(accent_id),
        n_speakers=len(loaded.speakers),
        n_accents=len(loaded.accents),
    )
    out = loaded.model.generate(
        list(tokens.ids),
        torch.tensor(z_s, dtype=torch.float32),
        torch.tensor(z_a, dtype=torch.float32),
        label,
        max_frames=inference.max_frames,
    )
    mel = MelSpectrogram(
        values=out.mel_post[0].numpy(),
        frame_hop=mel_cfg.hop_length,
        n_mels=mel_cfg.n_mels,
        sample_rate=mel_cfg.sample_rate,
    )
    waveform = None
    if vocode_audio:
        waveform = vocode(mel, mel_cfg, inference)
        if inference.denoise:
            waveform = denoise(waveform, mel_cfg)
    return SynthesisResult(
        mel=mel,
        waveform=waveform,
        sample_rate=mel_cfg.sample_rate,
        truncated=out.truncated[0],
        alignment=out.alignment[0].numpy(),
        metadata={
            "speaker": speaker_id,
            "accent": accent_id,
            "n_frames": mel.n_frames,
            "n_tokens": tokens.length,
            "truncated": out.truncated[0],
        },
    )


@lru_cache(maxsize=4)
def _mel_pinv(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    return np.linalg.pinv(mel_filterbank(sample_rate, n_fft, n_mels))


def mel_to_linear_power(mel: MelSpectrogram, cfg: MelConfig) -> np.ndarray:
    energy = np.exp(mel.values.astype(np.float64))
    # bins at the log floor carry no real energy; small guard for float32 exp
    energy[energy <= cfg.log_floor * (1.0 + 1e-4)] = 0.0
    power = energy @ _mel_pinv(cfg.sample_rate, cfg.n_fft, cfg.n_mels).T
    return np.maximum(power, 0.0)


def griffin_lim(
    magnitude: np.ndarray, cfg: MelConfig, iterations: int, seed: int
) -> np.ndarray:
    """Phase reconstruction with a fixed iteration count and seeded init.

    The analysis/synthesis round trip is frame-exact only when the signal
    spans at least one window (win/hop frames); shorter inputs get a single
    synthesis pass.
    """
    rng = np.random.default_rng(seed)
    phase = np.exp(2j * np.pi * rng.random(magnitude.shape))
    spec = magnitude * phase
    min_frames = -(-cfg.win_length // cfg.hop_length)
    if magnitude.shape[0] < min_frames:
        iterations = 0
    for _ in range(iterations):
        audio = istft(spec, cfg)
        rebuilt = stft(audio, cfg)
        phase = rebuilt / np.maximum(np.abs(rebuilt), 1e-10)
        spec = magnitude * phase
    return istft(spec, cfg)


def vocode(mel: MelSpectrogram, cfg: MelConfig, inference: InferenceConfig) -> np.ndarray:
    """Mel to waveform; output length is exactly n_frames * hop samples."""
    if mel.n_mels != cfg.n_mels:
        raise CompatibilityError(
            f"mel has {mel.n_mels} bins but the mel config expects {cfg.n_mels}"
        )
    if inference.vocoder == "external":
        return _external_vocode(mel, cfg, inference.external_command)
    magnitude = np.sqrt(mel_to_linear_power(mel, cfg))
    audio = griffin_lim(
        magnitude, cfg, inference.griffin_lim_iters, derive_seed(0, "griffin-lim-phase")
    )
    peak = np.abs(audio).max()
    if peak > 1.0:
        audio = audio / peak
    return audio.astype(np.float32)


def write_mel_file(mel: MelSpectrogram, path: str | Path) -> None:
    """Handoff format: magic, uint32 n_frames, uint32 n_mels, float32 LE rows."""
    with open(path, "wb") as fh:
        fh.write(MEL_MAGIC)
        fh.write(struct.pack("<II", mel.n_frames, mel.n_mels))
        fh.write(mel.values.astype("<f4").tobytes())


def read_mel_file(path: str | Path, cfg: MelConfig) -> MelSpectrogram:
    with open(path, "rb") as fh:
        if fh.read(len(MEL_MAGIC)) != MEL_MAGIC:
            raise CompatibilityError(f"not a mel handoff file: {path}")
        n_frames, n_mels = struct.unpack("<II", fh.read(8))
        values = np.frombuffer(fh.read(), dtype="<f4").reshape(n_frames, n_mels)
    return MelSpectrogram(
        values=values.copy(), frame_hop=cfg.hop_length, n_mels=n_mels,
        sample_rate=cfg.sample_rate,
    )


def _external_vocode(mel: MelSpectrogram, cfg: MelConfig, command: str) -> np.ndarray:
    with tempfile.TemporaryDirectory() as tmp:
        mel_path = Path(tmp) / "mel.atmel"
        wav_path = Path(tmp) / "out.wav"
        write_mel_file(mel, mel_path)
        cmd = command.format(mel=mel_path, wav=wav_path)
        proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
        if proc.returncode != 0 or not wav_path.exists():
            raise AccentTtsError(
                f"external vocoder failed (exit {proc.returncode}): {proc.stderr[-500:]}"
            )
        audio, sr = read_wav(wav_path)
        if sr != cfg.sample_rate:
            raise CompatibilityError(
                f"external vocoder returned {sr} Hz, expected {cfg.sample_rate}"
            )
        return audio


def denoise(
    waveform: np.ndarray,
    cfg: MelConfig,
    threshold: float = 1.8,
    floor_gain: float = 0.1,
    profile_fraction: float = 0.1,
) -> np.ndarray:
    """Spectral gating with the noise profile taken from the quietest frames.

    Bins whose magnitude stays below threshold * profile are attenuated to
    floor_gain; the mask is lightly smoothed over time and frequency. Output
    RMS never exceeds input RMS.
    """
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.size == 0:
        raise AccentTtsError("cannot denoise an empty waveform")
    if waveform.size < cfg.win_length:
        return waveform.astype(np.float32)
    spec = stft(waveform, cfg)
    mag = np.abs(spec)
    frame_energy = (mag**2).sum(axis=1)
    n_profile = max(1, int(round(profile_fraction * len(frame_energy))))
    quietest = np.argsort(frame_energy, kind="stable")[:n_profile]
    profile = mag[quietest].mean(axis=0)
    gain = np.where(mag > threshold * profile[None, :], 1.0, floor_gain)
    kernel = np.ones((3, 3)) / 9.0
    from scipy.signal import convolve2d

    gain = convolve2d(gain, kernel, mode="same", boundary="symm")
    out = istft(spec * gain, cfg)
    out_full = np.zeros_like(waveform)
    n = min(len(out), len(waveform))
    out_full[:n] = out[:n]
    in_rms = np.sqrt((waveform**2).mean())
    out_rms = np.sqrt((out_full**2).mean())
    if out_rms > in_rms > 0:
        out_full *= in_rms / out_rms
    return out_full.astype(np.float32)
