"""Factor probes: classify speaker and accent from hand-extracted features.

Speaker identity is probed from spectral-envelope statistics (the mean log-mel
profile of active frames); accent identity from duration and pitch-contour
statistics (frames per token, slope and curvature of the spectral centroid
track). The probes are nearest-centroid classifiers fitted on ground-truth
utterances and applied to synthesized output, giving a measurable stand-in for
accent-similarity / speaker-similarity listening tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import MelSpectrogram
from .errors import AccentTtsError
from .metrics import nearest_centroid_fit, nearest_centroid_predict


def _active_frames(values: np.ndarray) -> np.ndarray:
    energy = values.mean(axis=1)
    lo, hi = energy.min(), energy.max()
    if hi - lo < 1e-6:
        return np.ones(len(energy), dtype=bool)
    return energy > lo + 0.25 * (hi - lo)


def envelope_features(mel: MelSpectrogram | np.ndarray) -> np.ndarray:
    """Speaker-facing features: loudness-normalized log-mel envelope profile.

    Per-frame means are removed so overall level cancels; the mean and upper
    decile per bin summarize where formant energy and spectral tilt sit.
    """
    values = mel.values if isinstance(mel, MelSpectrogram) else np.asarray(mel)
    active = _active_frames(values)
    frames = values[active] if active.any() else values
    frames = frames - frames.mean(axis=1, keepdims=True)
    return np.concatenate([frames.mean(axis=0), np.quantile(frames, 0.9, axis=0)])


_F0_BINS = 16  # low-frequency mel region where the fundamental lives


def prosody_features(mel: MelSpectrogram | np.ndarray, n_tokens: int) -> np.ndarray:
    """Accent-facing features: log frames-per-token plus pitch-contour fit.

    The contour is the energy-weighted centroid over the lowest mel bins,
    which tracks the fundamental; a quadratic fit over normalized time yields
    slope and curvature.
    """
    if n_tokens < 1:
        raise AccentTtsError("prosody features need the token count")
    values = mel.values if isinstance(mel, MelSpectrogram) else np.asarray(mel)
    active = _active_frames(values)
    frames = values[active]
    if frames.shape[0] < 3:
        frames = values
    low = frames[:, : min(_F0_BINS, frames.shape[1])]
    weights = np.exp(low - low.max())
    centroid = (weights * np.arange(low.shape[1])[None, :]).sum(axis=1) / weights.sum(axis=1)
    t = np.linspace(-1.0, 1.0, len(centroid))
    quad, slope, _ = np.polyfit(t, centroid - centroid.mean(), deg=2)
    return np.array([np.log(values.shape[0] / n_tokens), slope, quad])


@dataclass
class FactorProbe:
    """Nearest-centroid classifier over standardized probe features."""

    centroids: dict
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray, labels) -> "FactorProbe":
        features = np.asarray(features, dtype=np.float64)
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        std[std < 1e-12] = 1.0
        scaled = (features - mean) / std
        return cls(centroids=nearest_centroid_fit(scaled, labels), mean=mean, std=std)

    def predict(self, features: np.ndarray) -> list:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        scaled = (features - self.mean) / self.std
        return nearest_centroid_predict(self.centroids, scaled)

    def accuracy(self, features: np.ndarray, labels) -> float:
        pred = self.predict(features)
        labels = list(labels)
        return float(np.mean([p == t for p, t in zip(pred, labels)]))
