"""Synthetic factorized corpus: speaker identity lives in the spectral
envelope, accent identity in durations and pitch contours.

Construction keeps the two factor values statistically independent: within
every accent, the per-speaker factor grid is the same centered set, and all
speakers record the same number of utterances, so the empirical correlation
between speaker-factor and accent-factor values is zero by design.

Per speaker traits:
  - fundamental frequency, assigned by a Latin-square rotation of a shared
    grid so (f0, formant shift) pairs stay distinct across accents,
  - multiplicative formant shift (the recorded speaker factor),
  - spectral tilt from a globally interleaved grid (uniqueness tie-breaker).
Per accent traits:
  - a duration multiplier (the recorded accent factor),
  - a pitch contour template applied across each utterance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SyntheticCorpusConfig
from .corpus import Corpus, Utterance, build_corpus
from .errors import CorpusError

SAMPLE_RATE = 22050
_CONSONANTS = "bdgkmnprstvz"
_VOWELS = "aeiou"
_SPACE_DURATION = 0.045
_MAX_HARMONIC_HZ = 6500.0


@dataclass(frozen=True)
class SpeakerTraits:
    f0_hz: float
    formant_shift: float  # recorded speaker factor
    tilt_db_per_khz: float


@dataclass(frozen=True)
class AccentTraits:
    duration_multiplier: float  # recorded accent factor
    contour: str  # template name


def _contour_shape(name: str, t: np.ndarray) -> np.ndarray:
    """Normalized pitch contour over utterance time t in [0, 1], range [-1, 1]."""
    if name == "rise":
        return 2.0 * t - 1.0
    if name == "fall":
        return 1.0 - 2.0 * t
    if name == "peak":
        return 1.0 - 8.0 * (t - 0.5) ** 2  # parabola: +1 mid, -1 at edges
    if name == "dip":
        return 8.0 * (t - 0.5) ** 2 - 1.0
    raise ValueError(f"unknown contour template {name!r}")


# templates occupy distinct corners of (slope, curvature) space
_CONTOUR_TEMPLATES = ("rise", "fall", "peak", "dip")


def _char_formants(char: str) -> tuple[float, float]:
    """Deterministic per-symbol formant pair, spread over the speech band."""
    k = ord(char)
    f1 = 320.0 + 55.0 * ((k * 7) % 11)
    f2 = 1000.0 + 140.0 * ((k * 5) % 11)
    return f1, f2


def speaker_traits(spec: SyntheticCorpusConfig, accent: int, slot: int) -> SpeakerTraits:
    # f0 spacing is deliberately narrow (and jittered per utterance) so pitch
    # level is a weak speaker cue; identity rests on formants and tilt, which
    # keeps the accent branch from soaking up speaker information
    k = spec.n_speakers_per_accent
    f0_grid = 128.0 * (1.09 ** np.arange(k))
    shift_grid = (np.arange(k) - (k - 1) / 2.0) * (0.6 / max(k - 1, 1))
    n_speakers = spec.n_accents * k
    tilt_grid = np.linspace(-7.0, 7.0, n_speakers) if n_speakers > 1 else np.array([0.0])
    return SpeakerTraits(
        f0_hz=float(f0_grid[(slot + accent) % k]),
        formant_shift=float(shift_grid[slot]),
        tilt_db_per_khz=float(tilt_grid[accent + spec.n_accents * slot]),
    )


def accent_traits(spec: SyntheticCorpusConfig, accent: int) -> AccentTraits:
    a = spec.n_accents
    if a == 1:
        mult = np.array([1.0])
    else:
        lo, hi = 1.0 / math.sqrt(spec.duration_spread), math.sqrt(spec.duration_spread)
        mult = np.exp(np.linspace(math.log(lo), math.log(hi), a))
    return AccentTraits(
        duration_multiplier=float(mult[accent]),
        contour=_CONTOUR_TEMPLATES[accent % len(_CONTOUR_TEMPLATES)],
    )


def _make_prompts(spec: SyntheticCorpusConfig, rng: np.random.Generator) -> list[str]:
    prompts = []
    seen = set()
    while len(prompts) < spec.utterances_per_speaker:
        n_words = int(rng.integers(2, 4))
        words = []
        for _ in range(n_words):
            n_chars = int(rng.integers(2, 5))
            chars = []
            for i in range(n_chars):
                pool = _CONSONANTS if i % 2 == 0 else _VOWELS
                chars.append(pool[int(rng.integers(0, len(pool)))])
            words.append("".join(chars))
        text = " ".join(words)
        if text not in seen:
            seen.add(text)
            prompts.append(text)
    return prompts


def _synthesize_utterance(
    text: str,
    spk: SpeakerTraits,
    acc: AccentTraits,
    spec: SyntheticCorpusConfig,
    noise_seed: int,
) -> np.ndarray:
    """Additive harmonic synthesis of one utterance at SAMPLE_RATE."""
    sr = SAMPLE_RATE
    char_dur = spec.base_char_duration * acc.duration_multiplier
    space_dur = _SPACE_DURATION * acc.duration_multiplier
    segments = [(c, space_dur if c == " " else char_dur) for c in text]
    total = sum(d for _, d in segments)

    n_total = int(round(total * sr))
    t_norm = np.arange(n_total) / max(n_total - 1, 1)
    jitter_rng = np.random.default_rng(noise_seed + 1)
    level = 1.0 + 0.06 * float(jitter_rng.uniform(-1.0, 1.0))  # utterance pitch level
    f0_track = (
        spk.f0_hz * level
        * (1.0 + spec.contour_depth * _contour_shape(acc.contour, t_norm))
    )
    phase = 2.0 * np.pi * np.cumsum(f0_track) / sr

    out = np.zeros(n_total)
    cursor = 0
    for char, dur in segments:
        n = int(round(dur * sr))
        n = min(n, n_total - cursor)
        if n <= 0:
            continue
        sl = slice(cursor, cursor + n)
        cursor += n
        if char == " ":
            continue
        f1, f2 = _char_formants(char)
        f1 *= 1.0 + spk.formant_shift
        f2 *= 1.0 + spk.formant_shift
        seg_f0 = f0_track[sl]
        seg_phase = phase[sl]
        n_harm = int(_MAX_HARMONIC_HZ / float(seg_f0.max()))
        h = np.arange(1, max(n_harm, 1) + 1)[:, None]
        freq = h * seg_f0[None, :]
        env = (
            1.0 / (1.0 + ((freq - f1) / 90.0) ** 2)
            + 0.7 / (1.0 + ((freq - f2) / 140.0) ** 2)
            + 0.08
        )
        env = env * 10.0 ** (spk.tilt_db_per_khz * freq / 1000.0 / 20.0)
        seg = (env * np.sin(h * seg_phase[None, :])).sum(axis=0)
        ramp = min(int(0.005 * sr), n // 2)
        if ramp > 0:
            fade = np.linspace(0.0, 1.0, ramp)
            seg[:ramp] *= fade
            seg[-ramp:] *= fade[::-1]
        out[sl] = seg

    noise_rng = np.random.default_rng(noise_seed)
    out = out + 1e-4 * noise_rng.standard_normal(n_total)
    peak = np.abs(out).max()
    if peak > 0:
        out = 0.4 * out / peak
    return out.astype(np.float32)


def generate_synthetic_corpus(spec: SyntheticCorpusConfig, seed: int) -> Corpus:
    """Deterministic factorized corpus; audio is synthesized lazily per utterance.

    Every speaker reads the same prompt list exactly once, mirroring a
    prompt-based multi-speaker corpus, which is what the transcript-level
    split holdout expects.
    """
    rng = np.random.default_rng(seed)
    prompts = _make_prompts(spec, rng)
    utterances: list[Utterance] = []
    for a in range(spec.n_accents):
        acc = accent_traits(spec, a)
        accent_id = f"acc{a:02d}"
        for k in range(spec.n_speakers_per_accent):
            spk = speaker_traits(spec, a, k)
            speaker_id = f"spk{a:02d}{k:02d}"
            for p, text in enumerate(prompts):
                utt_seed = seed + 7919 * (a * 1000 + k * 100) + p
                utterances.append(
                    Utterance(
                        id=f"{speaker_id}_p{p:03d}",
                        transcript=text,
                        speaker_id=speaker_id,
                        accent_id=accent_id,
                        audio_loader=_Loader(text, spk, acc, spec, utt_seed),
                        factors={
                            "speaker_factor": spk.formant_shift,
                            "accent_factor": acc.duration_multiplier,
                            "f0_hz": spk.f0_hz,
                            "tilt_db_per_khz": spk.tilt_db_per_khz,
                            "contour": acc.contour,
                        },
                    )
                )
    return build_corpus(utterances)


class _Loader:
    """Picklable lazy audio synthesizer for one utterance."""

    def __init__(self, text, spk, acc, spec, noise_seed):
        self.text = text
        self.spk = spk
        self.acc = acc
        self.spec = spec
        self.noise_seed = noise_seed

    def __call__(self):
        audio = _synthesize_utterance(
            self.text, self.spk, self.acc, self.spec, self.noise_seed
        )
        return audio, SAMPLE_RATE


def factor_correlation(corpus: Corpus) -> float:
    """Empirical correlation between recorded speaker and accent factors."""
    pairs = [
        (u.factors["speaker_factor"], u.factors["accent_factor"])
        for u in corpus.utterances
        if "speaker_factor" in u.factors
    ]
    if len(pairs) < 2:
        raise CorpusError("corpus has no recorded factors")
    arr = np.asarray(pairs, dtype=np.float64)
    if arr[:, 0].std() == 0 or arr[:, 1].std() == 0:
        return 0.0
    return float(np.corrcoef(arr[:, 0], arr[:, 1])[0, 1])
