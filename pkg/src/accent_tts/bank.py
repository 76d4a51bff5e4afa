"""Embedding bank: averaged posterior means for reference-free inference.

For every validation utterance the model's posterior means are extracted;
speaker entries average mu_s over that speaker's utterances and accent entries
average mu_a over all utterances of the accent, across its speakers. Variances
are discarded: inference uses the stored means directly.

File format (versioned JSON/binary hybrid):
    magic line  b"ATBANK01\n"
    4 bytes     little-endian uint32, header length H
    H bytes     UTF-8 JSON header: checkpoint_id, d_z, vocab_hash,
                speakers, accents, counts
    body        float32 little-endian vectors, speakers then accents,
                in header order
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AccentTtsError, CompatibilityError

MAGIC = b"ATBANK01\n"


@dataclass
class EmbeddingBank:
    speaker_means: dict[str, np.ndarray]
    accent_means: dict[str, np.ndarray]
    speaker_counts: dict[str, int]
    accent_counts: dict[str, int]
    checkpoint_id: str
    d_z: int
    vocab_hash: str

    def __post_init__(self):
        for table in (self.speaker_means, self.accent_means):
            for key, vec in table.items():
                vec = np.asarray(vec, dtype=np.float64)
                if vec.shape != (self.d_z,) or not np.isfinite(vec).all():
                    raise AccentTtsError(f"bad bank vector for {key!r}")
                table[key] = vec
        for counts in (self.speaker_counts, self.accent_counts):
            if any(c <= 0 for c in counts.values()):
                raise AccentTtsError("bank entries must have positive counts")

    def speaker(self, speaker_id: str) -> np.ndarray:
        if speaker_id not in self.speaker_means:
            raise AccentTtsError(f"unknown speaker {speaker_id!r} in bank")
        return self.speaker_means[speaker_id]

    def accent(self, accent_id: str) -> np.ndarray:
        if accent_id not in self.accent_means:
            raise AccentTtsError(f"unknown accent {accent_id!r} in bank")
        return self.accent_means[accent_id]


def accumulate_bank(
    rows, checkpoint_id: str, d_z: int, vocab_hash: str
) -> EmbeddingBank:
    """Average a stream of (speaker_id, accent_id, mu_s, mu_a) rows.

    Accumulation runs in float64 so a bank equals the count-weighted mean of
    banks built over any partition of the same rows to ~1e-15.
    """
    spk_sum: dict[str, np.ndarray] = {}
    spk_n: dict[str, int] = {}
    acc_sum: dict[str, np.ndarray] = {}
    acc_n: dict[str, int] = {}
    for speaker_id, accent_id, mu_s, mu_a in rows:
        mu_s = np.asarray(mu_s, dtype=np.float64).reshape(-1)
        mu_a = np.asarray(mu_a, dtype=np.float64).reshape(-1)
        if speaker_id not in spk_sum:
            spk_sum[speaker_id] = np.zeros(d_z)
            spk_n[speaker_id] = 0
        if accent_id not in acc_sum:
            acc_sum[accent_id] = np.zeros(d_z)
            acc_n[accent_id] = 0
        spk_sum[speaker_id] += mu_s
        spk_n[speaker_id] += 1
        acc_sum[accent_id] += mu_a
        acc_n[accent_id] += 1
    if not spk_sum:
        raise AccentTtsError("cannot build a bank from zero utterances")
    return EmbeddingBank(
        speaker_means={k: spk_sum[k] / spk_n[k] for k in spk_sum},
        accent_means={k: acc_sum[k] / acc_n[k] for k in acc_sum},
        speaker_counts=spk_n,
        accent_counts=acc_n,
        checkpoint_id=checkpoint_id,
        d_z=d_z,
        vocab_hash=vocab_hash,
    )


def build_bank(loaded, dataset, utterance_ids: list[str]) -> EmbeddingBank:
    """Extract posterior means from a validation set with a loaded checkpoint.

    `loaded` is a models.LoadedCheckpoint; `dataset` a trainer.PreparedDataset.
    Encoding runs per utterance (no padding), so the result is independent of
    batching and of the order of `utterance_ids`.
    """
    from .models import ConditionLabel

    corpus = dataset.corpus
    speakers_seen = {corpus.utterance(uid).speaker_id for uid in utterance_ids}
    missing = [s for s in corpus.speakers if s not in speakers_seen]
    if missing:
        raise AccentTtsError(
            f"no validation utterances for speakers {missing!r}; cannot build bank"
        )

    def rows():
        for uid in sorted(utterance_ids):
            utt = corpus.utterance(uid)
            label = ConditionLabel(
                speaker=corpus.speaker_index(utt.speaker_id),
                accent=corpus.accent_index(utt.accent_id),
                n_speakers=len(corpus.speakers),
                n_accents=len(corpus.accents),
            )
            post = loaded.model.posterior.encode_utterance(dataset.mels[uid], label)
            yield (
                utt.speaker_id,
                utt.accent_id,
                post.mu_s[0].numpy(),
                post.mu_a[0].numpy(),
            )

    return accumulate_bank(
        rows(), loaded.checkpoint_id, loaded.config.model.d_z, loaded.vocab_hash()
    )


def save_bank(bank: EmbeddingBank, path: str | Path) -> None:
    speakers = sorted(bank.speaker_means)
    accents = sorted(bank.accent_means)
    header = {
        "version": 1,
        "checkpoint_id": bank.checkpoint_id,
        "d_z": bank.d_z,
        "vocab_hash": bank.vocab_hash,
        "speakers": speakers,
        "accents": accents,
        "speaker_counts": {k: bank.speaker_counts[k] for k in speakers},
        "accent_counts": {k: bank.accent_counts[k] for k in accents},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for key in speakers:
            fh.write(bank.speaker_means[key].astype("<f4").tobytes())
        for key in accents:
            fh.write(bank.accent_means[key].astype("<f4").tobytes())


def load_bank(path: str | Path) -> EmbeddingBank:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CompatibilityError(f"not a bank file: {path}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        d_z = header["d_z"]
        body = fh.read()
    vectors = np.frombuffer(body, dtype="<f4").reshape(-1, d_z)
    speakers, accents = header["speakers"], header["accents"]
    if vectors.shape[0] != len(speakers) + len(accents):
        raise CompatibilityError(f"bank body size mismatch in {path}")
    return EmbeddingBank(
        speaker_means={k: vectors[i] for i, k in enumerate(speakers)},
        accent_means={k: vectors[len(speakers) + i] for i, k in enumerate(accents)},
        speaker_counts=header["speaker_counts"],
        accent_counts=header["accent_counts"],
        checkpoint_id=header["checkpoint_id"],
        d_z=d_z,
        vocab_hash=header["vocab_hash"],
    )
