"""Corpus ingestion and paper-style splits.

Manifest format: UTF-8 text, one record per line,
    audio_path|transcript|speaker_id|accent_id
with audio paths resolved relative to the manifest's directory.

Splits hold out whole transcripts: test and val_unseen transcripts never occur
in any training utterance (of any speaker), while every val_seen transcript
does occur in training. Works naturally for prompt-list corpora where all
speakers read the same texts.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .dsp import read_wav
from .errors import CorpusError, ManifestError

TEST_PER_SPEAKER = 10
VAL_SEEN_PER_SPEAKER = 15
VAL_UNSEEN_PER_SPEAKER = 5
MIN_UTTERANCES_PER_SPEAKER = (
    TEST_PER_SPEAKER + VAL_SEEN_PER_SPEAKER + VAL_UNSEEN_PER_SPEAKER
)


def normalize_transcript(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass
class Utterance:
    id: str
    transcript: str
    speaker_id: str
    accent_id: str
    audio_path: Optional[Path] = None
    # synthetic corpora attach a loader instead of a file; called lazily
    audio_loader: Optional[Callable[[], tuple[np.ndarray, int]]] = None
    factors: dict = field(default_factory=dict)  # ground-truth generator factors

    def load_audio(self) -> tuple[np.ndarray, int]:
        if self.audio_loader is not None:
            return self.audio_loader()
        if self.audio_path is None:
            raise CorpusError(f"utterance {self.id} has no audio source")
        return read_wav(self.audio_path)


@dataclass
class Corpus:
    utterances: list[Utterance]
    speakers: list[str]  # sorted; index = stable integer id
    accents: list[str]
    speaker_accent: dict[str, str]

    def __post_init__(self):
        self._by_id = {u.id: u for u in self.utterances}
        if len(self._by_id) != len(self.utterances):
            raise CorpusError("duplicate utterance ids in corpus")

    def speaker_index(self, speaker_id: str) -> int:
        return self.speakers.index(speaker_id)

    def accent_index(self, accent_id: str) -> int:
        return self.accents.index(accent_id)

    def utterance(self, utt_id: str) -> Utterance:
        return self._by_id[utt_id]

    def by_speaker(self) -> dict[str, list[Utterance]]:
        grouped: dict[str, list[Utterance]] = {s: [] for s in self.speakers}
        for utt in self.utterances:
            grouped[utt.speaker_id].append(utt)
        return grouped


def build_corpus(utterances: list[Utterance]) -> Corpus:
    """Assemble vocabularies (sorted, stable) and check corpus invariants."""
    if not utterances:
        raise CorpusError("corpus has no utterances")
    speaker_accent: dict[str, str] = {}
    for utt in utterances:
        seen = speaker_accent.get(utt.speaker_id)
        if seen is not None and seen != utt.accent_id:
            raise CorpusError(
                f"speaker {utt.speaker_id} listed under two accents: "
                f"{seen} and {utt.accent_id}"
            )
        speaker_accent[utt.speaker_id] = utt.accent_id
    speakers = sorted(speaker_accent)
    accents = sorted(set(speaker_accent.values()))
    return Corpus(utterances, speakers, accents, speaker_accent)


def load_manifest(path: str | Path) -> Corpus:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    utterances: list[Utterance] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("|")
            if len(fields) != 4 or any(not f.strip() for f in fields):
                raise ManifestError(
                    f"{path}:{line_no}: expected "
                    f"audio_path|transcript|speaker_id|accent_id, got {line!r}"
                )
            audio_rel, transcript, speaker_id, accent_id = (f.strip() for f in fields)
            audio_path = (path.parent / audio_rel).resolve()
            if not audio_path.exists():
                raise ManifestError(
                    f"{path}:{line_no}: audio file not found: {audio_path}"
                )
            utterances.append(
                Utterance(
                    id=audio_path.stem,
                    transcript=transcript,
                    speaker_id=speaker_id,
                    accent_id=accent_id,
                    audio_path=audio_path,
                )
            )
    if not utterances:
        raise ManifestError(f"empty manifest: {path}")
    return build_corpus(utterances)


def write_manifest(path: str | Path, utterances: list[Utterance]) -> None:
    path = Path(path)
    lines = []
    for utt in utterances:
        if utt.audio_path is None:
            raise CorpusError(f"utterance {utt.id} has no audio file to reference")
        rel = utt.audio_path.relative_to(path.parent.resolve())
        lines.append(f"{rel}|{utt.transcript}|{utt.speaker_id}|{utt.accent_id}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class SplitAssignment:
    """Disjoint per-speaker utterance-id lists; ids not listed are unused."""

    train: dict[str, list[str]]
    val_seen: dict[str, list[str]]
    val_unseen: dict[str, list[str]]
    test: dict[str, list[str]]

    def all_ids(self, split: str) -> list[str]:
        grouped = getattr(self, split)
        return [uid for spk in sorted(grouped) for uid in grouped[spk]]

    def to_json(self) -> dict:
        return {
            "train": self.train,
            "val_seen": self.val_seen,
            "val_unseen": self.val_unseen,
            "test": self.test,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplitAssignment":
        return cls(
            train=obj["train"],
            val_seen=obj["val_seen"],
            val_unseen=obj["val_unseen"],
            test=obj["test"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "SplitAssignment":
        return cls.from_json(json.loads(Path(path).read_text()))


def make_splits(corpus: Corpus, seed: int) -> SplitAssignment:
    """Per speaker: 10 test, 5 val_unseen, 15 val_seen, rest train.

    Test/val_unseen transcripts are held out globally: every utterance of a
    held-out transcript is removed from train (surplus beyond the per-speaker
    quota is simply unused). val_seen picks only utterances whose transcript
    still remains in someone's training set.
    """
    rng = random.Random(seed)
    by_speaker = corpus.by_speaker()
    for spk in corpus.speakers:
        if len(by_speaker[spk]) < MIN_UTTERANCES_PER_SPEAKER:
            raise CorpusError(
                f"speaker {spk} has {len(by_speaker[spk])} utterances; "
                f"need at least {MIN_UTTERANCES_PER_SPEAKER} to split"
            )

    transcripts = sorted({normalize_transcript(u.transcript) for u in corpus.utterances})
    shuffled = transcripts[:]
    rng.shuffle(shuffled)

    held_quota = TEST_PER_SPEAKER + VAL_UNSEEN_PER_SPEAKER
    held: set[str] = set()
    held_count = {spk: 0 for spk in corpus.speakers}
    for text in shuffled:
        if all(c >= held_quota for c in held_count.values()):
            break
        held.add(text)
        for utt in corpus.utterances:
            if normalize_transcript(utt.transcript) == text:
                held_count[utt.speaker_id] += 1
    short = [s for s, c in held_count.items() if c < held_quota]
    if short:
        raise CorpusError(
            f"cannot hold out {held_quota} transcripts for speaker {short[0]}: "
            "not enough distinct transcripts"
        )

    test: dict[str, list[str]] = {}
    val_unseen: dict[str, list[str]] = {}
    val_seen: dict[str, list[str]] = {}
    train: dict[str, list[str]] = {}

    # occurrences of each seen transcript still available to training
    seen_occurrences: dict[str, int] = {}
    for utt in corpus.utterances:
        text = normalize_transcript(utt.transcript)
        if text not in held:
            seen_occurrences[text] = seen_occurrences.get(text, 0) + 1

    for spk in corpus.speakers:
        utts = sorted(by_speaker[spk], key=lambda u: u.id)
        held_utts = [u for u in utts if normalize_transcript(u.transcript) in held]
        seen_utts = [u for u in utts if normalize_transcript(u.transcript) not in held]
        rng.shuffle(held_utts)
        test[spk] = sorted(u.id for u in held_utts[:TEST_PER_SPEAKER])
        val_unseen[spk] = sorted(
            u.id
            for u in held_utts[TEST_PER_SPEAKER : TEST_PER_SPEAKER + VAL_UNSEEN_PER_SPEAKER]
        )
        if len(val_unseen[spk]) < VAL_UNSEEN_PER_SPEAKER:
            raise CorpusError(
                f"speaker {spk} has too few held-out utterances for test/val_unseen"
            )

        rng.shuffle(seen_utts)
        chosen: list[str] = []
        rest: list[Utterance] = []
        for utt in seen_utts:
            text = normalize_transcript(utt.transcript)
            # keep at least one occurrence in train so "seen" stays true
            if len(chosen) < VAL_SEEN_PER_SPEAKER and seen_occurrences[text] >= 2:
                chosen.append(utt.id)
                seen_occurrences[text] -= 1
            else:
                rest.append(utt)
        if len(chosen) < VAL_SEEN_PER_SPEAKER:
            raise CorpusError(
                f"speaker {spk}: cannot pick {VAL_SEEN_PER_SPEAKER} val_seen "
                "utterances whose transcripts remain in training"
            )
        val_seen[spk] = sorted(chosen)
        train[spk] = sorted(u.id for u in rest)

    return SplitAssignment(train=train, val_seen=val_seen, val_unseen=val_unseen, test=test)
