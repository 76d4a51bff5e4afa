"""Synthetic corpus: determinism, factor structure, probe recoverability."""

import numpy as np
import pytest

from accent_tts.config import MelConfig, SyntheticCorpusConfig
from accent_tts.dsp import compute_mel
from accent_tts.probes import FactorProbe, envelope_features, prosody_features
from accent_tts.synthetic import factor_correlation, generate_synthetic_corpus
from accent_tts.text import build_vocab, tokenize


def test_corpus_counts_and_determinism():
    spec = SyntheticCorpusConfig(
        n_accents=4, n_speakers_per_accent=4, utterances_per_speaker=50
    )
    corpus = generate_synthetic_corpus(spec, seed=7)
    assert len(corpus.utterances) == 800
    assert len(corpus.speakers) == 16
    assert len(corpus.accents) == 4
    again = generate_synthetic_corpus(spec, seed=7)
    assert [u.id for u in corpus.utterances] == [u.id for u in again.utterances]
    assert [u.transcript for u in corpus.utterances] == [
        u.transcript for u in again.utterances
    ]
    a1, _ = corpus.utterances[0].load_audio()
    a2, _ = again.utterances[0].load_audio()
    assert np.array_equal(a1, a2)


def test_same_accent_shares_accent_factor():
    spec = SyntheticCorpusConfig(
        n_accents=2, n_speakers_per_accent=2, utterances_per_speaker=3
    )
    corpus = generate_synthetic_corpus(spec, seed=1)
    by_speaker = corpus.by_speaker()
    s0, s1 = corpus.speakers[0], corpus.speakers[1]
    assert corpus.speaker_accent[s0] == corpus.speaker_accent[s1]
    f0 = by_speaker[s0][0].factors
    f1 = by_speaker[s1][0].factors
    assert f0["accent_factor"] == f1["accent_factor"]
    assert f0["speaker_factor"] != f1["speaker_factor"]


def test_factor_independence_over_500_utterances():
    spec = SyntheticCorpusConfig(
        n_accents=4, n_speakers_per_accent=4, utterances_per_speaker=32
    )
    corpus = generate_synthetic_corpus(spec, seed=3)
    assert len(corpus.utterances) >= 500
    assert abs(factor_correlation(corpus)) < 0.05


def test_speaker_traits_unique_across_corpus():
    spec = SyntheticCorpusConfig(
        n_accents=6, n_speakers_per_accent=4, utterances_per_speaker=1
    )
    corpus = generate_synthetic_corpus(spec, seed=5)
    trait_tuples = set()
    for utt in corpus.utterances:
        trait_tuples.add(
            (utt.factors["f0_hz"], utt.factors["speaker_factor"], utt.factors["tilt_db_per_khz"])
        )
    assert len(trait_tuples) == 24


@pytest.fixture(scope="module")
def small_corpus_features():
    cfg = MelConfig()
    spec = SyntheticCorpusConfig(
        n_accents=4, n_speakers_per_accent=4, utterances_per_speaker=12
    )
    corpus = generate_synthetic_corpus(spec, seed=7)
    table = build_vocab([u.transcript for u in corpus.utterances])
    env, pros, speakers, accents = [], [], [], []
    for utt in corpus.utterances:
        audio, _ = utt.load_audio()
        mel = compute_mel(audio, cfg)
        env.append(envelope_features(mel))
        pros.append(prosody_features(mel, tokenize(utt.transcript, table).length))
        speakers.append(utt.speaker_id)
        accents.append(utt.accent_id)
    return np.array(env), np.array(pros), np.array(speakers), np.array(accents)


def test_envelope_classifier_separates_speakers(small_corpus_features):
    env, _, speakers, _ = small_corpus_features
    train = np.arange(len(speakers)) % 2 == 0
    probe = FactorProbe.fit(env[train], speakers[train])
    assert probe.accuracy(env[~train], speakers[~train]) > 0.9


def test_prosody_classifier_separates_accents(small_corpus_features):
    _, pros, _, accents = small_corpus_features
    train = np.arange(len(accents)) % 2 == 0
    probe = FactorProbe.fit(pros[train], accents[train])
    assert probe.accuracy(pros[~train], accents[~train]) > 0.9
