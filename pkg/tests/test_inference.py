"""Reference-free synthesis surface: bank lookups, variants, determinism."""

import numpy as np
import pytest
import torch

from accent_tts.bank import accumulate_bank, build_bank
from accent_tts.errors import AccentTtsError, CompatibilityError
from accent_tts.models import build_model, load_checkpoint, save_checkpoint
from accent_tts.synthesis import synthesize, vocode


@pytest.fixture(scope="module")
def untrained_ckpt(tmp_path_factory, mini_config, mini_prepared):
    """Untrained model saved and reloaded through the real checkpoint path."""
    corpus = mini_prepared.corpus
    torch.manual_seed(0)
    model = build_model(
        mini_config, mini_prepared.table.size, len(corpus.speakers), len(corpus.accents)
    )
    path = tmp_path_factory.mktemp("ckpt") / "ckpt_000000.pt"
    save_checkpoint(
        path, model, mini_config, mini_prepared.table,
        corpus.speakers, corpus.accents, step=0,
    )
    return load_checkpoint(path)


@pytest.fixture(scope="module")
def mini_bank(untrained_ckpt, mini_prepared):
    splits = mini_prepared.splits
    val_ids = splits.all_ids("val_seen") + splits.all_ids("val_unseen")
    return build_bank(untrained_ckpt, mini_prepared, val_ids)


def test_build_bank_covers_all_keys(mini_bank, mini_prepared):
    corpus = mini_prepared.corpus
    assert sorted(mini_bank.speaker_means) == corpus.speakers
    assert sorted(mini_bank.accent_means) == corpus.accents
    # 15 val_seen + 5 val_unseen per speaker
    assert all(c == 20 for c in mini_bank.speaker_counts.values())
    assert all(c == 40 for c in mini_bank.accent_counts.values())


def test_build_bank_deterministic(untrained_ckpt, mini_prepared):
    splits = mini_prepared.splits
    val_ids = splits.all_ids("val_seen") + splits.all_ids("val_unseen")
    a = build_bank(untrained_ckpt, mini_prepared, val_ids)
    b = build_bank(untrained_ckpt, mini_prepared, list(reversed(val_ids)))
    for spk in a.speaker_means:
        assert np.array_equal(a.speaker(spk), b.speaker(spk))


def test_synthesize_deterministic_without_sampling(untrained_ckpt, mini_bank, mini_config):
    corpus_speaker = untrained_ckpt.speakers[0]
    accent = untrained_ckpt.accents[0]
    a = synthesize("ba tu", corpus_speaker, accent, mini_bank, untrained_ckpt,
                   mini_config.inference, mini_config.data.mel)
    b = synthesize("ba tu", corpus_speaker, accent, mini_bank, untrained_ckpt,
                   mini_config.inference, mini_config.data.mel)
    assert np.array_equal(a.mel.values, b.mel.values)
    assert np.array_equal(a.waveform, b.waveform)


def test_synthesize_conversion_uses_target_accent_mean(untrained_ckpt, mini_prepared,
                                                       mini_config):
    # force distinct accent means so the lookup is observable
    corpus = mini_prepared.corpus
    rows = []
    rng = np.random.default_rng(4)
    d_z = mini_config.model.d_z
    for spk in corpus.speakers:
        acc = corpus.speaker_accent[spk]
        rows.append((spk, acc, rng.standard_normal(d_z), rng.standard_normal(d_z)))
    bank = accumulate_bank(
        rows, untrained_ckpt.checkpoint_id, d_z, untrained_ckpt.vocab_hash()
    )
    speaker = corpus.speakers[0]
    native = corpus.speaker_accent[speaker]
    other = next(a for a in corpus.accents if a != native)
    non_conversion = synthesize("ba tu", speaker, native, bank, untrained_ckpt,
                                mini_config.inference, mini_config.data.mel,
                                vocode_audio=False)
    conversion = synthesize("ba tu", speaker, other, bank, untrained_ckpt,
                            mini_config.inference, mini_config.data.mel,
                            vocode_audio=False)
    assert non_conversion.metadata["accent"] == native
    assert conversion.metadata["accent"] == other
    n = min(non_conversion.mel.n_frames, conversion.mel.n_frames)
    diff = np.abs(non_conversion.mel.values[:n] - conversion.mel.values[:n]).max()
    assert diff > 0  # different accent mean flows into the decoder


def test_synthesize_unknown_ids_rejected(untrained_ckpt, mini_bank, mini_config):
    with pytest.raises(AccentTtsError, match="unknown speaker"):
        synthesize("ba", "ghost", untrained_ckpt.accents[0], mini_bank, untrained_ckpt,
                   mini_config.inference, mini_config.data.mel)
    with pytest.raises(AccentTtsError, match="unknown accent"):
        synthesize("ba", untrained_ckpt.speakers[0], "ghost", mini_bank, untrained_ckpt,
                   mini_config.inference, mini_config.data.mel)


def test_bank_checkpoint_mismatch_rejected(untrained_ckpt, mini_bank, mini_config):
    stale = accumulate_bank(
        [("s", "a", np.zeros(mini_config.model.d_z), np.zeros(mini_config.model.d_z))],
        "someoneelse", mini_config.model.d_z, untrained_ckpt.vocab_hash(),
    )
    with pytest.raises(CompatibilityError, match="bank was built from checkpoint"):
        synthesize("ba", untrained_ckpt.speakers[0], untrained_ckpt.accents[0],
                   stale, untrained_ckpt, mini_config.inference, mini_config.data.mel)


def test_denoise_flag_bypass_bit_identical(untrained_ckpt, mini_bank, mini_config):
    inference_off = mini_config.inference.model_copy(update={"denoise": False})
    result = synthesize("ba tu", untrained_ckpt.speakers[0], untrained_ckpt.accents[0],
                        mini_bank, untrained_ckpt, inference_off, mini_config.data.mel)
    raw = vocode(result.mel, mini_config.data.mel, inference_off)
    assert np.array_equal(result.waveform, raw)


def test_sampling_mode_perturbs_latents(untrained_ckpt, mini_bank, mini_config):
    inference_sampled = mini_config.inference.model_copy(update={"sampling": True})
    a = synthesize("ba tu", untrained_ckpt.speakers[0], untrained_ckpt.accents[0],
                   mini_bank, untrained_ckpt, inference_sampled, mini_config.data.mel,
                   sampling_seed=1, vocode_audio=False)
    b = synthesize("ba tu", untrained_ckpt.speakers[0], untrained_ckpt.accents[0],
                   mini_bank, untrained_ckpt, inference_sampled, mini_config.data.mel,
                   sampling_seed=2, vocode_audio=False)
    same_seed = synthesize("ba tu", untrained_ckpt.speakers[0], untrained_ckpt.accents[0],
                           mini_bank, untrained_ckpt, inference_sampled,
                           mini_config.data.mel, sampling_seed=1, vocode_audio=False)
    n = min(a.mel.n_frames, b.mel.n_frames)
    assert np.abs(a.mel.values[:n] - b.mel.values[:n]).max() > 0
    assert np.array_equal(a.mel.values, same_seed.mel.values)
