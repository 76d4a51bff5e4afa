"""Shared fixtures. The mini corpus backs fast trainer/pipeline tests; the
desk-scale run (full training) is built once per session for acceptance."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from accent_tts.config import ExperimentConfig
from accent_tts.corpus import make_splits
from accent_tts.dsp import compute_mel
from accent_tts.synthetic import generate_synthetic_corpus
from accent_tts.text import build_vocab
from accent_tts.trainer import PreparedDataset
from accent_tts.util import derive_seed

torch.set_num_threads(1)


def make_config(run_dir, **kwargs) -> ExperimentConfig:
    tree = {"run_dir": str(run_dir), "seed": 1234, "workers": 1}
    tree.update(kwargs)
    return ExperimentConfig.model_validate(tree)


MINI_DATA = {
    "synthetic": {"n_accents": 2, "n_speakers_per_accent": 2, "utterances_per_speaker": 40}
}

MINI_MODEL = {
    "d_z": 8,
    "d_txt": 32,
    "posterior_channels": 4,
    "posterior_dim": 16,
    "prenet_dim": 16,
    "decoder_dim": 32,
    "attention_dim": 16,
    "attention_location_filters": 4,
    "attention_location_kernel": 7,
    "postnet_channels": 8,
}

TINY_MODEL = {
    "d_z": 2,
    "d_txt": 4,
    "posterior_channels": 2,
    "posterior_dim": 3,
    "prenet_dim": 3,
    "decoder_dim": 3,
    "attention_dim": 2,
    "attention_location_filters": 2,
    "attention_location_kernel": 3,
    "postnet_channels": 2,
    "postnet_kernel": 3,
    "prenet_dropout": 0.0,
}

# matches the desk-scale experiment of the acceptance criteria
DESK_DATA = {
    "synthetic": {"n_accents": 4, "n_speakers_per_accent": 4, "utterances_per_speaker": 50}
}
DESK_TRAINING = {"batch_size": 32, "total_steps": 2000, "checkpoint_every": 1000}


@pytest.fixture(scope="session")
def mini_config(tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("mini_run")
    return make_config(
        run_dir,
        data=MINI_DATA,
        model=MINI_MODEL,
        training={"batch_size": 8, "total_steps": 30, "checkpoint_every": 0},
        eval={"max_utterances": 4},
    )


@pytest.fixture(scope="session")
def mini_prepared(mini_config) -> PreparedDataset:
    corpus = generate_synthetic_corpus(
        mini_config.data.synthetic, derive_seed(mini_config.seed, "corpus")
    )
    mels = {}
    for utt in corpus.utterances:
        audio, _ = utt.load_audio()
        mels[utt.id] = compute_mel(audio, mini_config.data.mel).values
    splits = make_splits(corpus, derive_seed(mini_config.seed, "splits"))
    table = build_vocab([u.transcript for u in corpus.utterances])
    return PreparedDataset(corpus, splits, table, mels)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """Full desk-scale pipeline: prepare + 2000-step train + bank + eval.

    Built once; acceptance criteria 4, 5, 6 and the latent-structure property
    tests all read from it. Takes on the order of 15 minutes on one CPU core.
    """
    from accent_tts import pipeline

    run_dir = tmp_path_factory.mktemp("desk_run")
    config = make_config(
        run_dir,
        data=DESK_DATA,
        training=DESK_TRAINING,
        eval={"max_utterances": 16},
    )
    prepare_out = pipeline.cmd_prepare(config)
    train_out = pipeline.cmd_train(config)
    bank_out = pipeline.cmd_bank(config)
    eval_out = pipeline.cmd_eval(config)
    return {
        "config": config,
        "prepare": prepare_out,
        "train": train_out,
        "bank": bank_out,
        "eval": eval_out,
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(20240831)
