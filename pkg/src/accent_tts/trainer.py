"""Optimization loop: batching, the combined objective, checkpoints, logging.

Determinism contract: with workers=1 the trainer runs single-threaded and all
randomness (init, batch order, posterior sampling, dropout) derives from the
experiment seed, so two runs produce identical loss trajectories.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import ExperimentConfig
from .corpus import Corpus, SplitAssignment
from .errors import AccentTtsError, TrainingDivergedError
from .losses import LossBreakdown, kl_coefficient, kl_divergence, recon_loss, stop_loss
from .models import AccentTts, build_model, save_checkpoint
from .text import PAD_ID, SymbolTable, tokenize
from .util import derive_seed


@dataclass
class TrainBatch:
    ids: list[str]
    tokens: torch.Tensor  # [B, T_txt] long
    token_lengths: torch.Tensor
    mel: torch.Tensor  # [B, T_mel, n_mels]
    mel_lengths: torch.Tensor
    y_s: torch.Tensor  # [B, n_speakers] one-hot
    y_a: torch.Tensor


class PreparedDataset:
    """Tokenized transcripts plus cached mel features for a corpus."""

    def __init__(self, corpus: Corpus, splits: SplitAssignment, table: SymbolTable,
                 mels: dict[str, np.ndarray]):
        self.corpus = corpus
        self.splits = splits
        self.table = table
        self.mels = mels
        self.tokens = {
            u.id: tokenize(u.transcript, table).ids for u in corpus.utterances
        }

    def batch(self, ids: list[str], dtype=torch.float32) -> TrainBatch:
        corpus = self.corpus
        utts = [corpus.utterance(i) for i in ids]
        tok = [self.tokens[i] for i in ids]
        mels = [self.mels[i] for i in ids]
        t_txt = max(len(t) for t in tok)
        t_mel = max(m.shape[0] for m in mels)
        n_mels = mels[0].shape[1]
        tokens = torch.full((len(ids), t_txt), PAD_ID, dtype=torch.long)
        mel = torch.empty(len(ids), t_mel, n_mels, dtype=dtype)
        for i, (t, m) in enumerate(zip(tok, mels)):
            tokens[i, : len(t)] = torch.tensor(t, dtype=torch.long)
            src = torch.as_tensor(m, dtype=dtype)
            mel[i, : src.shape[0]] = src
            mel[i, src.shape[0] :] = src[-1]  # edge-replicate padding
        y_s = torch.zeros(len(ids), len(corpus.speakers), dtype=dtype)
        y_a = torch.zeros(len(ids), len(corpus.accents), dtype=dtype)
        for i, u in enumerate(utts):
            y_s[i, corpus.speaker_index(u.speaker_id)] = 1.0
            y_a[i, corpus.accent_index(u.accent_id)] = 1.0
        return TrainBatch(
            ids=list(ids),
            tokens=tokens,
            token_lengths=torch.tensor([len(t) for t in tok]),
            mel=mel,
            mel_lengths=torch.tensor([m.shape[0] for m in mels]),
            y_s=y_s,
            y_a=y_a,
        )


def training_loss(
    model: AccentTts,
    batch: TrainBatch,
    beta: float,
    config: ExperimentConfig,
    generator: torch.Generator | None = None,
    noise: tuple[torch.Tensor, torch.Tensor] | None = None,
):
    """Combined objective on one batch; returns (loss tensor, LossBreakdown)."""
    post, out = model(
        batch.tokens, batch.token_lengths, batch.mel, batch.mel_lengths,
        batch.y_s, batch.y_a, generator=generator, noise=noise,
    )
    t = out.mel_pre.size(1)
    frame_mask = (
        torch.arange(t, device=batch.mel.device)[None, :] < batch.mel_lengths[:, None]
    ).to(out.mel_pre.dtype)
    norm = config.training.recon_norm
    recon = recon_loss(out.mel_pre, batch.mel, frame_mask, norm) + recon_loss(
        out.mel_post, batch.mel, frame_mask, norm
    )
    kl_s, kl_a = kl_divergence(post)
    stop = stop_loss(out.stop_logits, batch.mel_lengths, config.training.stop_pos_weight)
    loss = recon + beta * (kl_s + kl_a) + stop
    breakdown = LossBreakdown.from_terms(
        recon=float(recon.detach()), kl_s=float(kl_s.detach()),
        kl_a=float(kl_a.detach()), stop=float(stop.detach()), beta=float(beta),
    )
    return loss, breakdown


def train_step(
    model: AccentTts,
    optimizer: torch.optim.Optimizer,
    batch: TrainBatch,
    step: int,
    config: ExperimentConfig,
    generator: torch.Generator | None = None,
) -> LossBreakdown:
    """One optimizer update; `step` counts previously completed updates."""
    beta = kl_coefficient(step, config.training.kl)
    model.train()
    try:
        loss, breakdown = training_loss(model, batch, beta, config, generator=generator)
    except AccentTtsError as exc:
        # non-finite activations surface as term-level errors mid-forward
        raise TrainingDivergedError(step, batch.ids) from exc
    if not torch.isfinite(loss):
        raise TrainingDivergedError(step, batch.ids, breakdown.to_json())
    optimizer.zero_grad()
    loss.backward()
    if config.training.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(model.parameters(), config.training.grad_clip)
    optimizer.step()
    return breakdown


class Trainer:
    def __init__(self, config: ExperimentConfig, dataset: PreparedDataset):
        if config.training.total_steps < 1:
            raise AccentTtsError("nothing to train: total_steps must be >= 1")
        self.config = config
        self.dataset = dataset
        if config.workers == 1:
            torch.set_num_threads(1)
        torch.manual_seed(derive_seed(config.seed, "model-init"))
        corpus = dataset.corpus
        self.model = build_model(
            config, dataset.table.size, len(corpus.speakers), len(corpus.accents)
        )
        self.optimizer = torch.optim.Adam(
            self.model.parameters(), lr=config.training.learning_rate
        )
        self.sample_generator = torch.Generator().manual_seed(
            derive_seed(config.seed, "posterior-sampling")
        )
        self.batch_rng = random.Random(derive_seed(config.seed, "batch-order"))
        self.train_ids = dataset.splits.all_ids("train")
        if not self.train_ids:
            raise AccentTtsError("training split is empty")

    def _batches(self):
        order: list[str] = []
        while True:
            if len(order) < self.config.training.batch_size:
                epoch = self.train_ids[:]
                self.batch_rng.shuffle(epoch)
                order.extend(epoch)
            size = min(self.config.training.batch_size, len(order))
            yield order[:size]
            del order[:size]

    def run(self, checkpoint_dir: Path, log_path: Path):
        """Train for config.training.total_steps; returns final checkpoint path."""
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        corpus = self.dataset.corpus
        every = self.config.training.checkpoint_every

        def save(step):
            path = checkpoint_dir / f"ckpt_{step:06d}.pt"
            save_checkpoint(
                path, self.model, self.config, self.dataset.table,
                corpus.speakers, corpus.accents, step, self.optimizer,
            )
            return path

        save(0)  # untrained reference point
        batches = self._batches()
        final = None
        with open(log_path, "w", encoding="utf-8") as log:
            for step in range(self.config.training.total_steps):
                batch = self.dataset.batch(next(batches))
                breakdown = train_step(
                    self.model, self.optimizer, batch, step, self.config,
                    generator=self.sample_generator,
                )
                row = {"step": step + 1, **breakdown.to_json()}
                log.write(json.dumps(row) + "\n")
                done = step + 1
                if done == self.config.training.total_steps or (
                    every > 0 and done % every == 0
                ):
                    final = save(done)
        return final
