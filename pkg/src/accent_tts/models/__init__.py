"""Model assembly: variational reference encoder + conditioned text-to-mel."""

from __future__ import annotations

import hashlib
from pathlib import Path

import torch
from torch import nn

from ..config import ExperimentConfig, ModelConfig
from ..errors import CompatibilityError
from ..text import SymbolTable
from ..util import canonical_json
from .acoustic import ConditioningLayer, Decoder, DecoderOutput, Postnet, TextEncoder
from .posterior import ConditionLabel, PosteriorEncoder, PosteriorOutput, reparameterize

__all__ = [
    "AccentTts",
    "ConditionLabel",
    "PosteriorOutput",
    "DecoderOutput",
    "reparameterize",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_id",
]


class AccentTts(nn.Module):
    """End-to-end model; forward() is the teacher-forced training path."""

    def __init__(
        self,
        cfg: ModelConfig,
        vocab_size: int,
        n_mels: int,
        n_speakers: int,
        n_accents: int,
        mel_floor: float,
    ):
        super().__init__()
        self.cfg = cfg
        self.n_speakers = n_speakers
        self.n_accents = n_accents
        self.n_mels = n_mels
        self.mel_floor = float(mel_floor)
        self.posterior = PosteriorEncoder(cfg, n_mels, n_speakers, n_accents)
        self.text_encoder = TextEncoder(cfg, vocab_size)
        self.conditioning = ConditioningLayer(cfg, n_speakers, n_accents)
        self.decoder = Decoder(cfg, n_mels, mel_floor)
        self.postnet = Postnet(cfg, n_mels)

    def encode_and_sample(
        self, mel, mel_lengths, y_s, y_a, generator=None, noise=None
    ) -> tuple[PosteriorOutput, torch.Tensor, torch.Tensor]:
        post = self.posterior(mel, mel_lengths, y_s, y_a)
        if noise is not None:
            n_s, n_a = noise
            z_s = post.mu_s + torch.exp(0.5 * post.logvar_s) * n_s
            z_a = post.mu_a + torch.exp(0.5 * post.logvar_a) * n_a
        else:
            z_s = reparameterize(post.mu_s, post.logvar_s, generator)
            z_a = reparameterize(post.mu_a, post.logvar_a, generator)
        return post, z_s, z_a

    def forward(
        self,
        tokens,
        token_lengths,
        mel,
        mel_lengths,
        y_s,
        y_a,
        generator=None,
        noise=None,
    ):
        """Teacher-forced pass: returns (PosteriorOutput, DecoderOutput)."""
        post, z_s, z_a = self.encode_and_sample(
            mel, mel_lengths, y_s, y_a, generator=generator, noise=noise
        )
        text_enc = self.text_encoder(tokens, token_lengths)
        memory = self.conditioning(text_enc, z_s, z_a, y_s, y_a)
        token_mask = (
            torch.arange(tokens.size(1), device=tokens.device)[None, :]
            < token_lengths[:, None]
        )
        mel_pre, stop_logits, alignment = self.decoder.teacher_forced(
            memory, token_mask, mel
        )
        mel_post = self.postnet(mel_pre)
        out = DecoderOutput(
            mel_pre=mel_pre,
            mel_post=mel_post,
            stop_logits=stop_logits,
            alignment=alignment,
            lengths=mel_lengths,
            truncated=[False] * mel.size(0),
        )
        return post, out

    def generate(self, tokens, z_s, z_a, label: ConditionLabel | None, max_frames: int):
        """Free-running synthesis for one utterance with externally chosen z."""
        device = next(self.parameters()).device
        tokens_t = torch.as_tensor(tokens, dtype=torch.long, device=device).unsqueeze(0)
        lengths = torch.tensor([tokens_t.size(1)], device=device)
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                text_enc = self.text_encoder(tokens_t, lengths)
                y_s = y_a = None
                if self.cfg.variant == "cvae_l":
                    if label is None:
                        raise CompatibilityError("cvae_l generation needs labels")
                    y_s = label.one_hot_speaker().unsqueeze(0).to(device)
                    y_a = label.one_hot_accent().unsqueeze(0).to(device)
                memory = self.conditioning(
                    text_enc, z_s.reshape(1, -1), z_a.reshape(1, -1), y_s, y_a
                )
                mask = torch.ones(1, tokens_t.size(1), dtype=torch.bool, device=device)
                mel_pre, stop_logits, alignment, n_frames, truncated = (
                    self.decoder.free_running(memory, mask, max_frames)
                )
                mel_post = self.postnet(mel_pre)
        finally:
            self.train(was_training)
        return DecoderOutput(
            mel_pre=mel_pre,
            mel_post=mel_post,
            stop_logits=stop_logits,
            alignment=alignment,
            lengths=torch.tensor([n_frames]),
            truncated=[truncated],
        )


def build_model(config: ExperimentConfig, vocab_size, n_speakers, n_accents) -> AccentTts:
    import math

    return AccentTts(
        config.model,
        vocab_size=vocab_size,
        n_mels=config.data.mel.n_mels,
        n_speakers=n_speakers,
        n_accents=n_accents,
        mel_floor=math.log(config.data.mel.log_floor),
    )


def checkpoint_id(model: nn.Module, step: int, config_hash: str) -> str:
    """Stable id over parameter bytes + step + config, independent of file bytes."""
    digest = hashlib.sha256()
    digest.update(f"{config_hash}:{step}".encode())
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()[:16]


def save_checkpoint(
    path: str | Path,
    model: AccentTts,
    config: ExperimentConfig,
    symbol_table: SymbolTable,
    speakers: list[str],
    accents: list[str],
    step: int,
    optimizer=None,
) -> str:
    ckpt_id = checkpoint_id(model, step, config.hash())
    payload = {
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "step": step,
        "config": config.dump(),
        "symbol_table": symbol_table.to_json(),
        "speakers": speakers,
        "accents": accents,
        "variant": config.model.variant,
        "d_z": config.model.d_z,
        "checkpoint_id": ckpt_id,
    }
    torch.save(payload, str(path))
    return ckpt_id


class LoadedCheckpoint:
    def __init__(self, payload: dict):
        self.config = ExperimentConfig.model_validate(payload["config"])
        self.symbol_table = SymbolTable.from_json(payload["symbol_table"])
        self.speakers = list(payload["speakers"])
        self.accents = list(payload["accents"])
        self.step = payload["step"]
        self.checkpoint_id = payload["checkpoint_id"]
        self.optimizer_state = payload.get("optimizer_state")
        self.model = build_model(
            self.config, self.symbol_table.size, len(self.speakers), len(self.accents)
        )
        self.model.load_state_dict(payload["model_state"])
        self.model.eval()

    def vocab_hash(self) -> str:
        blob = canonical_json({"speakers": self.speakers, "accents": self.accents})
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    payload = torch.load(str(path), map_location="cpu", weights_only=False)
    return LoadedCheckpoint(payload)
