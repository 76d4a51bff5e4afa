"""Variational reference encoder with separate speaker and accent branches.

A shared trunk (strided 2-D convolutions over the mel, mean-pooled over time)
feeds two disjoint linear heads. Each head sees the pooled features plus its
own one-hot label (speaker label to the speaker head, accent label to the
accent head) and emits a diagonal-Gaussian posterior (mu, logvar).

Time padding inside the trunk replicates edge frames, so a constant mel of any
length pools to the same statistics; label routing keeps the two branch
posteriors structurally independent above the trunk.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..config import ModelConfig
from ..errors import AudioError


@dataclass
class ConditionLabel:
    speaker: int
    accent: int
    n_speakers: int
    n_accents: int

    def one_hot_speaker(self, dtype=torch.float32) -> torch.Tensor:
        return F.one_hot(torch.tensor(self.speaker), self.n_speakers).to(dtype)

    def one_hot_accent(self, dtype=torch.float32) -> torch.Tensor:
        return F.one_hot(torch.tensor(self.accent), self.n_accents).to(dtype)


@dataclass
class PosteriorOutput:
    mu_s: torch.Tensor  # [B, d_z]
    logvar_s: torch.Tensor
    mu_a: torch.Tensor
    logvar_a: torch.Tensor


def reparameterize(
    mu: torch.Tensor, logvar: torch.Tensor, generator: torch.Generator | None = None
) -> torch.Tensor:
    """z = mu + exp(logvar / 2) * n with n ~ N(0, I) from the given generator."""
    if mu.shape != logvar.shape:
        raise ValueError(f"shape mismatch: {tuple(mu.shape)} vs {tuple(logvar.shape)}")
    noise = torch.empty_like(mu).normal_(generator=generator)
    return mu + torch.exp(0.5 * logvar) * noise


class PosteriorEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig, n_mels: int, n_speakers: int, n_accents: int):
        super().__init__()
        self.cfg = cfg
        self.n_mels = n_mels
        self.n_speakers = n_speakers
        self.n_accents = n_accents
        ch = cfg.posterior_channels
        # stride 2 in time and mel; time padding is applied manually (replicate)
        self.convs = nn.ModuleList(
            [
                nn.Conv2d(1, ch, kernel_size=3, stride=(2, 2), padding=(0, 1)),
                nn.Conv2d(ch, ch, kernel_size=3, stride=(2, 2), padding=(0, 1)),
            ]
        )
        mel_out = n_mels
        for _ in self.convs:
            mel_out = (mel_out + 2 - 3) // 2 + 1
        self.project = nn.Linear(ch * mel_out, cfg.posterior_dim)
        self.speaker_head = nn.Linear(cfg.posterior_dim + n_speakers, 2 * cfg.d_z)
        self.accent_head = nn.Linear(cfg.posterior_dim + n_accents, 2 * cfg.d_z)
        # zero-init heads: the untrained posterior is exactly the prior
        for head in (self.speaker_head, self.accent_head):
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    @staticmethod
    def _reduce_length(length: torch.Tensor, n_layers: int) -> torch.Tensor:
        for _ in range(n_layers):
            length = torch.div(length - 1, 2, rounding_mode="floor") + 1
        return length

    def trunk(self, mel: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """Pooled trunk features [B, posterior_dim] from mel [B, T, n_mels].

        The input is mean-centered per utterance (over valid frames), so the
        reference path carries spectro-temporal dynamics; static identity
        enters through the label inputs of the heads instead.
        """
        if mel.dim() != 3 or mel.size(1) < 1:
            raise AudioError("reference mel must be [B, T >= 1, n_mels]")
        frame_mask = (
            torch.arange(mel.size(1), device=mel.device)[None, :] < lengths[:, None]
        ).to(mel.dtype)
        counts = frame_mask.sum(dim=1).clamp(min=1)
        mean = (mel * frame_mask.unsqueeze(-1)).sum(dim=1) / counts.unsqueeze(-1)
        mel = mel - mean.unsqueeze(1)
        x = mel.unsqueeze(1)  # [B, 1, T, M]
        out_len = lengths
        for conv in self.convs:
            x = F.pad(x, (0, 0, 1, 1), mode="replicate")  # time only
            x = F.relu(conv(x))
            out_len = self._reduce_length(out_len, 1)
        b, c, t, m = x.shape
        frames = x.permute(0, 2, 1, 3).reshape(b, t, c * m)
        frames = self.project(frames)  # [B, T', posterior_dim]
        mask = (
            torch.arange(t, device=mel.device)[None, :] < out_len[:, None]
        ).to(frames.dtype)
        pooled = (frames * mask.unsqueeze(-1)).sum(dim=1) / mask.sum(dim=1, keepdim=True)
        return pooled

    def forward(
        self, mel: torch.Tensor, lengths: torch.Tensor, y_s: torch.Tensor, y_a: torch.Tensor
    ) -> PosteriorOutput:
        pooled = self.trunk(mel, lengths)
        s_out = self.speaker_head(torch.cat([pooled, y_s], dim=-1))
        a_out = self.accent_head(torch.cat([pooled, y_a], dim=-1))
        d = self.cfg.d_z
        clamp = dict(min=self.cfg.logvar_min, max=self.cfg.logvar_max)
        return PosteriorOutput(
            mu_s=s_out[:, :d],
            logvar_s=torch.clamp(s_out[:, d:], **clamp),
            mu_a=a_out[:, :d],
            logvar_a=torch.clamp(a_out[:, d:], **clamp),
        )

    def encode_utterance(self, mel_values, label: ConditionLabel) -> PosteriorOutput:
        """Single-utterance path (no padding involved), eval semantics."""
        device = next(self.parameters()).device
        dtype = next(self.parameters()).dtype
        mel = torch.as_tensor(mel_values, dtype=dtype, device=device).unsqueeze(0)
        lengths = torch.tensor([mel.size(1)], device=device)
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                out = self(
                    mel,
                    lengths,
                    label.one_hot_speaker(dtype).unsqueeze(0).to(device),
                    label.one_hot_accent(dtype).unsqueeze(0).to(device),
                )
        finally:
            self.train(was_training)
        return out
