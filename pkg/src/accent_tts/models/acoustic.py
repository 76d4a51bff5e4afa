"""Text-to-mel backbone: text encoder, latent conditioning, attention decoder.

The conditioning layer realizes the single-linear-layer scheme: every text
encoding row is concatenated with [z_s ; z_a] (plus the one-hot labels for the
label-conditioned variant) and projected back to the text width, so the
decoder is identical across variants. The decoder is a single-layer recurrent
net with location-sensitive attention and a reduction factor, plus a small
convolutional postnet producing a residual refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from ..config import ModelConfig


@dataclass
class DecoderOutput:
    mel_pre: torch.Tensor  # [B, T, n_mels] decoder output
    mel_post: torch.Tensor  # [B, T, n_mels] after postnet residual
    stop_logits: torch.Tensor  # [B, T]
    alignment: torch.Tensor  # [B, T, n_tokens]
    lengths: torch.Tensor  # [B] produced frames per item
    truncated: list[bool] = field(default_factory=list)


class TextEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab_size: int):
        super().__init__()
        d = cfg.d_txt
        self.embedding = nn.Embedding(vocab_size, max(d // 2, 1), padding_idx=0)
        self.conv = nn.Conv1d(max(d // 2, 1), d, kernel_size=5, padding=2)
        self.rnn = nn.GRU(d, max(d // 2, 1), batch_first=True, bidirectional=True)
        self.out_dim = 2 * max(d // 2, 1)
        self.fix = (
            nn.Linear(self.out_dim, d) if self.out_dim != d else nn.Identity()
        )

    def forward(self, tokens: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        x = self.embedding(tokens)  # [B, T, d/2]
        x = F.relu(self.conv(x.transpose(1, 2))).transpose(1, 2)
        packed = pack_padded_sequence(
            x, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        out, _ = self.rnn(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=tokens.size(1))
        return self.fix(out)


class ConditioningLayer(nn.Module):
    def __init__(self, cfg: ModelConfig, n_speakers: int, n_accents: int):
        super().__init__()
        self.variant = cfg.variant
        width = cfg.d_txt + 2 * cfg.d_z
        if cfg.variant == "cvae_l":
            width += n_speakers + n_accents
        self.input_width = width
        self.linear = nn.Linear(width, cfg.d_txt)

    def forward(self, text_enc, z_s, z_a, y_s=None, y_a=None):
        n_tokens = text_enc.size(1)
        parts = [text_enc, z_s.unsqueeze(1).expand(-1, n_tokens, -1),
                 z_a.unsqueeze(1).expand(-1, n_tokens, -1)]
        if self.variant == "cvae_l":
            if y_s is None or y_a is None:
                raise ValueError("cvae_l conditioning requires both labels")
            parts.append(y_s.unsqueeze(1).expand(-1, n_tokens, -1))
            parts.append(y_a.unsqueeze(1).expand(-1, n_tokens, -1))
        # cvae_nl: labels are not an input at all
        return self.linear(torch.cat(parts, dim=-1))


class LocationAttention(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        a = cfg.attention_dim
        self.query = nn.Linear(cfg.decoder_dim, a, bias=False)
        self.memory = nn.Linear(cfg.d_txt, a, bias=False)
        self.location_conv = nn.Conv1d(
            2,
            cfg.attention_location_filters,
            kernel_size=cfg.attention_location_kernel,
            padding=(cfg.attention_location_kernel - 1) // 2,
            bias=False,
        )
        self.location = nn.Linear(cfg.attention_location_filters, a, bias=False)
        self.score = nn.Linear(a, 1, bias=True)

    def process_memory(self, memory):
        return self.memory(memory)

    def forward(self, query, memory, processed, weights_cat, mask):
        loc = self.location(self.location_conv(weights_cat).transpose(1, 2))
        energy = self.score(torch.tanh(self.query(query).unsqueeze(1) + processed + loc))
        energy = energy.squeeze(-1).masked_fill(~mask, float("-inf"))
        weights = torch.softmax(energy, dim=1)
        context = torch.bmm(weights.unsqueeze(1), memory).squeeze(1)
        return context, weights


class Prenet(nn.Module):
    def __init__(self, cfg: ModelConfig, n_mels: int):
        super().__init__()
        self.fc1 = nn.Linear(n_mels, cfg.prenet_dim)
        self.fc2 = nn.Linear(cfg.prenet_dim, cfg.prenet_dim)
        self.dropout = nn.Dropout(cfg.prenet_dropout)

    def forward(self, x):
        x = self.dropout(F.relu(self.fc1(x)))
        return self.dropout(F.relu(self.fc2(x)))


class Postnet(nn.Module):
    def __init__(self, cfg: ModelConfig, n_mels: int):
        super().__init__()
        pad = (cfg.postnet_kernel - 1) // 2
        self.conv1 = nn.Conv1d(n_mels, cfg.postnet_channels, cfg.postnet_kernel, padding=pad)
        self.conv2 = nn.Conv1d(cfg.postnet_channels, n_mels, cfg.postnet_kernel, padding=pad)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)

    def forward(self, mel):
        x = torch.tanh(self.conv1(mel.transpose(1, 2)))
        return mel + self.conv2(x).transpose(1, 2)


class Decoder(nn.Module):
    def __init__(self, cfg: ModelConfig, n_mels: int, mel_floor: float):
        super().__init__()
        self.cfg = cfg
        self.n_mels = n_mels
        self.r = cfg.reduction_factor
        self.mel_floor = float(mel_floor)
        self.prenet = Prenet(cfg, n_mels)
        self.attention = LocationAttention(cfg)
        self.rnn = nn.GRUCell(cfg.prenet_dim + cfg.d_txt, cfg.decoder_dim)
        self.frame_proj = nn.Linear(cfg.decoder_dim + cfg.d_txt, n_mels * self.r)
        self.stop_proj = nn.Linear(cfg.decoder_dim + cfg.d_txt, self.r)
        # start near the silence floor so early training is not dominated
        # by learning a global offset
        nn.init.constant_(self.frame_proj.bias, self.mel_floor)

    def _init_state(self, memory):
        b, n_tokens, _ = memory.shape
        device, dtype = memory.device, memory.dtype
        return {
            "h": torch.zeros(b, self.cfg.decoder_dim, device=device, dtype=dtype),
            "context": torch.zeros(b, self.cfg.d_txt, device=device, dtype=dtype),
            "weights": torch.zeros(b, n_tokens, device=device, dtype=dtype),
            "cum_weights": torch.zeros(b, n_tokens, device=device, dtype=dtype),
        }

    def _step(self, prev_frame, state, memory, processed, mask):
        pre = self.prenet(prev_frame)
        h = self.rnn(torch.cat([pre, state["context"]], dim=-1), state["h"])
        weights_cat = torch.stack([state["weights"], state["cum_weights"]], dim=1)
        context, weights = self.attention(h, memory, processed, weights_cat, mask)
        hc = torch.cat([h, context], dim=-1)
        frames = self.frame_proj(hc).view(-1, self.r, self.n_mels)
        stops = self.stop_proj(hc)  # [B, r]
        state.update(
            h=h, context=context, weights=weights, cum_weights=state["cum_weights"] + weights
        )
        return frames, stops, weights

    def teacher_forced(self, memory, memory_mask, target):
        """Produce exactly target.size(1) frames; target is [B, T, n_mels]."""
        b, t, _ = target.shape
        steps = (t + self.r - 1) // self.r
        t_pad = steps * self.r
        if t_pad != t:
            target = torch.cat([target, target[:, -1:].expand(-1, t_pad - t, -1)], dim=1)
        go = torch.full(
            (b, 1, self.n_mels), self.mel_floor, device=target.device, dtype=target.dtype
        )
        # input to step i is the last frame of the previous group
        inputs = torch.cat([go, target[:, self.r - 1 : -1 : self.r]], dim=1)
        processed = self.attention.process_memory(memory)
        state = self._init_state(memory)
        frames, stops, aligns = [], [], []
        for i in range(steps):
            f, s, w = self._step(inputs[:, i], state, memory, processed, memory_mask)
            frames.append(f)
            stops.append(s)
            aligns.append(w.unsqueeze(1).expand(-1, self.r, -1))
        mel = torch.cat(frames, dim=1)[:, :t]
        stop_logits = torch.cat(stops, dim=1)[:, :t]
        alignment = torch.cat(aligns, dim=1)[:, :t]
        return mel, stop_logits, alignment

    def free_running(self, memory, memory_mask, max_frames: int):
        """Single-utterance generation; stops at the first frame whose stop
        probability exceeds 0.5, or flags truncation at max_frames."""
        assert memory.size(0) == 1, "free-running decode works on one utterance"
        go = torch.full(
            (1, self.n_mels), self.mel_floor, device=memory.device, dtype=memory.dtype
        )
        processed = self.attention.process_memory(memory)
        state = self._init_state(memory)
        prev = go
        frames, stops, aligns = [], [], []
        produced = 0
        truncated = True
        while produced < max_frames:
            f, s, w = self._step(prev, state, memory, processed, memory_mask)
            frames.append(f)
            stops.append(s)
            aligns.append(w.unsqueeze(1).expand(-1, self.r, -1))
            produced += self.r
            fired = torch.sigmoid(s[0]) > 0.5
            if bool(fired.any()):
                overshoot = self.r - (int(fired.nonzero()[0, 0]) + 1)
                produced -= overshoot
                truncated = False
                break
            prev = f[:, -1]
        produced = min(produced, max_frames)
        mel = torch.cat(frames, dim=1)[:, :produced]
        stop_logits = torch.cat(stops, dim=1)[:, :produced]
        alignment = torch.cat(aligns, dim=1)[:, :produced]
        return mel, stop_logits, alignment, produced, truncated
