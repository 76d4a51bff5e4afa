"""Training objective: reconstruction + annealed KL + stop prediction.

The KL coefficient follows a piecewise-linear ramp (constant, linear, constant)
and multiplies the closed-form KL of each diagonal-Gaussian branch against a
standard-normal prior. Reconstruction defaults to element-mean squared error;
the literal Frobenius norm is available behind `recon_norm: frobenius`.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .config import KLScheduleConfig
from .errors import AccentTtsError
from .models.posterior import PosteriorOutput


def kl_coefficient(step: int, schedule: KLScheduleConfig) -> float:
    """Coefficient at an optimizer step: start until ramp_start, linear to
    ramp_end, then constant at end_value."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if step <= schedule.ramp_start_step:
        return schedule.start_value
    if step >= schedule.ramp_end_step:
        return schedule.end_value
    frac = (step - schedule.ramp_start_step) / (
        schedule.ramp_end_step - schedule.ramp_start_step
    )
    return schedule.start_value + frac * (schedule.end_value - schedule.start_value)


def gaussian_kl(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, diag exp(logvar)) || N(0, I)) per batch item, summed over dims."""
    if not (torch.isfinite(mu).all() and torch.isfinite(logvar).all()):
        raise AccentTtsError("non-finite posterior statistics")
    return 0.5 * (mu.pow(2) + logvar.exp() - 1.0 - logvar).sum(dim=-1)


def kl_divergence(post: PosteriorOutput) -> tuple[torch.Tensor, torch.Tensor]:
    """Batch-mean KL for the speaker and accent branches."""
    return (
        gaussian_kl(post.mu_s, post.logvar_s).mean(),
        gaussian_kl(post.mu_a, post.logvar_a).mean(),
    )


def recon_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    mask: torch.Tensor | None = None,
    norm: str = "mse",
) -> torch.Tensor:
    """Distance between predicted and target mel of identical shape.

    mse: mean of squared differences over valid elements (length/batch
    invariant). frobenius: the literal L2 norm of the difference.
    """
    if pred.shape != target.shape:
        raise AccentTtsError(
            f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}"
        )
    diff = pred - target
    if mask is not None:
        diff = diff * mask.unsqueeze(-1)
        denom = mask.sum() * pred.size(-1)
    else:
        denom = torch.tensor(float(diff.numel()))
    if norm == "frobenius":
        return diff.pow(2).sum().sqrt()
    return diff.pow(2).sum() / denom


def stop_loss(
    stop_logits: torch.Tensor,
    mel_lengths: torch.Tensor,
    pos_weight: float,
) -> torch.Tensor:
    """Per-frame BCE against a target that is 1 from the last true frame on."""
    b, t = stop_logits.shape
    idx = torch.arange(t, device=stop_logits.device)[None, :]
    targets = (idx >= (mel_lengths[:, None] - 1)).to(stop_logits.dtype)
    valid = (idx < mel_lengths[:, None]).to(stop_logits.dtype)
    raw = F.binary_cross_entropy_with_logits(
        stop_logits,
        targets,
        pos_weight=torch.tensor(pos_weight, dtype=stop_logits.dtype),
        reduction="none",
    )
    return (raw * valid).sum() / valid.sum()


@dataclass
class LossBreakdown:
    recon: float
    kl_s: float
    kl_a: float
    stop: float
    beta: float
    total: float

    def __post_init__(self):
        # the decomposition identity must hold exactly for reported values
        expected = self.recon + self.beta * (self.kl_s + self.kl_a) + self.stop
        if self.total != expected:
            raise AccentTtsError("loss breakdown does not satisfy its decomposition")

    @classmethod
    def from_terms(cls, recon: float, kl_s: float, kl_a: float, stop: float, beta: float):
        total = recon + beta * (kl_s + kl_a) + stop
        return cls(recon=recon, kl_s=kl_s, kl_a=kl_a, stop=stop, beta=beta, total=total)

    def to_json(self) -> dict:
        return {
            "recon": self.recon,
            "kl_s": self.kl_s,
            "kl_a": self.kl_a,
            "stop": self.stop,
            "beta": self.beta,
            "total": self.total,
        }
