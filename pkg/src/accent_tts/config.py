"""Experiment configuration: one validated schema drives every command.

Unknown keys are rejected everywhere so a typo in a config file fails loudly
instead of silently running with defaults.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .util import config_hash


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MelConfig(StrictModel):
    sample_rate: int = 22050
    n_mels: int = 80
    n_fft: int = 1024
    hop_length: int = 256
    win_length: int = 1024
    log_floor: float = 1e-5

    @model_validator(mode="after")
    def _check(self):
        if self.win_length > self.n_fft:
            raise ValueError("win_length must be <= n_fft")
        if self.hop_length <= 0 or self.hop_length > self.win_length:
            raise ValueError("hop_length must be in (0, win_length]")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        return self


class SyntheticCorpusConfig(StrictModel):
    n_accents: int = 4
    n_speakers_per_accent: int = 4
    utterances_per_speaker: int = 50
    seed: Optional[int] = None  # None -> derived from the experiment seed
    base_char_duration: float = 0.075
    duration_spread: float = 2.2  # ratio of slowest to fastest accent, around 1.0
    contour_depth: float = 0.3

    @model_validator(mode="after")
    def _check(self):
        for name in ("n_accents", "n_speakers_per_accent", "utterances_per_speaker"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.base_char_duration <= 0:
            raise ValueError("base_char_duration must be positive")
        return self


class DataConfig(StrictModel):
    source: Literal["synthetic", "manifest"] = "synthetic"
    manifest_path: Optional[Path] = None
    synthetic: SyntheticCorpusConfig = Field(default_factory=SyntheticCorpusConfig)
    mel: MelConfig = Field(default_factory=MelConfig)

    @model_validator(mode="after")
    def _check(self):
        if self.source == "manifest" and self.manifest_path is None:
            raise ValueError("manifest_path required when source is 'manifest'")
        return self


class ModelConfig(StrictModel):
    variant: Literal["cvae_nl", "cvae_l"] = "cvae_nl"
    d_z: int = 128
    d_txt: int = 256
    posterior_channels: int = 32
    posterior_dim: int = 128
    prenet_dim: int = 128
    decoder_dim: int = 256
    attention_dim: int = 128
    attention_location_filters: int = 16
    attention_location_kernel: int = 15
    reduction_factor: int = 2
    postnet_channels: int = 64
    postnet_kernel: int = 5
    prenet_dropout: float = 0.5
    logvar_min: float = -30.0
    logvar_max: float = 20.0

    @model_validator(mode="after")
    def _check(self):
        for name in (
            "d_z", "d_txt", "posterior_channels", "posterior_dim", "prenet_dim",
            "decoder_dim", "attention_dim", "attention_location_filters",
            "reduction_factor", "postnet_channels",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.attention_location_kernel % 2 != 1 or self.postnet_kernel % 2 != 1:
            raise ValueError("conv kernels must be odd")
        if not 0.0 <= self.prenet_dropout < 1.0:
            raise ValueError("prenet_dropout must be in [0, 1)")
        return self


class KLScheduleConfig(StrictModel):
    start_value: float = 1e-4
    end_value: float = 5e-4
    ramp_start_step: int = 10_000
    ramp_end_step: int = 35_000

    @model_validator(mode="after")
    def _check(self):
        if not 0 < self.start_value <= self.end_value:
            raise ValueError("require 0 < start_value <= end_value")
        if not 0 <= self.ramp_start_step < self.ramp_end_step:
            raise ValueError("require 0 <= ramp_start_step < ramp_end_step")
        return self


class TrainingConfig(StrictModel):
    batch_size: int = 64
    total_steps: int = 2000  # paper-scale runs use 150k; desk scale defaults small
    learning_rate: float = 1e-3
    grad_clip: float = 1.0
    checkpoint_every: int = 500
    stop_pos_weight: float = 5.0
    recon_norm: Literal["mse", "frobenius"] = "mse"
    kl: KLScheduleConfig = Field(default_factory=KLScheduleConfig)

    @model_validator(mode="after")
    def _check(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        return self


class InferenceConfig(StrictModel):
    vocoder: Literal["griffin_lim", "external"] = "griffin_lim"
    external_command: Optional[str] = None  # e.g. "myvocoder {mel} {wav}"
    griffin_lim_iters: int = 60
    denoise: bool = True
    sampling: bool = False
    sampling_sigma: float = 0.1  # stddev when drawing around bank means
    max_frames: int = 400

    @model_validator(mode="after")
    def _check(self):
        if self.vocoder == "external" and not self.external_command:
            raise ValueError("external_command required when vocoder is 'external'")
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")
        return self


class TsneConfig(StrictModel):
    perplexity: float = 15.0
    max_iter: int = 1000


class EvalConfig(StrictModel):
    max_utterances: int = 24  # cap per-metric corpus size for desk-scale runs
    mcd_order: int = 13
    asr: Literal["mock", "command"] = "mock"
    asr_command: Optional[str] = None
    tsne: TsneConfig = Field(default_factory=TsneConfig)

    @model_validator(mode="after")
    def _check(self):
        if self.asr == "command" and not self.asr_command:
            raise ValueError("asr_command required when asr is 'command'")
        if self.mcd_order < 1:
            raise ValueError("mcd_order must be >= 1")
        return self


class ExperimentConfig(StrictModel):
    run_dir: Path = Path("runs/default")
    seed: int = 1234
    workers: int = 1  # 1 guarantees the deterministic single-threaded mode
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    inference: InferenceConfig = Field(default_factory=InferenceConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    def dump(self) -> dict:
        return self.model_dump(mode="json")

    def hash(self) -> str:
        """Hash of the semantic configuration; output paths are excluded so
        identical experiments in different run directories hash the same."""
        tree = self.dump()
        tree.pop("run_dir", None)
        return config_hash(tree)


def _apply_override(tree: dict, dotted_key: str, value) -> None:
    keys = dotted_key.split(".")
    node = tree
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted_key}: {key} is not a section")
    node[keys[-1]] = value


def parse_override_value(raw: str):
    """CLI override values arrive as strings; interpret them as YAML scalars."""
    return yaml.safe_load(raw)


# environment overrides are restricted to paths
_ENV_PATH_OVERRIDES = {
    "ACCENT_TTS_RUN_DIR": "run_dir",
    "ACCENT_TTS_MANIFEST_PATH": "data.manifest_path",
}


def load_config(
    path: Optional[str | Path] = None,
    inline: Optional[dict] = None,
    overrides: Optional[dict] = None,
) -> ExperimentConfig:
    """Build a validated config from a YAML file and/or an inline dict.

    `overrides` maps dotted keys (e.g. "training.total_steps") onto values and
    wins over both sources; ACCENT_TTS_RUN_DIR / ACCENT_TTS_MANIFEST_PATH
    environment variables win over everything (paths only).
    """
    import os

    tree: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file must hold a mapping: {path}")
        tree.update(loaded)
    if inline:
        tree.update(inline)
    for key, value in (overrides or {}).items():
        _apply_override(tree, key, value)
    for env_name, dotted in _ENV_PATH_OVERRIDES.items():
        if os.environ.get(env_name):
            _apply_override(tree, dotted, os.environ[env_name])
    try:
        return ExperimentConfig.model_validate(tree)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
