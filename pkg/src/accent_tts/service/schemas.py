"""Request/response models for the pipeline service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class ConfigPayload(BaseModel):
    """How commands receive their experiment configuration.

    Either a server-side YAML path, an inline config tree, or both (inline
    keys win); dotted `overrides` are applied last.
    """

    model_config = ConfigDict(extra="forbid")

    config_path: Optional[str] = None
    config: Optional[dict] = None
    overrides: dict = Field(default_factory=dict)


class PrepareRequest(ConfigPayload):
    pass


class PrepareResponse(BaseModel):
    manifest_path: str
    splits_path: str
    features_path: str
    vocab_path: str
    n_utterances: int
    n_speakers: int
    n_accents: int


class SynthCorpusRequest(ConfigPayload):
    pass


class SynthCorpusResponse(BaseModel):
    manifest_path: str
    corpus_dir: str


class TrainRequest(ConfigPayload):
    pass


class TrainResponse(BaseModel):
    checkpoint_path: str
    log_path: str
    steps: int
    first_loss: float
    final_loss: float


class BankRequest(ConfigPayload):
    checkpoint: Optional[str] = None


class BankResponse(BaseModel):
    bank_path: str
    checkpoint_path: str
    speakers: list[str]
    accents: list[str]
    n_utterances: int


class SynthRequest(ConfigPayload):
    text: str
    speaker: str
    accent: str
    checkpoint: Optional[str] = None
    bank_path: Optional[str] = None
    out_name: Optional[str] = None
    save_mel: bool = False
    save_alignment: bool = False
    sampling_seed: int = 0


class SynthResponse(BaseModel):
    wav_path: str
    text: str
    speaker: str
    accent: str
    n_frames: int
    n_tokens: int
    truncated: bool
    checkpoint: str


class EvalRequest(ConfigPayload):
    checkpoint: Optional[str] = None
    bank_path: Optional[str] = None


class EvalResponse(BaseModel):
    report_path: str
    table_path: str
    tsne_paths: dict[str, str]
    report: dict


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorRecord(BaseModel):
    """Machine-readable error payload mirrored by the CLI on stderr."""

    error: str
    kind: str
    command: Optional[str] = None
