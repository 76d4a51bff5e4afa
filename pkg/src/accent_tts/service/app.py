"""FastAPI wrapper around the pipeline operations.

Commands run synchronously in the request (desk-scale runs are minutes at
most); package errors map to structured 4xx responses the thin CLI client can
relay verbatim.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..config import ExperimentConfig, load_config
from ..errors import AccentTtsError, ArtifactMissingError, ConfigError
from . import schemas


def _config_from(payload: schemas.ConfigPayload) -> ExperimentConfig:
    if payload.config_path is None and payload.config is None:
        raise ConfigError("provide config_path and/or an inline config")
    return load_config(
        path=payload.config_path, inline=payload.config, overrides=payload.overrides
    )


def create_app() -> FastAPI:
    app = FastAPI(title="accent-tts", version=__version__)

    @app.exception_handler(AccentTtsError)
    async def _package_error(request: Request, exc: AccentTtsError):
        status = 404 if isinstance(exc, ArtifactMissingError) else 422
        record = schemas.ErrorRecord(
            error=str(exc), kind=type(exc).__name__, command=request.url.path.strip("/")
        )
        return JSONResponse(status_code=status, content=record.model_dump())

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/synth-corpus", response_model=schemas.SynthCorpusResponse)
    def synth_corpus(req: schemas.SynthCorpusRequest):
        return pipeline.cmd_synth_corpus(_config_from(req))

    @app.post("/prepare", response_model=schemas.PrepareResponse)
    def prepare(req: schemas.PrepareRequest):
        return pipeline.cmd_prepare(_config_from(req))

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        return pipeline.cmd_train(_config_from(req))

    @app.post("/bank", response_model=schemas.BankResponse)
    def bank(req: schemas.BankRequest):
        return pipeline.cmd_bank(_config_from(req), checkpoint=req.checkpoint)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        meta = pipeline.cmd_synth(
            _config_from(req),
            text=req.text,
            speaker=req.speaker,
            accent=req.accent,
            checkpoint=req.checkpoint,
            bank_path=req.bank_path,
            out_name=req.out_name,
            save_mel=req.save_mel,
            save_alignment=req.save_alignment,
            sampling_seed=req.sampling_seed,
        )
        return schemas.SynthResponse(
            wav_path=meta["wav_path"],
            text=meta["text"],
            speaker=meta["speaker"],
            accent=meta["accent"],
            n_frames=meta["n_frames"],
            n_tokens=meta["n_tokens"],
            truncated=meta["truncated"],
            checkpoint=meta["checkpoint"],
        )

    @app.post("/eval", response_model=schemas.EvalResponse)
    def evaluate(req: schemas.EvalRequest):
        return pipeline.cmd_eval(
            _config_from(req), checkpoint=req.checkpoint, bank_path=req.bank_path
        )

    return app


app = create_app()
