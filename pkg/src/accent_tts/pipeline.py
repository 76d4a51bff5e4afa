"""End-to-end pipeline operations behind the service and the CLI.

Every command reads/writes a fixed run-directory layout and drops a provenance
record (config hash, seed, code version) next to its outputs, so identical
inputs and seed reproduce identical artifacts.

    run_dir/
      corpus/                 synthetic WAVs + manifest.txt
      splits.json  vocab.json  features.npz
      checkpoints/ckpt_NNNNNN.pt   train_log.jsonl
      bank.atbank
      synth/<name>.{wav,json,mel.npy,align.npy}
      eval/report.{json,txt}  tsne_{z_s,z_a,combined}.tsv
      plots/
      provenance/<command>.json
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bank import build_bank, load_bank, save_bank
from .config import ExperimentConfig
from .corpus import Corpus, SplitAssignment, load_manifest, make_splits, write_manifest
from .dsp import compute_mel, write_wav
from .errors import AccentTtsError, ArtifactMissingError
from .evaluate import (
    build_report, collect_embeddings, export_tsne_tables, free_running_eval,
    make_asr, save_report, separability_summary, teacher_forced_mcd,
)
from .metrics import wer
from .models import load_checkpoint
from .synthesis import synthesize
from .synthetic import generate_synthetic_corpus
from .text import SymbolTable, build_vocab
from .trainer import PreparedDataset, Trainer
from .util import derive_seed, sha256_hex, utc_date


def _provenance(config: ExperimentConfig, command: str, inputs: dict) -> dict:
    return {
        "command": command,
        "config_hash": config.hash(),
        "seed": config.seed,
        "version": __version__,
        "date": utc_date(),
        "inputs": inputs,
    }


def _write_provenance(config: ExperimentConfig, command: str, inputs: dict) -> None:
    pdir = Path(config.run_dir) / "provenance"
    pdir.mkdir(parents=True, exist_ok=True)
    record = _provenance(config, command, inputs)
    (pdir / f"{command}.json").write_text(json.dumps(record, indent=1, sort_keys=True))


def materialize_corpus(config: ExperimentConfig, out_dir: Path) -> Path:
    """Write the synthetic corpus as WAV files + manifest; returns manifest path."""
    spec = config.data.synthetic
    seed = spec.seed if spec.seed is not None else derive_seed(config.seed, "corpus")
    corpus = generate_synthetic_corpus(spec, seed)
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    workers = max(1, config.workers)

    def render(utt):
        audio, sr = utt.load_audio()
        path = out_dir / "wav" / f"{utt.id}.wav"
        write_wav(path, audio, sr)
        return path

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(render, corpus.utterances))
    else:
        paths = [render(u) for u in corpus.utterances]
    for utt, path in zip(corpus.utterances, paths):
        utt.audio_path = path.resolve()
    manifest_path = out_dir / "manifest.txt"
    write_manifest(manifest_path, corpus.utterances)
    # factor ground truth rides alongside for probes and sanity checks
    factors = {u.id: u.factors for u in corpus.utterances}
    (out_dir / "factors.json").write_text(json.dumps(factors, indent=0, sort_keys=True))
    return manifest_path


def cmd_synth_corpus(config: ExperimentConfig) -> dict:
    corpus_dir = Path(config.run_dir) / "corpus"
    manifest = materialize_corpus(config, corpus_dir)
    _write_provenance(config, "synth-corpus", {"manifest": str(manifest)})
    return {"manifest_path": str(manifest), "corpus_dir": str(corpus_dir)}


def _manifest_path(config: ExperimentConfig) -> Path:
    if config.data.source == "manifest":
        return Path(config.data.manifest_path)
    return Path(config.run_dir) / "corpus" / "manifest.txt"


def cmd_prepare(config: ExperimentConfig) -> dict:
    """Corpus + splits + mel cache + symbol table."""
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = _manifest_path(config)
    if config.data.source == "synthetic" and not manifest_path.exists():
        materialize_corpus(config, run_dir / "corpus")
    if not manifest_path.exists():
        raise ArtifactMissingError(manifest_path, "synth-corpus")
    corpus = load_manifest(manifest_path)

    splits = make_splits(corpus, derive_seed(config.seed, "splits"))
    splits.save(run_dir / "splits.json")

    table = build_vocab([u.transcript for u in corpus.utterances])
    vocab = {
        "symbol_table": table.to_json(),
        "speakers": corpus.speakers,
        "accents": corpus.accents,
    }
    (run_dir / "vocab.json").write_text(json.dumps(vocab, indent=1, sort_keys=True))

    mel_cfg = config.data.mel
    workers = max(1, config.workers)

    def featurize(utt):
        audio, sr = utt.load_audio()
        if sr != mel_cfg.sample_rate:
            raise AccentTtsError(
                f"{utt.id}: sample rate {sr} != configured {mel_cfg.sample_rate}"
            )
        return utt.id, compute_mel(audio, mel_cfg).values

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            features = dict(pool.map(featurize, corpus.utterances))
    else:
        features = dict(featurize(u) for u in corpus.utterances)
    np.savez(run_dir / "features.npz", **features)

    _write_provenance(config, "prepare", {"manifest": str(manifest_path)})
    return {
        "manifest_path": str(manifest_path),
        "splits_path": str(run_dir / "splits.json"),
        "features_path": str(run_dir / "features.npz"),
        "vocab_path": str(run_dir / "vocab.json"),
        "n_utterances": len(corpus.utterances),
        "n_speakers": len(corpus.speakers),
        "n_accents": len(corpus.accents),
    }


def load_prepared(config: ExperimentConfig) -> PreparedDataset:
    run_dir = Path(config.run_dir)
    for name, producer in (
        ("splits.json", "prepare"), ("vocab.json", "prepare"), ("features.npz", "prepare"),
    ):
        if not (run_dir / name).exists():
            raise ArtifactMissingError(run_dir / name, producer)
    corpus = load_manifest(_manifest_path(config))
    splits = SplitAssignment.load(run_dir / "splits.json")
    vocab = json.loads((run_dir / "vocab.json").read_text())
    table = SymbolTable.from_json(vocab["symbol_table"])
    with np.load(run_dir / "features.npz") as npz:
        mels = {k: npz[k] for k in npz.files}
    return PreparedDataset(corpus, splits, table, mels)


def cmd_train(config: ExperimentConfig) -> dict:
    if config.training.total_steps < 1:
        raise AccentTtsError("nothing to train: training.total_steps is 0")
    dataset = load_prepared(config)
    trainer = Trainer(config, dataset)
    run_dir = Path(config.run_dir)
    log_path = run_dir / "train_log.jsonl"
    final = trainer.run(run_dir / "checkpoints", log_path)
    with open(log_path, "r", encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    _write_provenance(config, "train", {"checkpoint": str(final)})
    return {
        "checkpoint_path": str(final),
        "log_path": str(log_path),
        "steps": len(rows),
        "first_loss": rows[0]["total"],
        "final_loss": rows[-1]["total"],
    }


def _resolve(path_str: str | None, default: Path, producer: str) -> Path:
    path = Path(path_str) if path_str else default
    if not path.exists():
        raise ArtifactMissingError(path, producer)
    return path


def default_checkpoint(config: ExperimentConfig) -> Path:
    ckpt_dir = Path(config.run_dir) / "checkpoints"
    candidates = sorted(ckpt_dir.glob("ckpt_*.pt"))
    if not candidates:
        raise ArtifactMissingError(ckpt_dir / "ckpt_*.pt", "train")
    return candidates[-1]


def cmd_bank(config: ExperimentConfig, checkpoint: str | None = None) -> dict:
    dataset = load_prepared(config)
    ckpt_path = (
        Path(checkpoint) if checkpoint else default_checkpoint(config)
    )
    if not ckpt_path.exists():
        raise ArtifactMissingError(ckpt_path, "train")
    loaded = load_checkpoint(ckpt_path)
    # the bank draws on the full validation set: seen and unseen halves
    val_ids = dataset.splits.all_ids("val_seen") + dataset.splits.all_ids("val_unseen")
    bank = build_bank(loaded, dataset, val_ids)
    bank_path = Path(config.run_dir) / "bank.atbank"
    save_bank(bank, bank_path)
    _write_provenance(config, "bank", {"checkpoint": str(ckpt_path)})
    return {
        "bank_path": str(bank_path),
        "checkpoint_path": str(ckpt_path),
        "speakers": sorted(bank.speaker_means),
        "accents": sorted(bank.accent_means),
        "n_utterances": int(sum(bank.speaker_counts.values())),
    }


def cmd_synth(
    config: ExperimentConfig,
    text: str,
    speaker: str,
    accent: str,
    checkpoint: str | None = None,
    bank_path: str | None = None,
    out_name: str | None = None,
    save_mel: bool = False,
    save_alignment: bool = False,
    sampling_seed: int = 0,
) -> dict:
    ckpt_path = Path(checkpoint) if checkpoint else default_checkpoint(config)
    if not ckpt_path.exists():
        raise ArtifactMissingError(ckpt_path, "train")
    bank_file = _resolve(bank_path, Path(config.run_dir) / "bank.atbank", "bank")
    loaded = load_checkpoint(ckpt_path)
    bank = load_bank(bank_file)
    result = synthesize(
        text, speaker, accent, bank, loaded, config.inference, config.data.mel,
        sampling_seed=sampling_seed,
    )
    out_dir = Path(config.run_dir) / "synth"
    out_dir.mkdir(parents=True, exist_ok=True)
    name = out_name or f"{speaker}_{accent}_{sha256_hex(text.encode())[:8]}"
    wav_path = out_dir / f"{name}.wav"
    write_wav(wav_path, result.waveform, result.sample_rate)
    if save_mel:
        np.save(out_dir / f"{name}.mel.npy", result.mel.values)
    if save_alignment:
        np.save(out_dir / f"{name}.align.npy", result.alignment)
    meta = {
        **result.metadata,
        "text": text,
        "wav_path": str(wav_path),
        "checkpoint": loaded.checkpoint_id,
    }
    (out_dir / f"{name}.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    _write_provenance(config, "synth", {"wav": str(wav_path)})
    return meta


def cmd_eval(
    config: ExperimentConfig,
    checkpoint: str | None = None,
    bank_path: str | None = None,
) -> dict:
    dataset = load_prepared(config)
    ckpt_path = Path(checkpoint) if checkpoint else default_checkpoint(config)
    if not ckpt_path.exists():
        raise ArtifactMissingError(ckpt_path, "train")
    bank_file = _resolve(bank_path, Path(config.run_dir) / "bank.atbank", "bank")
    loaded = load_checkpoint(ckpt_path)
    bank = load_bank(bank_file)
    eval_dir = Path(config.run_dir) / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)

    val_ids = dataset.splits.all_ids("val_seen") + dataset.splits.all_ids("val_unseen")
    latent = collect_embeddings(loaded, dataset, val_ids)
    silhouettes = separability_summary(latent)
    tsne_paths = export_tsne_tables(latent, eval_dir, config)

    subset = sorted(val_ids)[: config.eval.max_utterances]
    tf_mcd = teacher_forced_mcd(loaded, dataset, subset, config.eval.mcd_order)
    fr_mcd, asr_items = free_running_eval(loaded, dataset, bank, config, subset)

    asr = make_asr(config)
    refs = [ref for _, ref in asr_items]
    hyps = asr.transcribe(asr_items)
    model_wer = wer(refs, hyps)
    gt_items = []
    for uid in subset:
        utt = dataset.corpus.utterance(uid)
        audio, _ = utt.load_audio()
        gt_items.append((audio, utt.transcript))
    gt_wer = wer(refs, asr.transcribe(gt_items))

    report = build_report(
        config,
        checkpoint_id=loaded.checkpoint_id,
        dataset_name=_manifest_path(config).name,
        mcd_value=fr_mcd,
        wer_value=model_wer,
        gt_wer=gt_wer,
        extras={
            "mcd_teacher_forced": round(tf_mcd, 4),
            "separability": {k: round(v, 6) for k, v in silhouettes.items()},
            "n_eval_utterances": len(subset),
            "variant": config.model.variant,
        },
    )
    save_report(report, eval_dir / "report.json", eval_dir / "report.txt")
    _write_provenance(config, "eval", {"report": str(eval_dir / "report.json")})
    return {
        "report_path": str(eval_dir / "report.json"),
        "table_path": str(eval_dir / "report.txt"),
        "tsne_paths": {k: str(v) for k, v in tsne_paths.items()},
        "report": report,
    }
