"""Corpus-level objective evaluation and latent-space analysis.

Produces a report that mirrors the standard objective-evaluation table layout
(columns GT / CVAE-NL / CVAE-L / GMVAE / GST) with values filled in only for
the ground truth and the evaluated variant; baseline columns stay dashes. Full
L2Arctic-scale numbers are out of reach at desk scale by design, but the
format and metric definitions are identical.
"""

from __future__ import annotations

import json
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .bank import EmbeddingBank
from .config import ExperimentConfig
from .dsp import MelSpectrogram, write_wav
from .errors import AccentTtsError
from .metrics import mcd, mcep_extract, separability, tsne_export, wer
from .models import LoadedCheckpoint, ConditionLabel
from .synthesis import synthesize
from .trainer import PreparedDataset
from .util import derive_seed, utc_date

TABLE_COLUMNS = ["GT", "CVAE-NL", "CVAE-L", "GMVAE", "GST"]
VARIANT_COLUMN = {"cvae_nl": "CVAE-NL", "cvae_l": "CVAE-L"}


class MockAsr:
    """Plumbing stand-in: echoes the reference transcript for every item."""

    def transcribe(self, items):
        return [ref for _, ref in items]


class CommandAsr:
    """Shells out per utterance; the command must print the transcript."""

    def __init__(self, command: str, sample_rate: int):
        self.command = command
        self.sample_rate = sample_rate

    def transcribe(self, items):
        out = []
        with tempfile.TemporaryDirectory() as tmp:
            for i, (audio, _ref) in enumerate(items):
                wav = Path(tmp) / f"utt{i}.wav"
                write_wav(wav, audio, self.sample_rate)
                proc = subprocess.run(
                    self.command.format(wav=wav),
                    shell=True, capture_output=True, text=True,
                )
                if proc.returncode != 0:
                    raise AccentTtsError(f"ASR command failed: {proc.stderr[-300:]}")
                out.append(proc.stdout.strip())
        return out


def make_asr(config: ExperimentConfig):
    if config.eval.asr == "mock":
        return MockAsr()
    return CommandAsr(config.eval.asr_command, config.data.mel.sample_rate)


@dataclass
class LatentAnalysis:
    mu_s: np.ndarray
    mu_a: np.ndarray
    speakers: list[str]
    accents: list[str]
    utt_ids: list[str]

    @property
    def combined(self) -> np.ndarray:
        return np.concatenate([self.mu_s, self.mu_a], axis=1)


def collect_embeddings(
    loaded: LoadedCheckpoint, dataset: PreparedDataset, utterance_ids: list[str]
) -> LatentAnalysis:
    corpus = dataset.corpus
    mu_s, mu_a, speakers, accents, ids = [], [], [], [], []
    for uid in sorted(utterance_ids):
        utt = corpus.utterance(uid)
        label = ConditionLabel(
            speaker=corpus.speaker_index(utt.speaker_id),
            accent=corpus.accent_index(utt.accent_id),
            n_speakers=len(corpus.speakers),
            n_accents=len(corpus.accents),
        )
        post = loaded.model.posterior.encode_utterance(dataset.mels[uid], label)
        mu_s.append(post.mu_s[0].numpy())
        mu_a.append(post.mu_a[0].numpy())
        speakers.append(utt.speaker_id)
        accents.append(utt.accent_id)
        ids.append(uid)
    return LatentAnalysis(
        mu_s=np.stack(mu_s), mu_a=np.stack(mu_a),
        speakers=speakers, accents=accents, utt_ids=ids,
    )


def separability_summary(latent: LatentAnalysis) -> dict:
    return {
        "z_s_by_speaker": separability(latent.mu_s, latent.speakers),
        "z_s_by_accent": separability(latent.mu_s, latent.accents),
        "z_a_by_speaker": separability(latent.mu_a, latent.speakers),
        "z_a_by_accent": separability(latent.mu_a, latent.accents),
        "combined_by_speaker": separability(latent.combined, latent.speakers),
        "combined_by_accent": separability(latent.combined, latent.accents),
    }


def export_tsne_tables(
    latent: LatentAnalysis, out_dir: Path, config: ExperimentConfig
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = derive_seed(config.seed, "tsne")
    paths = {}
    for name, emb in (
        ("z_s", latent.mu_s), ("z_a", latent.mu_a), ("combined", latent.combined)
    ):
        coords = tsne_export(
            emb, seed=seed,
            perplexity=config.eval.tsne.perplexity,
            max_iter=config.eval.tsne.max_iter,
        )
        path = out_dir / f"tsne_{name}.tsv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("utt_id\tspeaker\taccent\tx\ty\n")
            for i, uid in enumerate(latent.utt_ids):
                fh.write(
                    f"{uid}\t{latent.speakers[i]}\t{latent.accents[i]}"
                    f"\t{coords[i, 0]:.6f}\t{coords[i, 1]:.6f}\n"
                )
        paths[name] = path
    return paths


def teacher_forced_mcd(
    loaded: LoadedCheckpoint, dataset: PreparedDataset, utterance_ids: list[str],
    mcd_order: int = 13,
) -> float:
    """Reconstruction MCD with ground-truth frames fed back (z = posterior mean)."""
    model = loaded.model
    model.eval()
    vals = []
    for uid in sorted(utterance_ids):
        batch = dataset.batch([uid])
        zero = torch.zeros(1, loaded.config.model.d_z)
        with torch.no_grad():
            _, out = model(
                batch.tokens, batch.token_lengths, batch.mel, batch.mel_lengths,
                batch.y_s, batch.y_a, noise=(zero, zero),
            )
        pred = out.mel_post[0].numpy()
        ref = batch.mel[0].numpy()
        vals.append(mcd(mcep_extract(pred, mcd_order), mcep_extract(ref, mcd_order)))
    return float(np.mean(vals))


def free_running_eval(
    loaded: LoadedCheckpoint,
    dataset: PreparedDataset,
    bank: EmbeddingBank,
    config: ExperimentConfig,
    utterance_ids: list[str],
):
    """Synthesize each utterance in its native voice/accent; returns
    (mean DTW MCD vs ground truth, list of (audio, reference) for ASR)."""
    corpus = dataset.corpus
    mcds = []
    asr_items = []
    for uid in sorted(utterance_ids):
        utt = corpus.utterance(uid)
        result = synthesize(
            utt.transcript, utt.speaker_id, utt.accent_id, bank, loaded,
            config.inference, config.data.mel, vocode_audio=True,
        )
        ref_mcep = mcep_extract(dataset.mels[uid], config.eval.mcd_order)
        hyp_mcep = mcep_extract(result.mel, config.eval.mcd_order)
        mcds.append(mcd(hyp_mcep, ref_mcep))
        asr_items.append((result.waveform, utt.transcript))
    return float(np.mean(mcds)), asr_items


def build_report(
    config: ExperimentConfig,
    checkpoint_id: str,
    dataset_name: str,
    mcd_value: float,
    wer_value: float,
    gt_wer: float,
    extras: dict,
) -> dict:
    column = VARIANT_COLUMN[config.model.variant]
    rows = {
        "MCD": {c: None for c in TABLE_COLUMNS},
        "WER": {c: None for c in TABLE_COLUMNS},
    }
    rows["MCD"][column] = round(mcd_value, 4)
    rows["WER"][column] = round(wer_value, 4)
    rows["WER"]["GT"] = round(gt_wer, 4)
    return {
        "metadata": {
            "checkpoint": checkpoint_id,
            "dataset": dataset_name,
            "date": utc_date(),
        },
        "columns": TABLE_COLUMNS,
        "rows": rows,
        "extras": extras,
    }


def format_report_table(report: dict) -> str:
    """Plain-text table in the objective-evaluation layout."""
    cols = report["columns"]
    lines = ["Metric\t" + "\t".join(cols)]
    for metric, values in report["rows"].items():
        cells = []
        for c in cols:
            v = values.get(c)
            cells.append("-" if v is None else f"{v:.4f}")
        lines.append(metric + "\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"


def save_report(report: dict, json_path: Path, table_path: Path) -> None:
    Path(json_path).write_text(json.dumps(report, indent=1, sort_keys=True))
    Path(table_path).write_text(format_report_table(report))
