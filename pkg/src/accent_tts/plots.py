"""Figure emission from logs and evaluation exports. Static files only."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import AccentTtsError

# marker cycle for per-speaker shapes, as in scatter figures where colour is
# the accent and shape is the speaker
_MARKERS = "osv^<>DdPpXh*H8+x1234"
_PNG_METADATA = {"Software": "accent-tts"}


@dataclass
class PlotSpec:
    input_path: Path
    kind: Literal["training_curve", "tsne_scatter", "table"]
    output_path: Path


def render(spec: PlotSpec) -> dict:
    """Render one artifact; returns metadata about what was drawn.

    Outputs are byte-deterministic: same spec and inputs give identical files.
    """
    input_path = Path(spec.input_path)
    if not input_path.exists():
        raise AccentTtsError(f"plot input not found: {input_path}")
    out = Path(spec.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if spec.kind == "training_curve":
        return _render_training_curve(input_path, out)
    if spec.kind == "tsne_scatter":
        return _render_tsne_scatter(input_path, out)
    if spec.kind == "table":
        return _render_table(input_path, out)
    raise AccentTtsError(f"unknown plot kind {spec.kind!r}")


def _render_training_curve(log_path: Path, out: Path) -> dict:
    steps, totals, recons, kls = [], [], [], []
    with open(log_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            steps.append(row["step"])
            totals.append(row["total"])
            recons.append(row["recon"])
            kls.append(row["kl_s"] + row["kl_a"])
    if not steps:
        raise AccentTtsError(f"empty training log: {log_path}")
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax1.plot(steps, totals, label="total", lw=0.8)
    ax1.plot(steps, recons, label="reconstruction", lw=0.8)
    ax1.set_ylabel("loss")
    ax1.legend()
    ax2.plot(steps, kls, label="kl_s + kl_a", lw=0.8, color="tab:red")
    ax2.set_xlabel("step")
    ax2.set_ylabel("KL")
    ax2.legend()
    fig.savefig(out, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)
    return {"kind": "training_curve", "n_points": len(steps), "output": str(out)}


def _render_tsne_scatter(tsv_path: Path, out: Path) -> dict:
    rows = []
    with open(tsv_path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split("\t")
        idx = {name: i for i, name in enumerate(header)}
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            rows.append(
                (
                    parts[idx["speaker"]],
                    parts[idx["accent"]],
                    float(parts[idx["x"]]),
                    float(parts[idx["y"]]),
                )
            )
    if not rows:
        raise AccentTtsError(f"empty t-SNE table: {tsv_path}")
    speakers = sorted({r[0] for r in rows})
    accents = sorted({r[1] for r in rows})
    cmap = plt.get_cmap("tab10")
    colour = {a: cmap(i % 10) for i, a in enumerate(accents)}
    marker = {s: _MARKERS[i % len(_MARKERS)] for i, s in enumerate(speakers)}
    fig, ax = plt.subplots(figsize=(7, 6))
    for spk in speakers:
        for acc in accents:
            pts = [(x, y) for s, a, x, y in rows if s == spk and a == acc]
            if not pts:
                continue
            xs, ys = zip(*pts)
            ax.scatter(
                xs, ys, c=[colour[acc]], marker=marker[spk], s=28,
                label=f"{spk} ({acc})", edgecolors="none",
            )
    ax.set_xlabel("t-SNE 1")
    ax.set_ylabel("t-SNE 2")
    ax.legend(fontsize=6, ncol=2, markerscale=0.9)
    fig.savefig(out, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)
    return {
        "kind": "tsne_scatter",
        "n_points": len(rows),
        "n_speaker_markers": len(speakers),
        "n_accent_colours": len(accents),
        "output": str(out),
    }


def _render_table(report_path: Path, out: Path) -> dict:
    from .evaluate import format_report_table

    report = json.loads(Path(report_path).read_text())
    out.write_text(format_report_table(report))
    return {"kind": "table", "n_rows": len(report["rows"]), "output": str(out)}
