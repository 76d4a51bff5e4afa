"""Evaluation harness pieces that don't need a trained model."""

import sys

import numpy as np
import pytest

from accent_tts.config import ExperimentConfig, load_config
from accent_tts.evaluate import (
    CommandAsr,
    MockAsr,
    build_report,
    format_report_table,
)


def test_mock_asr_echoes_references():
    asr = MockAsr()
    items = [(np.zeros(10), "hello world"), (np.zeros(10), "more text")]
    assert asr.transcribe(items) == ["hello world", "more text"]


def test_command_asr_runs_external_process(tmp_path):
    script = tmp_path / "fake_asr.py"
    script.write_text("print('recognized words')\n")
    asr = CommandAsr(f"{sys.executable} {script} {{wav}}", sample_rate=22050)
    out = asr.transcribe([(np.zeros(2048, dtype=np.float32), "ref")])
    assert out == ["recognized words"]


def test_report_shape_mirrors_objective_table():
    config = ExperimentConfig.model_validate({"model": {"variant": "cvae_l"}})
    report = build_report(
        config, checkpoint_id="abc", dataset_name="m.txt",
        mcd_value=8.123456, wer_value=0.25, gt_wer=0.0, extras={},
    )
    assert report["columns"] == ["GT", "CVAE-NL", "CVAE-L", "GMVAE", "GST"]
    assert report["rows"]["MCD"]["CVAE-L"] == 8.1235
    assert report["rows"]["MCD"]["CVAE-NL"] is None
    assert report["rows"]["MCD"]["GT"] is None  # no MCD against itself
    assert report["rows"]["WER"]["GT"] == 0.0
    table = format_report_table(report)
    lines = table.strip().splitlines()
    assert lines[0].split("\t") == ["Metric", "GT", "CVAE-NL", "CVAE-L", "GMVAE", "GST"]
    assert lines[1].split("\t")[1] == "-"  # GT MCD renders as a dash


def test_report_date_honors_source_date_epoch(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    config = ExperimentConfig()
    report = build_report(config, "ck", "d", 1.0, 0.0, 0.0, {})
    assert report["metadata"]["date"] == "1970-01-01"


def test_env_var_path_override(monkeypatch, tmp_path):
    monkeypatch.setenv("ACCENT_TTS_RUN_DIR", str(tmp_path / "env_run"))
    cfg = load_config(inline={"seed": 5})
    assert str(cfg.run_dir) == str(tmp_path / "env_run")
