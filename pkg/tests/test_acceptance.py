"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 4-6 share the session-scoped desk-scale run (2000 training steps on
the 4x4x50 synthetic corpus); everything else is self-contained. Run with
`pytest tests/test_acceptance.py -s` to see the per-criterion lines as they
complete.
"""

import functools
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
import torch
import yaml

from accent_tts import pipeline
from accent_tts.bank import accumulate_bank, build_bank, load_bank
from accent_tts.config import ExperimentConfig, KLScheduleConfig
from accent_tts.errors import AccentTtsError
from accent_tts.evaluate import teacher_forced_mcd
from accent_tts.losses import kl_coefficient
from accent_tts.metrics import McepSequence, dtw_align, mcd, wer, word_edit_distance
from accent_tts.models import build_model, load_checkpoint, save_checkpoint
from accent_tts.probes import FactorProbe, envelope_features, prosody_features
from accent_tts.synthesis import synthesize
from accent_tts.text import tokenize
from accent_tts.trainer import TrainBatch, training_loss

from conftest import MINI_DATA, MINI_MODEL, TINY_MODEL, make_config


def report(number: int, name: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {number:2d} [{status}] {name}" + (f" :: {detail}" if detail else ""))
    assert passed, f"criterion {number} ({name}): {detail}"


# -- 1 -------------------------------------------------------------------------

def test_criterion_1_kl_schedule_exactness():
    start = time.time()
    sched = KLScheduleConfig()
    points = {0: 1e-4, 10_000: 1e-4, 22_500: 3e-4, 35_000: 5e-4, 150_000: 5e-4}
    errors = {s: abs(kl_coefficient(s, sched) - v) for s, v in points.items()}
    elapsed = time.time() - start
    ok = all(e <= 1e-12 for e in errors.values()) and elapsed < 1.0
    report(1, "KL schedule exactness", ok,
           f"max abs err {max(errors.values()):.2e}, {elapsed:.3f}s")


# -- 2 -------------------------------------------------------------------------

def test_criterion_2_kl_closed_form_vs_monte_carlo():
    start = time.time()
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(20):
        mu = rng.standard_normal(8)
        logvar = rng.uniform(-1.5, 1.0, 8)
        closed = 0.5 * np.sum(mu**2 + np.exp(logvar) - 1.0 - logvar)
        sigma = np.exp(0.5 * logvar)
        z = mu + sigma * rng.standard_normal((1_000_000, 8))
        log_q = -0.5 * (((z - mu) / sigma) ** 2 + logvar + math.log(2 * math.pi)).sum(axis=1)
        log_p = -0.5 * (z**2 + math.log(2 * math.pi)).sum(axis=1)
        rel = abs((log_q - log_p).mean() - closed) / closed
        worst = max(worst, rel)
    elapsed = time.time() - start
    ok = worst < 0.01 and elapsed < 60
    report(2, "KL closed form vs Monte-Carlo oracle", ok,
           f"worst rel err {worst:.4%}, {elapsed:.1f}s")


# -- 3 -------------------------------------------------------------------------

def test_criterion_3_gradient_correctness():
    start = time.time()
    config = make_config("/tmp/unused", data={"mel": {"n_mels": 1}}, model=TINY_MODEL)
    torch.manual_seed(202408)
    model = build_model(config, vocab_size=5, n_speakers=2, n_accents=2).double()
    with torch.no_grad():
        for p in model.parameters():
            p.normal_(mean=0.0, std=0.3)
    model.eval()

    gen = torch.Generator().manual_seed(55)
    batch = TrainBatch(
        ids=["u0"],
        tokens=torch.tensor([[2, 3, 1]]),
        token_lengths=torch.tensor([3]),
        mel=torch.randn(1, 5, 1, dtype=torch.float64, generator=gen) - 2.0,
        mel_lengths=torch.tensor([5]),
        y_s=torch.tensor([[1.0, 0.0]], dtype=torch.float64),
        y_a=torch.tensor([[0.0, 1.0]], dtype=torch.float64),
    )
    noise = (
        torch.randn(1, 2, dtype=torch.float64, generator=gen),
        torch.randn(1, 2, dtype=torch.float64, generator=gen),
    )

    def loss_value():
        loss, _ = training_loss(model, batch, beta=1e-4, config=config, noise=noise)
        return loss

    model.zero_grad()
    loss_value().backward()
    analytic = {n: p.grad.clone() for n, p in model.named_parameters()}

    worst, n_checked = 0.0, 0
    for name, p in model.named_parameters():
        flat = p.data.view(-1)
        grad = analytic[name].view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            h = 1e-4 * max(1.0, abs(orig))
            flat[i] = orig + h
            up = float(loss_value().detach())
            flat[i] = orig - h
            down = float(loss_value().detach())
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            a = grad[i].item()
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-6))
            n_checked += 1
    elapsed = time.time() - start
    ok = worst < 1e-4 and elapsed < 60
    report(3, "gradient correctness (central differences)", ok,
           f"{n_checked} params, worst rel err {worst:.2e}, {elapsed:.1f}s")


# -- 4/5/6 share the desk-scale training run ------------------------------------

def test_criterion_4_desk_scale_trainability(desk_run):
    config = desk_run["config"]
    log_path = Path(config.run_dir) / "train_log.jsonl"
    rows = [json.loads(line) for line in open(log_path)]
    first = next(r for r in rows if r["step"] == 1)["total"]
    final = rows[-1]["total"]
    loss_ok = final <= 0.5 * first

    # mid-run sanity stated alongside the criterion: loss after 500 steps
    mid = next(r for r in rows if r["step"] == 500)["total"]
    assert mid < first

    ds = pipeline.load_prepared(config)
    subset = sorted(
        ds.splits.all_ids("val_seen") + ds.splits.all_ids("val_unseen")
    )[: config.eval.max_utterances]
    ckpt_dir = Path(config.run_dir) / "checkpoints"
    trained = load_checkpoint(ckpt_dir / f"ckpt_{config.training.total_steps:06d}.pt")
    untrained = load_checkpoint(ckpt_dir / "ckpt_000000.pt")
    mcd_trained = teacher_forced_mcd(trained, ds, subset, config.eval.mcd_order)
    mcd_untrained = teacher_forced_mcd(untrained, ds, subset, config.eval.mcd_order)
    mcd_ok = mcd_trained <= 0.7 * mcd_untrained

    # the report reproduces the objective-evaluation table structure
    eval_report = desk_run["eval"]["report"]
    columns_ok = eval_report["columns"] == ["GT", "CVAE-NL", "CVAE-L", "GMVAE", "GST"]

    report(4, "desk-scale trainability", loss_ok and mcd_ok and columns_ok,
           f"loss {first:.2f}->{final:.2f} ({final / first:.1%}), "
           f"tf-MCD {mcd_untrained:.2f}->{mcd_trained:.2f} ({mcd_trained / mcd_untrained:.1%})")


def test_criterion_5_disentanglement_structure(desk_run):
    sep = desk_run["eval"]["report"]["extras"]["separability"]
    ok = (
        sep["z_s_by_speaker"] > sep["z_s_by_accent"]
        and sep["z_a_by_accent"] > sep["z_a_by_speaker"]
        and sep["z_s_by_speaker"] > 0.1
        and sep["z_a_by_accent"] > 0.1
    )
    report(5, "disentanglement structure", ok,
           f"z_s: spk {sep['z_s_by_speaker']:.3f} vs acc {sep['z_s_by_accent']:.3f}; "
           f"z_a: acc {sep['z_a_by_accent']:.3f} vs spk {sep['z_a_by_speaker']:.3f}")


def test_combined_embeddings_at_least_as_separable(desk_run):
    # companion structural property of the same latent analysis
    sep = desk_run["eval"]["report"]["extras"]["separability"]
    assert sep["combined_by_speaker"] >= sep["z_s_by_speaker"] - 1e-9


def test_criterion_6_conversion_vs_identity(desk_run):
    config = desk_run["config"]
    ds = pipeline.load_prepared(config)
    corpus = ds.corpus
    trained = load_checkpoint(
        Path(config.run_dir) / "checkpoints" / f"ckpt_{config.training.total_steps:06d}.pt"
    )
    bank = load_bank(Path(config.run_dir) / "bank.atbank")

    env, pros, spks, accs = [], [], [], []
    for uid in ds.splits.all_ids("train"):
        utt = corpus.utterance(uid)
        mel = ds.mels[uid]
        env.append(envelope_features(mel))
        pros.append(prosody_features(mel, len(ds.tokens[uid])))
        spks.append(utt.speaker_id)
        accs.append(utt.accent_id)
    speaker_probe = FactorProbe.fit(np.array(env), spks)
    accent_probe = FactorProbe.fit(np.array(pros), accs)

    speaker = corpus.speakers[0]
    native = corpus.speaker_accent[speaker]
    targets = [a for a in corpus.accents if a != native]
    accent_hits = speaker_hits = total = 0
    for uid in ds.splits.test[speaker]:
        utt = corpus.utterance(uid)
        for target in targets:
            result = synthesize(
                utt.transcript, speaker, target, bank, trained,
                config.inference, config.data.mel, vocode_audio=False,
            )
            n_tokens = tokenize(utt.transcript, trained.symbol_table).length
            accent_hits += accent_probe.predict(prosody_features(result.mel, n_tokens))[0] == target
            speaker_hits += speaker_probe.predict(envelope_features(result.mel))[0] == speaker
            total += 1
    accent_rate = accent_hits / total
    speaker_rate = speaker_hits / total
    chance = 1.0 / len(corpus.speakers)
    ok = accent_rate >= 0.6 and speaker_rate >= 2 * chance
    report(6, "conversion effectiveness vs identity retention", ok,
           f"accent {accent_rate:.1%} (floor 60%), "
           f"speaker {speaker_rate:.1%} (floor {2 * chance:.1%}) over {total} conversions")


# -- 7 -------------------------------------------------------------------------

def test_criterion_7_variant_contract(tmp_path, mini_prepared):
    start = time.time()
    corpus = mini_prepared.corpus
    results = {}
    for variant in ("cvae_nl", "cvae_l"):
        config = make_config(
            tmp_path / variant, data=MINI_DATA, model={**MINI_MODEL, "variant": variant}
        )
        torch.manual_seed(9)
        model = build_model(
            config, mini_prepared.table.size, len(corpus.speakers), len(corpus.accents)
        )
        path = tmp_path / f"{variant}.pt"
        save_checkpoint(path, model, config, mini_prepared.table,
                        corpus.speakers, corpus.accents, step=0)
        loaded = load_checkpoint(path)
        # identical accent means pin z while the label input changes
        rng = np.random.default_rng(3)
        shared_accent = rng.standard_normal(config.model.d_z)
        rows = []
        for spk in corpus.speakers:
            rows.append((spk, corpus.speaker_accent[spk],
                         rng.standard_normal(config.model.d_z), shared_accent))
        bank = accumulate_bank(rows, loaded.checkpoint_id, config.model.d_z,
                               loaded.vocab_hash())
        outs = []
        for accent in corpus.accents[:2]:
            outs.append(synthesize(
                "ba tu", corpus.speakers[0], accent, bank, loaded,
                config.inference, config.data.mel, vocode_audio=False,
            ).mel.values)
        results[variant] = outs
    nl_a, nl_b = results["cvae_nl"]
    identical = nl_a.shape == nl_b.shape and np.array_equal(nl_a, nl_b)
    l_a, l_b = results["cvae_l"]
    n = min(len(l_a), len(l_b))
    differs = np.abs(l_a[:n] - l_b[:n]).max() > 0
    elapsed = time.time() - start
    ok = identical and differs and elapsed < 60
    report(7, "variant contract (label path)", ok,
           f"NL bit-identical: {identical}, L max |diff| > 0: {differs}, {elapsed:.1f}s")


# -- 8 -------------------------------------------------------------------------

def test_criterion_8_metric_oracles(rng):
    def oracle_dtw(a, b):
        dist = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))

        @functools.lru_cache(maxsize=None)
        def best(i, j):
            if i == 0 and j == 0:
                return dist[0, 0]
            opts = []
            if i > 0:
                opts.append(best(i - 1, j))
            if j > 0:
                opts.append(best(i, j - 1))
            if i > 0 and j > 0:
                opts.append(best(i - 1, j - 1))
            return dist[i, j] + min(opts)

        return best(len(a) - 1, len(b) - 1)

    worst_dtw = 0.0
    for _ in range(50):
        n, m = rng.integers(2, 21, size=2)
        a = rng.standard_normal((int(n), 13))
        b = rng.standard_normal((int(m), 13))
        _, cost = dtw_align(a, b)
        worst_dtw = max(worst_dtw, abs(cost - oracle_dtw(a, b)))
    dtw_ok = worst_dtw <= 1e-9

    base = rng.standard_normal((12, 14))
    shifted = base.copy()
    shifted[:, 1] += 1.0
    closed = mcd(McepSequence(base), McepSequence(shifted))
    mcd_ok = abs(closed - 6.141851) <= 1e-3

    def oracle_edit(ref, hyp):
        @functools.lru_cache(maxsize=None)
        def solve(i, j):
            if i == len(ref):
                return len(hyp) - j
            if j == len(hyp):
                return len(ref) - i
            if ref[i] == hyp[j]:
                return solve(i + 1, j + 1)
            return 1 + min(solve(i + 1, j), solve(i, j + 1), solve(i + 1, j + 1))

        return solve(0, 0)

    vocab = ["a", "b", "c", "d", "e"]
    wer_ok = True
    for _ in range(100):
        ref = tuple(vocab[i] for i in rng.integers(0, 5, int(rng.integers(1, 7))))
        hyp = tuple(vocab[i] for i in rng.integers(0, 5, int(rng.integers(0, 7))))
        if word_edit_distance(list(ref), list(hyp)) != oracle_edit(ref, hyp):
            wer_ok = False
            break
    ok = dtw_ok and mcd_ok and wer_ok
    report(8, "metric oracles (DTW, MCD, WER)", ok,
           f"dtw max |diff| {worst_dtw:.1e}, c1-offset {closed:.4f} dB, wer exact: {wer_ok}")


# -- 9 -------------------------------------------------------------------------

def test_criterion_9_pipeline_determinism(tmp_path):
    os.environ["SOURCE_DATE_EPOCH"] = "1700000000"
    try:
        artifacts = []
        for run in ("a", "b"):
            config = make_config(
                tmp_path / run,
                data=MINI_DATA,
                model=MINI_MODEL,
                training={"batch_size": 8, "total_steps": 100, "checkpoint_every": 0},
                inference={"max_frames": 80, "griffin_lim_iters": 8},
                eval={"max_utterances": 2, "tsne": {"max_iter": 260}},
            )
            pipeline.cmd_prepare(config)
            pipeline.cmd_train(config)
            pipeline.cmd_bank(config)
            pipeline.cmd_eval(config)
            run_dir = Path(config.run_dir)
            artifacts.append({
                "log": (run_dir / "train_log.jsonl").read_text(),
                "report": (run_dir / "eval" / "report.json").read_text(),
                "table": (run_dir / "eval" / "report.txt").read_text(),
            })
    finally:
        os.environ.pop("SOURCE_DATE_EPOCH", None)
    same_log = artifacts[0]["log"] == artifacts[1]["log"]
    same_report = artifacts[0]["report"] == artifacts[1]["report"]
    same_table = artifacts[0]["table"] == artifacts[1]["table"]
    ok = same_log and same_report and same_table
    report(9, "pipeline determinism (workers=1, fixed seed)", ok,
           f"loss trajectories identical: {same_log}, reports identical: {same_report}")


# -- 10 ------------------------------------------------------------------------

def test_criterion_10_bank_partition_algebra(rng):
    d_z = 16
    rows = [
        (f"s{i % 5}", f"a{i % 3}", rng.standard_normal(d_z), rng.standard_normal(d_z))
        for i in range(60)
    ]
    full = accumulate_bank(rows, "ck", d_z, "vh")
    worst = 0.0
    for cut in (7, 23, 41):
        p1 = accumulate_bank(rows[:cut], "ck", d_z, "vh")
        p2 = accumulate_bank(rows[cut:], "ck", d_z, "vh")
        for table, key_set in (("speaker", full.speaker_means), ("accent", full.accent_means)):
            for key in key_set:
                getter = (lambda b, k: b.speaker(k)) if table == "speaker" else (
                    lambda b, k: b.accent(k))
                counts1 = p1.speaker_counts if table == "speaker" else p1.accent_counts
                counts2 = p2.speaker_counts if table == "speaker" else p2.accent_counts
                n1, n2 = counts1.get(key, 0), counts2.get(key, 0)
                merged = np.zeros(d_z)
                if n1:
                    merged += n1 * getter(p1, key)
                if n2:
                    merged += n2 * getter(p2, key)
                merged /= n1 + n2
                worst = max(worst, np.abs(merged - getter(full, key)).max())
    ok = worst <= 1e-9
    report(10, "bank partition algebra", ok, f"max per-element deviation {worst:.2e}")
