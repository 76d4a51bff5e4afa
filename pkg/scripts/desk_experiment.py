"""Dev driver: run the full desk-scale pipeline and print criterion checks."""

import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, "/root/pkg/src")

from accent_tts.config import ExperimentConfig
from accent_tts import pipeline
from accent_tts.bank import load_bank
from accent_tts.models import load_checkpoint
from accent_tts.dsp import compute_mel
from accent_tts.evaluate import teacher_forced_mcd
from accent_tts.pipeline import load_prepared
from accent_tts.probes import FactorProbe, envelope_features, prosody_features
from accent_tts.synthesis import synthesize
from accent_tts.text import tokenize

run_dir = sys.argv[1] if len(sys.argv) > 1 else "/tmp/deskrun"
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 2000

config = ExperimentConfig.model_validate({
    "run_dir": run_dir,
    "seed": 1234,
    "workers": 1,
    "training": {"batch_size": 32, "total_steps": steps, "checkpoint_every": 1000},
    "eval": {"max_utterances": 16},
})

t0 = time.time()
print("== prepare", flush=True)
print(pipeline.cmd_prepare(config), flush=True)
print(f"prepare took {time.time()-t0:.0f}s", flush=True)

t0 = time.time()
print("== train", flush=True)
out = pipeline.cmd_train(config)
print(out, flush=True)
print(f"train took {time.time()-t0:.0f}s", flush=True)

rows = [json.loads(l) for l in open(Path(run_dir) / "train_log.jsonl")]
first, last = rows[0]["total"], rows[-1]["total"]
print(f"C4a loss: step1={first:.2f} final={last:.2f} ratio={last/first:.3f} (need <=0.5)", flush=True)

t0 = time.time()
print("== bank", flush=True)
print(pipeline.cmd_bank(config), flush=True)

print("== eval", flush=True)
ev = pipeline.cmd_eval(config)
print(json.dumps(ev["report"], indent=1), flush=True)
print(f"bank+eval took {time.time()-t0:.0f}s", flush=True)

sep = ev["report"]["extras"]["separability"]
print("C5 separability:", sep, flush=True)
print("  z_s: spk>acc?", sep["z_s_by_speaker"] > sep["z_s_by_accent"],
      " z_a: acc>spk?", sep["z_a_by_accent"] > sep["z_a_by_speaker"],
      " winners>0.1?", sep["z_s_by_speaker"] > 0.1 and sep["z_a_by_accent"] > 0.1, flush=True)
print("  combined>=z_s?", sep["combined_by_speaker"] >= sep["z_s_by_speaker"], flush=True)

# C4b: teacher-forced MCD trained vs untrained
ds = load_prepared(config)
val_ids = ds.splits.all_ids("val_seen") + ds.splits.all_ids("val_unseen")
subset = sorted(val_ids)[:16]
trained = load_checkpoint(Path(run_dir) / "checkpoints" / f"ckpt_{steps:06d}.pt")
untrained = load_checkpoint(Path(run_dir) / "checkpoints" / "ckpt_000000.pt")
m_tr = teacher_forced_mcd(trained, ds, subset)
m_un = teacher_forced_mcd(untrained, ds, subset)
print(f"C4b tf-MCD: untrained={m_un:.3f} trained={m_tr:.3f} ratio={m_tr/m_un:.3f} (need <=0.7)", flush=True)

# C6: conversion probes
t0 = time.time()
corpus = ds.corpus
train_ids = ds.splits.all_ids("train")
env, pros, spks, accs = [], [], [], []
for uid in train_ids:
    u = corpus.utterance(uid)
    mel = ds.mels[uid]
    env.append(envelope_features(mel))
    pros.append(prosody_features(mel, len(ds.tokens[uid])))
    spks.append(u.speaker_id); accs.append(u.accent_id)
p_spk = FactorProbe.fit(np.array(env), spks)
p_acc = FactorProbe.fit(np.array(pros), accs)

bank = load_bank(Path(run_dir) / "bank.atbank")
speaker = corpus.speakers[0]
native = corpus.speaker_accent[speaker]
targets = [a for a in corpus.accents if a != native]
test_ids = ds.splits.test[speaker]
acc_hits = spk_hits = n = 0
trunc = 0
for uid in test_ids:
    u = corpus.utterance(uid)
    for tgt in targets:
        res = synthesize(u.transcript, speaker, tgt, bank, trained,
                         config.inference, config.data.mel, vocode_audio=False)
        n_tokens = tokenize(u.transcript, trained.symbol_table).length
        a_pred = p_acc.predict(prosody_features(res.mel, n_tokens))[0]
        s_pred = p_spk.predict(envelope_features(res.mel))[0]
        acc_hits += (a_pred == tgt); spk_hits += (s_pred == speaker); n += 1
        trunc += res.truncated
print(f"C6: accent={acc_hits}/{n}={acc_hits/n:.2f} (need >=0.6) "
      f"speaker={spk_hits}/{n}={spk_hits/n:.2f} (need >=0.125) truncated={trunc}", flush=True)
print(f"conversion eval took {time.time()-t0:.0f}s", flush=True)
print("ALL DONE", flush=True)
