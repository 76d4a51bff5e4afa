"""Dev driver: sweep desk-scale KL schedules for disentanglement quality."""

import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, "/root/pkg/src")

from accent_tts.config import ExperimentConfig
from accent_tts.bank import build_bank
from accent_tts.evaluate import collect_embeddings, separability_summary
from accent_tts.models import load_checkpoint
from accent_tts.pipeline import load_prepared
from accent_tts.probes import FactorProbe, envelope_features, prosody_features
from accent_tts.synthesis import synthesize
from accent_tts.text import tokenize
from accent_tts.trainer import Trainer

RUN_DIR = "/tmp/deskrun2"  # reuse the prepared corpus
STEPS = int(sys.argv[1]) if len(sys.argv) > 1 else 1400

VARIANTS = {
    "end2e-3": {"start_value": 1e-4, "end_value": 2e-3, "ramp_start_step": 133, "ramp_end_step": 800},
    "end1e-2": {"start_value": 1e-4, "end_value": 1e-2, "ramp_start_step": 133, "ramp_end_step": 800},
    "end5e-2": {"start_value": 1e-4, "end_value": 5e-2, "ramp_start_step": 133, "ramp_end_step": 800},
}

base = {
    "run_dir": RUN_DIR,
    "seed": 1234,
    "workers": 1,
    "training": {"batch_size": 32, "total_steps": STEPS, "checkpoint_every": 0},
    "eval": {"max_utterances": 16},
}

config0 = ExperimentConfig.model_validate(base)
ds = load_prepared(config0)
corpus = ds.corpus

env, pros, spks, accs = [], [], [], []
for uid in ds.splits.all_ids("train"):
    u = corpus.utterance(uid)
    mel = ds.mels[uid]
    env.append(envelope_features(mel))
    pros.append(prosody_features(mel, len(ds.tokens[uid])))
    spks.append(u.speaker_id)
    accs.append(u.accent_id)
p_spk = FactorProbe.fit(np.array(env), spks)
p_acc = FactorProbe.fit(np.array(pros), accs)

val_ids = ds.splits.all_ids("val_seen") + ds.splits.all_ids("val_unseen")

for name, kl in VARIANTS.items():
    t0 = time.time()
    tree = json.loads(json.dumps(base))
    tree["training"]["kl"] = kl
    config = ExperimentConfig.model_validate(tree)
    trainer = Trainer(config, ds)
    ckpt_dir = Path(f"/tmp/klsweep_{name}")
    final = trainer.run(ckpt_dir, ckpt_dir / "log.jsonl")
    loaded = load_checkpoint(final)
    rows = [json.loads(l) for l in open(ckpt_dir / "log.jsonl")]
    print(f"\n=== {name}: {STEPS} steps in {time.time()-t0:.0f}s "
          f"loss {rows[0]['total']:.1f}->{rows[-1]['total']:.2f} "
          f"recon {rows[-1]['recon']:.2f} kl_s {rows[-1]['kl_s']:.1f} kl_a {rows[-1]['kl_a']:.1f}",
          flush=True)

    latent = collect_embeddings(loaded, ds, val_ids)
    sep = separability_summary(latent)
    print("  sep:", {k: round(v, 3) for k, v in sep.items()}, flush=True)
    ok5 = sep["z_s_by_speaker"] > sep["z_s_by_accent"] and sep["z_a_by_accent"] > sep["z_a_by_speaker"] \
        and sep["z_s_by_speaker"] > 0.1 and sep["z_a_by_accent"] > 0.1
    print("  C5 pass:", ok5, flush=True)

    bank = build_bank(loaded, ds, val_ids)
    speaker = corpus.speakers[0]
    native = corpus.speaker_accent[speaker]
    targets = [a for a in corpus.accents if a != native]
    a_hits = s_hits = n = trunc = 0
    for uid in ds.splits.test[speaker]:
        u = corpus.utterance(uid)
        for tgt in targets:
            res = synthesize(u.transcript, speaker, tgt, bank, loaded,
                             config.inference, config.data.mel, vocode_audio=False)
            n_tok = tokenize(u.transcript, loaded.symbol_table).length
            a_hits += p_acc.predict(prosody_features(res.mel, n_tok))[0] == tgt
            s_hits += p_spk.predict(envelope_features(res.mel))[0] == speaker
            trunc += res.truncated
            n += 1
    print(f"  C6: accent {a_hits}/{n} speaker {s_hits}/{n} truncated {trunc}", flush=True)
print("SWEEP DONE", flush=True)
