"""Open-set accuracy against the distance threshold, using one session's
collected data as the enrolled database and a held-out split with impostors."""
import argparse

import numpy as np

from hri_memory.features import align_crop, estimate_noise_floor, gammatonegram, voiced_chunks
from hri_memory.recognition import (FACE_THRESHOLD, VOICE_THRESHOLD, EmbeddingDb,
                                    EnergyVoiceEmbedder, PixelEmbedder, threshold_sweep)
from hri_memory.session import build_test_split, run_session
from hri_memory.sim import default_scenario, synth_ego_noise_recording


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--points", type=int, default=20)
    args = ap.parse_args()

    cfg = default_scenario(args.seed)
    sr = cfg.sample_rate
    res = run_session(cfg)
    floor = estimate_noise_floor(synth_ego_noise_recording(30.0, cfg).samples, sr)
    face_emb, voice_emb = PixelEmbedder(), EnergyVoiceEmbedder()
    dbs = {"face": EmbeddingDb(), "voice": EmbeddingDb()}
    for rec in res.records():
        dbs["face"].extend((rec.label, face_emb(align_crop(f.image))) for f in rec.faces)
        for v in rec.voices:
            dbs["voice"].extend((rec.label, voice_emb(gammatonegram(c, sr)))
                                for c in voiced_chunks(v.audio.samples, sr, floor))

    test, impostors = build_test_split(cfg)
    queries = {"face": [], "voice": []}
    truth = {"face": [], "voice": []}
    for rec in test:
        lbl = None if rec.label in impostors else rec.label
        for f in rec.faces:
            queries["face"].append(face_emb(align_crop(f.image)))
            truth["face"].append(lbl)
        for v in rec.voices:
            queries["voice"].append(voice_emb(gammatonegram(v.audio.samples, sr)))
            truth["voice"].append(lbl)

    for kind, t in (("face", FACE_THRESHOLD), ("voice", VOICE_THRESHOLD)):
        print(f"# {kind} (default t={t})")
        print("threshold\tpositive\tnegative\tknown_rate")
        for row in threshold_sweep(dbs[kind], queries[kind], truth[kind], np.linspace(t / 10, 3 * t, args.points)):
            print(f"{row.threshold:.4f}\t{row.positive:.4f}\t{row.negative:.4f}\t{row.known_rate:.4f}")


if __name__ == "__main__":
    main()
