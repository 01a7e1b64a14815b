"""Corpora for the recognition experiments built from simulated sessions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import align_crop, chunk_audio, estimate_noise_floor, gammatonegram, voiced_chunks
from .recognition import BACKGROUND, EVAL_FACES, EVAL_VOICE_CHUNKS, EnergyVoiceEmbedder, PixelEmbedder
from .session import identity_record, run_session
from .sim import ScenarioConfig, default_participants, synth_ego_noise_recording

NOISE_SECONDS = 30.0


@dataclass
class Split:
    x_train: np.ndarray
    y_train: list[str]
    x_test: np.ndarray
    y_test: list[str]


def twelve_identity_corpus(groups: int = 4, face_stride: int = 4, voice_stride: int = 10,
                           background_chunks: int = 6, seed: int = 0) -> tuple[Split, Split]:
    """(faces, voices) splits over `groups` simulated sessions of three people.

    Training data is what each session collected, subsampled by the given
    strides; test data is held-out samples of the same people. Voices get an
    extra background class cut from ego-noise recordings.
    """
    face_emb, voice_emb = PixelEmbedder(), EnergyVoiceEmbedder()
    faces = Split([], [], [], [])
    voices = Split([], [], [], [])
    for group in range(groups):
        cfg = ScenarioConfig(participants=default_participants(group), master_seed=seed + group)
        res = run_session(cfg)
        if not res.complete:
            raise RuntimeError(f"session of group {group} did not complete")
        sr = cfg.sample_rate
        floor = estimate_noise_floor(synth_ego_noise_recording(NOISE_SECONDS, cfg).samples, sr)
        for color, rec in sorted(res.collector.records.items()):
            name = cfg.by_color(color).name
            for f in rec.faces[::face_stride]:
                faces.x_train.append(face_emb(align_crop(f.image)))
                faces.y_train.append(name)
            for v in rec.voices[::voice_stride]:
                for chunk in voiced_chunks(v.audio.samples, sr, floor):
                    voices.x_train.append(voice_emb(gammatonegram(chunk, sr)))
                    voices.y_train.append(name)
            held = identity_record(cfg.by_color(color), cfg, name, EVAL_FACES, EVAL_VOICE_CHUNKS)
            for f in held.faces:
                faces.x_test.append(face_emb(align_crop(f.image)))
                faces.y_test.append(name)
            for v in held.voices:
                voices.x_test.append(voice_emb(gammatonegram(v.audio.samples, sr)))
                voices.y_test.append(name)
        # disjoint 1 s chunks of fan noise; the first ones train, the rest test
        noise = synth_ego_noise_recording(2 * background_chunks, cfg, salt=1).samples
        for k, chunk in enumerate(chunk_audio(noise, sr, hop=1.0)):
            xs, ys = (voices.x_train, voices.y_train) if k < background_chunks else (voices.x_test, voices.y_test)
            xs.append(voice_emb(gammatonegram(chunk, sr)))
            ys.append(BACKGROUND)
    for s in (faces, voices):
        s.x_train, s.x_test = np.array(s.x_train), np.array(s.x_test)
    return faces, voices
