import math

import numpy as np
import pytest

from hri_memory.session import run_session
from hri_memory.sim import (AudioStimulus, ConfigError, FrameStimulus, ParticipantSpec,
                            ScenarioConfig, default_participants, default_scenario,
                            format_scenario, parse_scenario, run_scenario, synth_face,
                            synth_voice, x_to_azimuth, azimuth_to_x, session_labels)
from hri_memory.sls import AzimuthBin

CFG = default_scenario(0)
BLUE, GREEN, RED = CFG.participants


def test_face_deterministic():
    a = synth_face(BLUE, 17, seed=3)
    b = synth_face(BLUE, 17, seed=3)
    assert a.bbox == b.bbox and a.image.tobytes() == b.image.tobytes()
    assert synth_face(BLUE, 18, seed=3).image.tobytes() != a.image.tobytes()


def test_face_bbox_mean_size():
    boxes = [synth_face(p, f, seed=1).bbox for p in CFG.participants for f in range(334)]
    w = np.mean([b.width for b in boxes])
    h = np.mean([b.height for b in boxes])
    assert abs(w - 32) <= 3.2 and abs(h - 57) <= 5.7


def test_face_miss_rate():
    dets = [synth_face(BLUE, f, miss_rate=0.1, seed=2) for f in range(2000)]
    assert 0.08 < sum(d is None for d in dets) / 2000 < 0.12


def _pixels(spec, frames):
    out = []
    for f in frames:
        d = synth_face(spec, f, center=(360.0, 240.0), seed=0, jitter=0.0)
        out.append(d.image.astype(float))
    return out


def test_distinct_identities_differ_beyond_noise():
    # same box for both so crops are comparable pixel by pixel
    a = replace_scale(BLUE)
    b = replace_scale(GREEN)
    pa, pb = _pixels(a, range(20)), _pixels(b, range(20, 40))
    within = np.mean([np.abs(pa[i] - pa[i + 1]).mean() for i in range(19)])
    between = np.mean([np.abs(x - y).mean() for x, y in zip(pa, pb)])
    assert between > 2 * within


def replace_scale(spec):
    from dataclasses import replace
    return replace(spec, face_scale=1.0)


def test_voice_snr_is_exact():
    ev = synth_voice(RED, 2.0, CFG, segment=4)
    clean = synth_voice(RED, 2.0, CFG, segment=4, snr_db=math.inf).as_float()
    noise = ev.as_float() - clean
    snr = 10 * np.log10(np.mean(clean ** 2) / np.mean(noise ** 2))
    assert snr == pytest.approx(9.0, abs=0.1)
    assert ev.true_azimuth == RED.home_bin.center


def test_voice_without_noise_is_signature_power():
    ev = synth_voice(GREEN, 1.0, CFG, snr_db=math.inf)
    p = np.mean(ev.as_float() ** 2)
    expected = 0.5 * sum(a ** 2 for a in GREEN.voice_amps)
    assert p == pytest.approx(expected, rel=0.02)


def test_voice_deterministic_and_validated():
    a = synth_voice(BLUE, 0.5, CFG, segment=2)
    b = synth_voice(BLUE, 0.5, CFG, segment=2)
    assert a.samples.tobytes() == b.samples.tobytes()
    with pytest.raises(ValueError):
        synth_voice(BLUE, 0.0, CFG)


def test_signature_frequencies_below_nyquist():
    for g in range(4):
        for p in default_participants(g):
            assert max(p.voice_freqs) < 8000


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(participants=CFG.participants[:1])
    with pytest.raises(ConfigError):
        default_scenario(detector_miss_rate=1.0)
    with pytest.raises(ConfigError):
        default_scenario(ego_noise_snr_db=float("nan"))
    dup = (BLUE, ParticipantSpec.create("X", "green", BLUE.face_seed, 5, AzimuthBin.CENTER))
    with pytest.raises(ConfigError):
        ScenarioConfig(participants=dup)


def test_pixel_azimuth_mapping():
    for az in (-90, -30, 0, 45, 90):
        assert x_to_azimuth(azimuth_to_x(az)) == pytest.approx(az)


def test_scenario_file_round_trip():
    cfg = default_scenario(7, azimuth_noise_sigma=2.5)
    assert parse_scenario(format_scenario(cfg)) == cfg
    text = "name_failure_rate = 1/6  # default\nparticipant = blue Ada Right\nparticipant = red Bo Left\n"
    parsed = parse_scenario(text, master_seed=3)
    assert parsed.name_failure_rate == pytest.approx(1 / 6)
    assert [p.name for p in parsed.participants] == ["Ada", "Bo"] and parsed.master_seed == 3
    for bad in ("foo=1", "participant = blue Ada", "nonsense"):
        with pytest.raises(ConfigError):
            parse_scenario(bad)


def _emitted_ids(scenario):
    ids = []
    for s in scenario.stimuli:
        if isinstance(s, FrameStimulus):
            ids += [d.sample_id for d in s.detections]
        elif isinstance(s, AudioStimulus):
            ids.append(s.sample_id)
    return ids


def test_every_sample_in_truth_log_once():
    sc = run_scenario(CFG)
    ids = _emitted_ids(sc)
    assert len(ids) == len(set(ids))
    assert sorted(ids) == sorted(sc.truth)
    ts = [s.t for s in sc.stimuli]
    assert ts == sorted(ts)


def test_scenario_replay_identical():
    a, b = run_scenario(CFG), run_scenario(CFG)
    assert a.truth_log() == b.truth_log()
    assert [type(s).__name__ + repr(s.t) for s in a.stimuli] == [type(s).__name__ + repr(s.t) for s in b.stimuli]


def test_name_failure_rate_one_gives_unknown_labels():
    cfg = default_scenario(0, name_failure_rate=1.0)
    assert session_labels(cfg) == {c: f"unknown-{c}" for c in ("blue", "green", "red")}
    res = run_session(cfg)
    assert res.complete
    assert sorted(s.name for s in res.memory.slots()) == ["unknown-blue", "unknown-green", "unknown-red"]


def test_two_player_scenario_completes():
    cfg = ScenarioConfig(participants=(BLUE, RED), master_seed=2)
    res = run_session(cfg)
    assert res.complete
    assert res.label_accuracy("voice") == 1.0
