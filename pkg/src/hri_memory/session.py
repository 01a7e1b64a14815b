"""Closed loop for one simulated session: stimuli -> perception -> game
supervisor -> effect execution (gaze, memory, data collection)."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace

from .collector import Collector, FaceSample, PersonRecord, VoiceSample
from .game import (BuzzerCall, CollectFace, CollectVoice, FacesDetected, GameRunner, GameTrace,
                   HotWord, NamePresented, OrientGaze, Phase, PositionStable, SoundDetected,
                   TimerElapsed)
from .memory import Ambiguous, SpatialMemory
from .mot import FaceDetection, Tracker, TrackerParams
from .recognition import EVAL_FACES, EVAL_IMPOSTORS, EVAL_VOICE_CHUNKS
from .sim import (STABLE_WINDOW, AudioStimulus, FrameStimulus, HotWordStimulus, NameStimulus,
                  ParticipantSpec, Scenario, ScenarioConfig, TimerStimulus, default_participants,
                  run_scenario, session_labels, synth_face, synth_voice, x_to_azimuth)
from .sls import AzimuthBin, NoisyOracleEstimator, bin_azimuth, estimate_azimuth

log = logging.getLogger(__name__)

MOVE_THRESHOLD = 40.0  # px a track must travel to count as having moved
STILL_TOLERANCE = 3.0  # px of allowed drift while standing
HANDOVER_RADIUS = 60.0  # px; a track born this close to a missing one continues it
HANDOVER_MEMORY = 3.0  # s a dropped track stays eligible for handover


def track_bin(center: tuple[float, float]) -> AzimuthBin:
    return bin_azimuth(x_to_azimuth(center[0]))


@dataclass
class SessionResult:
    scenario: Scenario
    trace: GameTrace
    memory: SpatialMemory
    collector: Collector
    face_misses: int = 0
    labels: dict[int, str] = field(default_factory=dict)  # sample_id -> stored key

    @property
    def complete(self) -> bool:
        return self.trace.complete

    def records(self) -> list[PersonRecord]:
        return self.collector.export(self.memory)

    def label_accuracy(self, kind: str) -> float | None:
        """Fraction of stored samples of `kind` whose color key matches the
        ground truth."""
        hits = total = 0
        for sid, key in self.labels.items():
            entry = self.scenario.truth[sid]
            if entry.kind != kind:
                continue
            total += 1
            hits += key == entry.color
        return hits / total if total else None

    def counts(self) -> dict[str, dict[str, float]]:
        out = {}
        for key, rec in sorted(self.collector.records.items()):
            out[key] = {"faces": len(rec.faces), "voice_seconds": rec.voice_seconds}
        return out


class Perception:
    """Turns raw stimuli into game events (SLS binning, face tracking,
    positioning detection).

    Identities handed to the game are canonical track ids: when the tracker
    drops a walker after a burst of detector misses and immediately re-spawns
    it nearby, the new track continues the old id.
    """

    def __init__(self, frame_rate: float, estimator, params: TrackerParams):
        self.tracker = Tracker(params)
        self.estimator = estimator
        self.window = max(2, int(round(STABLE_WINDOW * frame_rate)))
        self.alias: dict[int, int] = {}  # tracker id -> canonical id
        self.last_seen: dict[int, tuple[float, float]] = {}  # tracker id -> last matched center
        self.history: dict[int, deque] = {}
        self.latest: dict[int, FaceDetection] = {}
        self.reference: dict[int, tuple[float, float]] = {}
        self.reported: set[int] = set()
        self.last_faces: tuple[int, ...] | None = None
        self.phase_key = None
        self.handovers = 0
        self.dropped: dict[int, tuple[float, tuple[float, float]]] = {}  # canonical id -> (t, last center)

    def sound_bin(self, audio) -> AzimuthBin:
        return bin_azimuth(estimate_azimuth(audio, self.estimator))

    def canonical(self, tid: int) -> int:
        return self.alias.get(tid, tid)

    def _hand_over(self, born: int, center: tuple[float, float], t: float) -> None:
        """Let track `born` continue the nearest confirmed track that is
        currently unmatched or was dropped recently."""
        params = self.tracker.params
        best, best_d = None, HANDOVER_RADIUS
        for tr in self.tracker.tracks:
            if tr.id == born or tr.misses == 0 or not tr.confirmed(params):
                continue
            d = _dist(self.last_seen.get(tr.id, tr.center), center)
            if d < best_d:
                best, best_d = ("live", tr), d
        for cid, (t_drop, last) in self.dropped.items():
            d = _dist(last, center)
            if t - t_drop <= HANDOVER_MEMORY and d < best_d:
                best, best_d = ("dropped", cid), d
        if best is None:
            return
        born_track = self.tracker.get(born)
        kind, what = best
        if kind == "live":
            self.alias[born] = self.canonical(what.id)
            born_track.hits = max(born_track.hits, what.hits)
            self.tracker.tracks.remove(what)
            self.last_seen.pop(what.id, None)
        else:
            self.alias[born] = what
            born_track.hits = max(born_track.hits, params.min_hits)
            del self.dropped[what]
        self.handovers += 1
        log.debug("track %d continues %d", born, self.alias[born])

    def frame(self, stim: FrameStimulus, state, gaze: AzimuthBin | None) -> list:
        dets = list(stim.detections)
        was_confirmed = {t.id for t in self.tracker.confirmed()}
        upd = self.tracker.step([d.bbox for d in dets])
        by_det = {di: tid for tid, di in upd.matched}
        unmatched = [di for di in range(len(dets)) if di not in by_det]
        for di, tid in zip(unmatched, upd.new_track_ids):
            by_det[di] = tid
        for di, tid in by_det.items():
            self.last_seen[tid] = dets[di].bbox.center
        for tid in upd.removed_track_ids:
            last = self.last_seen.pop(tid, None)
            if last is not None and tid in was_confirmed:
                self.dropped[self.canonical(tid)] = (stim.t, last)
        self.dropped = {c: v for c, v in self.dropped.items() if stim.t - v[0] <= HANDOVER_MEMORY}
        for di, tid in zip(unmatched, upd.new_track_ids):
            self._hand_over(tid, dets[di].bbox.center, stim.t)
        self.latest = {self.canonical(tid): dets[di] for di, tid in by_det.items()}
        alive = {self.canonical(t.id) for t in self.tracker.tracks}
        for cid in [c for c in self.history if c not in alive]:
            del self.history[cid]
        for t in self.tracker.tracks:
            self.history.setdefault(self.canonical(t.id), deque(maxlen=self.window)).append(t.center)

        events = []
        confirmed = [(self.canonical(t.id), t.center) for t in self.tracker.confirmed()]
        if state.phase is Phase.WELCOME and gaze is not None:
            ids = tuple(sorted(cid for cid, c in confirmed if track_bin(c) is gaze))
            if ids and ids != self.last_faces:
                self.last_faces = ids
                events.append(FacesDetected(ids))
        if state.phase is Phase.PLAYER_POSITIONING:
            key = (state.phase, state.color)
            if key != self.phase_key:
                self.phase_key = key
                self.reference = {self.canonical(t.id): t.center for t in self.tracker.tracks}
            for cid, center in confirmed:
                ref = self.reference.setdefault(cid, center)
                hist = self.history.get(cid)
                if cid in self.reported or hist is None or len(hist) < self.window:
                    continue
                moved = _dist(ref, center) > MOVE_THRESHOLD
                still = max(_dist(hist[0], c) for c in hist) < STILL_TOLERANCE
                if moved and still:
                    self.reported.add(cid)
                    events.append(PositionStable(cid, track_bin(center)))
        return events


def _dist(a, b) -> float:
    return ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2) ** 0.5


def run_session(config: ScenarioConfig, params: TrackerParams | None = None,
                estimator=None) -> SessionResult:
    scenario = run_scenario(config)
    estimator = estimator or NoisyOracleEstimator(config.azimuth_noise_sigma, seed=config.master_seed)
    perception = Perception(config.frame_rate, estimator, params or TrackerParams())
    runner = GameRunner(scenario.game_config)
    collector = Collector()
    result = SessionResult(scenario, runner.trace, runner.memory, collector)
    gaze: AzimuthBin | None = None

    for stim in scenario.stimuli:
        audio = None
        if isinstance(stim, FrameStimulus):
            events = perception.frame(stim, runner.state, gaze)
        elif isinstance(stim, AudioStimulus):
            audio = stim
            b = perception.sound_bin(stim.audio)
            events = [BuzzerCall(b) if stim.cue == "buzzer" else SoundDetected(b)]
        elif isinstance(stim, NameStimulus):
            who = runner.memory.identity_at(gaze) if gaze is not None else None
            if who is None or isinstance(who, Ambiguous):
                log.info("name heard at t=%.2f but nobody is singled out in %s", stim.t, gaze)
                events = []
            else:
                events = [NamePresented(who.track_id, stim.name)]
        elif isinstance(stim, HotWordStimulus):
            events = [HotWord(stim.word)]
        elif isinstance(stim, TimerStimulus):
            events = [TimerElapsed(stim.name)]
        else:
            raise TypeError(f"unknown stimulus {stim!r}")

        for ev in events:
            for fx in runner.feed(stim.t, ev):
                if isinstance(fx, OrientGaze):
                    gaze = fx.bin
                elif isinstance(fx, CollectVoice):
                    if audio is None:
                        continue
                    key = collector.collect_voice(audio.audio, fx.bin, runner.memory, audio.sample_id)
                    if key is not None:
                        result.labels[audio.sample_id] = key
                elif isinstance(fx, CollectFace):
                    det = perception.latest.get(fx.track_id)
                    if det is None:
                        result.face_misses += 1
                        continue
                    key = collector.collect_face(det, fx.track_id, runner.memory)
                    if key is not None and det.sample_id is not None:
                        result.labels[det.sample_id] = key

    result.trace = runner.trace
    if not result.complete:
        log.warning("session ended in %s", runner.state)
    return result


# ---- held-out samples ---------------------------------------------------

HELD_OUT_OFFSET = 1_000_000  # frame / segment indices never used inside a session


def identity_record(spec: ParticipantSpec, config: ScenarioConfig, label: str, n_faces: int,
                    n_voice: int, salt: int = 0) -> PersonRecord:
    """Fresh seated face crops and 1 s voice blocks of one identity."""
    rec = PersonRecord(label)
    base = HELD_OUT_OFFSET * (1 + salt)
    f = 0
    while len(rec.faces) < n_faces:
        det = synth_face(spec, base + f, None, 0.0, seed=config.master_seed, jitter=config.bbox_jitter)
        rec.faces.append(FaceSample(det.image, det.bbox))
        f += 1
    for k in range(n_voice):
        rec.voices.append(VoiceSample(synth_voice(spec, 1.0, config, segment=base + k)))
    return rec


def impostor_specs(config: ScenarioConfig, n: int) -> list[ParticipantSpec]:
    """`n` default identities that do not take part in the session."""
    used = {s for p in config.participants for s in (p.face_seed, p.voice_seed)}
    names = {p.name for p in config.participants}
    out = []
    for group in range(0, 64):
        for p in default_participants(group, config.sample_rate):
            if p.face_seed in used or p.voice_seed in used or p.name in names:
                continue
            out.append(p)
            if len(out) == n:
                return out
    raise ValueError("ran out of impostor identities")


def build_test_split(config: ScenarioConfig, n_faces: int = EVAL_FACES,
                     n_voice: int = EVAL_VOICE_CHUNKS,
                     n_impostors: int = EVAL_IMPOSTORS) -> tuple[list[PersonRecord], list[str]]:
    """Held-out evaluation records: the session's participants under the
    labels the session gives them, then impostors. Returns (records,
    impostor labels)."""
    labels = session_labels(config)
    records = [identity_record(p, config, labels[p.color_label], n_faces, n_voice)
               for p in config.participants]
    impostors = []
    for p in impostor_specs(config, n_impostors):
        label = f"impostor-{p.name}"
        impostors.append(label)
        records.append(identity_record(replace(p, home_bin=AzimuthBin.CENTER), config, label,
                                       n_faces, n_voice))
    return records, impostors
