"""Deterministic stand-in for the robot's sensors during one game session.

Participants are scripted: they arrive together on the robot's left, walk
to their seats one at a time when invited, present themselves and play the
rounds. The simulator emits raw stimuli (camera frames with face
detections, audio blocks, speech/hot-word recognizer outputs and timer
ticks) plus a ground-truth log of who produced every face and audio sample.

Camera geometry: detections live in a head-stabilized 720x480 panorama in
which x grows with azimuth at PX_PER_DEG pixels per degree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .game import GameConfig, positioning_order, turn_order
from .memory import COLORS
from .mot import BoundingBox, FaceDetection
from .sls import AudioEvent, AzimuthBin, itd_for_azimuth

IMAGE_W, IMAGE_H = 720, 480
PX_PER_DEG = 4.0
FACE_W, FACE_H = 32.0, 57.0
CLUSTER_Y, LANE_Y, SEAT_Y = 120.0, 220.0, 330.0
WALK_SPEED = 60.0  # px/s, peak speed is pi/2 times this on each eased leg
TURN_PAUSE = 0.3  # s spent standing at each waypoint before turning
STABLE_WINDOW = 1.5  # s a walker must stand still before being considered seated
SIGNAL_RMS = 0.1  # per channel, full scale = 1
TEMPLATE_SHAPE = (57, 32)


def azimuth_to_x(az: float) -> float:
    return IMAGE_W / 2 + PX_PER_DEG * az


def x_to_azimuth(x: float) -> float:
    return float(np.clip((x - IMAGE_W / 2) / PX_PER_DEG, -90.0, 90.0))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ParticipantSpec:
    name: str
    color_label: str
    face_seed: int
    voice_seed: int
    home_bin: AzimuthBin
    face_scale: float = 1.0
    voice_freqs: tuple[float, ...] = ()
    voice_amps: tuple[float, ...] = ()

    @classmethod
    def create(cls, name: str, color: str, face_seed: int, voice_seed: int,
               home_bin: AzimuthBin, sample_rate: int = 16000) -> "ParticipantSpec":
        frng = np.random.default_rng([face_seed, 17])
        scale = float(frng.uniform(0.95, 1.05))
        freqs, amps = _voice_signature(np.random.default_rng([voice_seed, 23]), sample_rate)
        return cls(name, color, face_seed, voice_seed, home_bin, scale, freqs, amps)


def _face_template(rng: np.random.Generator) -> np.ndarray:
    h, w = TEMPLATE_SHAPE
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    # coarse random texture, bilinearly upsampled
    coarse = rng.normal(0.0, 1.0, (6, 4))
    tex = _resize_bilinear(coarse, h, w)
    img = 110.0 + 45.0 * tex / (np.abs(tex).max() + 1e-9)
    skin = rng.uniform(-40, 40)
    face = ((yy - h / 2) / (h * 0.48)) ** 2 + ((xx - w / 2) / (w * 0.48)) ** 2 <= 1.0
    img[face] += skin
    eye_y = rng.uniform(0.32, 0.45) * h
    eye_dx = rng.uniform(0.18, 0.28) * w
    mouth_y = rng.uniform(0.68, 0.8) * h
    for cx, cy, r, val in ((w / 2 - eye_dx, eye_y, 3.0, -70), (w / 2 + eye_dx, eye_y, 3.0, -70),
                           (w / 2, mouth_y, 4.5, rng.uniform(-60, -20))):
        img += val * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r * r))
    return np.clip(img, 0, 255)


def _voice_signature(rng: np.random.Generator, sample_rate: int):
    """Harmonic series shaped by two identity-specific formant peaks."""
    f0 = rng.uniform(95.0, 260.0)
    f1 = rng.uniform(300.0, 900.0)
    f2 = rng.uniform(1000.0, 2800.0)
    nyq = 0.45 * sample_rate
    freqs, amps = [], []
    k = 1
    while k * f0 < min(nyq, 4000.0):
        f = k * f0
        a = (np.exp(-0.5 * ((f - f1) / 150.0) ** 2) + 0.7 * np.exp(-0.5 * ((f - f2) / 250.0) ** 2)
             + 0.08 / k)
        freqs.append(float(f))
        amps.append(float(a))
        k += 1
    amps_arr = np.asarray(amps)
    amps_arr = amps_arr / np.sqrt(np.sum(amps_arr ** 2) / 2) * SIGNAL_RMS
    return tuple(freqs), tuple(float(a) for a in amps_arr)


@lru_cache(maxsize=512)
def _scaled_template(face_seed: int, h: int, w: int) -> np.ndarray:
    rng = np.random.default_rng([face_seed, 17])
    rng.uniform(0.95, 1.05)  # face scale is drawn first
    out = _resize_bilinear(_face_template(rng), h, w)
    out.flags.writeable = False
    return out


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


@dataclass(frozen=True)
class ScenarioConfig:
    participants: tuple[ParticipantSpec, ...]
    azimuth_noise_sigma: float = 5.0
    detector_miss_rate: float = 0.1
    name_failure_rate: float = 1.0 / 6.0
    ego_noise_snr_db: float = 9.0
    frame_rate: float = 10.0
    sample_rate: int = 16000
    master_seed: int = 0
    no_answer_rate: float = 0.0
    bbox_jitter: float = 1.0

    def __post_init__(self):
        n = len(self.participants)
        if not 2 <= n <= 3:
            raise ConfigError("a session needs 2 or 3 participants")
        if len({p.color_label for p in self.participants}) != n:
            raise ConfigError("participant colors must be unique")
        if len({p.home_bin for p in self.participants}) != n:
            raise ConfigError("participant home bins must be distinct")
        seeds = [s for p in self.participants for s in (p.face_seed, p.voice_seed)]
        if len(set(seeds)) != len(seeds):
            raise ConfigError("participant seeds must be distinct")
        if not 0 <= self.detector_miss_rate < 1:
            raise ConfigError("detector_miss_rate must lie in [0, 1)")
        if not 0 <= self.name_failure_rate <= 1 or not 0 <= self.no_answer_rate <= 1:
            raise ConfigError("rates must lie in [0, 1]")
        if math.isnan(self.ego_noise_snr_db) or self.ego_noise_snr_db == -math.inf:
            raise ConfigError("ego_noise_snr_db must be a number (inf disables noise)")
        if self.frame_rate <= 0 or self.sample_rate <= 0 or self.azimuth_noise_sigma < 0:
            raise ConfigError("frame_rate, sample_rate and sigma must be positive")
        for p in self.participants:
            if p.voice_freqs and max(p.voice_freqs) >= self.sample_rate / 2:
                raise ConfigError(f"{p.name}: voice frequencies exceed Nyquist")

    def game_config(self, **overrides) -> GameConfig:
        return GameConfig(players=tuple(p.color_label for p in self.participants),
                          turn_order_seed=self.master_seed,
                          seating=tuple((p.color_label, p.home_bin) for p in self.participants),
                          **overrides)

    def by_color(self, color: str) -> ParticipantSpec:
        for p in self.participants:
            if p.color_label == color:
                return p
        raise KeyError(color)


DEFAULT_NAMES = ("Marco", "Giulia", "Luca", "Sara", "Paolo", "Anna",
                 "Davide", "Elena", "Matteo", "Chiara", "Andrea", "Laura")


def default_participants(group: int = 0, sample_rate: int = 16000) -> tuple[ParticipantSpec, ...]:
    """Participants of group `group` (0..3 gives the twelve default identities)."""
    seats = (AzimuthBin.RIGHT, AzimuthBin.CENTER, AzimuthBin.LEFT)
    out = []
    for k, color in enumerate(COLORS):
        i = 3 * group + k
        out.append(ParticipantSpec.create(DEFAULT_NAMES[i % len(DEFAULT_NAMES)] + ("" if i < 12 else str(i)),
                                          color, 1000 + 2 * i, 1001 + 2 * i, seats[k], sample_rate))
    return tuple(out)


def default_scenario(master_seed: int = 0, **kw) -> ScenarioConfig:
    sr = kw.get("sample_rate", 16000)
    return ScenarioConfig(participants=default_participants(0, sr), master_seed=master_seed, **kw)


# ---- faces --------------------------------------------------------------

def face_size(spec: ParticipantSpec) -> tuple[float, float]:
    return FACE_W * spec.face_scale, FACE_H * spec.face_scale


class SimulatedFace(FaceDetection):
    """Detection whose crop is rendered on first access; most detections
    only feed the tracker and never need pixels."""

    def __init__(self, spec: ParticipantSpec, bbox: BoundingBox, noise_seed: tuple[int, ...],
                 sample_id: int | None = None):
        self.spec = spec
        self.bbox = bbox
        self.sample_id = sample_id
        self._noise_seed = noise_seed
        self._image: np.ndarray | None = None

    @property
    def image(self) -> np.ndarray:
        if self._image is None:
            b = self.bbox
            patch = _scaled_template(self.spec.face_seed, int(b.y2 - b.y1), int(b.x2 - b.x1))
            rng = np.random.default_rng(self._noise_seed)
            patch = patch + rng.uniform(-15, 15) + rng.normal(0.0, 8.0, patch.shape)
            self._image = np.clip(np.round(patch), 0, 255).astype(np.uint8)
        return self._image


def synth_face(spec: ParticipantSpec, frame: int, center: tuple[float, float] | None = None,
               miss_rate: float = 0.0, seed: int = 0, jitter: float = 1.0) -> FaceDetection | None:
    """Detection of `spec`'s face in camera frame `frame`, or None on a miss."""
    rng = np.random.default_rng([seed, spec.face_seed, frame])
    if miss_rate > 0 and rng.random() < miss_rate:
        return None
    if center is None:
        center = (azimuth_to_x(spec.home_bin.center), SEAT_Y)
    w, h = face_size(spec)
    cx = center[0] + rng.uniform(-jitter, jitter)
    cy = center[1] + rng.uniform(-jitter, jitter)
    x1 = max(0, int(round(cx - w / 2)))
    y1 = max(0, int(round(cy - h / 2)))
    x2 = min(IMAGE_W, int(round(cx + w / 2)))
    y2 = min(IMAGE_H, int(round(cy + h / 2)))
    box = BoundingBox(float(x1), float(y1), float(x2), float(y2))
    return SimulatedFace(spec, box, (seed, spec.face_seed, frame, 1))


# ---- voices -------------------------------------------------------------

SIGNATURE_SECONDS = 4.0


@lru_cache(maxsize=64)
def _signature_buffer(spec: ParticipantSpec, sample_rate: int, azimuth: float, n: int) -> np.ndarray:
    t = np.arange(n) / sample_rate
    itd = itd_for_azimuth(azimuth)
    phases = np.random.default_rng([spec.voice_seed, 29]).uniform(0, 2 * np.pi, len(spec.voice_freqs))
    out = np.zeros((n, 2))
    for f, a, ph in zip(spec.voice_freqs, spec.voice_amps, phases):
        out[:, 0] += a * np.sin(2 * np.pi * f * t + ph)
        out[:, 1] += a * np.sin(2 * np.pi * f * (t - itd) + ph)
    out.flags.writeable = False
    return out


def synth_signature(spec: ParticipantSpec, n: int, sample_rate: int, azimuth: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Clean binaural signature, shape (n, 2), float.

    A random-offset slice of a cached few-second rendering; the right
    channel is the left one delayed by the interaural time difference,
    applied analytically per partial.
    """
    total = max(n, int(SIGNATURE_SECONDS * sample_rate))
    buf = _signature_buffer(spec, sample_rate, float(azimuth), total)
    start = int(rng.integers(0, total - n + 1))
    return buf[start:start + n].copy()


def ego_noise(n: int, rms: float, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((n, 2), dtype=np.float32) * rms


def mix_at_snr(signal: np.ndarray, noise: np.ndarray, snr_db: float) -> np.ndarray:
    """Scale `noise` so that 10 log10(P_signal / P_noise) == snr_db exactly."""
    if math.isinf(snr_db) and snr_db > 0:
        return signal.copy()
    ps = np.mean(signal ** 2)
    pn = np.mean(noise ** 2)
    return signal + noise * np.sqrt(ps / (pn * 10 ** (snr_db / 10)))


def to_pcm(x: np.ndarray) -> np.ndarray:
    return np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)


def synth_voice(spec: ParticipantSpec, duration: float, config: ScenarioConfig,
                segment: int = 0, azimuth: float | None = None, timestamp: float = 0.0,
                snr_db: float | None = None) -> AudioEvent:
    """One block of `spec` speaking from `azimuth` (default: home bin center)."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    sr = config.sample_rate
    n = int(round(duration * sr))
    az = spec.home_bin.center if azimuth is None else azimuth
    rng = np.random.default_rng([config.master_seed, spec.voice_seed, segment])
    clean = synth_signature(spec, n, sr, az, rng)
    snr = config.ego_noise_snr_db if snr_db is None else snr_db
    mixed = mix_at_snr(clean, ego_noise(n, 1.0, rng), snr)
    return AudioEvent(to_pcm(mixed), sr, float(az), float(timestamp))


def synth_ego_noise_recording(duration: float, config: ScenarioConfig, salt: int = 0) -> AudioEvent:
    """Robot fans only, at the level the session's speech is mixed with."""
    sr = config.sample_rate
    n = int(round(duration * sr))
    rng = np.random.default_rng([config.master_seed, 7919, salt])
    if math.isinf(config.ego_noise_snr_db):
        return AudioEvent(np.zeros((n, 2), np.int16), sr)
    rms = SIGNAL_RMS / 10 ** (config.ego_noise_snr_db / 20)
    return AudioEvent(to_pcm(ego_noise(n, rms, rng)), sr)


# ---- stimuli ------------------------------------------------------------

@dataclass(frozen=True)
class FrameStimulus:
    t: float
    frame: int
    detections: tuple[FaceDetection, ...]


@dataclass(frozen=True)
class AudioStimulus:
    t: float
    audio: AudioEvent
    cue: str  # "call" | "speech" | "buzzer"
    sample_id: int


@dataclass(frozen=True)
class NameStimulus:
    """Speech-recognizer result for the name just spoken (None: failed)."""
    t: float
    name: str | None


@dataclass(frozen=True)
class HotWordStimulus:
    t: float
    word: str


@dataclass(frozen=True)
class TimerStimulus:
    t: float
    name: str


Stimulus = FrameStimulus | AudioStimulus | NameStimulus | HotWordStimulus | TimerStimulus
_PRIORITY = {FrameStimulus: 0, TimerStimulus: 1}


@dataclass(frozen=True)
class TruthEntry:
    sample_id: int
    kind: str  # "face" | "voice"
    color: str
    t: float


@dataclass
class Scenario:
    config: ScenarioConfig
    game_config: GameConfig
    stimuli: list
    truth: dict[int, TruthEntry]
    extracted_names: dict[str, str | None]

    def truth_log(self) -> str:
        return "".join(f"{e.sample_id}\t{e.kind}\t{e.color}\t{e.t:.3f}\n"
                       for e in sorted(self.truth.values(), key=lambda e: e.sample_id))


@dataclass
class _Path:
    """(t, x, y) waypoints joined by straight legs walked with a cosine
    speed profile, so walkers slow down before turning."""
    points: list[tuple[float, float, float]]

    def at(self, t: float) -> tuple[float, float]:
        pts = self.points
        if t <= pts[0][0]:
            return pts[0][1], pts[0][2]
        for (t0, x0, y0), (t1, x1, y1) in zip(pts, pts[1:]):
            if t <= t1:
                f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
                f = (1.0 - math.cos(math.pi * f)) / 2.0
                return x0 + f * (x1 - x0), y0 + f * (y1 - y0)
        return pts[-1][1], pts[-1][2]

    def walk_to(self, t_start: float, x: float, y: float) -> float:
        if self.points[-1][0] < t_start:
            self.points.append((t_start, *self.points[-1][1:]))
        _, px, py = self.points[-1]
        dist = math.hypot(x - px, y - py)
        t_end = t_start + dist / WALK_SPEED
        self.points.append((t_end, x, y))
        return t_end


def extracted_names(config: ScenarioConfig) -> dict[str, str | None]:
    """Outcome of name recognition per color; None marks a failed extraction."""
    rng = np.random.default_rng([config.master_seed, 4242])
    out = {}
    for p in config.participants:
        out[p.color_label] = None if rng.random() < config.name_failure_rate else p.name
    return out


def session_labels(config: ScenarioConfig) -> dict[str, str]:
    """Dataset label each participant ends up with when labeling succeeds."""
    return {c: (n if n else f"unknown-{c}") for c, n in extracted_names(config).items()}


def run_scenario(config: ScenarioConfig) -> Scenario:
    game = config.game_config()
    rng = np.random.default_rng([config.master_seed, 99])
    parts = {p.color_label: p for p in config.participants}
    arrival = list(config.participants)
    paths = {p.color_label: _Path([(0.0, azimuth_to_x(-80.0 + 15.0 * k), CLUSTER_Y)])
             for k, p in enumerate(arrival)}
    stimuli: list = []
    truth: dict[int, TruthEntry] = {}
    next_id = [0]
    segment = [0]

    def sample_id(kind: str, color: str, t: float) -> int:
        sid = next_id[0]
        next_id[0] += 1
        truth[sid] = TruthEntry(sid, kind, color, t)
        return sid

    def speak(color: str, t: float, cue: str, azimuth: float | None = None):
        spec = parts[color]
        sid = sample_id("voice", color, t)
        audio = synth_voice(spec, 1.0, config, segment[0],
                            azimuth=azimuth, timestamp=t)
        segment[0] += 1
        stimuli.append(AudioStimulus(t, audio, cue, sid))

    # arrival: one participant calls the robot from the left
    caller = arrival[int(rng.integers(len(arrival)))].color_label
    speak(caller, 1.5, "call", azimuth=AzimuthBin.LEFT.center)

    # positioning
    t = 3.0
    for color in positioning_order(game):
        path = paths[color]
        x0 = path.points[-1][1]
        home_x = azimuth_to_x(parts[color].home_bin.center)
        t1 = path.walk_to(t, x0, LANE_Y)
        t1 = path.walk_to(t1 + TURN_PAUSE, home_x, LANE_Y)
        t1 = path.walk_to(t1 + TURN_PAUSE, home_x, SEAT_Y)
        t = t1 + STABLE_WINDOW + 1.5
    t += 1.0

    # presentations
    names = extracted_names(config)
    for color in positioning_order(game):
        stimuli.append(NameStimulus(t, names[color]))
        for j in range(int(round(game.presentation_seconds))):
            speak(color, t + j, "speech")
        t += game.presentation_seconds
        stimuli.append(TimerStimulus(t, "presentation"))
        t += 1.0
    t -= 1.0

    # rounds
    for describer in turn_order(game):
        t += game.prepare_seconds
        stimuli.append(TimerStimulus(t, "prepare"))
        for j in range(int(round(game.description_seconds))):
            speak(describer, t + j, "speech")
        t += game.description_seconds
        stimuli.append(TimerStimulus(t, "description"))
        if rng.random() < config.no_answer_rate:
            t += game.answer_wait_seconds
            stimuli.append(TimerStimulus(t, "answer_wait"))
            continue
        others = [c for c in game.players if c != describer]
        answerer = others[int(rng.integers(len(others)))]
        t += 2.0
        speak(answerer, t, "buzzer")
        speak(answerer, t + 1.0, "speech")
        speak(answerer, t + 2.0, "speech")
        stimuli.append(TimerStimulus(t + game.answer_seconds, "answer"))
        t += game.answer_seconds + 1.5
        stimuli.append(HotWordStimulus(t, "yes" if rng.random() < 0.5 else "no"))
    t_end = t + 1.0

    # camera frames
    n_frames = int(math.floor(t_end * config.frame_rate)) + 1
    for f in range(n_frames):
        tf = f / config.frame_rate
        dets = []
        for p in arrival:
            det = synth_face(p, f, paths[p.color_label].at(tf), config.detector_miss_rate,
                             seed=config.master_seed, jitter=config.bbox_jitter)
            if det is None:
                continue
            det.sample_id = sample_id("face", p.color_label, tf)
            dets.append(det)
        stimuli.append(FrameStimulus(tf, f, tuple(dets)))

    order = {id(s): k for k, s in enumerate(stimuli)}
    stimuli.sort(key=lambda s: (s.t, _PRIORITY.get(type(s), 2), order[id(s)]))
    return Scenario(config, game, stimuli, truth, names)


# ---- scenario files -----------------------------------------------------

_FLOAT_KEYS = ("azimuth_noise_sigma", "detector_miss_rate", "name_failure_rate",
               "ego_noise_snr_db", "frame_rate", "no_answer_rate", "bbox_jitter")
_INT_KEYS = ("sample_rate", "master_seed")


def _parse_rate(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def parse_scenario(text: str, master_seed: int | None = None) -> ScenarioConfig:
    """Parse key=value lines.

    ``participant = <color> <name> <home bin> [face_seed voice_seed]``
    may repeat; without any participant lines the default group is used.
    Blank lines and ``#`` comments are skipped.
    """
    kw: dict = {}
    raw_parts = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "participant":
            raw_parts.append((lineno, value.split()))
        elif key in _FLOAT_KEYS:
            kw[key] = _parse_rate(value)
        elif key in _INT_KEYS:
            kw[key] = int(value)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if master_seed is not None:
        kw["master_seed"] = master_seed
    sr = kw.get("sample_rate", 16000)
    if raw_parts:
        parts = []
        for k, (lineno, fields) in enumerate(raw_parts):
            if len(fields) not in (3, 5):
                raise ConfigError(f"line {lineno}: participant = color name bin [face_seed voice_seed]")
            color, name, home = fields[:3]
            fs, vs = (int(fields[3]), int(fields[4])) if len(fields) == 5 else (1000 + 2 * k, 1001 + 2 * k)
            try:
                home_bin = AzimuthBin.parse(home)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from None
            parts.append(ParticipantSpec.create(name, color, fs, vs, home_bin, sr))
        kw["participants"] = tuple(parts)
    else:
        kw["participants"] = default_participants(0, sr)
    return ScenarioConfig(**kw)


def load_scenario(path: str | Path, master_seed: int | None = None) -> ScenarioConfig:
    return parse_scenario(Path(path).read_text(), master_seed)


def format_scenario(config: ScenarioConfig) -> str:
    lines = [f"{k}={getattr(config, k)!r}" for k in _FLOAT_KEYS + _INT_KEYS]
    for p in config.participants:
        lines.append(f"participant={p.color_label} {p.name} {p.home_bin.value} {p.face_seed} {p.voice_seed}")
    return "\n".join(lines) + "\n"


def with_seed(config: ScenarioConfig, seed: int) -> ScenarioConfig:
    return replace(config, master_seed=seed)
