"""Data collector: labels faces and voices through spatial memory and writes
the per-person dataset.

On-disk layout::

    <out>/manifest.txt                # "<label>\\t<n_faces>\\t<voice_seconds>" rows
    <out>/<label>/faces/NNNN.pgm      # 8-bit binary PGM
    <out>/<label>/faces.idx           # "NNNN.pgm x1 y1 x2 y2"
    <out>/<label>/voices/NNNN.wav     # 16-bit PCM
    <out>/quarantine/...              # same layout, samples that could not be labeled
"""
from __future__ import annotations

import re
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .memory import Ambiguous, SpatialMemory, UnknownTrack
from .mot import BoundingBox, FaceDetection
from .sls import AudioEvent, AzimuthBin

UNASSIGNED = "unassigned"
QUARANTINE_DIR = "quarantine"
MIN_VOICE_SECONDS = 0.1


# ---- file formats -------------------------------------------------------

def write_pgm(path: Path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError("PGM images must be 2-D uint8")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pgm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data, np.uint8, w * h, pos).reshape(h, w).copy()


def write_wav(path: Path, audio: AudioEvent) -> None:
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(audio.n_channels)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(audio.samples.astype("<i2").tobytes())


def read_wav(path: Path) -> AudioEvent:
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM is supported")
        ch, sr = wf.getnchannels(), wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, "<i2").astype(np.int16).reshape(-1, ch)
    return AudioEvent(samples, sr)


# ---- records ------------------------------------------------------------

@dataclass(eq=False)
class FaceSample:
    image: np.ndarray
    bbox: BoundingBox
    sample_id: int | None = None

    def __eq__(self, other):
        if not isinstance(other, FaceSample):
            return NotImplemented
        return self.bbox == other.bbox and np.array_equal(self.image, other.image)


@dataclass(eq=False)
class VoiceSample:
    audio: AudioEvent
    sample_id: int | None = None

    def __eq__(self, other):
        if not isinstance(other, VoiceSample):
            return NotImplemented
        a, b = self.audio, other.audio
        return a.sample_rate == b.sample_rate and np.array_equal(a.samples, b.samples)


@dataclass
class PersonRecord:
    label: str
    faces: list[FaceSample] = field(default_factory=list)
    voices: list[VoiceSample] = field(default_factory=list)

    @property
    def voice_seconds(self) -> float:
        return sum(v.audio.duration for v in self.voices)


@dataclass(frozen=True)
class ManifestRow:
    label: str
    n_faces: int
    voice_seconds: float


@dataclass
class DatasetManifest:
    rows: list[ManifestRow]
    session_id: str = ""
    metadata: dict[str, str] = field(default_factory=dict)

    def format(self) -> str:
        lines = [f"# session\t{self.session_id}"]
        lines += [f"# {k}\t{v}" for k, v in sorted(self.metadata.items())]
        lines += [f"{r.label}\t{r.n_faces}\t{r.voice_seconds:.3f}" for r in self.rows]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "DatasetManifest":
        rows, meta, session = [], {}, ""
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("# "):
                key, _, value = line[2:].partition("\t")
                if key == "session":
                    session = value
                else:
                    meta[key] = value
                continue
            label, n_faces, secs = line.split("\t")
            rows.append(ManifestRow(label, int(n_faces), round(float(secs), 3)))
        return cls(rows, session, meta)

    def labels(self) -> list[str]:
        return [r.label for r in self.rows]


class Collector:
    """Accumulates labeled samples during a session.

    Records are keyed by the player's color label; final names are only
    substituted when the dataset is exported.
    """

    def __init__(self):
        self.records: dict[str, PersonRecord] = {}
        self.quarantine = PersonRecord(UNASSIGNED)
        self.faces_in = 0
        self.voices_in = 0

    def _record(self, key: str) -> PersonRecord:
        if key not in self.records:
            self.records[key] = PersonRecord(key)
        return self.records[key]

    def collect_face(self, detection: FaceDetection, source: int | None,
                     memory: SpatialMemory) -> str | None:
        """Store a face under the label of tracker `source`; returns the key or
        None when quarantined."""
        self.faces_in += 1
        sample = FaceSample(detection.image, detection.bbox, detection.sample_id)
        try:
            slot = memory.slot(source) if source is not None else None
        except UnknownTrack:
            slot = None
        if slot is None or slot.color_label is None:
            self.quarantine.faces.append(sample)
            return None
        self._record(slot.color_label).faces.append(sample)
        return slot.color_label

    def collect_voice(self, event: AudioEvent, bin: AzimuthBin, memory: SpatialMemory,
                      sample_id: int | None = None) -> str | None:
        self.voices_in += 1
        sample = VoiceSample(event, sample_id)
        who = memory.identity_at(bin)
        if who is None or isinstance(who, Ambiguous) or who.color_label is None \
                or event.duration < MIN_VOICE_SECONDS:
            self.quarantine.voices.append(sample)
            return None
        self._record(who.color_label).voices.append(sample)
        return who.color_label

    @property
    def stored(self) -> int:
        return sum(len(r.faces) + len(r.voices) for r in self.records.values())

    @property
    def quarantined(self) -> int:
        return len(self.quarantine.faces) + len(self.quarantine.voices)

    def export(self, memory: SpatialMemory) -> list[PersonRecord]:
        """Records relabeled with the names held in memory, in color order."""
        out, used = [], set()
        for key in sorted(self.records):
            slot = memory.by_color(key)
            label = slot.label if slot is not None else key
            if label in used:
                label = f"{label}-{key}"
            used.add(label)
            rec = self.records[key]
            out.append(PersonRecord(label, list(rec.faces), list(rec.voices)))
        return out


# ---- dataset I/O --------------------------------------------------------

_UNSAFE = re.compile(r"[^A-Za-z0-9._-]+")


def label_dir(label: str) -> str:
    name = _UNSAFE.sub("_", label).strip("._") or "_"
    if name == QUARANTINE_DIR:
        name = "_" + name
    return name


def _write_record(root: Path, rec: PersonRecord) -> None:
    (root / "faces").mkdir(parents=True, exist_ok=True)
    (root / "voices").mkdir(parents=True, exist_ok=True)
    idx = []
    for k, f in enumerate(rec.faces):
        fname = f"{k:04d}.pgm"
        write_pgm(root / "faces" / fname, f.image)
        b = f.bbox
        idx.append(f"{fname} {_num(b.x1)} {_num(b.y1)} {_num(b.x2)} {_num(b.y2)}")
    (root / "faces.idx").write_text("".join(line + "\n" for line in idx))
    for k, v in enumerate(rec.voices):
        write_wav(root / "voices" / f"{k:04d}.wav", v.audio)


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _read_record(root: Path, label: str) -> PersonRecord:
    rec = PersonRecord(label)
    idx = root / "faces.idx"
    if idx.exists():
        for line in idx.read_text().splitlines():
            if not line.strip():
                continue
            fname, *coords = line.split()
            rec.faces.append(FaceSample(read_pgm(root / "faces" / fname),
                                        BoundingBox(*map(float, coords))))
    vdir = root / "voices"
    if vdir.exists():
        for wav in sorted(vdir.glob("*.wav")):
            rec.voices.append(VoiceSample(read_wav(wav)))
    return rec


def write_dataset(records: list[PersonRecord], out_dir: str | Path, session_id: str = "",
                  quarantine: PersonRecord | None = None,
                  metadata: dict[str, str] | None = None) -> DatasetManifest:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        labels = [r.label for r in records]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")
        dirs = [label_dir(lbl) for lbl in labels]
        if len(set(dirs)) != len(dirs):
            raise ValueError(f"labels collide on disk: {labels}")
        rows = []
        for rec, d in zip(records, dirs):
            if not rec.label:
                raise ValueError("empty label")
            _write_record(out / d, rec)
            rows.append(ManifestRow(rec.label, len(rec.faces), round(rec.voice_seconds, 3)))
        if quarantine is not None and (quarantine.faces or quarantine.voices):
            _write_record(out / QUARANTINE_DIR, quarantine)
        manifest = DatasetManifest(rows, session_id, dict(metadata or {}))
        (out / "manifest.txt").write_text(manifest.format())
    except OSError as exc:
        raise OSError(f"writing dataset to {out}: {exc}") from exc
    return manifest


def read_dataset(out_dir: str | Path) -> tuple[list[PersonRecord], DatasetManifest]:
    root = Path(out_dir)
    try:
        manifest = DatasetManifest.parse((root / "manifest.txt").read_text())
    except OSError as exc:
        raise OSError(f"reading dataset manifest in {root}: {exc}") from exc
    records = [_read_record(root / label_dir(r.label), r.label) for r in manifest.rows]
    for rec, row in zip(records, manifest.rows):
        if len(rec.faces) != row.n_faces or abs(rec.voice_seconds - row.voice_seconds) > 1e-3:
            raise ValueError(f"{root}: on-disk content of {row.label!r} does not match manifest")
    return records, manifest


def read_quarantine(out_dir: str | Path) -> PersonRecord:
    root = Path(out_dir) / QUARANTINE_DIR
    if not root.exists():
        return PersonRecord(UNASSIGNED)
    return _read_record(root, UNASSIGNED)
