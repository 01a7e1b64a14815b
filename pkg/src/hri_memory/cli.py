"""Command-line driver: simulate a session, extract features, enroll,
evaluate and report."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import features as ft
from . import recognition as rc
from .collector import (QUARANTINE_DIR, DatasetManifest, label_dir, read_dataset, read_wav,
                        write_dataset, write_pgm, write_wav, read_pgm)
from .game import Phase
from .session import build_test_split, run_session
from .sim import ConfigError, default_scenario, format_scenario, load_scenario, \
    synth_ego_noise_recording, with_seed

log = logging.getLogger("hri_memory")

EGO_NOISE_FILE = "ego_noise.wav"
EGO_NOISE_SECONDS = 30.0
FEATURE_INDEX = "index.txt"
GRAM_SHAPE = (ft.N_FILTERS, 2 * ft.FRAMES_PER_CHANNEL)


class UsageError(Exception):
    pass


def _require_dir(path: Path, what: str) -> Path:
    if not path.is_dir():
        raise UsageError(f"{what} {path} does not exist")
    return path


# ---- simulate -----------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.scenario is not None:
        path = Path(args.scenario)
        if not path.is_file():
            raise UsageError(f"scenario file {path} does not exist")
        config = load_scenario(path, master_seed=args.seed)
    else:
        config = with_seed(default_scenario(), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    result = run_session(config)
    meta = {"seed": str(args.seed), "complete": str(result.complete).lower()}
    write_dataset(result.records(), out / "dataset", f"seed-{args.seed}",
                  quarantine=result.collector.quarantine, metadata=meta)
    write_wav(out / "dataset" / EGO_NOISE_FILE,
              synth_ego_noise_recording(EGO_NOISE_SECONDS, config, salt=0))
    if not args.no_test_split:
        records, impostors = build_test_split(config)
        write_dataset(records, out / "test", f"seed-{args.seed}-test",
                      metadata={"seed": str(args.seed), "impostors": ",".join(impostors)})
        write_wav(out / "test" / EGO_NOISE_FILE,
                  synth_ego_noise_recording(EGO_NOISE_SECONDS, config, salt=1))
    (out / "scenario.txt").write_text(format_scenario(config))
    (out / "trace.txt").write_text(result.trace.export())
    (out / "truth.txt").write_text(result.scenario.truth_log())
    (out / "labels.txt").write_text("".join(
        f"{sid}\t{result.scenario.truth[sid].kind}\t{key}\n" for sid, key in sorted(result.labels.items())))
    (out / "memory.txt").write_text(result.memory.snapshot())

    print("label\tfaces\tvoice_seconds")
    for rec in result.records():
        print(f"{rec.label}\t{len(rec.faces)}\t{rec.voice_seconds:.1f}")
    q = result.collector.quarantine
    print(f"quarantine\t{len(q.faces)}\t{q.voice_seconds:.1f}")
    if not result.complete:
        print(f"error: session did not reach the end of the game (stopped in {result.trace.final_state})",
              file=sys.stderr)
        return 3
    return 0


# ---- features -----------------------------------------------------------

def write_gram(path: Path, gram: np.ndarray) -> None:
    np.asarray(gram, dtype="<f4").tofile(path)


def read_gram(path: Path) -> np.ndarray:
    return np.fromfile(path, dtype="<f4").astype(np.float64).reshape(GRAM_SHAPE)


def cmd_features(args) -> int:
    data = _require_dir(Path(args.data), "dataset")
    records, manifest = read_dataset(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    noise_path = Path(args.noise) if args.noise else data / EGO_NOISE_FILE
    noise_floor = None
    noise = None
    if noise_path.is_file():
        noise = read_wav(noise_path)
        noise_floor = ft.estimate_noise_floor(noise, noise.sample_rate)
    else:
        log.warning("no ego-noise recording at %s; using the absolute VAD floor", noise_path)

    rows = []
    kept = dropped = 0
    for rec in records:
        d = out / label_dir(rec.label)
        (d / "faces").mkdir(parents=True, exist_ok=True)
        (d / "voices").mkdir(parents=True, exist_ok=True)
        for k, face in enumerate(rec.faces):
            rel = f"{label_dir(rec.label)}/faces/{k:04d}.pgm"
            write_pgm(out / rel, ft.align_crop(face.image))
            rows.append(("face", rec.label, rel, f"faces/{k:04d}.pgm", "0.000", "-"))
        n = 0
        for k, voice in enumerate(rec.voices):
            sr = voice.audio.sample_rate
            for j, chunk in enumerate(ft.chunk_audio(voice.audio.samples, sr)):
                frac = ft.vad_fraction(chunk, sr, noise_floor)
                if frac < ft.VAD_MIN_FRACTION:
                    dropped += 1
                    continue
                rel = f"{label_dir(rec.label)}/voices/{n:04d}.f32"
                write_gram(out / rel, ft.gammatonegram(chunk, sr))
                rows.append(("voice", rec.label, rel, f"voices/{k:04d}.wav",
                             f"{j * ft.HOP_SECONDS:.3f}", f"{frac:.3f}"))
                n += 1
                kept += 1
    if noise is not None:
        d = out / ("_" + rc.BACKGROUND)  # person directories never start with "_"
        d.mkdir(parents=True, exist_ok=True)
        for j, chunk in enumerate(ft.chunk_audio(noise.samples, noise.sample_rate, hop=1.0)):
            rel = f"_{rc.BACKGROUND}/{j:04d}.f32"
            write_gram(out / rel, ft.gammatonegram(chunk, noise.sample_rate))
            rows.append(("voice", rc.BACKGROUND, rel, noise_path.name, f"{float(j):.3f}", "-"))

    header = [f"# shape\t{GRAM_SHAPE[0]}x{GRAM_SHAPE[1]} float32-le",
              f"# session\t{manifest.session_id}"]
    header += [f"# {k}\t{v}" for k, v in sorted(manifest.metadata.items())]
    (out / FEATURE_INDEX).write_text("\n".join(header + ["\t".join(r) for r in rows]) + "\n")
    print(f"faces\t{sum(r[0] == 'face' for r in rows)}")
    print(f"voice_chunks\t{kept}\tdiscarded_by_vad\t{dropped}")
    return 0


def read_feature_index(root: Path) -> tuple[list[tuple[str, str, Path]], dict[str, str]]:
    path = root / FEATURE_INDEX
    if not path.is_file():
        raise UsageError(f"{root} has no {FEATURE_INDEX}; run the features subcommand first")
    rows, meta = [], {}
    for line in path.read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("\t")
            meta[k] = v
        elif line.strip():
            kind, label, rel, *_ = line.split("\t")
            rows.append((kind, label, root / rel))
    return rows, meta


def load_embeddings(root: Path, kind: str, include_background: bool = False):
    face_emb, voice_emb = rc.PixelEmbedder(), rc.EnergyVoiceEmbedder()
    rows, _ = read_feature_index(root)
    labels, vecs = [], []
    for k, label, path in rows:
        if k != kind or (label == rc.BACKGROUND and not include_background):
            continue
        vecs.append(face_emb(read_pgm(path)) if kind == "face" else voice_emb(read_gram(path)))
        labels.append(label)
    return labels, np.array(vecs)


# ---- enroll -------------------------------------------------------------

DB_FILES = {"face": "faces.db", "voice": "voices.db"}


def cmd_enroll(args) -> int:
    root = _require_dir(Path(args.features), "feature directory")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in _modalities(args.modality):
        labels, vecs = load_embeddings(root, kind)
        if not labels:
            raise UsageError(f"no {kind} features in {root}")
        db = rc.EmbeddingDb().extend(zip(labels, vecs))
        db.save(out / DB_FILES[kind])
        print(f"{kind}\t{len(db)} embeddings\t{len(set(labels))} identities\tdim {db.dim}")
    return 0


def _modalities(choice: str) -> list[str]:
    return ["face", "voice"] if choice == "both" else [choice]


# ---- evaluate -----------------------------------------------------------

DEFAULT_THRESHOLDS = {"face": rc.FACE_THRESHOLD, "voice": rc.VOICE_THRESHOLD}
SWEEP_POINTS = 20


def _fmt(x) -> str:
    return "nan" if x is None else f"{x:.4f}"


def cmd_evaluate(args) -> int:
    test = _require_dir(Path(args.test), "test feature directory")
    out = Path(args.out)
    if args.classifier is None and args.db is None:
        raise UsageError("open-set evaluation needs --db (or pass --classifier with --train)")
    if args.classifier is not None and args.train is None:
        raise UsageError("closed-set evaluation needs --train")
    out.mkdir(parents=True, exist_ok=True)
    if args.classifier is None:
        return _evaluate_open(Path(args.db), test, out, args)
    return _evaluate_closed(_require_dir(Path(args.train), "training feature directory"), test, out, args)


def _evaluate_open(db_dir: Path, test: Path, out: Path, args) -> int:
    lines = ["modality\tthreshold\tpositive_accuracy\tnegative_accuracy\tTP\tFN\tTN\tFP"]
    for kind in _modalities(args.modality):
        db_path = db_dir / DB_FILES[kind]
        if not db_path.is_file():
            raise UsageError(f"missing {db_path}; run enroll first")
        db = rc.EmbeddingDb.load(db_path)
        enrolled = set(db.labels)
        labels, vecs = load_embeddings(test, kind)
        truth = [lbl if lbl in enrolled else None for lbl in labels]
        t = args.threshold if args.threshold is not None else DEFAULT_THRESHOLDS[kind]
        if args.embedder == "oracle":
            db, vecs = _oracle_embeddings(db, labels, t)
        verdicts = [rc.classify_open_set(db, v, t) for v in vecs]
        c = rc.open_set_counts(verdicts, truth)
        lines.append(f"{kind}\t{t:g}\t{_fmt(rc.positive_accuracy(verdicts, truth))}\t"
                     f"{_fmt(rc.negative_accuracy(verdicts, truth))}\t{c.tp}\t{c.fn}\t{c.tn}\t{c.fp}")
        if args.sweep:
            grid = np.linspace(t / 10, 3 * t, SWEEP_POINTS)
            sweep = ["threshold\tpositive_accuracy\tnegative_accuracy\tknown_rate"]
            sweep += [f"{r.threshold:.4f}\t{_fmt(r.positive)}\t{_fmt(r.negative)}\t{r.known_rate:.4f}"
                      for r in rc.threshold_sweep(db, vecs, truth, grid)]
            (out / f"sweep_{kind}.tsv").write_text("\n".join(sweep) + "\n")
            print(f"# sweep ({kind})")
            print("\n".join(sweep))
    text = "\n".join(lines) + "\n"
    (out / "report.tsv").write_text(text)
    print(text, end="")
    return 0


ORACLE_KEY_OFFSET = 1_000_000  # keeps test jitter draws apart from enrolled ones


def _oracle_embeddings(db: rc.EmbeddingDb, labels: list[str], t: float):
    """Replace stored and test vectors by oracle draws around per-label
    centroids 3t apart (sanity check of the evaluation plumbing)."""
    oracle = rc.OracleEmbedder.separated(sorted(set(db.labels) | set(labels)), t)
    enrolled = rc.EmbeddingDb().extend((lbl, oracle(lbl, i)) for i, lbl in enumerate(db.labels))
    vecs = np.array([oracle(lbl, ORACLE_KEY_OFFSET + i) for i, lbl in enumerate(labels)])
    return enrolled, vecs


def _evaluate_closed(train: Path, test: Path, out: Path, args) -> int:
    for kind in _modalities(args.modality):
        with_bg = kind == "voice"
        xtr, ytr = _xy(train, kind, with_bg)
        xte, yte = _xy(test, kind, with_bg)
        classes = sorted(set(ytr))
        keep = [i for i, y in enumerate(yte) if y in classes]
        if not keep:
            raise UsageError(f"no {kind} test samples of trained classes in {test}")
        model = rc.train_closed_set(xtr, ytr, args.classifier, classes)
        report = rc.eval_closed_set(model, xte[keep], [yte[i] for i in keep])
        (out / f"closed_{kind}.tsv").write_text(report.format())
        write_pgm(out / f"confusion_{kind}.pgm", rc.confusion_heatmap(report.confusion))
        print(f"# closed set ({kind}, {args.classifier})")
        print(report.format(), end="")
    return 0


def _xy(root: Path, kind: str, with_bg: bool):
    labels, vecs = load_embeddings(root, kind, include_background=with_bg)
    if not labels:
        raise UsageError(f"no {kind} features in {root}")
    return vecs, labels


# ---- report -------------------------------------------------------------

def cmd_report(args) -> int:
    run = _require_dir(Path(args.run), "run directory")
    manifest_path = run / "dataset" / "manifest.txt"
    if not manifest_path.is_file():
        raise UsageError(f"{run} is not a simulate output directory")
    manifest = DatasetManifest.parse(manifest_path.read_text())
    print(f"session\t{manifest.session_id}")
    for k, v in sorted(manifest.metadata.items()):
        print(f"{k}\t{v}")
    print("label\tfaces\tvoice_seconds")
    for r in manifest.rows:
        print(f"{r.label}\t{r.n_faces}\t{r.voice_seconds:.1f}")
    qdir = run / "dataset" / QUARANTINE_DIR
    if qdir.is_dir():
        nf = len(list((qdir / "faces").glob("*.pgm")))
        nv = len(list((qdir / "voices").glob("*.wav")))
        print(f"quarantine\t{nf} faces\t{nv} voice blocks")
    trace = (run / "trace.txt").read_text().splitlines() if (run / "trace.txt").is_file() else []
    if trace:
        states = [line.split(" ")[1] for line in trace]
        rounds = sum(1 for prev, cur in zip([""] + states, states)
                     if cur.startswith(Phase.CARD_DESCRIPTION.value)
                     and not prev.startswith(Phase.CARD_DESCRIPTION.value))
        print(f"trace\t{len(trace)} events\trounds {rounds}")
    truth_path, labels_path = run / "truth.txt", run / "labels.txt"
    if truth_path.is_file() and labels_path.is_file():
        truth = {}
        for line in truth_path.read_text().splitlines():
            sid, kind, color, _ = line.split("\t")
            truth[sid] = color
        for kind in ("face", "voice"):
            pairs = [line.split("\t") for line in labels_path.read_text().splitlines()]
            got = [(sid, key) for sid, k, key in pairs if k == kind]
            if got:
                acc = sum(truth[sid] == key for sid, key in got) / len(got)
                print(f"label_accuracy_{kind}\t{acc:.4f}\t({len(got)} samples)")
    for extra in args.eval or []:
        p = Path(extra) / "report.tsv"
        if p.is_file():
            print(f"# {p}")
            print(p.read_text(), end="")
    return 0


# ---- entry point --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hri-memory", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulated game session and write its dataset")
    p.add_argument("--scenario", help="scenario file (key=value lines); default 3-player scenario if omitted")
    p.add_argument("--seed", type=int, required=True, help="master seed (all randomness derives from it)")
    p.add_argument("--out", required=True)
    p.add_argument("--no-test-split", action="store_true", help="skip the held-out evaluation split")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("features", help="align faces and compute gammatonegrams of a dataset")
    p.add_argument("--data", required=True, help="dataset directory (with manifest.txt)")
    p.add_argument("--out", required=True)
    p.add_argument("--noise", help="ego-noise recording for the VAD floor (default: <data>/ego_noise.wav)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("enroll", help="build embedding databases from extracted features")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--modality", choices=("face", "voice", "both"), default="both")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("evaluate", help="open-set (default) or closed-set evaluation")
    p.add_argument("--test", required=True, help="feature directory of the test split")
    p.add_argument("--db", help="enrolled database directory (open set)")
    p.add_argument("--train", help="feature directory to train a closed-set classifier on")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, help="distance threshold (default 0.4 faces, 1.7 voices)")
    p.add_argument("--sweep", action="store_true", help="also tabulate accuracy over a threshold sweep")
    p.add_argument("--classifier", choices=tuple(rc.CLASSIFIERS), help="closed-set classifier")
    p.add_argument("--embedder", choices=("reference", "oracle"), default="reference",
                   help="open set only: 'oracle' swaps in label-derived embeddings")
    p.add_argument("--modality", choices=("face", "voice", "both"), default="both")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarize a simulate run")
    p.add_argument("--run", required=True, help="simulate output directory")
    p.add_argument("--eval", action="append", help="evaluate output directory to include (repeatable)")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, rc.RecognitionError, ft.FeatureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
