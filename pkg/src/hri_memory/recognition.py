"""Identification: embedding database, open-set k=1 nearest neighbour with
a distance threshold, reference embedders and classifiers, and metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

FACE_THRESHOLD = 0.4
VOICE_THRESHOLD = 1.7
EVAL_VOICE_CHUNKS = 6
EVAL_FACES = 10
EVAL_IMPOSTORS = 4
BACKGROUND = "background"


class RecognitionError(ValueError):
    pass


class ClassConfigError(RecognitionError):
    pass


# ---- open set -----------------------------------------------------------

@dataclass(frozen=True)
class Known:
    label: str
    distance: float


@dataclass(frozen=True)
class Unknown:
    distance: float


OpenSetVerdict = Union[Known, Unknown]


class EmbeddingDb:
    """Enrolled (label, vector) pairs of a fixed dimension."""

    def __init__(self, dim: int | None = None):
        self.dim = dim
        self.labels: list[str] = []
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None

    def add(self, label: str, vector) -> None:
        v = np.asarray(vector, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise RecognitionError("embedding has non-finite entries")
        if self.dim is None:
            self.dim = v.size
        elif v.size != self.dim:
            raise RecognitionError(f"embedding dimension {v.size} != database dimension {self.dim}")
        self.labels.append(str(label))
        self._rows.append(v)
        self._matrix = None

    def extend(self, pairs) -> "EmbeddingDb":
        for label, vec in pairs:
            self.add(label, vec)
        return self

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.vstack(self._rows) if self._rows else np.zeros((0, self.dim or 0))
        return self._matrix

    def distances(self, query) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64).ravel()
        if not self.labels:
            raise RecognitionError("empty embedding database")
        if q.size != self.dim:
            raise RecognitionError(f"query dimension {q.size} != database dimension {self.dim}")
        return np.sqrt(np.sum((self.matrix - q) ** 2, axis=1))

    def nearest(self, query) -> tuple[str, float]:
        d = self.distances(query)
        i = int(np.argmin(d))
        return self.labels[i], float(d[i])

    # plain text, one "label<TAB>v1 v2 ..." row per entry; repr floats round-trip exactly
    def save(self, path: str | Path) -> None:
        lines = [f"# dim\t{self.dim}"]
        lines += [label + "\t" + " ".join(repr(float(x)) for x in row)
                  for label, row in zip(self.labels, self._rows)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingDb":
        db = cls()
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            if line.startswith("# dim\t"):
                value = line.split("\t", 1)[1]
                db.dim = None if value == "None" else int(value)
                continue
            label, vec = line.split("\t")
            db.add(label, np.array(vec.split(), dtype=np.float64))
        return db


def classify_open_set(db: EmbeddingDb, query, t: float) -> OpenSetVerdict:
    """Known(label) of the nearest enrolled embedding if it lies within
    distance t, Unknown otherwise."""
    if not t > 0:
        raise RecognitionError("threshold must be positive")
    label, dist = db.nearest(query)
    return Known(label, dist) if dist <= t else Unknown(dist)


@dataclass(frozen=True)
class OpenSetCounts:
    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0


def open_set_counts(verdicts: Sequence[OpenSetVerdict], truth: Sequence[str | None]) -> OpenSetCounts:
    """`truth[i]` is the enrolled label of query i, or None for an impostor.
    A Known verdict with the wrong label on an enrolled query is a false
    negative."""
    if len(verdicts) != len(truth):
        raise RecognitionError("verdicts and truth differ in length")
    tp = fn = tn = fp = 0
    for v, lbl in zip(verdicts, truth):
        if lbl is None:
            if isinstance(v, Known):
                fp += 1
            else:
                tn += 1
        elif isinstance(v, Known) and v.label == lbl:
            tp += 1
        else:
            fn += 1
    return OpenSetCounts(tp, fn, tn, fp)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def positive_accuracy(verdicts, truth) -> float | None:
    """TP / (TP + FN); None when there are no enrolled queries."""
    c = open_set_counts(verdicts, truth)
    return _ratio(c.tp, c.tp + c.fn)


def negative_accuracy(verdicts, truth) -> float | None:
    """TN / (TN + FP); None when there are no impostor queries."""
    c = open_set_counts(verdicts, truth)
    return _ratio(c.tn, c.tn + c.fp)


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    positive: float | None
    negative: float | None
    known_rate: float


def threshold_sweep(db: EmbeddingDb, queries, truth, thresholds) -> list[SweepRow]:
    nearest = [db.nearest(q) for q in queries]
    rows = []
    for t in thresholds:
        verdicts = [Known(lbl, d) if d <= t else Unknown(d) for lbl, d in nearest]
        known = sum(isinstance(v, Known) for v in verdicts)
        rows.append(SweepRow(float(t), positive_accuracy(verdicts, truth),
                             negative_accuracy(verdicts, truth),
                             known / len(verdicts) if verdicts else 0.0))
    return rows


# ---- embedders ----------------------------------------------------------

class PixelEmbedder:
    """Block-averaged pixels of an aligned face, mean-removed and scaled to
    unit length (a flat image maps to the zero vector)."""

    def __init__(self, grid: int = 18):
        self.grid = grid

    @property
    def dim(self) -> int:
        return self.grid * self.grid

    def __call__(self, face: np.ndarray) -> np.ndarray:
        img = np.asarray(face, dtype=np.float64)
        if img.ndim != 2:
            raise RecognitionError("expected a 2-D aligned face")
        h, w = img.shape
        g = self.grid
        ys = np.linspace(0, h, g + 1).astype(int)
        xs = np.linspace(0, w, g + 1).astype(int)
        if min(np.diff(ys).min(), np.diff(xs).min()) < 1:
            raise RecognitionError(f"face {img.shape} smaller than the {g}x{g} grid")
        rows = np.add.reduceat(img, ys[:-1], axis=0) / np.diff(ys)[:, None]
        blocks = np.add.reduceat(rows, xs[:-1], axis=1) / np.diff(xs)[None, :]
        v = blocks.ravel()
        v = v - v.mean()
        norm = np.linalg.norm(v)
        return v / norm if norm > 1e-12 else np.zeros_like(v)


class EnergyVoiceEmbedder:
    """Per-filter mean energy of a gammatonegram (one value per row).

    With `log`, energies are compressed as log10(1 + e / ref), which keeps
    silence at the zero vector.
    """

    def __init__(self, log: bool = True, ref: float = 1e-6):
        self.log = log
        self.ref = ref

    def __call__(self, gram: np.ndarray) -> np.ndarray:
        g = np.asarray(gram, dtype=np.float64)
        if g.ndim != 2:
            raise RecognitionError("expected a 2-D gammatonegram")
        v = g.mean(axis=1)
        return np.log10(1.0 + v / self.ref) if self.log else v


class OracleEmbedder:
    """Test oracle: every identity has a fixed centroid; each sample lands
    within `jitter` of it (uniform in the ball), deterministically per key."""

    def __init__(self, centroids: dict[str, np.ndarray], jitter: float, seed: int = 0):
        self.centroids = {k: np.asarray(v, dtype=np.float64) for k, v in centroids.items()}
        self.jitter = jitter
        self.seed = seed
        self._index = {k: i for i, k in enumerate(sorted(self.centroids))}

    @classmethod
    def separated(cls, labels: Sequence[str], t: float, separation: float = 3.0,
                  jitter: float | None = None, seed: int = 0) -> "OracleEmbedder":
        """Centroids on orthogonal axes, pairwise exactly `separation * t` apart."""
        n = len(labels)
        a = separation * t / np.sqrt(2.0)
        cents = {lbl: a * np.eye(n)[i] for i, lbl in enumerate(labels)}
        return cls(cents, t / 2 if jitter is None else jitter, seed)

    def __call__(self, label: str, key: int) -> np.ndarray:
        c = self.centroids[label]
        rng = np.random.default_rng([self.seed, self._index[label], key])
        u = rng.normal(size=c.size)
        u *= rng.uniform() ** (1.0 / c.size) / np.linalg.norm(u)
        return c + self.jitter * u


# ---- closed set ---------------------------------------------------------

def chance_level(n_classes: int) -> float:
    if n_classes < 1:
        raise ClassConfigError("need at least one class")
    return 1.0 / n_classes


def confusion_matrix(truth: Sequence[str], predicted: Sequence[str],
                     classes: Sequence[str]) -> np.ndarray:
    """Rows are true classes, columns predictions, in `classes` order."""
    if len(truth) != len(predicted):
        raise RecognitionError("truth and predictions differ in length")
    idx = {c: i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        if t not in idx or p not in idx:
            raise RecognitionError(f"label outside the class list: {t!r} / {p!r}")
        cm[idx[t], idx[p]] += 1
    return cm


def _check_training(x, y, classes):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(y):
        raise RecognitionError("features must be (n_samples, dim) with one label per row")
    classes = sorted(set(y)) if classes is None else list(classes)
    if len(classes) < 2:
        raise ClassConfigError("need at least two classes")
    present = set(y)
    empty = [c for c in classes if c not in present]
    if empty:
        raise ClassConfigError(f"classes without training samples: {empty}")
    extra = present - set(classes)
    if extra:
        raise ClassConfigError(f"labels outside the class list: {sorted(extra)}")
    return x, list(y), classes


@dataclass
class NearestCentroid:
    classes: list[str] = field(default_factory=list)
    centroids: np.ndarray | None = None

    def fit(self, x, y, classes=None) -> "NearestCentroid":
        x, y, self.classes = _check_training(x, y, classes)
        lab = np.array(y, dtype=object)
        self.centroids = np.vstack([x[lab == c].mean(axis=0) for c in self.classes])
        return self

    def predict(self, x) -> list[str]:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d = ((x[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        return [self.classes[i] for i in np.argmin(d, axis=1)]


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_loss_grad(w: np.ndarray, b: np.ndarray, x: np.ndarray, y: np.ndarray,
                      l2: float = 0.0) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of softmax(x w + b) against integer labels y, plus
    (l2 / 2) |w|^2; returns (loss, dL/dw, dL/db)."""
    n = len(x)
    p = softmax(x @ w + b)
    loss = -np.mean(np.log(p[np.arange(n), y] + 1e-300)) + 0.5 * l2 * np.sum(w * w)
    d = p.copy()
    d[np.arange(n), y] -= 1.0
    d /= n
    return float(loss), x.T @ d + l2 * w, d.sum(axis=0)


@dataclass
class LinearSoftmax:
    """One-layer softmax classifier on standardized features, trained by
    full-batch gradient descent."""
    lr: float = 0.5
    epochs: int = 300
    l2: float = 1e-4
    classes: list[str] = field(default_factory=list)
    w: np.ndarray | None = None
    b: np.ndarray | None = None
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None
    losses: list[float] = field(default_factory=list)

    def _standardize(self, x):
        return (x - self.mean) / self.scale

    def fit(self, x, y, classes=None) -> "LinearSoftmax":
        x, y, self.classes = _check_training(x, y, classes)
        self.mean = x.mean(axis=0)
        self.scale = np.where(x.std(axis=0) > 1e-12, x.std(axis=0), 1.0)
        xs = self._standardize(x)
        idx = {c: i for i, c in enumerate(self.classes)}
        yi = np.array([idx[v] for v in y])
        self.w = np.zeros((x.shape[1], len(self.classes)))
        self.b = np.zeros(len(self.classes))
        self.losses = []
        for _ in range(self.epochs):
            loss, gw, gb = softmax_loss_grad(self.w, self.b, xs, yi, self.l2)
            self.losses.append(loss)
            self.w -= self.lr * gw
            self.b -= self.lr * gb
        return self

    def predict(self, x) -> list[str]:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        z = self._standardize(x) @ self.w + self.b
        return [self.classes[i] for i in np.argmax(z, axis=1)]


CLASSIFIERS = {"centroid": NearestCentroid, "linear": LinearSoftmax}


def train_closed_set(features, labels, classifier: str = "centroid", classes=None, **kw):
    try:
        model = CLASSIFIERS[classifier](**kw)
    except KeyError:
        raise ClassConfigError(f"unknown classifier {classifier!r}") from None
    return model.fit(features, labels, classes)


@dataclass(frozen=True)
class ClosedSetReport:
    classes: tuple[str, ...]
    confusion: np.ndarray
    accuracy: float
    chance: float

    def format(self) -> str:
        lines = [f"accuracy\t{self.accuracy:.4f}", f"chance\t{self.chance:.4f}",
                 "truth\\pred\t" + "\t".join(self.classes)]
        for c, row in zip(self.classes, self.confusion):
            lines.append(c + "\t" + "\t".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


def eval_closed_set(model, features, labels) -> ClosedSetReport:
    pred = model.predict(features)
    cm = confusion_matrix(labels, pred, model.classes)
    total = cm.sum()
    acc = float(np.trace(cm) / total) if total else 0.0
    return ClosedSetReport(tuple(model.classes), cm, acc, chance_level(len(model.classes)))


def confusion_heatmap(cm: np.ndarray, cell: int = 8) -> np.ndarray:
    """Row-normalized confusion matrix as an 8-bit image, dark = frequent."""
    cm = np.asarray(cm, dtype=np.float64)
    rows = cm.sum(axis=1, keepdims=True)
    frac = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    img = np.round(255.0 * (1.0 - frac)).astype(np.uint8)
    return np.kron(img, np.ones((cell, cell), dtype=np.uint8))
