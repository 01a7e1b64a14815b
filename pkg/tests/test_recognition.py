import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hri_memory.features import align_face, gammatonegram
from hri_memory.recognition import (FACE_THRESHOLD, VOICE_THRESHOLD, ClassConfigError,
                                    EmbeddingDb, EnergyVoiceEmbedder, Known, LinearSoftmax,
                                    NearestCentroid, OracleEmbedder, PixelEmbedder,
                                    RecognitionError, Unknown, chance_level, classify_open_set,
                                    confusion_heatmap, confusion_matrix, eval_closed_set,
                                    negative_accuracy, open_set_counts, positive_accuracy,
                                    softmax_loss_grad, threshold_sweep, train_closed_set)
from hri_memory.sim import default_scenario, synth_face, synth_voice

# ---- hand-enumerated fixture -------------------------------------------
# enrolled a=0, b=10, c=20 on a line, t=1
LINE_DB = [("a", 0.0), ("b", 10.0), ("c", 20.0)]
FIXTURE = [  # (query, truth or None for impostor, hand verdict)
    (0.5, "a", "TP"), (0.9, "a", "TP"), (1.5, "a", "FN"), (9.5, "a", "FN"),
    (10.0, "b", "TP"), (10.2, "b", "TP"), (11.0, "b", "TP"), (12.0, "b", "FN"),
    (20.0, "c", "TP"), (19.5, "c", "TP"), (25.0, "c", "FN"),
    (5.0, None, "TN"), (15.0, None, "TN"), (-3.0, None, "TN"), (30.0, None, "TN"),
    (4.9, None, "TN"), (0.2, None, "FP"), (19.1, None, "FP"), (21.0, None, "FP"),
    (13.0, None, "TN"),
]


def _line_db():
    return EmbeddingDb().extend((lbl, [v]) for lbl, v in LINE_DB)


def test_fixture_counts_match_hand_count():
    assert len(FIXTURE) == 20
    db = _line_db()
    verdicts = [classify_open_set(db, [q], 1.0) for q, _, _ in FIXTURE]
    truth = [t for _, t, _ in FIXTURE]
    c = open_set_counts(verdicts, truth)
    hand = [h for _, _, h in FIXTURE]
    assert (c.tp, c.fn, c.tn, c.fp) == (hand.count("TP"), hand.count("FN"), hand.count("TN"), hand.count("FP"))
    assert (c.tp, c.fn, c.tn, c.fp) == (7, 4, 6, 3)
    assert positive_accuracy(verdicts, truth) == 7 / 11
    assert negative_accuracy(verdicts, truth) == 6 / 9


def test_fixture_confusion_matrix():
    truth = list("aaaaaaa") + list("bbbbbbb") + list("cccccc")
    pred = list("aaaaabc") + list("bbbbaac") + list("cccccb")
    cm = confusion_matrix(truth, pred, ["a", "b", "c"])
    assert cm.tolist() == [[5, 1, 1], [2, 4, 1], [0, 1, 5]]
    assert np.trace(cm) / cm.sum() == 0.7


def test_chance_level():
    assert chance_level(12) == pytest.approx(0.0833, abs=5e-5)
    with pytest.raises(ClassConfigError):
        chance_level(0)


def test_ratio_examples():
    v = [Known("a", 0)] * 3 + [Unknown(5)]
    assert positive_accuracy(v, ["a"] * 4) == 0.75
    assert negative_accuracy([Unknown(3)] * 2, [None, None]) == 1.0
    assert positive_accuracy([Unknown(3)], [None]) is None
    assert negative_accuracy([Known("a", 0)], ["a"]) is None


def test_open_set_examples():
    db = EmbeddingDb().extend([("x", [0, 0]), ("y", [3, 4])])
    assert classify_open_set(db, [3, 4], 0.1) == Known("y", 0.0)
    assert isinstance(classify_open_set(db, [0, 10], 1.0), Unknown)
    with pytest.raises(RecognitionError):
        classify_open_set(db, [1, 2, 3], 1.0)
    with pytest.raises(RecognitionError):
        classify_open_set(EmbeddingDb(), [1], 1.0)
    with pytest.raises(RecognitionError):
        classify_open_set(db, [0, 0], 0.0)
    assert (FACE_THRESHOLD, VOICE_THRESHOLD) == (0.4, 1.7)


def test_db_rejects_mixed_dims_and_nonfinite():
    db = EmbeddingDb().extend([("a", [1, 2])])
    with pytest.raises(RecognitionError):
        db.add("b", [1, 2, 3])
    with pytest.raises(RecognitionError):
        db.add("b", [np.nan, 1])


def test_db_save_load_exact(tmp_path):
    rng = np.random.default_rng(0)
    db = EmbeddingDb().extend((f"id {k % 3}", rng.normal(size=5)) for k in range(9))
    db.save(tmp_path / "x.db")
    back = EmbeddingDb.load(tmp_path / "x.db")
    assert back.labels == db.labels and np.array_equal(back.matrix, db.matrix)


vectors = st.lists(st.floats(-5, 5), min_size=3, max_size=3)


@given(st.lists(vectors, min_size=1, max_size=6), vectors, st.floats(0.01, 5), st.floats(0, 5))
def test_threshold_monotone(rows, q, t, dt):
    db = EmbeddingDb().extend((str(i), r) for i, r in enumerate(rows))
    if isinstance(classify_open_set(db, q, t), Known):
        assert isinstance(classify_open_set(db, q, t + dt), Known)


@given(st.lists(vectors, min_size=2, max_size=6, unique_by=tuple), vectors, st.floats(0.01, 5),
       st.permutations(list("abcdef")))
def test_relabeling_invariance(rows, q, t, perm):
    names = list("abcdef")[:len(rows)]
    mapping = dict(zip("abcdef", perm))
    d1 = EmbeddingDb().extend(zip(names, rows))
    d2 = EmbeddingDb().extend((mapping[n], r) for n, r in zip(names, rows))
    v1, v2 = classify_open_set(d1, q, t), classify_open_set(d2, q, t)
    assert type(v1) is type(v2) and v1.distance == v2.distance
    if isinstance(v1, Known):
        assert v2.label == mapping[v1.label]


def test_oracle_embedder_properties():
    labels = [f"p{i}" for i in range(5)]
    emb = OracleEmbedder.separated(labels, 0.4)
    c = np.vstack(list(emb.centroids.values()))
    d = np.sqrt(((c[:, None] - c[None]) ** 2).sum(-1))
    assert np.allclose(d[~np.eye(5, dtype=bool)], 1.2)
    assert np.array_equal(emb("p1", 3), emb("p1", 3))
    assert all(np.linalg.norm(emb("p2", k) - emb.centroids["p2"]) <= 0.2 + 1e-12 for k in range(100))


def test_pixel_embedder_separates_procedural_identities():
    cfg = default_scenario(0)
    emb = PixelEmbedder()
    vecs = {}
    for p in cfg.participants[:2]:
        vecs[p.color_label] = [emb(align_face(d.image, type(d.bbox)(0, 0, d.bbox.width, d.bbox.height)))
                               for d in (synth_face(p, f, seed=0) for f in range(10))]
    a, b = vecs["blue"], vecs["green"]
    intra = max(np.linalg.norm(x - y) for x in a for y in a)
    inter = min(np.linalg.norm(x - y) for x in a for y in b)
    assert inter > intra
    assert np.array_equal(emb(np.full((180, 180), 50, np.uint8)), np.zeros(emb.dim))


def test_energy_embedder():
    emb = EnergyVoiceEmbedder()
    assert np.array_equal(emb(np.zeros((128, 192))), np.zeros(128))
    cfg = default_scenario(0, ego_noise_snr_db=float("inf"))
    train, test = [], []
    for p in cfg.participants[:2]:
        for k in range(4):
            g = gammatonegram(synth_voice(p, 1.0, cfg, segment=k).samples)
            (train if k < 2 else test).append((p.name, emb(g)))
    g = gammatonegram(synth_voice(cfg.participants[0], 1.0, cfg, segment=9).samples)
    assert np.array_equal(emb(g), emb(g.copy()))
    model = NearestCentroid().fit([v for _, v in train], [l for l, _ in train])
    assert model.predict([v for _, v in test]) == [l for l, _ in test]


def test_closed_set_validation():
    x = np.zeros((4, 2))
    with pytest.raises(ClassConfigError):
        train_closed_set(x, ["a"] * 4)
    with pytest.raises(ClassConfigError):
        train_closed_set(x, ["a", "a", "b", "b"], classes=["a", "b", "c"])
    with pytest.raises(ClassConfigError):
        train_closed_set(x, ["a", "a", "b", "b"], classifier="svm")


def _blobs(n_classes=4, per=10, dim=6, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0, 5, (n_classes, dim))
    x = np.vstack([c + rng.normal(0, 0.3, (per, dim)) for c in centers])
    y = [f"c{i}" for i in range(n_classes) for _ in range(per)]
    return x, y


@pytest.mark.parametrize("name", ["centroid", "linear"])
def test_separable_data_is_perfect(name):
    x, y = _blobs()
    model = train_closed_set(x, y, name)
    rep = eval_closed_set(model, x, y)
    assert rep.accuracy == 1.0 and rep.chance == 0.25
    assert rep.format().splitlines()[0] == "accuracy\t1.0000"


def test_linear_loss_decreases():
    x, y = _blobs(seed=3)
    model = LinearSoftmax(epochs=100).fit(x, y)
    assert all(b <= a + 1e-12 for a, b in zip(model.losses, model.losses[1:]))


@given(st.integers(0, 1000))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(12, 5))
    y = rng.integers(0, 3, 12)
    w, b = rng.normal(size=(5, 3)), rng.normal(size=3)
    _, gw, gb = softmax_loss_grad(w, b, x, y, l2=0.01)
    eps = 1e-6
    num_w = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        wp, wm = w.copy(), w.copy()
        wp[idx] += eps
        wm[idx] -= eps
        num_w[idx] = (softmax_loss_grad(wp, b, x, y, 0.01)[0] - softmax_loss_grad(wm, b, x, y, 0.01)[0]) / (2 * eps)
    num_b = np.zeros_like(b)
    for i in range(3):
        bp, bm = b.copy(), b.copy()
        bp[i] += eps
        bm[i] -= eps
        num_b[i] = (softmax_loss_grad(w, bp, x, y, 0.01)[0] - softmax_loss_grad(w, bm, x, y, 0.01)[0]) / (2 * eps)
    assert np.linalg.norm(gw - num_w) / np.linalg.norm(num_w) < 1e-4
    assert np.linalg.norm(gb - num_b) / max(np.linalg.norm(num_b), 1e-12) < 1e-4


def test_sweep_rows_and_heatmap():
    db = _line_db()
    q = [[v] for v, _, _ in FIXTURE]
    truth = [t for _, t, _ in FIXTURE]
    rows = threshold_sweep(db, q, truth, [0.5, 1.0, 2.0])
    assert rows[1].positive == 7 / 11 and rows[1].negative == 6 / 9
    assert [r.known_rate for r in rows] == sorted(r.known_rate for r in rows)
    img = confusion_heatmap(np.array([[2, 0], [1, 1]]), cell=2)
    assert img.shape == (4, 4) and img[0, 0] == 0 and img[0, 3] == 255 and img[3, 0] == 128
