"""Closed-set identification over twelve simulated people (four sessions of
three), faces and voices, with a background class for voices."""
import argparse

from hri_memory.experiments import twelve_identity_corpus
from hri_memory.recognition import CLASSIFIERS, eval_closed_set, train_closed_set


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--classifier", choices=tuple(CLASSIFIERS), default="linear")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--face-stride", type=int, default=4, help="keep every n-th collected face")
    ap.add_argument("--voice-stride", type=int, default=10, help="keep every n-th collected voice block")
    ap.add_argument("--matrix", action="store_true", help="print confusion matrices")
    args = ap.parse_args()

    faces, voices = twelve_identity_corpus(face_stride=args.face_stride, voice_stride=args.voice_stride,
                                           seed=args.seed)
    for kind, split in (("faces", faces), ("voices", voices)):
        model = train_closed_set(split.x_train, split.y_train, args.classifier)
        rep = eval_closed_set(model, split.x_test, split.y_test)
        print(f"{kind}: {len(split.y_train)} train / {len(split.y_test)} test, {len(rep.classes)} classes, "
              f"accuracy {rep.accuracy:.3f} (chance {rep.chance:.3f})")
        if args.matrix:
            print(rep.format())


if __name__ == "__main__":
    main()
