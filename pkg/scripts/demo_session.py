"""Run one simulated game session and summarize what the robot collected."""
import argparse
import time

from hri_memory.game import Phase
from hri_memory.session import run_session
from hri_memory.sim import default_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sigma", type=float, default=5.0, help="azimuth noise (degrees)")
    ap.add_argument("--miss", type=float, default=0.1, help="face detector miss rate")
    ap.add_argument("--trace", action="store_true", help="print the full game trace")
    args = ap.parse_args()

    cfg = default_scenario(args.seed, azimuth_noise_sigma=args.sigma, detector_miss_rate=args.miss)
    start = time.perf_counter()
    res = run_session(cfg)
    elapsed = time.perf_counter() - start
    if args.trace:
        print(res.trace.export(), end="")
    print(f"seed {args.seed}: complete={res.complete} rounds={res.trace.count_phase(Phase.CARD_DESCRIPTION)} "
          f"({elapsed:.1f} s)")
    print(res.memory.snapshot(), end="")
    for rec in res.records():
        print(f"  {rec.label:<16} {len(rec.faces):4d} faces {rec.voice_seconds:6.1f} s voice")
    c = res.collector
    print(f"quarantined {c.quarantined} of {c.faces_in + c.voices_in} samples")
    print(f"label accuracy: faces {res.label_accuracy('face'):.3f} voices {res.label_accuracy('voice'):.3f}")


if __name__ == "__main__":
    main()
