"""Compare the assignment-based scorer with the exhaustive oracle on random pairs.

Reports the number of disagreements and the time each scorer takes.

    python scripts/scorer_agreement.py --cases 2000 --max-objects 6 --seed 0
"""
import argparse
import random
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from helpers import random_pair  # noqa: E402

from slotjson.evaluation import oracle_score_record, score_record  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=1000)
    ap.add_argument("--max-objects", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    pairs = [random_pair(rng, args.max_objects) for _ in range(args.cases)]
    t0 = time.perf_counter()
    fast = [score_record(g, h) for g, h in pairs]
    t1 = time.perf_counter()
    slow = [oracle_score_record(g, h) for g, h in pairs]
    t2 = time.perf_counter()
    bad = sum(a != b for a, b in zip(fast, slow))
    print(f"cases={args.cases} disagreements={bad}")
    print(f"score_record {t1 - t0:.3f}s  oracle {t2 - t1:.3f}s")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
