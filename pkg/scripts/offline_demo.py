"""End-to-end offline run of every CLI stage on the bundled fixtures.

convert -> mix -> augment -> prompt -> synth (mock) -> split -> guard -> evaluate.
The "model" is a noisy copy of the gold, so the final scores are meaningful
but not perfect.

    python scripts/offline_demo.py --work /tmp/slotjson-demo --seed 0
"""
import argparse
import random
from pathlib import Path

from slotjson.cli import main as cli
from slotjson.core import Extraction, canonical_serialize, load_records, write_jsonl

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"


def step(*argv):
    argv = [str(a) for a in argv]
    print("$ slotjson", " ".join(argv))
    rc = cli(argv)
    if rc:
        raise SystemExit(rc)


def noisy_generation(record, rng):
    objs = [inst.to_json_obj() for inst in record.gold]
    for obj in objs:
        keys = [k for k in obj if k != "intent"]
        if keys and rng.random() < 0.2:
            obj[rng.choice(keys)] += "x"
    if objs and rng.random() < 0.1:
        objs.pop(rng.randrange(len(objs)))
    return canonical_serialize(Extraction.from_json_obj(objs))


def run(work: Path, seed: int):
    work.mkdir(parents=True, exist_ok=True)
    step("convert", "--format", "atis", "--in", FIXTURES / "atis_50.iob", "--out", work / "atis.jsonl")
    step("mix", "--in", work / "atis.jsonl", "--n", 100, "--seed", seed, "--out", work / "mixed.jsonl")
    step("augment", "--in", work / "mixed.jsonl", "--drop", 0.3, "--reorder", "--seed", seed, "--out", work / "aug.jsonl")
    step("prompt", "--records", work / "aug.jsonl", "--mode", "one", "--seed", seed, "--out", work / "prompts.jsonl")
    step("synth", "--n", 100, "--seed", seed, "--mode", "mock", "--fixtures", work / "completions.json",
         "--template-fixtures", "--out", work / "synth.jsonl")
    step("split", "--in", work / "synth.jsonl", "--ratios", "0.8,0.1,0.1", "--seed", seed, "--out-dir", work)

    rng = random.Random(seed)
    test = load_records(work / "synth.test.jsonl")
    write_jsonl(work / "pred.jsonl", [{"id": r.id, "generation": noisy_generation(r, rng)} for r in test])
    step("guard", "--records", work / "synth.test.jsonl", "--pred", work / "pred.jsonl", "--out", work / "pred.guarded.jsonl")
    step("evaluate", "--gold", work / "synth.test.jsonl", "--pred", work / "pred.guarded.jsonl", "--report", work / "report.json")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work", default="demo-out")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    run(Path(args.work), args.seed)
