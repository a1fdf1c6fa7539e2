"""Score the bundled three-object example and show how each object was paired.

    python scripts/score_walkthrough.py [--fixture tests/fixtures/fig5.json]
"""
import argparse
import json
from pathlib import Path

from slotjson.core import Extraction
from slotjson.evaluation import object_string, oracle_score_record, pair_objects, score_record, similarity


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fixture", default=str(Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "fig5.json"))
    args = ap.parse_args()
    data = json.loads(Path(args.fixture).read_text(encoding="utf-8"))
    gold = Extraction.from_json_obj(data["gold"])
    gen = Extraction.from_json_obj(data["generated"])

    pairing = pair_objects(list(gold), list(gen))
    for i, j in pairing.exact_pairs:
        print(f"exact   gold[{i}] <-> gen[{j}]  {gold[i].intent.display}")
    for i, j in pairing.fuzzy_pairs:
        sim = similarity(object_string(gold[i]), object_string(gen[j]))
        print(f"fuzzy   gold[{i}] <-> gen[{j}]  {gold[i].intent.display}  similarity={sim:.4f}")
    for i in pairing.unpaired_gold:
        print(f"missed  gold[{i}]  {gold[i].intent.display}")
    for j in pairing.unpaired_gen:
        print(f"extra   gen[{j}]  {gen[j].intent.display}")

    counts = score_record(gold, gen)
    assert counts == oracle_score_record(gold, gen)
    print("counts ", counts.as_dict())
    for name, s in (("object", counts.object_scores), ("key-value", counts.kv_scores)):
        print(f"{name:9s} P={s.precision:.4f} R={s.recall:.4f} F1={s.f1:.4f}")


if __name__ == "__main__":
    main()
