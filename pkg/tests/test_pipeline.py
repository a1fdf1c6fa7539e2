import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import FIXTURES
from slotjson.core import Extraction, IntentInstance, IntentName, TaskInput, TaskRecord, dumps_record
from slotjson.pipeline import (
    Article,
    AugmentParams,
    InvalidBio,
    PoolTooSmall,
    TaggedUtterance,
    UnknownType,
    article_to_record,
    augment_record,
    bio_spans,
    build_dbpedia_records,
    convert_corpus,
    convert_tagged_utterance,
    derive_type_schema,
    link_concat,
    load_label_map,
    mix_dataset,
    mix_records,
    parse_slurp_annotation,
    read_articles,
    read_atis,
    read_slurp,
    read_snips,
)
from slotjson.synth import load_seed_pairs


def utt(text, tags, intent="atis_flight"):
    return TaggedUtterance(tuple(text.split()), tuple(tags.split()), IntentName.parse(intent))


# --- BIO conversion --------------------------------------------------------

def test_convert_single_span():
    u = utt("book a flight to boston", "O O O O B-toloc")
    r = convert_tagged_utterance(u, label_map={"toloc": "To Location"})
    assert r.input.message == "book a flight to boston"
    assert r.gold[0].entities == (("to_location", "boston"),)
    assert r.input.entity_keys(IntentName.parse("atis_flight")) == ("to_location",)


def test_convert_all_outside():
    r = convert_tagged_utterance(utt("hello there", "O O"))
    assert r.gold[0].entities == ()


def test_convert_multi_token_span():
    r = convert_tagged_utterance(utt("fly to new york", "O O B-x I-x"))
    assert r.gold[0].entity_map == {"x": "new york"}


def test_convert_uses_inventory_and_fallback_names():
    r = convert_tagged_utterance(utt("fly to boston", "O O B-toloc.city_name"), slot_inventory=["fromloc.city_name", "toloc.city_name"])
    keys = r.input.entity_keys(IntentName.parse("atis_flight"))
    assert keys == ("fromloc_city_name", "toloc_city_name")


def test_convert_first_span_wins():
    r = convert_tagged_utterance(utt("boston or denver", "B-city O B-city"))
    assert r.gold[0].entity_map == {"city": "boston"}


@pytest.mark.parametrize("tags", ["I-x O", "B-x I-y", "O X-x", "B- O", "O I-x"])
def test_invalid_bio(tags):
    with pytest.raises(InvalidBio):
        convert_tagged_utterance(utt("a b", tags))


def test_length_mismatch():
    with pytest.raises(InvalidBio):
        utt("a b c", "O O")


@st.composite
def tagged(draw):
    n = draw(st.integers(1, 12))
    tokens = draw(st.lists(st.from_regex(r"[a-z]{1,5}", fullmatch=True), min_size=n, max_size=n))
    tags, prev = [], None
    for _ in range(n):
        choice = draw(st.sampled_from(["O", "B", "I"] if prev else ["O", "B"]))
        if choice == "O":
            tags.append("O")
            prev = None
        elif choice == "B":
            prev = draw(st.sampled_from(["a", "b", "c"]))
            tags.append("B-" + prev)
        else:
            tags.append("I-" + prev)
    return TaggedUtterance(tuple(tokens), tuple(tags), IntentName.parse("t"))


@given(tagged())
def test_converted_values_are_token_spans(u):
    r = convert_tagged_utterance(u)
    for value in r.gold[0].entity_map.values():
        toks = value.split()
        assert any(list(u.tokens[i:i + len(toks)]) == toks for i in range(len(u.tokens)))
        assert value in r.input.message


def test_bio_spans():
    assert bio_spans(["B-a", "I-a", "O", "B-b", "B-b"]) == [("a", 0, 2), ("b", 3, 4), ("b", 4, 5)]


def test_read_atis_fixture():
    us = read_atis(FIXTURES / "atis_50.iob")
    assert len(us) == 50
    assert us[0].tokens[0] != "BOS" and us[0].tokens[-1] != "EOS"
    records = convert_corpus(us, load_label_map("atis"))
    assert records[0].gold[0].entity_map == {"from_city": "dallas", "to_city": "new york"}


def test_read_snips_dir():
    us = read_snips(FIXTURES / "snips")
    r = convert_corpus(us, load_label_map("snips"))
    assert r[0].gold[0].entity_map == {"artist": "sabrina salerno", "playlist": "grime instrumentals"}
    assert r[1].gold[0].entity_map == {"city": "paris", "time_range": "tomorrow"}


def test_read_slurp():
    assert parse_slurp_annotation("wake me at [time : nine am]") == (
        ["wake", "me", "at", "nine", "am"], ["O", "O", "O", "B-time", "I-time"])
    us = read_slurp(FIXTURES / "slurp_sample.jsonl")
    r = convert_corpus(us, load_label_map("slurp"))
    assert r[0].gold[0].intent == IntentName(("alarm", "set"))
    assert r[0].gold[0].entity_map == {"time": "nine am", "date": "friday"}
    assert r[1].input.message == "what is the weather like in new york"
    assert r[2].gold[0].entities == ()


# --- mixing ----------------------------------------------------------------

def _atis_records():
    return convert_corpus(read_atis(FIXTURES / "atis_50.iob"), load_label_map("atis"))


def test_mix_same_intent_allowed():
    a = convert_tagged_utterance(utt("fly to boston", "O O B-toloc"), record_id="a")
    b = convert_tagged_utterance(utt("fly to denver", "O O B-toloc"), record_id="b")
    mixed = mix_records([a, b], random.Random(0), k_min=2, k_max=2)
    assert [i.intent.display for i in mixed.gold] == ["atis_flight", "atis_flight"]
    assert len(mixed.input.requested) == 1
    assert mixed.input.message in ("fly to boston. fly to denver", "fly to denver. fly to boston")


def test_mix_deterministic():
    pool = _atis_records()
    a = [dumps_record(r) for r in mix_dataset(pool, 20, random.Random(11))]
    b = [dumps_record(r) for r in mix_dataset(pool, 20, random.Random(11))]
    assert a == b


def test_mix_k_histogram():
    pool = _atis_records()
    rng = random.Random(5)
    counts = Counter(len(mix_records(pool, rng).gold) for _ in range(1000))
    assert set(counts) == {2, 3, 4}
    assert all(c >= 200 for c in counts.values())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mix_preserves_mass(seed):
    pool = _atis_records()
    rng = random.Random(seed)
    mixed = mix_records(pool, rng)
    parts = mixed.id.split("+")
    by_id = {r.id: r for r in pool}
    assert len(mixed.gold) == sum(len(by_id[p].gold) for p in parts)
    for p in parts:
        assert by_id[p].input.message in mixed.input.message


def test_mix_pool_too_small():
    with pytest.raises(PoolTooSmall):
        mix_records(_atis_records()[:3], random.Random(0))


# --- DBpedia ---------------------------------------------------------------

def art(aid, abstract, props, t="City", links=()):
    return Article(aid, abstract, t, tuple(props.items()), tuple(links))


def test_threshold_boundary_inclusive():
    arts = [art("a0", "pop 100 here", {"pop": "100"})] + [art(f"a{i}", "nothing", {}) for i in range(1, 5)]
    assert derive_type_schema(arts, 0.2) == {"City": ["pop"]}
    arts.append(art("a5", "nothing", {}))
    assert derive_type_schema(arts, 0.2) == {"City": []}


def test_property_in_all_kept_and_ungrounded_dropped():
    arts = [art(f"a{i}", f"in France {i}", {"country": "France", "mayor": "Nobody"}) for i in range(4)]
    assert derive_type_schema(arts) == {"City": ["country"]}
    assert derive_type_schema(arts, filter_first=False) == {"City": ["country", "mayor"]}


@given(st.floats(0, 1), st.floats(0, 1))
def test_threshold_monotone(t1, t2):
    lo, hi = sorted([t1, t2])
    arts = read_articles(FIXTURES / "dbpedia_abstracts.tsv", FIXTURES / "dbpedia_infobox.tsv")
    s_lo, s_hi = derive_type_schema(arts, lo), derive_type_schema(arts, hi)
    for t in s_hi:
        assert set(s_hi[t]) <= set(s_lo[t])


def test_article_to_record():
    schema = {"City": ["country", "populationTotal", "river"]}
    a = art("p", "Paris is in France, France! 2,165,423 people.", {"country": "France", "populationTotal": "2,165,423", "river": "Seine"})
    r = article_to_record(a, schema)
    assert r.gold[0].entity_map == {"country": "France", "population_total": "2,165,423"}
    assert [e.key for e in r.input.requested[0][1]] == ["country", "population_total", "river"]
    empty = article_to_record(art("q", "nothing", {"river": "Seine"}), schema)
    assert empty.gold[0].entities == ()
    with pytest.raises(UnknownType):
        article_to_record(art("z", "x", {}, t="Film"), schema)


def _rec(rid, t="City"):
    return TaskRecord(TaskInput.of(f"about {rid}", {t: ["Name"]}), Extraction((IntentInstance.of(t, {}),)), rid)


def test_link_concat_reciprocal():
    out = link_concat([_rec("a"), _rec("b")], {"a": ["b"], "b": ["a"]})
    assert len(out) == 1 and len(out[0].gold) == 2 and out[0].input.message == "about a about b"


def test_link_concat_identity_and_one_way():
    recs = [_rec("a"), _rec("b")]
    assert link_concat(recs, {}) == recs
    assert link_concat(recs, {"a": ["b"]}) == recs


def test_link_concat_chain_and_isolated():
    out = link_concat([_rec("a"), _rec("c"), _rec("b")], {"a": ["b"], "b": ["a"]})
    assert [r.id for r in out] == ["a+b", "c"]


def test_link_concat_caps_groups():
    ids = [f"n{i}" for i in range(6)]
    links = {i: [j for j in ids if j != i] for i in ids}
    out = link_concat([_rec(i) for i in ids], links)
    assert [len(r.gold) for r in out] == [4, 2]


def test_dbpedia_fixture_end_to_end():
    arts = read_articles(FIXTURES / "dbpedia_abstracts.tsv", FIXTURES / "dbpedia_infobox.tsv")
    records = build_dbpedia_records(arts)
    by_id = {r.id: r for r in records}
    assert set(by_id) == {"Paris+Louvre", "Lyon", "Marseille", "Orsay", "Amelie+Jeunet"}
    paris = by_id["Paris+Louvre"]
    assert [i.intent.display for i in paris.gold] == ["City", "Museum"]
    # river is grounded in 1 of 3 City abstracts (>= 20%); mayor in none
    assert paris.gold[0].entity_map == {"country": "France", "population_total": "2,165,423", "river": "Seine"}
    assert "mayor" not in paris.input.entity_keys(IntentName.parse("City"))
    assert by_id["Amelie+Jeunet"].gold[0].entity_map == {"director": "Jean-Pierre Jeunet", "released": "2001"}
    for r in records:
        for inst in r.gold:
            assert all(v in r.input.message for _, v in inst.entities)


# --- augmentation ----------------------------------------------------------

def _seed_record():
    return next(r for r in load_seed_pairs() if len(r.gold) > 1 and len(r.input.requested[0][1]) > 1)


def test_augment_identity():
    r = _seed_record()
    assert augment_record(r, AugmentParams(0.0, False, 1)) == r


def test_augment_drop_all():
    r = augment_record(_seed_record(), AugmentParams(1.0, False, 1))
    assert all(ents == () for _, ents in r.input.requested)
    assert all(inst.entities == () for inst in r.gold)


def test_augment_drop_one_entity_keeps_others():
    r = _seed_record()
    intent, ents = r.input.requested[0]
    dropped = ents[0].key
    # find a seed that drops exactly the first entity of the first intent
    for seed in range(1000):
        out = augment_record(r, AugmentParams(0.5, False, seed))
        if [e.key for e in out.input.requested[0][1]] == [e.key for e in ents[1:]] and all(
            len(a[1]) == len(b[1]) for a, b in zip(out.input.requested[1:], r.input.requested[1:])
        ):
            break
    else:
        pytest.fail("no seed found")
    for before, after in zip(r.gold, out.gold):
        expected = tuple(p for p in before.entities if not (before.intent == intent and p[0] == dropped))
        assert after.entities == expected


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.booleans())
def test_augment_consistency(seed, p, reorder):
    rng = random.Random(seed)
    for r in load_seed_pairs()[:10]:
        out = augment_record(r, AugmentParams(p, reorder, seed), rng)
        for inst, orig in zip(out.gold, r.gold):
            assert set(inst.keys) <= set(out.input.entity_keys(inst.intent))
            assert all(orig.entity_map[k] == v for k, v in inst.entities)
            if reorder:
                order = out.input.entity_keys(inst.intent)
                assert list(inst.keys) == [k for k in order if k in inst.keys]
