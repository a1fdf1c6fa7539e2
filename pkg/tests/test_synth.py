import random
import re
import socket
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from slotjson.core import canonical_serialize, EntityName, Extraction, IntentInstance, TaskInput, TaskRecord, dumps_record
from slotjson.synth import (
    DEFAULT_ADJECTIVES,
    UNFAITHFUL,
    ClientError,
    Completion,
    FixtureMiss,
    GenerationSpec,
    LiveCompletionClient,
    MockCompletionClient,
    NotEnoughExemplars,
    build_generation_prompt,
    build_template_fixtures,
    fake_value,
    generate_record,
    load_catalog,
    load_seed_pairs,
    make_specs,
    pick_exemplars,
    prompt_hash,
    run_synth,
    sample_target,
    split_dataset,
    split_sizes,
)

CATALOG = load_catalog()
SEEDS = load_seed_pairs()

APPENDIX_INTENTS = {
    "Order > Cancel": ["Order Number"],
    "Order > Status": ["Order Number"],
    "Order > Date Change": ["Order Number", "New Date"],
    "Order > Amendment > Remove Item": ["Order Number", "Product ID"],
    "Order > Amendment > Reduce Quantity By": ["Order Number", "Product ID", "Quantity"],
    "Order > Amendment > Increase Quantity By": ["Order Number", "Product ID", "Quantity"],
    "Order > Amendment > Change Quantity To": ["Order Number", "Product ID", "Quantity"],
    "Order > Amendment > Pricing": ["Order Number", "Product ID", "New Price"],
    "Order > Shortage": ["Order Number", "Product ID", "Quantity"],
    "Payroll > Correction > Cancel": ["Employee Name", "Check Number", "Amount", "Date"],
    "Payroll > Correction > Amount": ["Employee Name", "Amount", "Date"],
    "Payroll > Employee > Add": ["Employee Name"],
    "Payroll > Employee > Remove": ["Employee Name"],
    "Policy > Cancel": ["Policy Number", "Effective Date"],
    "Policy > Change Name": ["Policy Number", "New Name", "Effective Date"],
    "Policy > Change Address": ["Policy Number", "New Address", "Effective Date"],
    "Product > Availability": ["Product ID", "Size"],
    "Product > Measurements": ["Product ID", "Size"],
    "Return > Label": ["Return ID"],
    "Return > Reschedule Pickup": ["Return ID", "New Date"],
}


def test_catalog_matches_appendix_list():
    got = {i.display: [e.display for e in ents] for i, ents in CATALOG.schemas}
    assert got == APPENDIX_INTENTS


def test_seed_pairs_cover_every_intent():
    assert len(SEEDS) == 100
    covered = Counter(i for r in SEEDS for i in r.input.intents)
    assert set(covered) == set(CATALOG.intents)
    assert min(covered.values()) >= 3
    for r in SEEDS:
        assert all(v in r.input.message for inst in r.gold for _, v in inst.entities)


# --- fake values -----------------------------------------------------------

@given(st.integers())
def test_fake_value_formats(seed):
    rng = random.Random(seed)
    assert re.fullmatch(r"[A-Z]{2}-\d{4,6}", fake_value(EntityName.from_display("Order Number"), rng))
    q = fake_value(EntityName.from_display("Quantity"), rng)
    assert re.fullmatch(r"\d+", q) and 1 <= int(q) <= 999
    assert re.fullmatch(r"\d{4}-\d{2}-\d{2}", fake_value(EntityName.from_display("New Date"), rng))
    assert re.fullmatch(r"[A-Z][a-z]+ [A-Z][a-z]+", fake_value(EntityName.from_display("Employee Name"), rng))
    assert fake_value(EntityName.from_display("Something Else"), rng)


def test_every_catalog_entity_gets_a_value():
    rng = random.Random(1)
    for _, ents in CATALOG.schemas:
        for e in ents:
            assert fake_value(e, rng).strip()


# --- targets and exemplars -------------------------------------------------

def test_sample_target_intents_from_catalog():
    rng = random.Random(3)
    for _ in range(200):
        t = sample_target(CATALOG, rng)
        for inst in t:
            assert inst.intent in CATALOG.intents
            assert inst.keys == tuple(e.key for e in CATALOG.entities(inst.intent))


def test_sample_target_deterministic_and_histogram():
    assert sample_target(CATALOG, random.Random(9)) == sample_target(CATALOG, random.Random(9))
    rng = random.Random(4)
    counts = Counter(len(sample_target(CATALOG, rng)) for _ in range(1000))
    assert set(counts) == {1, 2, 3, 4}


def _rec(rid, intent):
    return TaskRecord(TaskInput.of("m", {intent: ["Order Number"]}), Extraction(), rid)


def test_pick_exactly_three():
    target = Extraction((IntentInstance.of("Order > Cancel", {"order_number": "AB-1234"}),))
    pool = [_rec("a", "Order > Cancel"), _rec("x", "Order > Status"), _rec("b", "Order > Cancel"), _rec("c", "Order > Cancel")]
    assert {r.id for r in pick_exemplars(target, pool, random.Random(0))} == {"a", "b", "c"}
    with pytest.raises(NotEnoughExemplars):
        pick_exemplars(target, [_rec("x", "Order > Status")] * 5, random.Random(0))


def test_pick_within_eligible():
    rng = random.Random(0)
    for seed in range(100):
        target = sample_target(CATALOG, random.Random(seed))
        wanted = set(i.intent for i in target)
        chosen = pick_exemplars(target, SEEDS, rng)
        assert len({r.id for r in chosen}) == 3
        assert all(wanted & set(r.input.intents) for r in chosen)


# --- prompts ---------------------------------------------------------------

def _spec(seed=0, adjective=None):
    rng = random.Random(seed)
    target = sample_target(CATALOG, rng)
    ex = pick_exemplars(target, SEEDS, rng)
    return GenerationSpec(target, adjective or rng.choice(DEFAULT_ADJECTIVES), tuple(ex))


def test_generation_prompt_structure():
    spec = _spec(adjective="tabular")
    text = build_generation_prompt(spec)
    assert text.count("JSON: ") == 4
    chunks = text.split("JSON: ")[1:]
    for chunk, ex in zip(chunks, spec.exemplars):
        assert chunk.startswith(canonical_serialize(ex.gold) + "\nEmail:\n" + ex.input.message)
    assert chunks[3].startswith(canonical_serialize(spec.target) + "\nWrite ")
    instruction = [line for line in text.splitlines() if line.startswith("Write ")]
    assert instruction == ["Write a tabular email which matches the JSON above."]
    assert instruction[0].count("tabular") == 1
    assert text == build_generation_prompt(spec)


def test_spec_validation():
    spec = _spec()
    with pytest.raises(ValueError):
        GenerationSpec(spec.target, "formal", spec.exemplars[:2])


# --- clients and records ---------------------------------------------------

def test_mock_client_and_record():
    spec = _spec(1)
    email = "Hello\n" + " ".join(v for inst in spec.target for _, v in inst.entities)
    client = MockCompletionClient({prompt_hash(build_generation_prompt(spec)): email})
    r = generate_record(client, spec, CATALOG, "s1")
    assert r.input.message == email and r.gold == spec.target and r.flags == ()
    assert set(r.input.intents) == {i.intent for i in spec.target}


def test_unfaithful_flag():
    spec = _spec(2)
    client = MockCompletionClient({prompt_hash(build_generation_prompt(spec)): "An email with no values."})
    assert generate_record(client, spec, CATALOG, "s").flags == (UNFAITHFUL,)


def test_truncation_flag():
    spec = _spec(2)
    client = MockCompletionClient({prompt_hash(build_generation_prompt(spec)): "x" * 50}, max_chars=10)
    assert "truncated" in generate_record(client, spec, CATALOG, "s").flags


def test_fixture_miss():
    with pytest.raises(FixtureMiss):
        generate_record(MockCompletionClient({}), _spec(), CATALOG, "s")


@pytest.fixture
def no_network(monkeypatch):
    calls = []

    def refuse(*args, **kwargs):
        calls.append(args)
        raise OSError("network disabled in tests")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)
    return calls


def test_offline_run_of_100(no_network):
    specs = make_specs(CATALOG, SEEDS, 100, random.Random(42))
    client = MockCompletionClient(build_template_fixtures(specs, CATALOG)["completions"])
    records = run_synth(client, specs, CATALOG)
    assert len(records) == 100 and client.calls == 100 and no_network == []
    assert all(UNFAITHFUL not in r.flags for r in records)
    again = run_synth(client, make_specs(CATALOG, SEEDS, 100, random.Random(42)), CATALOG, jobs=4)
    assert [dumps_record(r) for r in records] == [dumps_record(r) for r in again]


def test_live_client_retries_then_fails(monkeypatch):
    client = LiveCompletionClient("http://127.0.0.1:9", "m", None, backoff=0.0)
    attempts = []

    def boom(prompt):
        attempts.append(prompt)
        import urllib.error
        raise urllib.error.URLError("down")

    monkeypatch.setattr(client, "_post", boom)
    with pytest.raises(ClientError):
        client.complete("p")
    assert len(attempts) == 3


def test_live_client_parses_and_caps(monkeypatch):
    client = LiveCompletionClient("http://x", "m", "tok", max_chars=5)
    monkeypatch.setattr(client, "_post", lambda p: {"choices": [{"text": "hello world"}]})
    assert client.complete("p") == Completion("hello", True)


def test_live_client_needs_env(monkeypatch):
    monkeypatch.delenv("SLOTJSON_API_BASE", raising=False)
    with pytest.raises(ClientError):
        LiveCompletionClient.from_env()


# --- splitting -------------------------------------------------------------

def test_split_sizes():
    assert split_sizes(10900, (0.8, 0.1, 0.1)) == [8720, 1090, 1090]
    assert split_sizes(10, (0.8, 0.1, 0.1)) == [8, 1, 1]


@given(st.integers(0, 500), st.integers())
def test_split_partition(n, seed):
    items = list(range(n))
    parts = split_dataset(items, (0.8, 0.1, 0.1), random.Random(seed))
    assert sorted(x for p in parts for x in p) == items
    for part, r in zip(parts, (0.8, 0.1, 0.1)):
        assert abs(len(part) - n * r) <= 1
    assert parts == split_dataset(items, (0.8, 0.1, 0.1), random.Random(seed))


def test_split_rejects_bad_ratios():
    with pytest.raises(ValueError):
        split_dataset([1, 2], (0.5, 0.4))
