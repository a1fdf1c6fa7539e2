"""Shared generators and reference implementations for the test suite."""
import random
from pathlib import Path

from hypothesis import strategies as st

from slotjson.core import Extraction, IntentInstance, IntentName, TaskInput

FIXTURES = Path(__file__).parent / "fixtures"

INTENTS = ["Order > Cancel", "Order > Status", "Payroll > Employee > Add", "Return > Label"]
KEYS = ["order_number", "product_id", "quantity", "employee_name"]
VALUES = ["ON-1", "ON-2", "PR-17", "PR-71", "3", "13", "Ann Lee", "Al Li"]


def random_instance(rng: random.Random) -> IntentInstance:
    keys = rng.sample(KEYS, rng.randint(0, len(KEYS)))
    return IntentInstance.of(rng.choice(INTENTS), {k: rng.choice(VALUES) for k in keys})


def random_extraction(rng: random.Random, max_objects: int = 5) -> Extraction:
    return Extraction(tuple(random_instance(rng) for _ in range(rng.randint(0, max_objects))))


def random_pair(rng: random.Random, max_objects: int = 5):
    """A gold/generated pair where the generation is a noisy copy of the gold."""
    gold = random_extraction(rng, max_objects)
    gen = []
    for inst in gold:
        roll = rng.random()
        if roll < 0.3:
            gen.append(inst)
        elif roll < 0.8:
            ents = dict(inst.entities)
            if ents and rng.random() < 0.7:
                ents[rng.choice(list(ents))] = rng.choice(VALUES)
            if rng.random() < 0.3:
                ents[rng.choice(KEYS)] = rng.choice(VALUES)
            gen.append(IntentInstance.of(inst.intent, ents))
    while len(gen) < max_objects and rng.random() < 0.3:
        gen.append(random_instance(rng))
    rng.shuffle(gen)
    return gold, Extraction(tuple(gen[:max_objects]))


def indel_distance_dp(a: str, b: str) -> int:
    """Textbook edit-distance table with insert/delete cost 1 and substitution cost 2."""
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        row = [i]
        for j, cb in enumerate(b, 1):
            row.append(min(prev[j] + 1, row[j - 1] + 1, prev[j - 1] + (0 if ca == cb else 2)))
        prev = row
    return prev[-1]


# hypothesis strategies
segment = st.text(st.characters(min_codepoint=32, max_codepoint=0x2FF, blacklist_characters=">"), min_size=1, max_size=8).map(str.strip).filter(bool)
intent_names = st.lists(segment, min_size=1, max_size=3).map(lambda p: IntentName(tuple(p)))
entity_keys = st.from_regex(r"[a-z][a-z0-9_]{0,10}", fullmatch=True).filter(lambda k: k != "intent")


@st.composite
def instances(draw):
    intent = draw(intent_names)
    keys = draw(st.lists(entity_keys, max_size=4, unique=True))
    return IntentInstance.of(intent, {k: draw(st.text(min_size=1, max_size=12)) for k in keys})


extractions = st.lists(instances(), max_size=5).map(lambda xs: Extraction(tuple(xs)))


@st.composite
def task_and_extraction(draw):
    """A TaskInput plus an unconstrained generated extraction over overlapping vocabulary."""
    words = draw(st.lists(st.sampled_from(VALUES + ["XYZ-999", "on-1", "pr-17"]), min_size=1, max_size=8))
    message = " ".join(words)
    req_intents = draw(st.lists(st.sampled_from(INTENTS), min_size=1, max_size=3, unique=True))
    requested = {i: draw(st.lists(st.sampled_from(KEYS), max_size=4, unique=True)) for i in req_intents}
    task = TaskInput.of(message, {i: [k.replace("_", " ").title() for k in ks] for i, ks in requested.items()})
    gen = []
    for _ in range(draw(st.integers(0, 5))):
        keys = draw(st.lists(st.sampled_from(KEYS), max_size=4, unique=True))
        gen.append(IntentInstance.of(
            draw(st.sampled_from(INTENTS)),
            {k: draw(st.sampled_from(VALUES + ["XYZ-999", "ON-"])) for k in keys},
        ))
    return task, Extraction(tuple(gen))
