"""Synthetic in-domain data: fabricated targets, few-shot generation prompts, completion clients."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from typing import Callable, Mapping, Sequence

from .core import (
    EntityName,
    Extraction,
    IntentInstance,
    IntentName,
    SlotJsonError,
    TaskInput,
    TaskRecord,
    canonical_serialize,
    load_records,
    nfc,
)

log = logging.getLogger(__name__)

DEFAULT_ADJECTIVES = (
    "informal", "formal", "terse", "verbose", "tabular", "bulleted", "apologetic", "urgent",
)
N_EXEMPLARS = 3
UNFAITHFUL = "unfaithful"
TRUNCATED = "truncated"

ENV_BASE = "SLOTJSON_API_BASE"
ENV_KEY = "SLOTJSON_API_KEY"
ENV_MODEL = "SLOTJSON_MODEL"


class ClientError(SlotJsonError):
    pass


class FixtureMiss(SlotJsonError):
    pass


class NotEnoughExemplars(SlotJsonError):
    pass


# --- catalog ---------------------------------------------------------------

@dataclass(frozen=True)
class IntentCatalog:
    schemas: tuple[tuple[IntentName, tuple[EntityName, ...]], ...]

    def __post_init__(self):
        names = [i for i, _ in self.schemas]
        if len(set(names)) != len(names):
            raise ValueError("intent names in a catalog must be unique")
        for intent, ents in self.schemas:
            if not ents:
                raise ValueError(f"intent {intent} has no entities")
            keys = [e.key for e in ents]
            if len(set(keys)) != len(keys):
                raise ValueError(f"duplicate entity names under {intent}")

    def __len__(self) -> int:
        return len(self.schemas)

    @property
    def intents(self) -> tuple[IntentName, ...]:
        return tuple(i for i, _ in self.schemas)

    def entities(self, intent: IntentName) -> tuple[EntityName, ...]:
        for name, ents in self.schemas:
            if name == intent:
                return ents
        raise KeyError(intent)

    @classmethod
    def from_json(cls, data: Mapping) -> "IntentCatalog":
        return cls(tuple(
            (IntentName.parse(item["name"]), tuple(EntityName.from_display(e) for e in item["entities"]))
            for item in data["intents"]
        ))


def load_catalog(path=None) -> IntentCatalog:
    """Load a catalog file; with no path, the bundled 20-intent email catalog."""
    if path is None:
        text = (resources.files("slotjson") / "data" / "catalog.json").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return IntentCatalog.from_json(json.loads(text))


def load_seed_pairs(path=None) -> list[TaskRecord]:
    if path is None:
        path = resources.files("slotjson") / "data" / "seed_pairs.jsonl"
    return load_records(path)


def _load_names() -> dict:
    return json.loads((resources.files("slotjson") / "data" / "names.json").read_text(encoding="utf-8"))


_NAMES = None


def _names() -> dict:
    global _NAMES
    if _NAMES is None:
        _NAMES = _load_names()
    return _NAMES


# --- fake values -----------------------------------------------------------

_UPPER = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
SIZES = ("XS", "S", "M", "L", "XL", "XXL", "6", "8", "10", "12", "14")


def entity_kind(key: str) -> str:
    if key.endswith("_number") or key.endswith("_id") or key == "id":
        return "id"
    if "date" in key:
        return "date"
    if key.endswith("name"):
        return "name"
    if key == "quantity":
        return "quantity"
    if "amount" in key or "price" in key:
        return "amount"
    if "address" in key:
        return "address"
    if key == "size":
        return "size"
    return "generic"


def _fake_id(rng):
    letters = rng.choice(_UPPER) + rng.choice(_UPPER)
    n = rng.randint(4, 6)
    return f"{letters}-{rng.randrange(10**n):0{n}d}"


def _fake_date(rng):
    return f"{rng.randint(2020, 2025):04d}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}"


def _fake_name(rng):
    n = _names()
    return f"{rng.choice(n['given'])} {rng.choice(n['family'])}"


def _fake_amount(rng):
    cents = rng.randint(500, 500_000)
    return f"${cents // 100:,}.{cents % 100:02d}"


def _fake_address(rng):
    n = _names()
    return f"{rng.randint(1, 9999)} {rng.choice(n['streets'])}, {rng.choice(n['cities'])}"


def _fake_generic(rng):
    return rng.choice(_names()["words"]) + "-" + str(rng.randint(100, 999))


FAKERS: dict[str, Callable[[random.Random], str]] = {
    "id": _fake_id,
    "date": _fake_date,
    "name": _fake_name,
    "quantity": lambda rng: str(rng.randint(1, 999)),
    "amount": _fake_amount,
    "address": _fake_address,
    "size": lambda rng: rng.choice(SIZES),
    "generic": _fake_generic,
}


def fake_value(entity: EntityName, rng: random.Random) -> str:
    return FAKERS[entity_kind(entity.key)](rng)


def sample_target(catalog: IntentCatalog, rng: random.Random, max_instances: int = 4) -> Extraction:
    """1..max_instances instances of randomly chosen intents (repeats allowed)."""
    if not len(catalog):
        raise ValueError("catalog is empty")
    instances = []
    for _ in range(rng.randint(1, max_instances)):
        intent, ents = rng.choice(catalog.schemas)
        instances.append(IntentInstance(intent, tuple((e.key, fake_value(e, rng)) for e in ents)))
    return Extraction(tuple(instances))


def _target_intents(target: Extraction) -> list[IntentName]:
    seen = []
    for inst in target:
        if inst.intent not in seen:
            seen.append(inst.intent)
    return seen


def pick_exemplars(target: Extraction, pool: Sequence[TaskRecord], rng: random.Random) -> list[TaskRecord]:
    wanted = set(_target_intents(target))
    eligible = [r for r in pool if wanted & set(r.input.intents)]
    if len(eligible) < N_EXEMPLARS:
        raise NotEnoughExemplars(f"{len(eligible)} eligible exemplars, need {N_EXEMPLARS}")
    return rng.sample(eligible, N_EXEMPLARS)


@dataclass(frozen=True)
class GenerationSpec:
    target: Extraction
    adjective: str
    exemplars: tuple[TaskRecord, ...]

    def __post_init__(self):
        if len(self.exemplars) != N_EXEMPLARS:
            raise ValueError(f"need exactly {N_EXEMPLARS} exemplars")
        wanted = set(_target_intents(self.target))
        for ex in self.exemplars:
            if not wanted & set(ex.input.intents):
                raise ValueError(f"exemplar {ex.id!r} shares no intent with the target")
        if not self.adjective.strip():
            raise ValueError("adjective must be non-empty")


def _article(word: str) -> str:
    return "an" if word[:1].lower() in "aeiou" else "a"


def build_generation_prompt(spec: GenerationSpec) -> str:
    blocks = [
        f"JSON: {canonical_serialize(ex.gold)}\nEmail:\n{ex.input.message}"
        for ex in spec.exemplars
    ]
    blocks.append(
        f"JSON: {canonical_serialize(spec.target)}\n"
        f"Write {_article(spec.adjective)} {spec.adjective} email which matches the JSON above.\n"
        "Email:\n"
    )
    return "\n\n".join(blocks)


def make_specs(
    catalog: IntentCatalog,
    seeds: Sequence[TaskRecord],
    n: int,
    rng: random.Random,
    adjectives: Sequence[str] = DEFAULT_ADJECTIVES,
) -> list[GenerationSpec]:
    """Draw every spec up front so later fan-out cannot perturb the RNG stream."""
    specs = []
    for _ in range(n):
        target = sample_target(catalog, rng)
        exemplars = pick_exemplars(target, seeds, rng)
        specs.append(GenerationSpec(target, rng.choice(list(adjectives)), tuple(exemplars)))
    return specs


# --- completion clients ----------------------------------------------------

@dataclass(frozen=True)
class Completion:
    text: str
    truncated: bool = False


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class CompletionClient:
    """Interface: turn a prompt into a :class:`Completion`."""

    mode = "abstract"

    def complete(self, prompt: str) -> Completion:
        raise NotImplementedError


class MockCompletionClient(CompletionClient):
    """Serves canned completions keyed by the SHA-256 of the prompt. No network."""

    mode = "mock"

    def __init__(self, completions: Mapping[str, str], max_chars: int | None = None):
        self.completions = dict(completions)
        self.max_chars = max_chars
        self.calls = 0

    @classmethod
    def from_file(cls, path, max_chars: int | None = None) -> "MockCompletionClient":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(data["completions"], max_chars)

    def complete(self, prompt: str) -> Completion:
        self.calls += 1
        key = prompt_hash(prompt)
        if key not in self.completions:
            raise FixtureMiss(f"no canned completion for prompt {key[:12]}")
        return _cap(self.completions[key], self.max_chars)


def _cap(text: str, max_chars: int | None) -> Completion:
    if max_chars is not None and len(text) > max_chars:
        return Completion(text[:max_chars], True)
    return Completion(text)


class LiveCompletionClient(CompletionClient):
    """Minimal client for an OpenAI-style ``/completions`` endpoint."""

    mode = "live"

    def __init__(
        self,
        base_url: str,
        model: str,
        token: str | None,
        max_chars: int | None = 8000,
        max_tokens: int = 512,
        temperature: float = 0.7,
        attempts: int = 3,
        backoff: float = 1.0,
        timeout: float = 60.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.token = token
        self.max_chars = max_chars
        self.max_tokens = max_tokens
        self.temperature = temperature
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout

    @classmethod
    def from_env(cls, **kwargs) -> "LiveCompletionClient":
        base = os.environ.get(ENV_BASE)
        if not base:
            raise ClientError(f"{ENV_BASE} is not set")
        return cls(base, os.environ.get(ENV_MODEL, "text-davinci-002"), os.environ.get(ENV_KEY), **kwargs)

    def _post(self, prompt: str) -> dict:
        body = json.dumps({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        req = urllib.request.Request(self.base_url + "/completions", data=body, headers=headers, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))

    def complete(self, prompt: str) -> Completion:
        last = None
        for attempt in range(self.attempts):
            try:
                data = self._post(prompt)
                return _cap(data["choices"][0]["text"], self.max_chars)
            except urllib.error.HTTPError as exc:
                if exc.code in (401, 403):
                    raise ClientError(f"authorization failed ({exc.code})") from None
                if exc.code < 500 and exc.code != 429:
                    raise ClientError(f"request rejected ({exc.code})") from None
                last = exc
            except (urllib.error.URLError, TimeoutError, KeyError, IndexError, ValueError) as exc:
                last = exc
            if attempt + 1 < self.attempts:
                time.sleep(self.backoff * 2 ** attempt)
        raise ClientError(f"completion failed after {self.attempts} attempts: {last}")


# --- record generation -----------------------------------------------------

def is_faithful(message: str, gold: Extraction) -> bool:
    message = nfc(message)
    return all(nfc(v) in message for inst in gold for _, v in inst.entities)


def generate_record(
    client: CompletionClient,
    spec: GenerationSpec,
    catalog: IntentCatalog,
    record_id: str,
) -> TaskRecord:
    """Ask the client for an email matching ``spec.target``.

    Records whose email omits a target value are flagged ``unfaithful``
    rather than dropped; capped completions are flagged ``truncated``.
    """
    completion = client.complete(build_generation_prompt(spec))
    message = completion.text.strip()
    if not message:
        raise ClientError(f"empty completion for {record_id}")
    requested = tuple((i, catalog.entities(i)) for i in _target_intents(spec.target))
    flags = []
    if not is_faithful(message, spec.target):
        flags.append(UNFAITHFUL)
    if completion.truncated:
        flags.append(TRUNCATED)
    return TaskRecord(TaskInput(nfc(message), requested), spec.target, record_id, tuple(flags))


def run_synth(
    client: CompletionClient,
    specs: Sequence[GenerationSpec],
    catalog: IntentCatalog,
    jobs: int = 1,
    id_prefix: str = "synth",
) -> list[TaskRecord]:
    ids = [f"{id_prefix}-{i:06d}" for i in range(len(specs))]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda a: generate_record(client, a[0], catalog, a[1]), zip(specs, ids)))
    return [generate_record(client, s, catalog, rid) for s, rid in zip(specs, ids)]


def template_email(spec: GenerationSpec, catalog: IntentCatalog) -> str:
    """A plain, fully faithful email for ``spec.target``; used to build mock fixtures."""
    lines = ["Hello,", "", f"Please see my {spec.adjective} request below."]
    for inst in spec.target:
        names = {e.key: e.display for e in catalog.entities(inst.intent)}
        parts = [f"{names.get(k, k)}: {v}" for k, v in inst.entities]
        lines.append(f"- {inst.intent.display}: " + "; ".join(parts))
    lines += ["", "Thanks"]
    return "\n".join(lines)


def build_template_fixtures(specs: Sequence[GenerationSpec], catalog: IntentCatalog) -> dict:
    return {
        "completions": {
            prompt_hash(build_generation_prompt(s)): template_email(s, catalog) for s in specs
        }
    }


# --- splitting -------------------------------------------------------------

def split_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment; every size is within 1 of ``n * ratio``."""
    exact = [Fraction(r).limit_denominator(10**9) * n for r in ratios]
    sizes = [int(x) for x in exact]
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_dataset(records: Sequence, ratios: Sequence[float] = (0.8, 0.1, 0.1), rng: random.Random | None = None):
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be non-negative")
    rng = rng or random.Random(0)
    idx = list(range(len(records)))
    rng.shuffle(idx)
    parts, start = [], 0
    for size in split_sizes(len(records), ratios):
        parts.append([records[i] for i in idx[start:start + size]])
        start += size
    return tuple(parts)
