"""Dataset construction: slot-filling conversion, mixing, DBpedia-style records, augmentation."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import random
import re
from collections import defaultdict
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import (
    EntityName,
    Extraction,
    IntentInstance,
    IntentName,
    SlotJsonError,
    TaskInput,
    TaskRecord,
    nfc,
)

log = logging.getLogger(__name__)

UTTERANCE_SEPARATOR = ". "
ABSTRACT_SEPARATOR = " "
MAX_LINK_GROUP = 4


class InvalidBio(SlotJsonError, ValueError):
    pass


class PoolTooSmall(SlotJsonError):
    pass


class UnknownType(SlotJsonError, KeyError):
    pass


# --- slot-filling corpora --------------------------------------------------

@dataclass(frozen=True)
class TaggedUtterance:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    intent: IntentName
    id: str | None = None

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise InvalidBio(f"{len(self.tokens)} tokens but {len(self.tags)} tags")


def bio_spans(tags: Sequence[str]) -> list[tuple[str, int, int]]:
    """Return ``(label, start, end)`` spans; raises :class:`InvalidBio` on bad sequences."""
    spans = []
    current = None
    for i, tag in enumerate(tags):
        if tag == "O":
            current = None
            continue
        prefix, sep, label = tag.partition("-")
        if not sep or not label or prefix not in ("B", "I"):
            raise InvalidBio(f"bad tag {tag!r} at position {i}")
        if prefix == "B":
            current = [label, i, i + 1]
            spans.append(current)
        elif current is None or current[0] != label:
            raise InvalidBio(f"{tag!r} at position {i} does not continue a {label!r} span")
        else:
            current[2] = i + 1
    return [tuple(s) for s in spans]


def _entity_for_label(label: str, label_map: Mapping[str, str] | None) -> EntityName:
    display = (label_map or {}).get(label, label)
    return EntityName.from_display(display)


def _stable_id(prefix: str, *parts: str) -> str:
    digest = hashlib.sha1("\x1f".join(parts).encode("utf-8")).hexdigest()[:12]
    return f"{prefix}-{digest}"


def convert_tagged_utterance(
    u: TaggedUtterance,
    slot_inventory: Sequence[str] | None = None,
    label_map: Mapping[str, str] | None = None,
    record_id: str | None = None,
) -> TaskRecord:
    """Turn one BIO-tagged utterance into a single-instance :class:`TaskRecord`.

    ``slot_inventory`` lists the raw slot labels the dataset defines for this
    intent; it becomes the requested entity list. When a label spans twice,
    the first span is kept.
    """
    spans = bio_spans(u.tags)
    message = " ".join(u.tokens)
    labels = list(slot_inventory or ())
    for label, _, _ in spans:
        if label not in labels:
            labels.append(label)

    requested: list[EntityName] = []
    for label in labels:
        ent = _entity_for_label(label, label_map)
        if ent.key not in {e.key for e in requested}:
            requested.append(ent)

    values: dict[str, str] = {}
    for label, start, end in spans:
        key = _entity_for_label(label, label_map).key
        if key in values:
            log.info("slot collision in %r: keeping first %s span", u.id or message, key)
            continue
        values[key] = " ".join(u.tokens[start:end])

    task = TaskInput(nfc(message), ((u.intent, tuple(requested)),))
    gold = Extraction((IntentInstance.of(u.intent, values),))
    rid = record_id or u.id or _stable_id("utt", u.intent.display, message)
    return TaskRecord(task, gold, rid)


def slot_inventory(utterances: Iterable[TaggedUtterance]) -> dict[IntentName, list[str]]:
    """Slot labels observed per intent, in order of first appearance."""
    inv: dict[IntentName, list[str]] = defaultdict(list)
    for u in utterances:
        labels = inv[u.intent]
        for label, _, _ in bio_spans(u.tags):
            if label not in labels:
                labels.append(label)
    return dict(inv)


def load_label_map(fmt: str) -> dict[str, str]:
    ref = resources.files("slotjson") / "data" / "slot_labels" / f"{fmt}.json"
    return json.loads(ref.read_text(encoding="utf-8"))


def read_atis(path) -> list[TaggedUtterance]:
    """Read the common ``BOS words EOS<TAB>O tags intent`` ATIS layout."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            left, _, right = line.partition("\t")
            words = left.split()
            labels = right.split()
            if not labels:
                raise InvalidBio(f"line {lineno}: no tag column")
            intent, tags = labels[-1], labels[:-1]
            if words and words[0] == "BOS":
                words, tags = words[1:], tags[1:]
            if words and words[-1] == "EOS":
                words = words[:-1]
            if len(words) != len(tags):
                raise InvalidBio(f"line {lineno}: {len(words)} tokens but {len(tags)} tags")
            out.append(TaggedUtterance(tuple(words), tuple(tags), IntentName.parse(intent), f"atis-{lineno:05d}"))
    return out


def read_snips(path) -> list[TaggedUtterance]:
    """Read SNIPS either as a ``seq.in``/``seq.out``/``label`` directory or a 3-column TSV."""
    path = Path(path)
    if path.is_dir():
        seq_in = (path / "seq.in").read_text(encoding="utf-8").splitlines()
        seq_out = (path / "seq.out").read_text(encoding="utf-8").splitlines()
        intents = (path / "label").read_text(encoding="utf-8").splitlines()
        rows = list(zip(seq_in, seq_out, intents))
    else:
        with open(path, encoding="utf-8") as fh:
            rows = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
    out = []
    for n, row in enumerate(rows, 1):
        if len(row) != 3:
            raise InvalidBio(f"row {n}: expected tokens, tags and intent")
        tokens, tags, intent = row
        out.append(
            TaggedUtterance(tuple(tokens.split()), tuple(tags.split()), IntentName.parse(intent.strip()), f"snips-{n:05d}")
        )
    return out


_SLURP_SLOT = re.compile(r"\[\s*([^:\]]+?)\s*:\s*([^\]]+?)\s*\]")


def parse_slurp_annotation(annotation: str) -> tuple[list[str], list[str]]:
    """``wake me at [time : nine am]`` -> tokens and BIO tags."""
    tokens, tags = [], []
    pos = 0
    for m in _SLURP_SLOT.finditer(annotation):
        for tok in annotation[pos:m.start()].split():
            tokens.append(tok)
            tags.append("O")
        label = m.group(1).strip()
        for k, tok in enumerate(m.group(2).split()):
            tokens.append(tok)
            tags.append(("B-" if k == 0 else "I-") + label)
        pos = m.end()
    for tok in annotation[pos:].split():
        tokens.append(tok)
        tags.append("O")
    return tokens, tags


def read_slurp(path) -> list[TaggedUtterance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            tokens, tags = parse_slurp_annotation(row["sentence_annotation"])
            if row.get("scenario") and row.get("action"):
                intent = IntentName((row["scenario"], row["action"]))
            else:
                intent = IntentName.parse(row["intent"])
            uid = f"slurp-{row['slurp_id']}" if "slurp_id" in row else f"slurp-{lineno:05d}"
            out.append(TaggedUtterance(tuple(tokens), tuple(tags), intent, uid))
    return out


READERS = {"atis": read_atis, "snips": read_snips, "slurp": read_slurp}


def convert_corpus(utterances: Sequence[TaggedUtterance], label_map: Mapping[str, str] | None = None) -> list[TaskRecord]:
    inventory = slot_inventory(utterances)
    return [convert_tagged_utterance(u, inventory[u.intent], label_map) for u in utterances]


# --- merging ---------------------------------------------------------------

def merge_records(records: Sequence[TaskRecord], separator: str, record_id: str | None = None) -> TaskRecord:
    """Concatenate messages and gold arrays; requested entity lists are unioned per intent."""
    requested: dict[IntentName, list[EntityName]] = {}
    for r in records:
        for intent, ents in r.input.requested:
            merged = requested.setdefault(intent, [])
            for e in ents:
                if e.key not in {x.key for x in merged}:
                    merged.append(e)
    message = separator.join(r.input.message for r in records)
    task = TaskInput(message, tuple((i, tuple(e)) for i, e in requested.items()))
    gold = Extraction(tuple(inst for r in records for inst in r.gold))
    return TaskRecord(task, gold, record_id or "+".join(r.id for r in records))


def mix_records(pool: Sequence[TaskRecord], rng: random.Random, k_min: int = 2, k_max: int = 4) -> TaskRecord:
    """Concatenate k (uniform in [k_min, k_max]) distinct pool records.

    Sampled records may share an intent; the result then holds several
    instances of it.
    """
    if len(pool) < k_max:
        raise PoolTooSmall(f"need at least {k_max} records, got {len(pool)}")
    k = rng.randint(k_min, k_max)
    chosen = rng.sample(list(pool), k)
    return merge_records(chosen, UTTERANCE_SEPARATOR)


def mix_dataset(pool: Sequence[TaskRecord], n: int, rng: random.Random, k_min: int = 2, k_max: int = 4) -> list[TaskRecord]:
    out = []
    for i in range(n):
        mixed = mix_records(pool, rng, k_min, k_max)
        out.append(TaskRecord(mixed.input, mixed.gold, f"mix-{i:06d}"))
    return out


# --- DBpedia-style articles ------------------------------------------------

@dataclass(frozen=True)
class Article:
    id: str
    abstract: str
    article_type: str
    properties: tuple[tuple[str, str], ...] = ()
    links: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.abstract:
            raise ValueError(f"article {self.id!r} has an empty abstract")
        names = [p for p, _ in self.properties]
        if len(set(names)) != len(names):
            raise ValueError(f"article {self.id!r} has duplicate property names")


def _grounded(value: str, abstract: str) -> bool:
    return bool(value) and nfc(value) in nfc(abstract)


def derive_type_schema(
    articles: Sequence[Article],
    threshold: float = 0.20,
    filter_first: bool = True,
) -> dict[str, list[str]]:
    """Per article type, the property names frequent enough to request.

    A property is kept when the share of the type's articles that have it
    reaches ``threshold`` (inclusive). With ``filter_first`` (default) an
    article only counts when the value also occurs in its abstract; otherwise
    presence alone counts and grounding is left to :func:`article_to_record`.
    """
    totals: dict[str, int] = defaultdict(int)
    hits: dict[str, dict[str, int]] = defaultdict(dict)
    for a in articles:
        totals[a.article_type] += 1
        seen = hits[a.article_type]
        for name, value in a.properties:
            if filter_first and not _grounded(value, a.abstract):
                seen.setdefault(name, 0)
                continue
            seen[name] = seen.get(name, 0) + 1
    schema = {}
    for t, counts in hits.items():
        kept, keys = [], set()
        for name, c in counts.items():
            if c > 0 and c / totals[t] >= threshold:
                key = EntityName.from_display(name).key
                if key not in keys:
                    kept.append(name)
                    keys.add(key)
        schema[t] = kept
    return schema


def article_to_record(a: Article, schema: Mapping[str, Sequence[str]]) -> TaskRecord:
    if a.article_type not in schema:
        raise UnknownType(a.article_type)
    props = dict(a.properties)
    entities = [EntityName.from_display(name) for name in schema[a.article_type]]
    values = {}
    for name, ent in zip(schema[a.article_type], entities):
        value = props.get(name)
        if value is not None and _grounded(value, a.abstract):
            values[ent.key] = nfc(value)
    intent = IntentName.parse(a.article_type)
    task = TaskInput(nfc(a.abstract), ((intent, tuple(entities)),))
    return TaskRecord(task, Extraction((IntentInstance.of(intent, values),)), a.id)


def link_concat(
    records: Sequence[TaskRecord],
    links: Mapping[str, Iterable[str]],
    max_group: int = MAX_LINK_GROUP,
) -> list[TaskRecord]:
    """Merge records whose articles link to each other in both directions.

    Groups are connected components of the reciprocal-link graph, walked
    breadth-first in input order and cut into chunks of at most
    ``max_group``. Unlinked records pass through unchanged.
    """
    order = {r.id: n for n, r in enumerate(records)}
    by_id = {r.id: r for r in records}
    out_links = {rid: set(links.get(rid, ())) for rid in order}
    neighbours = {
        rid: sorted((o for o in out_links[rid] if o in order and rid in out_links[o] and o != rid), key=order.get)
        for rid in order
    }
    seen: set[str] = set()
    out = []
    for r in records:
        if r.id in seen:
            continue
        component, queue = [], [r.id]
        seen.add(r.id)
        while queue:
            cur = queue.pop(0)
            component.append(cur)
            for nxt in neighbours[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        for start in range(0, len(component), max_group):
            group = [by_id[rid] for rid in component[start:start + max_group]]
            out.append(group[0] if len(group) == 1 else merge_records(group, ABSTRACT_SEPARATOR))
    return out


def read_articles(abstracts_path, infobox_path) -> list[Article]:
    """Load the tab-separated fixture format.

    ``abstracts``: header ``id, type, abstract, links`` (links space-separated).
    ``infobox``: header ``id, property, value``; later duplicates are ignored.
    """
    props: dict[str, dict[str, str]] = defaultdict(dict)
    with open(infobox_path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE):
            props[row["id"]].setdefault(row["property"], row["value"])
    articles = []
    with open(abstracts_path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE):
            aid = row["id"]
            articles.append(
                Article(
                    id=aid,
                    abstract=row["abstract"],
                    article_type=row["type"],
                    properties=tuple(props.get(aid, {}).items()),
                    links=tuple((row.get("links") or "").split()),
                )
            )
    return articles


def build_dbpedia_records(articles: Sequence[Article], threshold: float = 0.20, filter_first: bool = True) -> list[TaskRecord]:
    schema = derive_type_schema(articles, threshold, filter_first)
    records = [article_to_record(a, schema) for a in articles]
    return link_concat(records, {a.id: a.links for a in articles})


# --- augmentation ----------------------------------------------------------

@dataclass(frozen=True)
class AugmentParams:
    drop_probability: float = 0.0
    reorder: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must lie in [0, 1]")


def augment_record(r: TaskRecord, p: AugmentParams, rng: random.Random | None = None) -> TaskRecord:
    """Randomly drop and/or reorder requested entities, mirroring the change in gold.

    Pass ``rng`` to share one stream across many records; otherwise a fresh
    generator seeded with ``p.seed`` is used.
    """
    rng = rng if rng is not None else random.Random(p.seed)
    requested = []
    order: dict[IntentName, list[str]] = {}
    for intent, ents in r.input.requested:
        kept = [e for e in ents if rng.random() >= p.drop_probability]
        if p.reorder:
            rng.shuffle(kept)
        requested.append((intent, tuple(kept)))
        order[intent] = [e.key for e in kept]
    instances = []
    for inst in r.gold:
        keys = order.get(inst.intent, [])
        values = inst.entity_map
        if p.reorder:
            entities = tuple((k, values[k]) for k in keys if k in values)
        else:
            entities = tuple((k, v) for k, v in inst.entities if k in keys)
        instances.append(IntentInstance(inst.intent, entities))
    task = TaskInput(r.input.message, tuple(requested))
    return TaskRecord(task, Extraction(tuple(instances)), r.id, r.flags)
