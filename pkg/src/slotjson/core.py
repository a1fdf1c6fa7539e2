"""Domain types and the canonical JSON wire format.

An extraction is a JSON array of flat objects. Each object carries the
reserved ``"intent"`` key (display form of the intent, e.g.
``"Order > Cancel"``) followed by string-valued entity keys::

    [{"intent":"Order > Cancel","order_number":"ON-1"}]

All types here are frozen; mappings are stored as tuples of pairs so that
instances stay immutable and hashable.
"""
from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

INTENT_KEY = "intent"
INTENT_SEPARATOR = " > "


class SlotJsonError(Exception):
    """Base class for every data error raised by this package."""


class InvalidName(SlotJsonError, ValueError):
    pass


class RecordInvariantError(SlotJsonError, ValueError):
    def __init__(self, reason: str, record_id: str | None = None):
        self.reason = reason
        self.record_id = record_id
        prefix = f"record {record_id!r}: " if record_id is not None else ""
        super().__init__(prefix + reason)


class ExtractionParseError(SlotJsonError, ValueError):
    """Raised by :func:`parse_extraction`; ``offset`` is a UTF-8 byte offset."""

    def __init__(self, reason: str, offset: int):
        self.reason = reason
        self.offset = offset
        super().__init__(f"{reason} (byte offset {offset})")


class MalformedJson(ExtractionParseError):
    pass


class SchemaViolation(ExtractionParseError):
    pass


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


_CAMEL_LOWER_UPPER = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
_CAMEL_ACRONYM = re.compile(r"(?<=[A-Z])(?=[A-Z][a-z])")
_NON_ALNUM = re.compile(r"[^a-z0-9]+")


def to_snake_case(display: str) -> str:
    """Convert an entity display name to its snake_case key.

    camelCase boundaries are split first (``populationTotal`` becomes
    ``population_total``), then every run of non-alphanumeric characters
    collapses to one underscore.

    >>> to_snake_case("Order Number")
    'order_number'
    >>> to_snake_case("Product  ID")
    'product_id'
    """
    if not display or not display.strip():
        raise InvalidName("entity name must be non-empty")
    text = unicodedata.normalize("NFKD", display)
    text = text.encode("ascii", "ignore").decode("ascii")
    text = _CAMEL_LOWER_UPPER.sub("_", text)
    text = _CAMEL_ACRONYM.sub("_", text)
    key = _NON_ALNUM.sub("_", text.lower()).strip("_")
    if not key:
        raise InvalidName(f"entity name {display!r} has no ASCII letters or digits")
    return key


def to_title_case(key: str) -> str:
    """``order_number`` -> ``Order Number``; used for the title-cased prompt variant."""
    return " ".join(part.capitalize() for part in key.split("_") if part)


@dataclass(frozen=True, order=True)
class IntentName:
    path: tuple[str, ...]

    def __post_init__(self):
        if not self.path:
            raise InvalidName("intent name needs at least one segment")
        for seg in self.path:
            if not isinstance(seg, str) or not seg.strip():
                raise InvalidName(f"empty segment in intent path {self.path!r}")
            if ">" in seg:
                raise InvalidName(f"intent segment {seg!r} contains '>'")
            if seg != seg.strip():
                raise InvalidName(f"intent segment {seg!r} has surrounding whitespace")

    @classmethod
    def parse(cls, display: str) -> "IntentName":
        display = nfc(display)
        if not display.strip():
            raise InvalidName("intent name must be non-empty")
        return cls(tuple(seg.strip() for seg in display.split(">")))

    @property
    def display(self) -> str:
        return INTENT_SEPARATOR.join(self.path)

    def __str__(self) -> str:
        return self.display


@dataclass(frozen=True)
class EntityName:
    display: str
    key: str

    def __post_init__(self):
        if self.key != to_snake_case(self.key) or self.key != to_snake_case(self.display):
            raise InvalidName(
                f"key {self.key!r} is not the snake case of {self.display!r}"
            )

    @classmethod
    def from_display(cls, display: str) -> "EntityName":
        display = nfc(display).strip()
        return cls(display, to_snake_case(display))

    def __str__(self) -> str:
        return self.display


@dataclass(frozen=True)
class IntentInstance:
    """One occurrence of an intent: its name plus ordered ``(key, value)`` pairs."""

    intent: IntentName
    entities: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        seen = set()
        for pair in self.entities:
            if len(pair) != 2:
                raise RecordInvariantError(f"entity pair {pair!r} is not a (key, value) pair")
            key, value = pair
            if not isinstance(key, str) or not key:
                raise RecordInvariantError(f"entity key {key!r} must be non-empty text")
            if key == INTENT_KEY:
                raise RecordInvariantError("entity key 'intent' is reserved")
            if key in seen:
                raise RecordInvariantError(f"duplicate entity key {key!r}")
            if not isinstance(value, str) or not value:
                raise RecordInvariantError(f"value for {key!r} must be non-empty text")
            seen.add(key)

    @classmethod
    def of(cls, intent: IntentName | str, entities: Mapping[str, str] | Iterable = ()) -> "IntentInstance":
        if isinstance(intent, str):
            intent = IntentName.parse(intent)
        items = entities.items() if isinstance(entities, Mapping) else entities
        return cls(intent, tuple((nfc(k), nfc(v)) for k, v in items))

    @property
    def entity_map(self) -> dict[str, str]:
        return dict(self.entities)

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.entities)

    def pairs(self) -> list[tuple[str, str]]:
        """All key-value pairs including the ``intent`` pair."""
        return [(INTENT_KEY, self.intent.display), *self.entities]

    def to_json_obj(self) -> dict[str, str]:
        obj = {INTENT_KEY: self.intent.display}
        obj.update(self.entities)
        return obj


@dataclass(frozen=True)
class Extraction:
    instances: tuple[IntentInstance, ...] = ()

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    def to_json_obj(self) -> list[dict[str, str]]:
        return [inst.to_json_obj() for inst in self.instances]

    @classmethod
    def from_json_obj(cls, data: Any) -> "Extraction":
        return parse_extraction(json.dumps(data, ensure_ascii=False))


@dataclass(frozen=True)
class TaskInput:
    """A message plus the requested intents, each with its ordered entity list.

    Entity lists may be empty: augmentation can drop every entity of an intent.
    """

    message: str
    requested: tuple[tuple[IntentName, tuple[EntityName, ...]], ...]

    def __post_init__(self):
        if not self.message:
            raise RecordInvariantError("message must be non-empty")
        if not self.requested:
            raise RecordInvariantError("at least one intent must be requested")
        intents = [i for i, _ in self.requested]
        if len(set(intents)) != len(intents):
            raise RecordInvariantError("requested intents must be unique")
        for intent, ents in self.requested:
            keys = [e.key for e in ents]
            if len(set(keys)) != len(keys):
                raise RecordInvariantError(f"duplicate entity names requested for {intent}")

    @classmethod
    def of(cls, message: str, requested: Mapping) -> "TaskInput":
        """Build from ``{intent display: [entity display, ...]}`` (names or objects)."""
        reqs = []
        for intent, ents in requested.items():
            if isinstance(intent, str):
                intent = IntentName.parse(intent)
            ents = tuple(e if isinstance(e, EntityName) else EntityName.from_display(e) for e in ents)
            reqs.append((intent, ents))
        return cls(nfc(message), tuple(reqs))

    @property
    def intents(self) -> tuple[IntentName, ...]:
        return tuple(i for i, _ in self.requested)

    @property
    def requested_map(self) -> dict[IntentName, tuple[EntityName, ...]]:
        return dict(self.requested)

    def entity_keys(self, intent: IntentName) -> tuple[str, ...]:
        for name, ents in self.requested:
            if name == intent:
                return tuple(e.key for e in ents)
        return ()


@dataclass(frozen=True)
class TaskRecord:
    input: TaskInput
    gold: Extraction
    id: str
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        check_gold_within_requested(self.input, self.gold, self.id)


def check_gold_within_requested(task: TaskInput, gold: Extraction, record_id: str | None = None) -> None:
    requested = {intent: {e.key for e in ents} for intent, ents in task.requested}
    for inst in gold:
        if inst.intent not in requested:
            raise RecordInvariantError(f"gold intent {inst.intent} is not requested", record_id)
        extra = [k for k in inst.keys if k not in requested[inst.intent]]
        if extra:
            raise RecordInvariantError(
                f"gold keys {extra} are not requested for intent {inst.intent}", record_id
            )


# --- wire format -----------------------------------------------------------

class _Pairs(list):
    """Marks a decoded JSON object (kept as ordered pairs to catch duplicates)."""


_DECODER = json.JSONDecoder(object_pairs_hook=_Pairs)
_WS = " \t\n\r"


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] in _WS:
        pos += 1
    return pos


def _element_offsets(text: str) -> list[int]:
    # Only called on text already known to decode to a top-level array.
    pos = _skip_ws(text, 0) + 1
    offsets = []
    pos = _skip_ws(text, pos)
    if text[pos] == "]":
        return offsets
    while True:
        offsets.append(pos)
        _, pos = _DECODER.raw_decode(text, pos)
        pos = _skip_ws(text, pos)
        if text[pos] == "]":
            return offsets
        pos = _skip_ws(text, pos + 1)


def _instance_from_pairs(pairs: list, offset: int) -> IntentInstance:
    intent = None
    entities = []
    seen = set()
    for key, value in pairs:
        key = nfc(key)
        if key in seen:
            raise SchemaViolation(f"duplicate key {key!r}", offset)
        seen.add(key)
        if not isinstance(value, str):
            raise SchemaViolation(f"value for {key!r} is not a string", offset)
        value = nfc(value)
        if key == INTENT_KEY:
            intent = value
        else:
            if not key:
                raise SchemaViolation("empty entity key", offset)
            if not value:
                raise SchemaViolation(f"empty value for {key!r}", offset)
            entities.append((key, value))
    if intent is None:
        raise SchemaViolation("object has no 'intent' key", offset)
    try:
        name = IntentName.parse(intent)
    except InvalidName as exc:
        raise SchemaViolation(f"invalid intent name: {exc}", offset) from None
    return IntentInstance(name, tuple(entities))


def parse_extraction(text: str) -> Extraction:
    """Parse a generated or gold JSON string into an :class:`Extraction`.

    Raises :class:`MalformedJson` when the text is not JSON at all and
    :class:`SchemaViolation` when it is JSON of the wrong shape. Both carry
    the UTF-8 byte offset of the problem.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        data = _DECODER.decode(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(exc.msg, _byte_offset(text, exc.pos)) from None
    if isinstance(data, _Pairs) or not isinstance(data, list):
        raise SchemaViolation("top level is not an array", _byte_offset(text, _skip_ws(text, 0)))
    offsets = _element_offsets(text)
    instances = []
    for element, pos in zip(data, offsets):
        offset = _byte_offset(text, pos)
        if not isinstance(element, _Pairs):
            raise SchemaViolation("array element is not an object", offset)
        instances.append(_instance_from_pairs(element, offset))
    return Extraction(tuple(instances))


def canonical_serialize(x: Extraction) -> str:
    """Compact JSON with ``intent`` first and entity keys in stored order."""
    return json.dumps(x.to_json_obj(), ensure_ascii=False, separators=(",", ":"))


# --- JSONL record format ---------------------------------------------------

def record_to_json(record: TaskRecord) -> dict:
    out = {
        "id": record.id,
        "message": record.input.message,
        "requested": {
            intent.display: [e.display for e in ents] for intent, ents in record.input.requested
        },
        "gold": record.gold.to_json_obj(),
    }
    if record.flags:
        out["flags"] = list(record.flags)
    return out


def record_from_json(obj: Mapping) -> TaskRecord:
    record_id = obj.get("id") if isinstance(obj, Mapping) else None
    try:
        for name in ("id", "message", "requested", "gold"):
            if name not in obj:
                raise RecordInvariantError(f"missing field {name!r}", record_id)
        if not isinstance(obj["requested"], Mapping):
            raise RecordInvariantError("'requested' must be an object", record_id)
        task = TaskInput.of(obj["message"], obj["requested"])
        gold = parse_extraction(json.dumps(obj["gold"], ensure_ascii=False))
        return TaskRecord(task, gold, str(obj["id"]), tuple(obj.get("flags", ())))
    except RecordInvariantError as exc:
        if exc.record_id is None:
            raise RecordInvariantError(exc.reason, record_id) from None
        raise
    except (ExtractionParseError, InvalidName) as exc:
        raise RecordInvariantError(str(exc), record_id) from None


def dumps_record(record: TaskRecord) -> str:
    return json.dumps(record_to_json(record), ensure_ascii=False, separators=(",", ":"))


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MalformedJson(f"line {lineno}: {exc.msg}", exc.pos) from None
    return rows


def write_jsonl(path, rows: Iterable) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            if not isinstance(row, str):
                row = json.dumps(row, ensure_ascii=False, separators=(",", ":"))
            fh.write(row + "\n")
            n += 1
    return n


def load_records(path) -> list[TaskRecord]:
    return [record_from_json(row) for row in read_jsonl(path)]


def save_records(path, records: Iterable[TaskRecord]) -> int:
    return write_jsonl(path, (dumps_record(r) for r in records))
