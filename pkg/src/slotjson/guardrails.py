"""Post-processing that strips ungrounded content from a generated extraction."""
from __future__ import annotations

from .core import Extraction, IntentInstance, TaskInput, nfc


def sanitize_extraction(x: Extraction, task: TaskInput) -> Extraction:
    """Drop unrequested intents, unrequested keys and values absent from the message.

    The substring test is case-sensitive and runs on NFC-normalised text.
    Instances left without entities are kept. Idempotent.
    """
    message = nfc(task.message)
    allowed = {intent: {e.key for e in ents} for intent, ents in task.requested}
    kept = []
    for inst in x:
        keys = allowed.get(inst.intent)
        if keys is None:
            continue
        entities = tuple(
            (k, v) for k, v in inst.entities if k in keys and nfc(v) in message
        )
        kept.append(IntentInstance(inst.intent, entities))
    return Extraction(tuple(kept))


def is_sanitized(x: Extraction, task: TaskInput) -> bool:
    """True when every intent and key is requested and every value occurs in the message."""
    message = nfc(task.message)
    allowed = {intent: {e.key for e in ents} for intent, ents in task.requested}
    for inst in x:
        if inst.intent not in allowed:
            return False
        for k, v in inst.entities:
            if k not in allowed[inst.intent] or nfc(v) not in message:
                return False
    return True
