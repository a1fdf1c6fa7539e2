"""Zero-shot and one-shot prompt construction."""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .core import (
    SlotJsonError,
    TaskInput,
    TaskRecord,
    canonical_serialize,
    to_title_case,
)

DEFAULT_INSTRUCTION = (
    "Extract the entities for each intent from the message below and return a JSON array."
)
JSON_OPEN = "["


class ExemplarIntentMismatch(SlotJsonError):
    pass


class NoEligibleExemplar(SlotJsonError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    instruction: str = DEFAULT_INSTRUCTION
    intent_line_format: str = "{intent}: {entities}"
    entity_separator: str = ", "
    section_separator: str = "\n\n"
    message_label: str = "Message:\n"
    # "snake" (default) or "title" entity casing
    entity_casing: str = "snake"

    def __post_init__(self):
        if not self.instruction.strip():
            raise ValueError("instruction must be non-empty")
        if self.entity_casing not in ("snake", "title"):
            raise ValueError(f"unknown entity casing {self.entity_casing!r}")


DEFAULT_TEMPLATE = PromptTemplate()


@dataclass(frozen=True)
class Prompt:
    text: str
    mode: str  # "zero_shot" | "one_shot"
    exemplar_id: str | None = None

    def __post_init__(self):
        if not self.text.endswith(JSON_OPEN):
            raise ValueError("prompt text must end with the opening bracket")
        if self.mode == "one_shot" and self.exemplar_id is None:
            raise ValueError("one-shot prompt needs an exemplar id")
        if self.mode not in ("zero_shot", "one_shot"):
            raise ValueError(f"unknown prompt mode {self.mode!r}")


def _entity_label(key: str, template: PromptTemplate) -> str:
    return key if template.entity_casing == "snake" else to_title_case(key)


def render_intents(task: TaskInput, template: PromptTemplate = DEFAULT_TEMPLATE) -> str:
    lines = []
    for intent, ents in task.requested:
        names = template.entity_separator.join(_entity_label(e.key, template) for e in ents)
        lines.append(template.intent_line_format.format(intent=intent.display, entities=names))
    return "\n".join(lines)


def render_zero_shot(task: TaskInput, template: PromptTemplate = DEFAULT_TEMPLATE) -> str:
    sections = [
        template.instruction,
        render_intents(task, template),
        template.message_label + task.message,
        JSON_OPEN,
    ]
    return template.section_separator.join(sections)


def render_exemplar_block(exemplar: TaskRecord, template: PromptTemplate = DEFAULT_TEMPLATE) -> str:
    """The exemplar's zero-shot prompt completed with its gold JSON."""
    completion = canonical_serialize(exemplar.gold)[len(JSON_OPEN):]
    return render_zero_shot(exemplar.input, template) + completion


def build_prompt(
    task: TaskInput,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    exemplar: TaskRecord | None = None,
) -> Prompt:
    body = render_zero_shot(task, template)
    if exemplar is None:
        return Prompt(body, "zero_shot")
    if not set(exemplar.input.intents) & set(task.intents):
        raise ExemplarIntentMismatch(
            f"exemplar {exemplar.id!r} shares no intent with the target"
        )
    text = render_exemplar_block(exemplar, template) + template.section_separator + body
    return Prompt(text, "one_shot", exemplar.id)


def eligible_exemplars(task: TaskInput, pool: Sequence[TaskRecord], exclude_id: str | None = None) -> list[TaskRecord]:
    wanted = set(task.intents)
    return [
        r for r in pool
        if r.id != exclude_id and wanted & set(r.input.intents)
    ]


def select_exemplar(
    task: TaskInput,
    pool: Sequence[TaskRecord],
    rng: random.Random,
    exclude_id: str | None = None,
) -> TaskRecord:
    """Uniformly pick a pool record sharing an intent with ``task``.

    ``exclude_id`` keeps a record from being its own exemplar.
    """
    if not pool:
        raise NoEligibleExemplar("exemplar pool is empty")
    eligible = eligible_exemplars(task, pool, exclude_id)
    if not eligible:
        raise NoEligibleExemplar("no pool record shares an intent with the target")
    return rng.choice(eligible)
